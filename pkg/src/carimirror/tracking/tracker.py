"""Per-frame tracker: three pose/weight alternations minimizing the full
tracking energy, with warm-started shooting on the weight subproblem."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..camera import CameraModel
from .energies import (
    FlowModel,
    FrameObservation,
    LandmarkModel,
    TrackerState,
    TrackingWeights,
    fea_residuals,
    flow_residuals,
    total_energy,
)
from .pose import estimate_pose
from .shooting import shooting_l1_box

N_ALTERNATIONS = 3


def solve_weights_shooting(q, t, cam, lm_model: LandmarkModel, flow_model, frame,
                           weights: TrackingWeights, w_init, state: TrackerState = None,
                           outer_iters=2):
    """Weights at fixed pose: Gauss-Newton quadratic model + L1, solved by
    shooting, with backtracking so the true energy never increases."""
    w = np.clip(np.asarray(w_init, dtype=np.float64), 0.0, 1.0)
    n = lm_model.n_weights
    energy = total_energy(q, t, w, cam, lm_model, flow_model, frame, weights, state)
    for _ in range(outer_iters):
        r, _, _, Jw = fea_residuals(q, t, w, cam, lm_model, frame, with_jacobian=True)
        H = 2.0 * (Jw.T @ Jw)
        g = 2.0 * Jw.T @ r - H @ w
        if flow_model is not None and weights.mu_flow > 0:
            rf, _, _, Jf = flow_residuals(q, t, w, cam, flow_model, frame, with_jacobian=True)
            Hf = 2.0 * weights.mu_flow * (Jf.T @ Jf)
            H += Hf
            g += 2.0 * weights.mu_flow * Jf.T @ rf - Hf @ w
        if weights.mu_sm > 0 and state is not None and state.has_history:
            target = state.smooth_target()
            H += 2.0 * weights.mu_sm * np.eye(n)
            g += -2.0 * weights.mu_sm * target
        w_model = shooting_l1_box(H, g, weights.mu_spa, w0=w)
        # backtrack toward the current iterate until the true energy accepts
        step = 1.0
        improved = False
        for _ in range(8):
            w_try = w + step * (w_model - w)
            e_try = total_energy(q, t, w_try, cam, lm_model, flow_model, frame, weights, state)
            if e_try <= energy + 1e-12:
                if e_try < energy - 1e-14:
                    improved = True
                w, energy = w_try, e_try
                break
            step *= 0.5
        if not improved:
            break
    return w


def _extrapolated_start(state: TrackerState):
    """Linear motion prediction from the two previous frames.

    Gated to frame >= 3 so early-sequence transients (cold-start convergence,
    smoothness-term activation at k = 2) never seed a fake velocity; a truly
    static sequence then stays at its fixed point.
    """
    q, t, w = state.q, np.array(state.t), np.array(state.w)
    if state.frame_index < 2:
        return q, t, w
    if state.prev_q is not None:
        from ..camera import quat_mul, quat_normalize
        conj = np.array([state.prev_q[0], -state.prev_q[1], -state.prev_q[2], -state.prev_q[3]])
        dq = quat_mul(state.q, conj)
        q = quat_normalize(quat_mul(dq, state.q))
        t = 2.0 * state.t - state.prev_t
    if state.w_prev2 is not None:
        w = np.clip(2.0 * state.w - state.w_prev2, 0.0, 1.0)
    return q, t, w


def track_frame(frame: FrameObservation, cam: CameraModel, lm_model: LandmarkModel,
                flow_model, state: TrackerState, weights: TrackingWeights = None,
                return_energies=False):
    """One tracked frame: 3x (pose solve at frozen w, then weight solve).

    The first pose solve freezes w at zero; pose steps are accepted against
    the full tracking energy at the state's weights so the total objective
    is non-increasing across alternations. Warm starts are linearly
    extrapolated from the two previous frames.
    """
    weights = weights or TrackingWeights()
    q, t, w = _extrapolated_start(state)
    energies = []
    if return_energies:
        energies.append(total_energy(q, t, w, cam, lm_model, flow_model, frame, weights, state))
    energy_before = total_energy(q, t, w, cam, lm_model, flow_model, frame, weights, state)
    for alternation in range(N_ALTERNATIONS):
        w_for_pose = np.zeros_like(w) if alternation == 0 else w
        # pose directions and step acceptance use the landmark term; the full
        # tracking energy gates the whole pose move (revert keeps the total
        # objective monotone without per-step flow evaluations)
        q_new, t_new = estimate_pose(cam, lm_model, frame, q, t, w=w_for_pose)
        e_new = total_energy(q_new, t_new, w, cam, lm_model, flow_model, frame, weights, state)
        if e_new <= energy_before + 1e-12:
            q, t, energy_before = q_new, t_new, e_new
        w = solve_weights_shooting(q, t, cam, lm_model, flow_model, frame, weights,
                                   w_init=w, state=state)
        energy_before = total_energy(q, t, w, cam, lm_model, flow_model, frame,
                                     weights, state)
        if return_energies:
            energies.append(total_energy(q, t, w, cam, lm_model, flow_model, frame,
                                         weights, state))
    new_state = TrackerState(
        q=q, t=t, w=w,
        w_prev1=np.array(w),
        w_prev2=np.array(state.w_prev1) if state.w_prev1 is not None else None,
        prev_q=np.array(state.q), prev_t=np.array(state.t),
        frame_index=frame.index,
    )
    if return_energies:
        return new_state, energies
    return new_state


def initial_state(n_weights, q=None, t=None) -> TrackerState:
    return TrackerState(
        q=np.array([1.0, 0.0, 0.0, 0.0]) if q is None else np.asarray(q, float),
        t=np.zeros(3) if t is None else np.asarray(t, float),
        w=np.zeros(n_weights),
    )


def track_sequence(frames, cam, lm_model, flow_model, weights=None, state=None,
                   collect_energies=False):
    """Sequentially track a frame list; returns per-frame states (and energy
    traces when requested)."""
    state = state or initial_state(lm_model.n_weights)
    states, traces = [], []
    for frame in frames:
        if collect_energies:
            state, energies = track_frame(frame, cam, lm_model, flow_model, state,
                                          weights, return_energies=True)
            traces.append(energies)
        else:
            state = track_frame(frame, cam, lm_model, flow_model, state, weights)
        states.append(state)
    if collect_energies:
        return states, traces
    return states
