"""Rigid pose estimation: Gauss-Newton on the landmark term over SE(3)."""
from __future__ import annotations

import numpy as np

from ..camera import quat_from_rotvec, quat_mul, quat_normalize
from ..errors import DegenerateGeometryError
from .energies import FrameObservation, LandmarkModel, energy_fea, fea_residuals


def check_landmark_geometry(model: LandmarkModel, w):
    """Pose is observable only from >= 4 non-coplanar landmark vertices."""
    p = model.positions(w)
    if len(p) < 4:
        raise DegenerateGeometryError("pose estimation needs >= 4 landmark vertices")
    centered = p - p.mean(axis=0)
    s = np.linalg.svd(centered, compute_uv=False)
    if s[2] <= 1e-9 * max(s[0], 1e-300):
        raise DegenerateGeometryError("landmark vertices are coplanar; pose is degenerate")


def estimate_pose(cam, model: LandmarkModel, frame: FrameObservation, q_init, t_init,
                  w=None, max_iters=10, step_tol=1e-8, accept_energy=None):
    """Gauss-Newton pose solve with quaternion renormalization and step halving.

    ``accept_energy``: optional callable (q, t) -> scalar used to accept steps
    (defaults to the landmark energy itself); directions always come from the
    landmark term.
    """
    if w is None:
        w = np.zeros(model.n_weights)
    check_landmark_geometry(model, w)
    q = quat_normalize(q_init)
    t = np.array(t_init, dtype=np.float64)
    energy = accept_energy(q, t) if accept_energy else energy_fea(q, t, w, cam, model, frame)
    for _ in range(max_iters):
        r, Jrot, Jt, _ = fea_residuals(q, t, w, cam, model, frame, with_jacobian=True)
        J = np.hstack([Jrot, Jt])
        H = J.T @ J
        g = J.T @ r
        if np.abs(g).max() < 1e-10:
            break
        try:
            delta = np.linalg.solve(H + 1e-12 * np.eye(6), -g)
        except np.linalg.LinAlgError:
            raise DegenerateGeometryError("singular pose normal equations")
        if np.linalg.norm(delta) < step_tol:
            break
        step = 1.0
        accepted = False
        for _ in range(8):
            q_new = quat_normalize(quat_mul(quat_from_rotvec(step * delta[:3]), q))
            t_new = t + step * delta[3:]
            e_new = accept_energy(q_new, t_new) if accept_energy else energy_fea(
                q_new, t_new, w, cam, model, frame)
            if e_new <= energy + 1e-15:
                q, t, energy = q_new, t_new, e_new
                accepted = True
                break
            step *= 0.5
        if not accepted or np.linalg.norm(step * delta) < step_tol:
            break
    return q, t
