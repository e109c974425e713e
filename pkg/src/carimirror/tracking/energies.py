"""Tracking energy terms: landmark reprojection, texture-to-frame flow,
sparsity and temporal smoothness, with analytic derivatives.

The rotation is differentiated through a left-multiplied rotation-vector
increment at zero, so gradients can be checked against central finite
differences directly.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..camera import CameraModel, quat_to_matrix
from ..errors import MeshError
from ..mesh import BlendshapeRig, TriMesh, vertex_normals
from ..raster import chart_surface_samples, rasterize_chart, sample_bilinear


@dataclass
class TrackingWeights:
    mu_flow: float = 1.0
    mu_spa: float = 10.0
    mu_sm: float = 0.001

    def __post_init__(self):
        if min(self.mu_flow, self.mu_spa, self.mu_sm) < 0:
            raise MeshError("tracking weights must be nonnegative")


@dataclass
class FrameObservation:
    image: np.ndarray      # (H, W) gray, linear [0, 1]
    landmarks: np.ndarray  # (L, 2) pixel positions
    index: int = 0

    def __post_init__(self):
        self.image = np.asarray(self.image, dtype=np.float64)
        self.landmarks = np.asarray(self.landmarks, dtype=np.float64)
        if self.image.ndim != 2:
            raise MeshError("frame image must be single-channel")
        if self.landmarks.ndim != 2 or self.landmarks.shape[1] != 2:
            raise MeshError("landmarks must be (L, 2)")


@dataclass
class TrackerState:
    q: np.ndarray
    t: np.ndarray
    w: np.ndarray
    w_prev1: np.ndarray = None   # w^{k-1}
    w_prev2: np.ndarray = None   # w^{k-2}
    prev_q: np.ndarray = None    # pose of the previous frame, for warm starts
    prev_t: np.ndarray = None
    frame_index: int = -1

    @property
    def has_history(self) -> bool:
        return self.w_prev1 is not None and self.w_prev2 is not None

    def smooth_target(self):
        """E_sm is ||w - (2 w^{k-1} - w^{k-2})||^2 around this target."""
        return 2.0 * self.w_prev1 - self.w_prev2


class LandmarkModel:
    """Rig restricted to the landmark vertices: p_i(w) = b0_i + dB_i w."""

    def __init__(self, rig: BlendshapeRig, landmark_indices):
        idx = np.asarray(landmark_indices, dtype=np.int64)
        self.indices = idx
        b0 = rig.neutral.vertices
        self.base = b0[idx]                                   # (L, 3)
        dB = rig.delta_matrix().reshape(-1, 3, rig.n_expressions)
        self.delta = dB[idx]                                  # (L, 3, n)
        self._delta_flat = np.ascontiguousarray(self.delta.reshape(-1, rig.n_expressions))
        self.n_weights = rig.n_expressions

    def positions(self, w):
        return self.base + (self._delta_flat @ w).reshape(-1, 3)


class FlowModel:
    """Texel-lattice surface samples for the optical-flow term.

    Samples are valid albedo texels (stride-subsampled); lattice-adjacent
    sample pairs compare albedo differences against frame differences at the
    projected surface points.
    """

    def __init__(self, rig: BlendshapeRig, albedo_texture, texel_valid, stride=2):
        mesh = rig.neutral
        size = albedo_texture.shape[0]
        maps = rasterize_chart(mesh, size)
        positions, normals, covered = chart_surface_samples(mesh, maps)
        ok = covered & np.asarray(texel_valid, bool) & np.isfinite(albedo_texture)
        rows = np.arange(0, size, stride)
        lattice_ok = np.zeros_like(ok)
        lattice_ok[np.ix_(rows, rows)] = ok[np.ix_(rows, rows)]
        sample_rc = np.argwhere(lattice_ok)
        index_of = -np.ones((size, size), np.int64)
        index_of[sample_rc[:, 0], sample_rc[:, 1]] = np.arange(len(sample_rc))

        dB = rig.delta_matrix().reshape(-1, 3, rig.n_expressions)
        tri = mesh.faces[maps.face[sample_rc[:, 0], sample_rc[:, 1]]]
        bary = maps.bary[sample_rc[:, 0], sample_rc[:, 1]]
        self.base = positions[sample_rc[:, 0], sample_rc[:, 1]]            # (S, 3)
        self.normal = normals[sample_rc[:, 0], sample_rc[:, 1]]           # (S, 3)
        self.delta = np.einsum("sj,sjcn->scn", bary, dB[tri])             # (S, 3, n)
        self._delta_flat = np.ascontiguousarray(self.delta.reshape(-1, rig.n_expressions))
        self.rho = albedo_texture[sample_rc[:, 0], sample_rc[:, 1]]       # (S,)
        self.n_weights = rig.n_expressions

        pairs = []
        for dr, dc in ((0, stride), (stride, 0)):
            nb = sample_rc + (dr, dc)
            inside = (nb[:, 0] < size) & (nb[:, 1] < size)
            nb_idx = np.full(len(sample_rc), -1, np.int64)
            nb_idx[inside] = index_of[nb[inside, 0], nb[inside, 1]]
            good = nb_idx >= 0
            pairs.append(np.stack([np.nonzero(good)[0], nb_idx[good]], axis=1))
        self.pairs = np.vstack(pairs) if pairs else np.zeros((0, 2), np.int64)

    def positions(self, w):
        return self.base + (self._delta_flat @ w).reshape(-1, 3)


def _projection_jacobian(cam: CameraModel, pc):
    """(N, 2, 3) d(pixel)/d(camera point)."""
    x, y, z = pc[:, 0], pc[:, 1], pc[:, 2]
    J = np.zeros((len(pc), 2, 3))
    J[:, 0, 0] = cam.fx / z
    J[:, 0, 2] = -cam.fx * x / (z * z)
    J[:, 1, 1] = cam.fy / z
    J[:, 1, 2] = -cam.fy * y / (z * z)
    return J


def _neg_skew_stack(v):
    """(N, 3, 3) stack of -skew(v_i), vectorized."""
    out = np.zeros((len(v), 3, 3))
    out[:, 0, 1] = v[:, 2]
    out[:, 0, 2] = -v[:, 1]
    out[:, 1, 0] = -v[:, 2]
    out[:, 1, 2] = v[:, 0]
    out[:, 2, 0] = v[:, 1]
    out[:, 2, 1] = -v[:, 0]
    return out


def fea_residuals(q, t, w, cam: CameraModel, model: LandmarkModel, frame: FrameObservation,
                  with_jacobian=False):
    """Landmark reprojection residuals (2L,), optionally with Jacobians
    w.r.t. (rotation increment, translation, weights)."""
    R = quat_to_matrix(q)
    p = model.positions(w)
    pc = p @ R.T + t
    uv = np.empty((len(p), 2))
    uv[:, 0] = cam.fx * pc[:, 0] / pc[:, 2] + cam.cx
    uv[:, 1] = cam.fy * pc[:, 1] / pc[:, 2] + cam.cy
    r = (uv - frame.landmarks).reshape(-1)
    if not with_jacobian:
        return r
    Jp = _projection_jacobian(cam, pc)               # (L, 2, 3)
    Rp = p @ R.T
    Jrot = np.matmul(Jp, _neg_skew_stack(Rp))
    Jt = Jp
    Jw = np.matmul(Jp, np.matmul(R, model.delta))
    L = len(p)
    return r, Jrot.reshape(2 * L, 3), Jt.reshape(2 * L, 3), Jw.reshape(2 * L, model.n_weights)


def energy_fea(q, t, w, cam, model, frame) -> float:
    r = fea_residuals(q, t, w, cam, model, frame)
    return float(r @ r)


def flow_residuals(q, t, w, cam: CameraModel, model: FlowModel, frame: FrameObservation,
                   with_jacobian=False):
    """Flow residuals over lattice pairs; off-image or back-facing samples drop out.

    Residual per pair: (rho_nb - rho_c) - (I(u_nb) - I(u_c)).
    """
    R = quat_to_matrix(q)
    p = model.positions(w)
    pc = p @ R.T + t
    z_ok = pc[:, 2] > 1e-6
    facing = (model.normal @ R.T[:, 2]) < 0.0  # normal opposes the camera axis
    h, wid = frame.image.shape
    uv = np.zeros((len(p), 2))
    uv[z_ok, 0] = cam.fx * pc[z_ok, 0] / pc[z_ok, 2] + cam.cx
    uv[z_ok, 1] = cam.fy * pc[z_ok, 1] / pc[z_ok, 2] + cam.cy
    inb = z_ok & facing & (uv[:, 0] >= 1) & (uv[:, 0] <= wid - 2) & (uv[:, 1] >= 1) & (uv[:, 1] <= h - 2)

    pairs = model.pairs
    use = inb[pairs[:, 0]] & inb[pairs[:, 1]]
    pc_idx = pairs[use, 0]
    nb_idx = pairs[use, 1]
    if len(pc_idx) == 0:
        if with_jacobian:
            return np.zeros(0), np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, model.n_weights))
        return np.zeros(0)

    if with_jacobian:
        i_c, du_c, dv_c, _ = sample_bilinear(frame.image, uv[pc_idx, 0], uv[pc_idx, 1], return_grad=True)
        i_n, du_n, dv_n, _ = sample_bilinear(frame.image, uv[nb_idx, 0], uv[nb_idx, 1], return_grad=True)
    else:
        i_c, _ = sample_bilinear(frame.image, uv[pc_idx, 0], uv[pc_idx, 1])
        i_n, _ = sample_bilinear(frame.image, uv[nb_idx, 0], uv[nb_idx, 1])
    r = (model.rho[nb_idx] - model.rho[pc_idx]) - (i_n - i_c)
    if not with_jacobian:
        return r

    # per-sample jacobians once (samples appear as both center and neighbor)
    used = np.unique(np.concatenate([pc_idx, nb_idx]))
    Jp_u = _projection_jacobian(cam, pc[used])
    Rp_u = p[used] @ R.T
    Jrot_u = np.matmul(Jp_u, _neg_skew_stack(Rp_u))
    Jw_u = np.matmul(Jp_u, np.matmul(R, model.delta[used]))
    slot = np.zeros(len(p), dtype=np.int64)
    slot[used] = np.arange(len(used))
    sc, sn = slot[pc_idx], slot[nb_idx]
    g_c = np.stack([du_c, dv_c], axis=1)[:, None, :]  # (P, 1, 2)
    g_n = np.stack([du_n, dv_n], axis=1)[:, None, :]
    Jrot = -(np.matmul(g_n, Jrot_u[sn]) - np.matmul(g_c, Jrot_u[sc]))[:, 0, :]
    Jt = -(np.matmul(g_n, Jp_u[sn]) - np.matmul(g_c, Jp_u[sc]))[:, 0, :]
    Jw = -(np.matmul(g_n, Jw_u[sn]) - np.matmul(g_c, Jw_u[sc]))[:, 0, :]
    return r, Jrot, Jt, Jw


def energy_flow(q, t, w, cam, model, frame) -> float:
    r = flow_residuals(q, t, w, cam, model, frame)
    return float(r @ r)


def total_energy(q, t, w, cam, lm_model, flow_model, frame, weights: TrackingWeights,
                 state: TrackerState = None) -> float:
    """Full tracking objective: E_fea + mu_flow E_flow + mu_spa ||w||_1 + mu_sm E_sm."""
    e = energy_fea(q, t, w, cam, lm_model, frame)
    if flow_model is not None and weights.mu_flow > 0:
        e += weights.mu_flow * energy_flow(q, t, w, cam, flow_model, frame)
    e += weights.mu_spa * float(np.abs(w).sum())
    if weights.mu_sm > 0 and state is not None and state.has_history:
        d = state.w_prev2 - 2.0 * state.w_prev1 + w
        e += weights.mu_sm * float(d @ d)
    return e
