"""Sparse Levenberg-Marquardt bundle adjustment over points, shared
intrinsics and per-view poses.

Gauge: camera 0's pose is pinned and the global scale is renormalized after
convergence so the first-pair baseline keeps its initial length (projection
is invariant to that rescaling, so the objective is untouched).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from ..camera import CameraModel, quat_from_rotvec, quat_mul, quat_normalize, quat_to_matrix
from ..errors import DegenerateGeometryError


@dataclass
class BundleResult:
    points: np.ndarray
    point_indices: np.ndarray
    intrinsics: tuple
    cameras: list
    mean_reprojection: float
    iterations: int


def _project_all(K, Rs, ts, points, obs_cam, obs_pt):
    fx, fy, cx, cy = K
    X = np.einsum("oij,oj->oi", Rs[obs_cam], points[obs_pt]) + ts[obs_cam]
    z = X[:, 2]
    uv = np.column_stack([fx * X[:, 0] / z + cx, fy * X[:, 1] / z + cy])
    return uv, X


def reprojection_errors(K, cameras, points, obs_cam, obs_pt, targets):
    Rs = np.stack([c.R for c in cameras])
    ts = np.stack([c.t for c in cameras])
    uv, _ = _project_all(K, Rs, ts, points, obs_cam, obs_pt)
    return np.linalg.norm(uv - targets, axis=1)


def bundle_objective(K, cameras, points, obs_cam, obs_pt, targets) -> float:
    e = reprojection_errors(K, cameras, points, obs_cam, obs_pt, targets)
    return float((e ** 2).sum())


def bundle_adjust_core(points_init, cameras_init, obs_pt, obs_cam, targets,
                       max_iters=60, optimize_intrinsics=True):
    """LM minimization of sum ||proj(R_j v_i + t_j) - target_ij||^2."""
    points = np.array(points_init, dtype=np.float64)
    cams = [CameraModel(c.fx, c.fy, c.cx, c.cy, c.q.copy(), c.t.copy()) for c in cameras_init]
    n_cams = len(cams)
    n_pts = len(points)
    obs_pt = np.asarray(obs_pt, dtype=np.int64)
    obs_cam = np.asarray(obs_cam, dtype=np.int64)
    targets = np.asarray(targets, dtype=np.float64)

    if n_cams < 2:
        raise DegenerateGeometryError("bundle adjustment needs >= 2 views")
    if n_pts < 6:
        raise DegenerateGeometryError("bundle adjustment needs >= 6 points")
    counts = np.bincount(obs_pt, minlength=n_pts)
    if (counts < 2).any():
        raise DegenerateGeometryError("every point needs >= 2 observations")

    n_intr = 4 if optimize_intrinsics else 0
    n_pose = 6 * (n_cams - 1)  # camera 0 pinned
    n_params = n_intr + n_pose + 3 * n_pts
    baseline0 = np.linalg.norm(cams[1].center - cams[0].center)

    def state_arrays():
        K = (cams[0].fx, cams[0].fy, cams[0].cx, cams[0].cy)
        Rs = np.stack([c.R for c in cams])
        ts = np.stack([c.t for c in cams])
        return K, Rs, ts

    K, Rs, ts = state_arrays()
    uv, X = _project_all(K, Rs, ts, points, obs_cam, obs_pt)
    r = (uv - targets).reshape(-1)
    cost = float(r @ r)
    lam = 1e-4
    iters_done = 0

    for it in range(max_iters):
        iters_done = it + 1
        K, Rs, ts = state_arrays()
        fx, fy = K[0], K[1]
        uv, X = _project_all(K, Rs, ts, points, obs_cam, obs_pt)
        r = (uv - targets).reshape(-1)
        z = X[:, 2]
        n_obs = len(obs_pt)
        Jp = np.zeros((n_obs, 2, 3))
        Jp[:, 0, 0] = fx / z
        Jp[:, 0, 2] = -fx * X[:, 0] / z ** 2
        Jp[:, 1, 1] = fy / z
        Jp[:, 1, 2] = -fy * X[:, 1] / z ** 2

        rows_list, cols_list, vals_list = [], [], []
        row_idx = np.arange(n_obs) * 2

        def put_block(sel_rows, sel_block, base_cols):
            # sel_block: (n_sel, 2, width) Jacobian entries for selected obs
            width = sel_block.shape[2]
            rr = np.repeat(row_idx[sel_rows], 2 * width).reshape(-1, 2, width)
            rr = rr + np.arange(2)[None, :, None]
            cc = np.broadcast_to(base_cols[:, None, :], sel_block.shape)
            rows_list.append(rr.ravel())
            cols_list.append(cc.ravel())
            vals_list.append(sel_block.ravel())

        if n_intr:
            Jk = np.zeros((n_obs, 2, 4))
            Jk[:, 0, 0] = X[:, 0] / z
            Jk[:, 1, 1] = X[:, 1] / z
            Jk[:, 0, 2] = 1.0
            Jk[:, 1, 3] = 1.0
            base = np.broadcast_to(np.arange(4)[None, :], (n_obs, 4))
            put_block(np.arange(n_obs), Jk, base)

        movable = obs_cam >= 1
        if movable.any():
            sel = np.nonzero(movable)[0]
            Rp = np.einsum("oij,oj->oi", Rs[obs_cam[sel]], points[obs_pt[sel]])
            neg_sk = np.zeros((len(sel), 3, 3))
            neg_sk[:, 0, 1] = Rp[:, 2]
            neg_sk[:, 0, 2] = -Rp[:, 1]
            neg_sk[:, 1, 0] = -Rp[:, 2]
            neg_sk[:, 1, 2] = Rp[:, 0]
            neg_sk[:, 2, 0] = Rp[:, 1]
            neg_sk[:, 2, 1] = -Rp[:, 0]
            Jrot = np.einsum("oij,ojk->oik", Jp[sel], neg_sk)
            Jt = Jp[sel]
            Jpose = np.concatenate([Jrot, Jt], axis=2)  # (sel, 2, 6)
            base = (n_intr + 6 * (obs_cam[sel] - 1))[:, None] + np.arange(6)[None, :]
            put_block(sel, Jpose, base)

        Jpt = np.einsum("oij,ojk->oik", Jp, Rs[obs_cam])  # (n_obs, 2, 3)
        base = (n_intr + n_pose + 3 * obs_pt)[:, None] + np.arange(3)[None, :]
        put_block(np.arange(n_obs), Jpt, base)

        J = sp.coo_matrix(
            (np.concatenate(vals_list), (np.concatenate(rows_list), np.concatenate(cols_list))),
            shape=(2 * n_obs, n_params)).tocsr()
        g = J.T @ r
        if np.abs(g).max() < 1e-14:
            break
        H = (J.T @ J).tocsc()
        diag = H.diagonal()
        accepted = False
        rel_drop = np.inf
        for _ in range(12):
            Hd = H + sp.diags(lam * np.maximum(diag, 1e-12))
            try:
                delta = spsolve(Hd, -g)
            except Exception:
                lam *= 10
                continue
            trial_cams = list(cams)
            if n_intr:
                Kt = (K[0] + delta[0], K[1] + delta[1], K[2] + delta[2], K[3] + delta[3])
            else:
                Kt = K
            for j in range(1, n_cams):
                off = n_intr + 6 * (j - 1)
                dq = quat_from_rotvec(delta[off:off + 3])
                qn = quat_normalize(quat_mul(dq, cams[j].q))
                tn = cams[j].t + delta[off + 3:off + 6]
                trial_cams[j] = CameraModel(Kt[0], Kt[1], Kt[2], Kt[3], qn, tn)
            trial_cams[0] = CameraModel(Kt[0], Kt[1], Kt[2], Kt[3], cams[0].q, cams[0].t)
            trial_points = points + delta[n_intr + n_pose:].reshape(-1, 3)
            new_cost = bundle_objective(Kt, trial_cams, trial_points, obs_cam, obs_pt, targets)
            if new_cost < cost:
                rel_drop = (cost - new_cost) / max(cost, 1e-300)
                cams, points, K, cost = trial_cams, trial_points, Kt, new_cost
                lam = max(lam / 3.0, 1e-12)
                accepted = True
                break
            lam *= 10.0
        if not accepted or rel_drop < 1e-14:
            break

    # scale gauge: restore the first-pair baseline about camera 0's center
    c0 = cams[0].center
    baseline = np.linalg.norm(cams[1].center - c0)
    if baseline > 1e-12 and baseline0 > 1e-12:
        s = baseline0 / baseline
        points = c0 + s * (points - c0)
        for j in range(1, len(cams)):
            cj = c0 + s * (cams[j].center - c0)
            cams[j] = CameraModel(K[0], K[1], K[2], K[3], cams[j].q, -(cams[j].R @ cj))
    err = reprojection_errors(K, cams, points, obs_cam, obs_pt, targets)
    return points, K, cams, float(err.mean()), iters_done


def bundle_adjust(field, cameras, capture, mesh, max_iters=60,
                  optimize_intrinsics=True) -> BundleResult:
    """Joint point/pose (and optionally shared-intrinsics) refinement from
    the optimized displacement field."""
    refined = np.nonzero(field.refined)[0]
    if len(cameras) < 2:
        raise DegenerateGeometryError("bundle adjustment needs >= 2 views")
    if refined.size < 6:
        raise DegenerateGeometryError("bundle adjustment needs >= 6 refined vertices")
    obs_pt, obs_cam, targets = [], [], []
    for local_i, vi in enumerate(refined):
        for j, cam in enumerate(cameras):
            if field.lam[vi, j]:
                u0 = cam.project(mesh.vertices[vi][None, :])[0]
                obs_pt.append(local_i)
                obs_cam.append(j)
                targets.append(u0 + field.delta[vi, j])
    points, K, cams, mean_err, iters = bundle_adjust_core(
        mesh.vertices[refined], cameras, obs_pt, obs_cam, targets, max_iters=max_iters,
        optimize_intrinsics=optimize_intrinsics)
    return BundleResult(points, refined, K, cams, mean_err, iters)
