"""Dense-correspondence 2D displacement field over the multi-view capture.

Each visible vertex carries one 2-vector per view, found by Gauss-Newton on
color difference to the best-view anchor plus a quadratic regularizer. The
anchor color is sampled once and held fixed.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..mesh import TriMesh, vertex_normals
from ..raster import sample_bilinear, vertex_visibility

DEFAULT_LAMBDA_REG = 0.1
GN_ITERS = 10


def worker_count() -> int:
    env = os.environ.get("CARIMIRROR_THREADS", "")
    if env.strip():
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)


@dataclass
class DisplacementField:
    delta: np.ndarray      # (V, N, 2) pixel displacements, 0 where invalid
    lam: np.ndarray        # (V, N) visibility flags
    best_view: np.ndarray  # (V,) anchor view index, -1 if never visible
    refined: np.ndarray    # (V,) True where >= 2 views observed the vertex
    clamped: np.ndarray    # (V, N) True where a sample hit the image border

    @property
    def n_views(self) -> int:
        return self.delta.shape[1]


def _best_views(mesh, cameras, visibility):
    normals = vertex_normals(mesh)
    n_views = len(cameras)
    score = np.full((mesh.n_vertices, n_views), -np.inf)
    for j, cam in enumerate(cameras):
        ray = mesh.vertices - cam.center
        ray /= np.maximum(np.linalg.norm(ray, axis=1), 1e-12)[:, None]
        # outward normal anti-parallel to the camera->surface ray is best
        score[:, j] = np.where(visibility[:, j], -np.einsum("ij,ij->i", normals, ray), -np.inf)
    best = np.argmax(score, axis=1).astype(np.int64)  # ties: lowest view index
    best[~visibility.any(axis=1)] = -1
    return best


def optimize_displacement(capture, mesh: TriMesh, cameras, lambda_reg=DEFAULT_LAMBDA_REG,
                          iters=GN_ITERS) -> DisplacementField:
    n_views = len(cameras)
    h, w = capture.images[0].shape[:2]
    vis = np.zeros((mesh.n_vertices, n_views), dtype=bool)
    proj = np.zeros((mesh.n_vertices, n_views, 2))
    for j, cam in enumerate(cameras):
        vis[:, j] = vertex_visibility(mesh, cam, w, h)
        proj[:, :, :][:, j, :] = cam.project(mesh.vertices)
    best = _best_views(mesh, cameras, vis)
    refined = vis.sum(axis=1) >= 2

    delta = np.zeros((mesh.n_vertices, n_views, 2))
    clamped = np.zeros((mesh.n_vertices, n_views), dtype=bool)

    anchors = np.zeros((mesh.n_vertices, 3))
    for j in range(n_views):
        sel = best == j
        if sel.any():
            vals, inb = sample_bilinear(capture.images[j], proj[sel, j, 0], proj[sel, j, 1])
            anchors[sel] = vals
            clamped[np.nonzero(sel)[0], j] |= ~inb

    def solve_vertex(i):
        if not refined[i]:
            return
        for j in range(n_views):
            if not vis[i, j] or j == best[i]:
                continue
            img = capture.images[j]
            d = np.zeros(2)
            u0 = proj[i, j]
            target = anchors[i]

            def residual(dv):
                val, inb = sample_bilinear(img, np.array([u0[0] + dv[0]]), np.array([u0[1] + dv[1]]))
                r = np.concatenate([val[0] - target, np.sqrt(lambda_reg) * dv])
                return r, bool(inb[0])

            r, _ = residual(d)
            energy = r @ r
            for _ in range(iters):
                val, du, dv_g, inb = sample_bilinear(
                    img, np.array([u0[0] + d[0]]), np.array([u0[1] + d[1]]), return_grad=True)
                J = np.zeros((5, 2))
                J[0:3, 0] = du[0]
                J[0:3, 1] = dv_g[0]
                J[3, 0] = np.sqrt(lambda_reg)
                J[4, 1] = np.sqrt(lambda_reg)
                g = J.T @ r
                H = J.T @ J + 1e-12 * np.eye(2)
                try:
                    step_dir = np.linalg.solve(H, -g)
                except np.linalg.LinAlgError:
                    break
                step = 1.0
                moved = False
                for _ in range(6):
                    d_new = d + step * step_dir
                    r_new, _ = residual(d_new)
                    e_new = r_new @ r_new
                    if e_new < energy - 1e-15:
                        d, r, energy = d_new, r_new, e_new
                        moved = True
                        break
                    step *= 0.5
                if not moved:
                    break
            # clamp the refined sample to the frame and flag it
            u_final = u0 + d
            u_cl = np.clip(u_final, [0, 0], [w - 1, h - 1])
            if not np.array_equal(u_cl, u_final):
                clamped[i, j] = True
                d = u_cl - u0
            delta[i, j] = d

    workers = worker_count()
    indices = range(mesh.n_vertices)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(solve_vertex, indices))
    else:
        for i in indices:
            solve_vertex(i)
    return DisplacementField(delta, vis, best, refined, clamped)
