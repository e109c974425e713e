"""Differential-geometry operators on fixed-topology triangle meshes.

Pure functions; every output is a fresh array or mesh, inputs are never
mutated. The cotangent operator and both sparse solves are the workhorses
behind neutral-shape refinement and blendshape construction.
"""
from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from ..errors import DegenerateGeometryError, MeshError, TopologyMismatchError
from .core import DeformConstraint, TriMesh

COT_CLAMP = (1e-6, 1e6)
_DEGENERATE_AREA = 1e-14


def face_normals(mesh: TriMesh, normalize: bool = True) -> np.ndarray:
    v = mesh.vertices
    f = mesh.faces
    n = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
    if normalize:
        lens = np.linalg.norm(n, axis=1)
        good = lens > _DEGENERATE_AREA
        n[good] /= lens[good, None]
        n[~good] = 0.0
    return n


def vertex_normals(mesh: TriMesh) -> np.ndarray:
    """Area-weighted average of incident face normals, unit length per vertex.

    Degenerate faces contribute nothing; a vertex whose accumulation cancels
    falls back to the first nondegenerate incident face normal. A mesh with
    no usable face at all is an error.
    """
    areas2 = face_normals(mesh, normalize=False)  # |cross| = 2 * area
    area_norm = np.linalg.norm(areas2, axis=1)
    if not (area_norm > _DEGENERATE_AREA).any():
        raise DegenerateGeometryError("all faces degenerate; no normals defined")
    acc = np.zeros_like(mesh.vertices)
    for c in range(3):
        np.add.at(acc, mesh.faces[:, c], areas2)
    lens = np.linalg.norm(acc, axis=1)
    bad = lens <= _DEGENERATE_AREA
    if bad.any():
        unit = np.zeros_like(areas2)
        ok = area_norm > _DEGENERATE_AREA
        unit[ok] = areas2[ok] / area_norm[ok, None]
        for vi in np.nonzero(bad)[0]:
            incident = np.nonzero((mesh.faces == vi).any(axis=1) & ok)[0]
            if incident.size == 0:
                raise DegenerateGeometryError(f"vertex {vi} has no nondegenerate face")
            acc[vi] = unit[incident[0]]
            lens[vi] = 1.0
    return acc / lens[:, None]


def _unique_edges_with_cot(mesh: TriMesh):
    """Per-undirected-edge summed half-cotangents, clamped for solvability."""
    v = mesh.vertices
    f = mesh.faces
    weights = {}
    # cot of the angle opposite each edge, accumulated per canonical edge
    for a, b, c in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        p_opp, p_i, p_j = v[f[:, a]], v[f[:, b]], v[f[:, c]]
        e1 = p_i - p_opp
        e2 = p_j - p_opp
        cross = np.linalg.norm(np.cross(e1, e2), axis=1)
        dot = np.einsum("ij,ij->i", e1, e2)
        cot = np.where(cross > _DEGENERATE_AREA, dot / np.maximum(cross, _DEGENERATE_AREA), 0.0)
        i_idx, j_idx = f[:, b], f[:, c]
        lo = np.minimum(i_idx, j_idx)
        hi = np.maximum(i_idx, j_idx)
        for e_lo, e_hi, w in zip(lo.tolist(), hi.tolist(), (0.5 * cot).tolist()):
            key = (e_lo, e_hi)
            weights[key] = weights.get(key, 0.0) + w
    lo_clamp, hi_clamp = COT_CLAMP
    edges = np.array(sorted(weights.keys()), dtype=np.int64)
    w = np.array([min(max(weights[(i, j)], lo_clamp), hi_clamp) for i, j in edges])
    return edges, w


def cotangent_laplacian(mesh: TriMesh) -> sp.csr_matrix:
    """Symmetric cotangent operator, rows summing to zero.

    Off-diagonals are the (clamped) positive edge weights; diagonal is minus
    the row sum, so constants are exactly in the null space.
    """
    edges, w = _unique_edges_with_cot(mesh)
    n = mesh.n_vertices
    i, j = edges[:, 0], edges[:, 1]
    diag = np.zeros(n)
    np.add.at(diag, i, w)
    np.add.at(diag, j, w)
    rows = np.concatenate([i, j, np.arange(n)])
    cols = np.concatenate([j, i, np.arange(n)])
    vals = np.concatenate([w, w, -diag])
    return sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


def laplacian_deform(mesh: TriMesh, constraints) -> TriMesh:
    """Minimize ||L (v - v0)||^2 + sum_c w_c ||v_c - target_c||^2.

    Constraints with ``weight=inf`` are enforced exactly by variable
    elimination. At least one constraint with positive weight is required.
    """
    constraints = list(constraints)
    if not any(c.weight > 0 for c in constraints):
        raise DegenerateGeometryError("laplacian_deform needs >= 1 constraint with weight > 0")
    n = mesh.n_vertices
    hard = {}
    soft_w = np.zeros(n)
    soft_t = np.zeros((n, 3))
    for c in constraints:
        if not (0 <= c.vertex_index < n):
            raise MeshError(f"constraint vertex {c.vertex_index} out of range")
        if math.isinf(c.weight):
            hard[c.vertex_index] = np.asarray(c.target)
        elif c.weight > 0:
            soft_w[c.vertex_index] += c.weight
            soft_t[c.vertex_index] += c.weight * np.asarray(c.target)

    L = cotangent_laplacian(mesh)
    A = (L.T @ L).tolil()
    rhs = np.asarray((L.T @ L) @ mesh.vertices)
    sw = soft_w > 0
    idx = np.nonzero(sw)[0]
    A[idx, idx] = A[idx, idx].toarray().ravel() + soft_w[idx]
    rhs[idx] += soft_t[idx]

    A = A.tocsc()
    free = np.array([i for i in range(n) if i not in hard], dtype=np.int64)
    out = np.array(mesh.vertices)
    if hard:
        fixed_idx = np.array(sorted(hard.keys()), dtype=np.int64)
        fixed_val = np.stack([hard[i] for i in fixed_idx.tolist()])
        if free.size == 0:
            out[fixed_idx] = fixed_val
            return mesh.with_vertices(out)
        rhs_free = rhs[free] - A[free][:, fixed_idx] @ fixed_val
        solve = splu(A[free][:, free].tocsc())
        sol = np.column_stack([solve.solve(rhs_free[:, k]) for k in range(3)])
        out[free] = sol
        out[fixed_idx] = fixed_val
    else:
        solve = splu(A)
        out = np.column_stack([solve.solve(rhs[:, k]) for k in range(3)])
    return mesh.with_vertices(out)


def deform_energy(mesh: TriMesh, rest: TriMesh, constraints) -> float:
    """Objective value of laplacian_deform at the given configuration."""
    L = cotangent_laplacian(rest)
    d = mesh.vertices - rest.vertices
    e = float(np.sum(np.asarray(L @ d) ** 2))
    for c in constraints:
        if math.isinf(c.weight):
            continue
        e += c.weight * float(np.sum((mesh.vertices[c.vertex_index] - np.asarray(c.target)) ** 2))
    return e


def _frame_matrix(v0, v1, v2):
    """Sumner-style local frame [e1, e2, n/sqrt(|n|)] per triangle."""
    e1 = v1 - v0
    e2 = v2 - v0
    n = np.cross(e1, e2)
    ln = np.linalg.norm(n, axis=1)
    good = ln > _DEGENERATE_AREA
    scale = np.zeros_like(ln)
    scale[good] = 1.0 / np.sqrt(ln[good])
    n = n * scale[:, None]
    return np.stack([e1, e2, n], axis=2), good  # (F, 3, 3) columns e1,e2,n


class DeformationTransferSolver:
    """Factorized transfer onto a fixed target rest shape.

    Building the normal equations depends only on the target rest mesh, so
    one solver instance amortizes across the 46 expression transfers of rig
    construction.
    """

    def __init__(self, tgt_rest: TriMesh):
        self.tgt = tgt_rest
        nf = tgt_rest.n_faces
        nv = tgt_rest.n_vertices
        frames, good = _frame_matrix(
            tgt_rest.vertices[tgt_rest.faces[:, 0]],
            tgt_rest.vertices[tgt_rest.faces[:, 1]],
            tgt_rest.vertices[tgt_rest.faces[:, 2]],
        )
        if not good.all():
            raise DegenerateGeometryError("target rest mesh has degenerate triangles")
        inv = np.linalg.inv(frames)  # (F, 3, 3)
        self._inv = inv
        # unknowns: nv vertices + nf virtual fourth vertices, vertex 0 pinned
        rows, cols, vals = [], [], []
        for fi in range(nf):
            i0, i1, i2 = (int(x) for x in tgt_rest.faces[fi])
            W = inv[fi]
            for j in range(3):
                r = 3 * fi + j
                w1, w2, wn = W[0, j], W[1, j], W[2, j]
                for col, val in ((i0, -(w1 + w2 + wn)), (i1, w1), (i2, w2), (nv + fi, wn)):
                    rows.append(r)
                    cols.append(col)
                    vals.append(val)
        A = sp.coo_matrix((vals, (rows, cols)), shape=(3 * nf, nv + nf)).tocsc()
        self._A_pin = A[:, 0]
        self._A_free = A[:, 1:]
        self._solve = splu((self._A_free.T @ self._A_free).tocsc())

    def transfer(self, src_rest: TriMesh, src_deformed: TriMesh) -> TriMesh:
        tgt = self.tgt
        src_rest.require_same_topology(src_deformed, "source pair")
        src_rest.require_same_topology(tgt, "target")
        f = src_rest.faces
        rest_fr, rest_ok = _frame_matrix(
            src_rest.vertices[f[:, 0]], src_rest.vertices[f[:, 1]], src_rest.vertices[f[:, 2]])
        def_fr, _ = _frame_matrix(
            src_deformed.vertices[f[:, 0]], src_deformed.vertices[f[:, 1]], src_deformed.vertices[f[:, 2]])
        grads = np.empty_like(rest_fr)
        grads[rest_ok] = def_fr[rest_ok] @ np.linalg.inv(rest_fr[rest_ok])
        grads[~rest_ok] = np.eye(3)  # degenerate source triangle -> identity
        # row (f, j) of A x_axis is (V_tgt_deformed @ V_tgt_rest^-1)[axis, j],
        # which must match the source gradient entry grads[f, axis, j]
        b = grads.transpose(0, 2, 1).reshape(-1, 3)  # rows (f, j), columns axis
        pin_pos = tgt.vertices[0] + (src_deformed.vertices[0] - src_rest.vertices[0])
        rhs = b - np.asarray(self._A_pin.todense()) * pin_pos[None, :]
        sol = np.column_stack([
            self._solve.solve(np.asarray(self._A_free.T @ rhs[:, k]).ravel()) for k in range(3)
        ])
        out = np.vstack([pin_pos[None, :], sol[: tgt.n_vertices - 1]])
        return tgt.with_vertices(out)


def deformation_transfer(src_rest: TriMesh, src_deformed: TriMesh, tgt_rest: TriMesh) -> TriMesh:
    """Transfer per-triangle deformation gradients of (src_rest -> src_deformed)
    onto tgt_rest, least-squares coupled through shared vertices."""
    return DeformationTransferSolver(tgt_rest).transfer(src_rest, src_deformed)


def landmark_angle_vector(mesh: TriMesh, landmarks) -> np.ndarray:
    """Concatenated interior angles (radians) of the landmark polygons.

    Angles are the unsigned 3D corner angles, loop by loop in configuration
    order; invariant to similarity transforms of the mesh.
    """
    if not landmarks.polygons:
        raise MeshError("landmark set declares no polygons")
    pos = landmarks.vertex_positions(mesh)
    out = []
    for poly in landmarks.polygons:
        pts = pos[list(poly)]
        m = len(pts)
        prev = pts[np.arange(m) - 1]
        nxt = pts[(np.arange(m) + 1) % m]
        a = prev - pts
        b = nxt - pts
        la = np.linalg.norm(a, axis=1)
        lb = np.linalg.norm(b, axis=1)
        if (la < 1e-12).any() or (lb < 1e-12).any():
            raise DegenerateGeometryError("coincident adjacent landmarks in polygon")
        cross = np.linalg.norm(np.cross(a, b), axis=1)
        dot = np.einsum("ij,ij->i", a, b)
        out.append(np.arctan2(cross, dot))
    return np.concatenate(out)
