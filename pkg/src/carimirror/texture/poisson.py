"""Poisson integration of labeled view gradients into the template atlas.

Solves the screened-free discrete Poisson equation per channel on each
connected component of the assigned mask, guidance gradients taken from the
labeled views (averaged across a seam), Dirichlet boundary values from the
template atlas.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.ndimage import label as cc_label
from scipy.sparse.linalg import spsolve

from ..errors import MeshError
from .samples import LabelMap, TextureAtlas, UNASSIGNED


def _guidance(views, labels, p_rc, q_rc):
    """Per-channel guidance gradient g_pq across texel edge p -> q."""
    lp = labels[p_rc]
    lq = labels[q_rc]
    grads = []
    for lab in (lp, lq):
        view = views[lab]
        if view.valid[p_rc] and view.valid[q_rc]:
            grads.append(view.colors[p_rc] - view.colors[q_rc])
    if not grads:
        return np.zeros(3)
    if lp == lq or len(grads) == 1:
        return grads[0]
    return 0.5 * (grads[0] + grads[1])


def poisson_blend(labels: LabelMap, views, template: TextureAtlas) -> TextureAtlas:
    """Fuse the labeled views into the template atlas by gradient integration."""
    lab = labels.labels
    h, w = lab.shape
    mask = labels.assigned
    if not mask.any():
        raise MeshError("poisson_blend: empty label mask")
    if template.colors.shape[:2] != (h, w):
        raise MeshError("template atlas grid does not match label map")

    out = np.array(template.colors, dtype=np.float64)
    comp, n_comp = cc_label(mask)
    offsets = ((0, 1), (0, -1), (1, 0), (-1, 0))
    for ci in range(1, n_comp + 1):
        region = comp == ci
        idx = np.nonzero(region.reshape(-1))[0]
        pos_of = {int(i): k for k, i in enumerate(idx)}
        n = len(idx)
        rows, cols, vals = [], [], []
        b = np.zeros((n, 3))
        has_dirichlet = False
        for k, flat_i in enumerate(idx):
            r, c = divmod(int(flat_i), w)
            deg = 0
            for dr, dc in offsets:
                rr, cc = r + dr, c + dc
                if not (0 <= rr < h and 0 <= cc < w):
                    continue  # off-grid: natural boundary
                deg += 1
                b[k] += _guidance(views, lab, (r, c), (rr, cc))
                nb_flat = rr * w + cc
                if region[rr, cc]:
                    rows.append(k)
                    cols.append(pos_of[nb_flat])
                    vals.append(-1.0)
                else:
                    b[k] += template.colors[rr, cc]  # Dirichlet from template
                    has_dirichlet = True
            rows.append(k)
            cols.append(k)
            vals.append(float(deg))
        A = sp.csr_matrix((vals, (rows, cols)), shape=(n, n)).tocsc()
        if has_dirichlet:
            sol = np.column_stack([spsolve(A, b[:, ch]) for ch in range(3)])
        else:
            # pure-Neumann component: pin one texel for the solve, then shift
            # the free constant to match the template mean over the component
            sol = np.zeros((n, 3))
            if n > 1:
                Ar = A[1:, 1:]
                for ch in range(3):
                    sol[1:, ch] = spsolve(Ar, b[1:, ch])
            t_mean = template.colors.reshape(-1, 3)[idx].mean(axis=0)
            sol += (t_mean - sol.mean(axis=0))[None, :]
        flat_out = out.reshape(-1, 3)
        flat_out[idx] = sol
    # clamping to [0, 1] is the caller's final step; the raw solution is
    # returned so the discrete-system residual stays exact
    return TextureAtlas(out, template.mask | mask)


def poisson_residual(labels: LabelMap, views, template: TextureAtlas,
                     blended: TextureAtlas) -> float:
    """Max |A x - b| of the assembled discrete system at the blended solution."""
    lab = labels.labels
    h, w = lab.shape
    mask = labels.assigned
    worst = 0.0
    offsets = ((0, 1), (0, -1), (1, 0), (-1, 0))
    x = blended.colors
    for r in range(h):
        for c in range(w):
            if not mask[r, c]:
                continue
            lhs = np.zeros(3)
            rhs = np.zeros(3)
            for dr, dc in offsets:
                rr, cc = r + dr, c + dc
                if not (0 <= rr < h and 0 <= cc < w):
                    continue
                rhs += _guidance(views, lab, (r, c), (rr, cc))
                if mask[rr, cc]:
                    lhs += x[r, c] - x[rr, cc]
                else:
                    lhs += x[r, c] - template.colors[rr, cc]
            worst = max(worst, float(np.abs(lhs - rhs).max()))
    return worst
