"""Data and smoothness costs for the texel labeling problem.

The data term prefers views whose ray is anti-parallel to the surface
normal (cost 0 when n = -d); the smoothness term charges color disagreement
between the two candidate views at both texels of a seam edge.
"""
from __future__ import annotations

import numpy as np

BIG_COST = 1e7  # stands in for +inf inside finite max-flow arithmetic
DEFAULT_DATA_WEIGHT = 1.2


def view_cost(texel, view) -> float:
    """2 - ||n(u) - d|| for one texel; +inf when the view misses the texel."""
    r, c = texel
    if not view.valid[r, c]:
        return np.inf
    return float(2.0 - np.linalg.norm(view.normals[r, c] - view.view_dir))


def matching_cost(texel1, texel2, view_i, view_j) -> float:
    """||I_i(u1) - I_j(u1)|| + ||I_i(u2) - I_j(u2)|| over normalized RGB."""
    for t in (texel1, texel2):
        if not (view_i.valid[t] and view_j.valid[t]):
            return np.inf
    d1 = np.linalg.norm(view_i.colors[texel1] - view_j.colors[texel1])
    d2 = np.linalg.norm(view_i.colors[texel2] - view_j.colors[texel2])
    return float(d1 + d2)


def data_cost_volume(views, data_weight=DEFAULT_DATA_WEIGHT) -> np.ndarray:
    """(N, H, W) weighted view costs, BIG_COST where invalid."""
    n = len(views)
    h, w = views[0].shape
    vol = np.full((n, h, w), BIG_COST)
    for k, view in enumerate(views):
        diff = np.linalg.norm(view.normals - view.view_dir[None, None, :], axis=-1)
        cost = data_weight * (2.0 - diff)
        vol[k] = np.where(view.valid, cost, BIG_COST)
    return vol


class PairCostTable:
    """Vectorized matching costs over flattened texel indices."""

    def __init__(self, views):
        h, w = views[0].shape
        self.colors = np.stack([v.colors.reshape(-1, 3) for v in views])  # (N, HW, 3)
        self.valid = np.stack([v.valid.reshape(-1) for v in views])       # (N, HW)

    def color_diff(self, label_a, label_b, texel_idx) -> np.ndarray:
        """||I_a(u) - I_b(u)|| arrays; BIG_COST where either sample invalid."""
        label_a = np.asarray(label_a)
        label_b = np.asarray(label_b)
        texel_idx = np.asarray(texel_idx)
        d = np.linalg.norm(self.colors[label_a, texel_idx] - self.colors[label_b, texel_idx], axis=-1)
        ok = self.valid[label_a, texel_idx] & self.valid[label_b, texel_idx]
        same = label_a == label_b
        return np.where(same, 0.0, np.where(ok, d, BIG_COST))

    def pair_cost(self, label_a, label_b, u1_idx, u2_idx) -> np.ndarray:
        """Matching cost for edges (u1, u2) labeled (a, b); 0 when a == b."""
        return np.minimum(
            self.color_diff(label_a, label_b, u1_idx) + self.color_diff(label_a, label_b, u2_idx),
            BIG_COST,
        )
