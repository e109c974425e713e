"""Graph-cut texel labeling: exact min-cut for two views, alpha-expansion
sweeps for more.

Binary subproblems are reduced to s-t min cut with the standard submodular
reparametrization; BIG_COST pseudo-infinities from invalid samples are
truncated to keep moves feasible. Small graphs run an exact float
Edmonds-Karp; production sizes use scipy's integer max-flow with scaled
capacities.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import breadth_first_order, maximum_flow

from ..errors import CoverageError, MeshError
from .costs import BIG_COST, DEFAULT_DATA_WEIGHT, PairCostTable, data_cost_volume
from .samples import UNASSIGNED, LabelMap

_FLOAT_MAXFLOW_NODE_LIMIT = 600


def _min_cut_float(n, src_cap, snk_cap, edge_p, edge_q, edge_cap):
    """Exact Edmonds-Karp on float capacities; returns sink-side mask."""
    s, t = n, n + 1
    caps = [dict() for _ in range(n + 2)]

    def add(u, v, c):
        if c <= 0:
            return
        caps[u][v] = caps[u].get(v, 0.0) + c
        caps[v].setdefault(u, 0.0)

    for i in range(n):
        if src_cap[i] > 0:
            add(s, i, float(src_cap[i]))
        if snk_cap[i] > 0:
            add(i, t, float(snk_cap[i]))
    for p, q, c in zip(edge_p, edge_q, edge_cap):
        add(int(p), int(q), float(c))

    tol = 1e-12 * max(1.0, max((max(d.values()) for d in caps if d), default=1.0))
    while True:
        parent = {s: None}
        queue = deque([s])
        while queue and t not in parent:
            u = queue.popleft()
            for v, c in caps[u].items():
                if v not in parent and c > tol:
                    parent[v] = u
                    queue.append(v)
        if t not in parent:
            break
        path = []
        v = t
        while parent[v] is not None:
            path.append((parent[v], v))
            v = parent[v]
        aug = min(caps[u][v] for u, v in path)
        for u, v in path:
            caps[u][v] -= aug
            caps[v][u] = caps[v].get(u, 0.0) + aug
    reach = np.zeros(n + 2, dtype=bool)
    reach[s] = True
    queue = deque([s])
    while queue:
        u = queue.popleft()
        for v, c in caps[u].items():
            if not reach[v] and c > tol:
                reach[v] = True
                queue.append(v)
    return ~reach[:n]


def _min_cut_scipy(n, src_cap, snk_cap, edge_p, edge_q, edge_cap):
    s, t = n, n + 1
    rows = np.concatenate([np.full(n, s), np.arange(n), edge_p])
    cols = np.concatenate([np.arange(n), np.full(n, t), edge_q])
    vals = np.concatenate([src_cap, snk_cap, edge_cap])
    keep = vals > 0
    rows, cols, vals = rows[keep], cols[keep], vals[keep]
    total = vals.sum()
    scale = min(2.0 ** 32, (2.0 ** 62) / max(total, 1.0))
    ivals = np.round(vals * scale).astype(np.int64)
    graph = sp.csr_matrix((ivals, (rows, cols)), shape=(n + 2, n + 2))
    graph.sum_duplicates()
    res = maximum_flow(graph, s, t)
    residual = graph - res.flow
    residual.data = (residual.data > 0).astype(np.int64)
    residual.eliminate_zeros()
    order = breadth_first_order(residual, s, directed=True, return_predecessors=False)
    reach = np.zeros(n + 2, dtype=bool)
    reach[order] = True
    return ~reach[:n]


def min_cut(n, src_cap, snk_cap, edge_p, edge_q, edge_cap):
    if n <= _FLOAT_MAXFLOW_NODE_LIMIT:
        return _min_cut_float(n, src_cap, snk_cap, edge_p, edge_q, edge_cap)
    return _min_cut_scipy(n, np.asarray(src_cap, float), np.asarray(snk_cap, float),
                          np.asarray(edge_p), np.asarray(edge_q), np.asarray(edge_cap, float))


def _neighbor_pairs(h, w):
    """Flat-index 4-neighborhood edges: horizontal then vertical."""
    idx = np.arange(h * w).reshape(h, w)
    hor = np.stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()], axis=1)
    ver = np.stack([idx[:-1, :].ravel(), idx[1:, :].ravel()], axis=1)
    return np.vstack([hor, ver])


def labeling_energy(views, labels, data_weight=DEFAULT_DATA_WEIGHT) -> float:
    """Labeling objective: weighted view costs plus seam matching costs."""
    lab = labels.labels if isinstance(labels, LabelMap) else np.asarray(labels)
    h, w = lab.shape
    dvol = data_cost_volume(views, data_weight)
    flat = lab.reshape(-1)
    active = flat != UNASSIGNED
    e = float(dvol.reshape(len(views), -1)[flat[active], np.nonzero(active)[0]].sum())
    table = PairCostTable(views)
    pairs = _neighbor_pairs(h, w)
    p, q = pairs[:, 0], pairs[:, 1]
    both = active[p] & active[q]
    p, q = p[both], q[both]
    diff = flat[p] != flat[q]
    if diff.any():
        e += float(table.pair_cost(flat[p][diff], flat[q][diff], p[diff], q[diff]).sum())
    return e


@dataclass
class LabelingStats:
    sweep_energies: list = field(default_factory=list)
    initial_energy: float = 0.0
    final_energy: float = 0.0


def _expansion_move(flat_labels, alpha, dvol_flat, table, pairs, movable):
    """Globally optimal alpha-expansion move on the movable texels."""
    can_take = dvol_flat[alpha] < BIG_COST / 2
    free = movable & can_take
    node_of = np.full(flat_labels.shape, -1, dtype=np.int64)
    free_idx = np.nonzero(free)[0]
    n = len(free_idx)
    if n == 0:
        return flat_labels
    node_of[free_idx] = np.arange(n)
    cur = flat_labels[free_idx]
    unary = dvol_flat[alpha, free_idx] - dvol_flat[cur, free_idx]

    p, q = pairs[:, 0], pairs[:, 1]
    lab_p, lab_q = flat_labels[p], flat_labels[q]
    active_pair = (lab_p != UNASSIGNED) & (lab_q != UNASSIGNED)

    # both endpoints free
    ff = active_pair & free[p] & free[q]
    e_p, e_q = p[ff], q[ff]
    fp, fq = flat_labels[e_p], flat_labels[e_q]
    a = np.full(len(e_p), alpha)
    e00 = table.pair_cost(fp, fq, e_p, e_q)
    e01 = table.pair_cost(fp, a, e_p, e_q)
    e10 = table.pair_cost(a, fq, e_p, e_q)
    cap = e01 + e10 - e00  # e11 = 0
    trunc = cap < 0
    e00 = np.where(trunc, e01 + e10, e00)  # truncated expansion stays feasible
    cap = np.maximum(cap, 0.0)
    add_p = e10 - e00
    add_q = -e10
    np.add.at(unary, node_of[e_p], add_p)
    np.add.at(unary, node_of[e_q], add_q)

    # one endpoint fixed for this move
    for pp, qq in ((p, q), (q, p)):
        half = active_pair & free[pp] & ~free[qq]
        hp, hq = pp[half], qq[half]
        fpv, g = flat_labels[hp], flat_labels[hq]
        a = np.full(len(hp), alpha)
        delta = table.pair_cost(a, g, hp, hq) - table.pair_cost(fpv, g, hp, hq)
        np.add.at(unary, node_of[hp], np.clip(delta, -BIG_COST, BIG_COST))

    src = np.maximum(unary, 0.0)
    snk = np.maximum(-unary, 0.0)
    switch = min_cut(n, src, snk, node_of[e_p], node_of[e_q], cap)
    out = flat_labels.copy()
    out[free_idx[switch]] = alpha
    return out


def solve_labeling(views, data_weight=DEFAULT_DATA_WEIGHT, face_mask=None,
                   max_sweeps=10, return_stats=False):
    """Assign each texel a source view minimizing data + seam energy.

    Texels valid in exactly one view are hard-assigned before optimization;
    N = 2 is solved exactly by one min cut, N > 2 by alpha-expansion sweeps
    in ascending label order until no move improves the energy.
    """
    if not views:
        raise MeshError("solve_labeling needs at least one view")
    h, w = views[0].shape
    n_views = len(views)
    dvol = data_cost_volume(views, data_weight).reshape(n_views, -1)
    valid_counts = np.sum([v.valid for v in views], axis=0).reshape(-1)
    covered = valid_counts > 0
    if face_mask is not None:
        fm = np.asarray(face_mask, dtype=bool).reshape(-1)
        uncovered = np.nonzero(fm & ~covered)[0]
        if uncovered.size:
            coords = [(int(i // w), int(i % w)) for i in uncovered[:32]]
            raise CoverageError(
                f"{uncovered.size} face texels covered by no view, first: {coords}",
                uncovered=coords)
        active = fm & covered
    else:
        active = covered

    flat = np.full(h * w, UNASSIGNED, dtype=np.int32)
    act_idx = np.nonzero(active)[0]
    flat[act_idx] = np.argmin(dvol[:, act_idx], axis=0)
    movable = active & (valid_counts >= 2)

    stats = LabelingStats()
    if n_views == 1 or not movable.any():
        lm = LabelMap(flat.reshape(h, w))
        if return_stats:
            stats.initial_energy = stats.final_energy = labeling_energy(views, lm, data_weight)
            stats.sweep_energies = [stats.final_energy]
            return lm, stats
        return lm

    table = PairCostTable(views)
    pairs = _neighbor_pairs(h, w)
    energy = labeling_energy(views, LabelMap(flat.reshape(h, w)), data_weight)
    stats.initial_energy = energy

    if n_views == 2:
        # expanding label 1 over an all-zero base labeling makes the move
        # subproblem the full binary problem: exact global minimum
        base = flat.copy()
        base[movable] = 0
        proposal = _expansion_move(base, 1, dvol, table, pairs, movable)
        e = labeling_energy(views, LabelMap(proposal.reshape(h, w)), data_weight)
        if e <= energy:
            flat, energy = proposal, e
        stats.sweep_energies.append(energy)
    else:
        for _ in range(max_sweeps):
            improved = False
            for alpha in range(n_views):
                proposal = _expansion_move(flat, alpha, dvol, table, pairs, movable)
                e = labeling_energy(views, LabelMap(proposal.reshape(h, w)), data_weight)
                if e < energy - 1e-12:
                    flat, energy = proposal, e
                    improved = True
            stats.sweep_energies.append(energy)
            if not improved:
                break
    stats.final_energy = energy
    lm = LabelMap(flat.reshape(h, w))
    if return_stats:
        return lm, stats
    return lm
