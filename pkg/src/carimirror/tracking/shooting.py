"""Warm-started shooting (coordinate descent with soft thresholding) for the
box-constrained L1-regularized quadratic weight subproblem."""
from __future__ import annotations

import numpy as np


def soft_threshold(x, lam):
    return np.sign(x) * max(abs(x) - lam, 0.0)


def shooting_l1_box(H, g, l1, w0=None, lower=0.0, upper=1.0, tol=1e-6, max_sweeps=100):
    """Minimize 0.5 w'Hw + g'w + l1 ||w||_1 subject to lower <= w <= upper.

    Per-coordinate exact minimization with soft thresholding and clamping.
    Full sweeps alternate with sweeps restricted to the active (nonzero)
    coordinates until nothing moves more than ``tol``.
    """
    H = np.asarray(H, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    n = len(g)
    w = np.clip(np.zeros(n) if w0 is None else np.array(w0, dtype=np.float64), lower, upper)
    Hw = H @ w
    diag = np.diag(H).copy()
    cols = [np.ascontiguousarray(H[:, i]) for i in range(n)]

    def sweep(indices):
        nonlocal Hw
        max_change = 0.0
        for i in indices:
            wi_old = w[i]
            rho = -(g[i] + Hw[i] - diag[i] * wi_old)
            di = diag[i]
            if di > 1e-300:
                mag = abs(rho) - l1
                wi = (mag if mag > 0 else 0.0) * (1.0 if rho > 0 else -1.0) / di
            else:
                # flat direction: subgradient picks the boundary of the L1 kink
                wi = 0.0 if abs(rho) <= l1 else (upper if rho > 0 else lower)
            wi = lower if wi < lower else (upper if wi > upper else wi)
            if wi != wi_old:
                Hw += cols[i] * (wi - wi_old)
                w[i] = wi
                change = abs(wi - wi_old)
                if change > max_change:
                    max_change = change
        return max_change

    all_idx = range(n)
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        if sweep(all_idx) < tol:
            break
        active = np.nonzero(w)[0]
        while sweeps < max_sweeps and len(active):
            sweeps += 1
            if sweep(active) < tol:
                break
    return w


def quadratic_l1_objective(H, g, l1, w) -> float:
    w = np.asarray(w, dtype=np.float64)
    return float(0.5 * w @ (H @ w) + g @ w + l1 * np.abs(w).sum())
