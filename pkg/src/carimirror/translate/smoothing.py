"""Closed-form latent temporal smoothing.

Minimizes mu ||p2 - 2 p1 + x||^2 + ||x - c||^2 over x, giving
x* = (c + mu (2 p1 - p2)) / (1 + mu).
"""
from __future__ import annotations

from ..errors import MeshError
from .network import LatentCode

DEFAULT_MU_SMO = 0.001


def smooth_latent(prev2: LatentCode, prev1: LatentCode, current: LatentCode,
                  mu_smo=DEFAULT_MU_SMO) -> LatentCode:
    if not (prev2.domain == prev1.domain == current.domain):
        raise MeshError("smooth_latent requires codes from one domain")
    if not (prev2.dim == prev1.dim == current.dim):
        raise MeshError("smooth_latent requires equal-dimension codes")
    if mu_smo < 0:
        raise MeshError("mu_smo must be nonnegative")
    x = (current.values + mu_smo * (2.0 * prev1.values - prev2.values)) / (1.0 + mu_smo)
    return LatentCode(x, current.domain)
