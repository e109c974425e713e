"""Second-order real spherical-harmonics shading and albedo containers."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import MeshError

# real SH constants: Y_00; Y_1{-1,0,1}; Y_2{-2,-1,0,1,2}
_C0 = 0.28209479177387814   # 1 / (2 sqrt(pi))
_C1 = 0.4886025119029199    # sqrt(3 / (4 pi))
_C2 = 1.0925484305920792    # sqrt(15 / (4 pi))
_C3 = 0.31539156525252005   # sqrt(5 / (16 pi))
_C4 = 0.5462742152960396    # sqrt(15 / (16 pi))


def sh_basis(normals) -> np.ndarray:
    """(N, 9) second-order SH basis evaluated at unit normals."""
    n = np.atleast_2d(np.asarray(normals, dtype=np.float64))
    x, y, z = n[:, 0], n[:, 1], n[:, 2]
    return np.column_stack([
        np.full(len(n), _C0),
        _C1 * y, _C1 * z, _C1 * x,
        _C2 * x * y, _C2 * y * z,
        _C3 * (3 * z * z - 1.0),
        _C2 * x * z,
        _C4 * (x * x - y * y),
    ])


@dataclass
class SHLighting:
    gamma: np.ndarray  # 9 coefficients

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=np.float64).reshape(-1)
        if g.shape != (9,):
            raise MeshError(f"SH lighting needs 9 coefficients, got {g.shape}")
        if not np.isfinite(g).all():
            raise MeshError("SH coefficients must be finite")
        self.gamma = g

    def shade(self, normals) -> np.ndarray:
        """Irradiance per unit normal (albedo 1)."""
        return sh_basis(normals) @ self.gamma

    def to_dict(self):
        return {"gamma": [float(g) for g in self.gamma]}

    @staticmethod
    def from_dict(d):
        return SHLighting(np.array(d["gamma"]))

    def save_json(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True))

    @staticmethod
    def load_json(path):
        return SHLighting.from_dict(json.loads(Path(path).read_text()))


def sh_irradiance(normal, albedo, lighting: SHLighting) -> float:
    """rho * sum_j gamma_j phi_j(n) for one unit normal."""
    n = np.asarray(normal, dtype=np.float64).reshape(3)
    if abs(np.linalg.norm(n) - 1.0) > 1e-6:
        raise MeshError("sh_irradiance requires a unit normal")
    return float(albedo) * float(sh_basis(n[None, :])[0] @ lighting.gamma)


@dataclass
class AlbedoMap:
    """Per-vertex gray albedo in [0, 1] plus an optional baked texel grid."""

    per_vertex: np.ndarray
    texture: np.ndarray = None       # (H, W) gray, NaN outside the chart
    texel_valid: np.ndarray = None   # (H, W) bool

    def __post_init__(self):
        a = np.asarray(self.per_vertex, dtype=np.float64).reshape(-1)
        if a.size and (a.min() < -1e-12 or a.max() > 1 + 1e-12):
            raise MeshError("albedo values must lie in [0, 1]")
        self.per_vertex = np.clip(a, 0.0, 1.0)

    def save_npz(self, path):
        np.savez_compressed(path, per_vertex=self.per_vertex,
                            texture=self.texture if self.texture is not None else np.zeros((0, 0)),
                            texel_valid=self.texel_valid if self.texel_valid is not None else np.zeros((0, 0), bool))

    @staticmethod
    def load_npz(path):
        d = np.load(path)
        tex = d["texture"] if d["texture"].size else None
        valid = d["texel_valid"] if d["texel_valid"].size else None
        return AlbedoMap(d["per_vertex"], tex, valid)
