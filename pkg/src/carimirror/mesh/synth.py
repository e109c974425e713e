"""Deterministic synthetic face families used as the desk-scale corpus.

A parametric face patch (grid over [-1, 1]^2 with nose/brow/mouth relief)
carries a 10-component identity basis and an 8-component expression basis.
The "regular" style is linear in the parameters; the "exaggerated" style
applies a fixed smooth invertible warp on top, so the two styles form
genuinely distinct shape distributions.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from ..errors import MeshError
from .core import BlendshapeRig, LandmarkSet, TriMesh

IDENTITY_DIM = 10
EXPRESSION_DIM = 8
DEFAULT_RESOLUTION = (24, 28)  # (nu columns, nv rows)

# 46 expression shapes: 8 pure directions, all 28 pairs, 10 triples
_PAIR_COEFFS = (0.65, 0.45)
_TRIPLES = (
    (0, 1, 2), (1, 2, 3), (2, 3, 4), (3, 4, 5), (4, 5, 6),
    (5, 6, 7), (0, 3, 6), (1, 4, 7), (0, 2, 5), (2, 5, 7),
)
_TRIPLE_COEFFS = (0.5, 0.4, 0.3)


def _gauss(s, t, cs, ct, ws, wt):
    return np.exp(-(((s - cs) / ws) ** 2) - (((t - ct) / wt) ** 2))


class FaceFamily:
    """Face-shape generator at a fixed grid resolution (one topology)."""

    def __init__(self, resolution=DEFAULT_RESOLUTION):
        nu, nv = resolution
        if nu < 8 or nv < 8:
            raise MeshError("face grid must be at least 8x8")
        self.resolution = (int(nu), int(nv))
        s = np.linspace(-1.0, 1.0, nu)
        t = np.linspace(-1.0, 1.0, nv)
        S, T = np.meshgrid(s, t)  # (nv, nu), row-major over t then s
        self._s = S.reshape(-1)
        self._t = T.reshape(-1)
        self._faces = self._grid_faces(nu, nv)
        self._uv = np.column_stack([(self._s + 1) / 2, (self._t + 1) / 2])
        self._template = self._build_template()
        self._id_basis = self._build_identity_basis()    # (3V, 10)
        self._expr_basis = self._build_expression_basis()  # (3V, 8)
        self._landmarks = None

    # --- topology -----------------------------------------------------

    @staticmethod
    def _grid_faces(nu, nv):
        faces = []
        for r in range(nv - 1):
            for c in range(nu - 1):
                v00 = r * nu + c
                v10 = r * nu + c + 1
                v01 = (r + 1) * nu + c
                v11 = (r + 1) * nu + c + 1
                faces.append((v00, v10, v11))
                faces.append((v00, v11, v01))
        return np.array(faces, dtype=np.int32)

    # --- base surface and bases ----------------------------------------

    def _build_template(self) -> TriMesh:
        s, t = self._s, self._t
        x = s * (0.72 + 0.2 * (1 - t * t))
        y = 1.05 * t
        dome = 0.55 * np.sqrt(np.clip(1.0 - 0.55 * s * s - 0.35 * t * t, 0.0, None))
        nose = 0.28 * _gauss(s, t, 0.0, -0.05, 0.16, 0.22)
        eyes = -0.06 * (_gauss(s, t, -0.38, 0.3, 0.16, 0.10) + _gauss(s, t, 0.38, 0.3, 0.16, 0.10))
        mouth = 0.05 * _gauss(s, t, 0.0, -0.52, 0.30, 0.08)
        brow = 0.04 * _gauss(s, t, 0.0, 0.5, 0.50, 0.07)
        z = dome + nose + eyes + mouth + brow
        return TriMesh(np.column_stack([x, y, z]), self._faces, uv=self._uv)

    def _field(self, dx=0.0, dy=0.0, dz=0.0):
        v = np.zeros((len(self._s), 3))
        v[:, 0] = dx
        v[:, 1] = dy
        v[:, 2] = dz
        return v.reshape(-1)

    def _build_identity_basis(self):
        s, t = self._s, self._t
        g = _gauss
        nose = g(s, t, 0.0, -0.05, 0.22, 0.28)
        brow = g(s, t, 0.0, 0.5, 0.55, 0.12)
        cheeks = g(s, t, -0.55, -0.15, 0.22, 0.25) + g(s, t, 0.55, -0.15, 0.22, 0.25)
        chin = g(s, t, 0.0, -0.85, 0.30, 0.20)
        eye_l = g(s, t, -0.38, 0.3, 0.20, 0.12)
        eye_r = g(s, t, 0.38, 0.3, 0.20, 0.12)
        mouth = g(s, t, 0.0, -0.5, 0.35, 0.15)
        forehead = g(s, t, 0.0, 0.78, 0.60, 0.22)
        lateral = np.tanh(s / 0.25)
        cols = [
            self._field(dx=0.10 * s * np.exp(-((t / 0.9) ** 2))),
            self._field(dy=0.10 * t),
            self._field(dy=0.02 * nose, dz=0.12 * nose),
            self._field(dx=0.06 * np.tanh(s / 0.15) * g(s, t, 0.0, -0.05, 0.30, 0.25)),
            self._field(dy=0.06 * brow, dz=0.025 * brow),
            self._field(dx=0.03 * lateral * cheeks, dz=0.07 * cheeks),
            self._field(dy=-0.12 * chin, dz=0.03 * chin),
            self._field(dx=0.05 * (eye_r - eye_l)),
            self._field(dx=0.07 * np.tanh(s / 0.2) * mouth),
            self._field(dy=0.04 * forehead, dz=0.06 * forehead),
        ]
        return np.stack(cols, axis=1)

    def _build_expression_basis(self):
        s, t = self._s, self._t
        g = _gauss
        # expressions vanish exactly on the grid rim (the face boundary is
        # static), which also keeps deformation-transfer pinning exact
        window = (1.0 - s ** 8) * (1.0 - t ** 8)
        jaw = g(s, t, 0.0, -0.75, 0.50, 0.35)
        corner_l = g(s, t, -0.30, -0.50, 0.12, 0.10)
        corner_r = g(s, t, 0.30, -0.50, 0.12, 0.10)
        brow_band = g(s, t, 0.0, 0.5, 0.55, 0.10)
        inner_brow_l = g(s, t, -0.15, 0.45, 0.10, 0.08)
        inner_brow_r = g(s, t, 0.15, 0.45, 0.10, 0.08)
        eye_l = g(s, t, -0.38, 0.3, 0.18, 0.10)
        eye_r = g(s, t, 0.38, 0.3, 0.18, 0.10)
        mouth = g(s, t, 0.0, -0.5, 0.30, 0.12)
        cheeks = g(s, t, -0.5, -0.2, 0.2, 0.2) + g(s, t, 0.5, -0.2, 0.2, 0.2)
        cols = [
            self._field(dy=-0.16 * jaw, dz=-0.02 * jaw),
            self._field(dx=0.06 * (corner_r - corner_l), dy=0.06 * (corner_l + corner_r),
                        dz=0.01 * (corner_l + corner_r)),
            self._field(dx=0.02 * (corner_l - corner_r), dy=-0.05 * (corner_l + corner_r)),
            self._field(dy=0.06 * brow_band, dz=0.02 * brow_band),
            self._field(dx=0.045 * (inner_brow_r - inner_brow_l) * -1.0,
                        dy=-0.02 * (inner_brow_l + inner_brow_r)),
            self._field(dy=-0.03 * (eye_l + eye_r), dz=-0.04 * (eye_l + eye_r)),
            self._field(dx=-0.05 * np.tanh(s / 0.2) * mouth, dz=0.05 * mouth),
            self._field(dz=0.09 * cheeks),
        ]
        basis = np.stack(cols, axis=1)
        return basis * np.repeat(window, 3)[:, None]

    # --- public API -----------------------------------------------------

    @property
    def template(self) -> TriMesh:
        return self._template

    @property
    def topology_id(self) -> str:
        return self._template.topology_id

    @property
    def identity_basis(self) -> np.ndarray:
        """(3V, 10) linear identity displacement basis."""
        return self._id_basis

    @property
    def expression_basis(self) -> np.ndarray:
        """(3V, 8) linear expression displacement basis."""
        return self._expr_basis

    def synthesize(self, identity_params=None, expression_params=None,
                   style="regular", seed=None) -> TriMesh:
        """Deterministic mesh for the given parameters.

        ``None`` parameter vectors are drawn from the seeded RNG; explicit
        vectors are used verbatim (and the seed is then irrelevant).
        """
        if style not in ("regular", "exaggerated"):
            raise MeshError(f"unknown style {style!r}")
        rng = np.random.default_rng(seed)
        if identity_params is None:
            identity_params = np.clip(rng.normal(0.0, 0.8, IDENTITY_DIM), -2.0, 2.0)
        if expression_params is None:
            expression_params = rng.uniform(0.0, 1.0, EXPRESSION_DIM) * (
                rng.random(EXPRESSION_DIM) < 0.4)
        a = np.asarray(identity_params, dtype=np.float64)
        e = np.asarray(expression_params, dtype=np.float64)
        if a.shape != (IDENTITY_DIM,):
            raise MeshError(f"identity params must be ({IDENTITY_DIM},), got {a.shape}")
        if e.shape != (EXPRESSION_DIM,):
            raise MeshError(f"expression params must be ({EXPRESSION_DIM},), got {e.shape}")
        v = self._template.vertices.reshape(-1) + self._id_basis @ a + self._expr_basis @ e
        mesh = self._template.with_vertices(v.reshape(-1, 3))
        if style == "exaggerated":
            mesh = self.exaggerate(mesh)
        return mesh

    @staticmethod
    def exaggerate(mesh: TriMesh) -> TriMesh:
        """Fixed smooth invertible caricature warp: monotone radial expansion
        about a mid-face center composed with an anisotropic stretch."""
        center = np.array([0.0, -0.05, 0.25])
        p = mesh.vertices - center
        r2 = np.sum(p * p, axis=1)
        factor = 1.0 + 0.45 * r2 / (0.81 + r2)
        p = p * factor[:, None]
        p *= np.array([1.12, 1.20, 1.0])
        return mesh.with_vertices(center + p)

    def expression_mix_table(self) -> np.ndarray:
        """(46, 8) coefficients defining the template rig's expressions."""
        rows = []
        eye = np.eye(EXPRESSION_DIM)
        for k in range(EXPRESSION_DIM):
            rows.append(eye[k])
        for i in range(EXPRESSION_DIM):
            for j in range(i + 1, EXPRESSION_DIM):
                rows.append(_PAIR_COEFFS[0] * eye[i] + _PAIR_COEFFS[1] * eye[j])
        for (i, j, k) in _TRIPLES:
            rows.append(_TRIPLE_COEFFS[0] * eye[i] + _TRIPLE_COEFFS[1] * eye[j]
                        + _TRIPLE_COEFFS[2] * eye[k])
        return np.stack(rows)

    def template_rig(self, identity_params=None) -> BlendshapeRig:
        """47-shape rig: neutral plus the 46 mixed expression shapes."""
        if identity_params is None:
            identity_params = np.zeros(IDENTITY_DIM)
        shapes = [self.synthesize(identity_params, np.zeros(EXPRESSION_DIM))]
        for mix in self.expression_mix_table():
            shapes.append(self.synthesize(identity_params, mix))
        return BlendshapeRig(shapes)

    # --- landmarks ------------------------------------------------------

    def _landmark_positions_st(self):
        pts = []
        # jaw line, 17 points around the lower oval
        for i in range(17):
            th = np.pi + np.pi * i / 16
            pts.append((0.9 * np.cos(th), 0.35 + 1.25 * np.sin(th)))
        # brows, 5+5
        for i in range(5):
            u = i / 4
            pts.append((-0.62 + 0.44 * u, 0.45 + 0.05 * np.sin(np.pi * u)))
        for i in range(5):
            u = i / 4
            pts.append((0.18 + 0.44 * u, 0.45 + 0.05 * np.sin(np.pi * (1 - u))))
        # nose bridge + nostril line
        for i in range(4):
            pts.append((0.0, 0.32 - 0.11 * i))
        for i in range(5):
            pts.append((-0.16 + 0.08 * i, -0.10 - 0.02 * (1 - abs(i - 2) / 2)))
        # eyes, 6 each (closed loops)
        for cx in (-0.38, 0.38):
            offs = [(-0.14, 0.0), (-0.06, 0.06), (0.05, 0.06),
                    (0.13, 0.0), (0.05, -0.06), (-0.06, -0.06)]
            if cx > 0:
                offs = [(-o[0], o[1]) for o in offs]
            for ox, oy in offs:
                pts.append((cx + ox, 0.30 + oy))
        # outer mouth, 12-point loop
        for j in range(12):
            psi = np.pi - 2 * np.pi * j / 12
            pts.append((0.28 * np.cos(psi), -0.50 + 0.11 * np.sin(psi)))
        # inner mouth, 8-point loop
        for j in range(8):
            psi = np.pi - 2 * np.pi * j / 8
            pts.append((0.16 * np.cos(psi), -0.50 + 0.05 * np.sin(psi)))
        return np.array(pts)

    def default_landmarks(self) -> LandmarkSet:
        """68-landmark layout with three polygons: eye loops and outer mouth."""
        if self._landmarks is not None:
            return self._landmarks
        want = self._landmark_positions_st()
        grid = np.column_stack([self._s, self._t])
        taken = set()
        indices = []
        for p in want:
            d = np.sum((grid - p) ** 2, axis=1)
            for vi in np.argsort(d):
                if int(vi) not in taken:
                    taken.add(int(vi))
                    indices.append(int(vi))
                    break
        polygons = (
            tuple(range(36, 42)),   # left eye loop
            tuple(range(42, 48)),   # right eye loop
            tuple(range(48, 60)),   # outer mouth loop
        )
        self._landmarks = LandmarkSet(tuple(indices), polygons)
        return self._landmarks

    # --- corpora ---------------------------------------------------------

    def sample_corpus(self, n_identities, n_expressions, style, seed):
        """List of (mesh, identity_label, expression_tag) for one domain."""
        rng = np.random.default_rng(seed)
        out = []
        for ident in range(n_identities):
            idp = np.clip(rng.normal(0.0, 0.8, IDENTITY_DIM), -2.0, 2.0)
            for ex in range(n_expressions):
                if ex == 0:
                    ep = np.zeros(EXPRESSION_DIM)
                else:
                    ep = rng.uniform(0.0, 0.9, EXPRESSION_DIM) * (
                        rng.random(EXPRESSION_DIM) < 0.45)
                out.append((self.synthesize(idp, ep, style=style), ident, ex))
        return out


@lru_cache(maxsize=4)
def get_family(resolution=DEFAULT_RESOLUTION) -> FaceFamily:
    return FaceFamily(resolution)


def synthesize_face(identity_params=None, expression_params=None, style="regular",
                    seed=None, resolution=DEFAULT_RESOLUTION) -> TriMesh:
    return get_family(resolution).synthesize(identity_params, expression_params, style, seed)
