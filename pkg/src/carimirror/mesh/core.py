"""Fixed-topology triangle mesh containers and OBJ / JSON persistence.

All pipeline stages share one vertex/face layout; a short hash of the face
list (``topology_id``) guards against accidental mixing of incompatible
meshes or weight bundles.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import MeshError, TopologyMismatchError


def _topology_hash(faces: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(b"tri:%d:" % faces.shape[0])
    h.update(np.ascontiguousarray(faces, dtype=np.int64).tobytes())
    return h.hexdigest()[:16]


class TriMesh:
    """Triangle mesh with immutable vertex/face arrays.

    vertices: (V, 3) float64, model units; faces: (F, 3) int32 vertex indices.
    Optional per-vertex UV chart coordinates in [0, 1]^2.
    """

    __slots__ = ("vertices", "faces", "uv", "topology_id")

    def __init__(self, vertices, faces, uv=None):
        v = np.asarray(vertices, dtype=np.float64)
        f = np.asarray(faces, dtype=np.int32)
        if v.ndim != 2 or v.shape[1] != 3:
            raise MeshError(f"vertices must be (V, 3), got {v.shape}")
        if f.ndim != 2 or f.shape[1] != 3:
            raise MeshError(f"faces must be (F, 3), got {f.shape}")
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise MeshError("face indices out of range")
        if not np.isfinite(v).all():
            raise MeshError("vertex coordinates contain NaN/inf")
        if uv is not None:
            uv = np.asarray(uv, dtype=np.float64)
            if uv.shape != (len(v), 2):
                raise MeshError(f"uv must be (V, 2), got {uv.shape}")
        self.vertices = v
        self.faces = f
        self.uv = uv
        self.topology_id = _topology_hash(f)
        for a in (self.vertices, self.faces):
            a.setflags(write=False)
        if self.uv is not None:
            self.uv.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def with_vertices(self, vertices) -> "TriMesh":
        """Same topology (and UVs), new vertex positions."""
        return TriMesh(vertices, self.faces, uv=self.uv)

    def bbox_diagonal(self) -> float:
        ext = self.vertices.max(axis=0) - self.vertices.min(axis=0)
        return float(np.linalg.norm(ext))

    def require_same_topology(self, other: "TriMesh", what: str = "mesh"):
        if self.topology_id != other.topology_id:
            raise TopologyMismatchError(
                f"{what}: topology {other.topology_id} does not match {self.topology_id}"
            )

    # --- OBJ persistence (v / vt / f records, 1-based indices) ---

    def save_obj(self, path):
        path = Path(path)
        lines = []
        for p in self.vertices:
            lines.append("v %.17g %.17g %.17g" % (p[0], p[1], p[2]))
        has_uv = self.uv is not None
        if has_uv:
            for q in self.uv:
                lines.append("vt %.17g %.17g" % (q[0], q[1]))
        for f in self.faces:
            if has_uv:
                lines.append("f %d/%d %d/%d %d/%d" % (f[0] + 1, f[0] + 1, f[1] + 1, f[1] + 1, f[2] + 1, f[2] + 1))
            else:
                lines.append("f %d %d %d" % (f[0] + 1, f[1] + 1, f[2] + 1))
        path.write_text("\n".join(lines) + "\n")

    @staticmethod
    def load_obj(path) -> "TriMesh":
        verts, uvs, faces, face_uvs = [], [], [], []
        for raw in Path(path).read_text().splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            tok = line.split()
            if tok[0] == "v":
                verts.append([float(x) for x in tok[1:4]])
            elif tok[0] == "vt":
                uvs.append([float(x) for x in tok[1:3]])
            elif tok[0] == "f":
                if len(tok) != 4:
                    raise MeshError(f"non-triangular face in OBJ: {line!r}")
                vi, ti = [], []
                for t in tok[1:]:
                    parts = t.split("/")
                    vi.append(int(parts[0]) - 1)
                    if len(parts) > 1 and parts[1]:
                        ti.append(int(parts[1]) - 1)
                faces.append(vi)
                if ti:
                    face_uvs.append(ti)
        if not verts or not faces:
            raise MeshError(f"OBJ file {path} has no geometry")
        uv = None
        if uvs and face_uvs:
            # Per-vertex chart: trust the v/vt pairing used by save_obj.
            uv_arr = np.zeros((len(verts), 2))
            seen = np.zeros(len(verts), dtype=bool)
            for f, fu in zip(faces, face_uvs):
                for v_idx, t_idx in zip(f, fu):
                    uv_arr[v_idx] = uvs[t_idx]
                    seen[v_idx] = True
            uv = uv_arr if seen.any() else None
        return TriMesh(verts, faces, uv=uv)


@dataclass(frozen=True)
class LandmarkSet:
    """Vertex indices of the 2D-detectable landmarks plus polygon loops.

    ``polygons`` index into ``indices`` (not into mesh vertices); default is
    three loops: left eye, right eye, outer mouth.
    """

    indices: tuple
    polygons: tuple = field(default_factory=tuple)

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        object.__setattr__(self, "indices", idx)
        if len(set(idx)) != len(idx):
            raise MeshError("landmark indices must be distinct")
        polys = tuple(tuple(int(j) for j in p) for p in self.polygons)
        for p in polys:
            if len(p) < 3:
                raise MeshError("each landmark polygon needs >= 3 vertices")
            if any(j < 0 or j >= len(idx) for j in p):
                raise MeshError("polygon entry out of landmark range")
        object.__setattr__(self, "polygons", polys)

    def __len__(self):
        return len(self.indices)

    def vertex_positions(self, mesh: TriMesh) -> np.ndarray:
        if max(self.indices) >= mesh.n_vertices:
            raise MeshError("landmark index out of mesh range")
        return mesh.vertices[list(self.indices)]

    def save_json(self, path):
        Path(path).write_text(json.dumps(
            {"indices": list(self.indices), "polygons": [list(p) for p in self.polygons]},
            indent=1, sort_keys=True))

    @staticmethod
    def load_json(path) -> "LandmarkSet":
        data = json.loads(Path(path).read_text())
        return LandmarkSet(tuple(data["indices"]), tuple(tuple(p) for p in data.get("polygons", [])))


class BlendshapeRig:
    """Neutral shape b0 plus expression shapes b1..bn sharing one topology."""

    def __init__(self, shapes):
        shapes = list(shapes)
        if not shapes:
            raise MeshError("rig needs at least the neutral shape")
        base = shapes[0]
        for k, s in enumerate(shapes[1:], start=1):
            base.require_same_topology(s, what=f"blendshape {k}")
        self.shapes = shapes

    @property
    def neutral(self) -> TriMesh:
        return self.shapes[0]

    @property
    def n_expressions(self) -> int:
        return len(self.shapes) - 1

    @property
    def topology_id(self) -> str:
        return self.neutral.topology_id

    def delta_matrix(self) -> np.ndarray:
        """(3V, n) matrix of b_k - b_0 offsets, column per expression."""
        b0 = self.shapes[0].vertices.reshape(-1)
        return np.stack([s.vertices.reshape(-1) - b0 for s in self.shapes[1:]], axis=1)

    def evaluate(self, weights) -> TriMesh:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (self.n_expressions,):
            raise MeshError(f"weights must be ({self.n_expressions},), got {w.shape}")
        v = self.neutral.vertices.reshape(-1) + self.delta_matrix() @ w
        return self.neutral.with_vertices(v.reshape(-1, 3))

    def save_dir(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for k, s in enumerate(self.shapes):
            s.save_obj(directory / f"shape_{k:02d}.obj")

    @staticmethod
    def load_dir(directory) -> "BlendshapeRig":
        paths = sorted(Path(directory).glob("shape_*.obj"))
        if not paths:
            raise MeshError(f"no blendshapes found in {directory}")
        return BlendshapeRig([TriMesh.load_obj(p) for p in paths])


@dataclass(frozen=True)
class DeformConstraint:
    """Soft (finite weight) or hard (weight=inf) positional target."""

    vertex_index: int
    target: tuple
    weight: float = 1.0

    def __post_init__(self):
        if self.weight < 0:
            raise MeshError("constraint weight must be nonnegative")
        object.__setattr__(self, "target", tuple(float(x) for x in self.target))
