"""Corpus loading and expression augmentation.

The trainer consumes the engine's file formats only: OBJ meshes, the corpus
manifest JSON and the landmark JSON written by `carimirror synth`. The
topology hash must match the engine's convention (sha256 over a "tri:<F>:"
prefix plus the int64 face buffer, first 16 hex chars).
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


def topology_hash(faces: np.ndarray) -> str:
    faces = np.ascontiguousarray(faces, dtype=np.int64)
    h = hashlib.sha256()
    h.update(b"tri:%d:" % faces.shape[0])
    h.update(faces.tobytes())
    return h.hexdigest()[:16]


def load_obj(path):
    verts, faces = [], []
    for raw in Path(path).read_text().splitlines():
        tok = raw.split()
        if not tok:
            continue
        if tok[0] == "v":
            verts.append([float(x) for x in tok[1:4]])
        elif tok[0] == "f":
            faces.append([int(t.split("/")[0]) - 1 for t in tok[1:4]])
    return np.array(verts, dtype=np.float64), np.array(faces, dtype=np.int64)


def save_obj(path, vertices, faces):
    lines = ["v %.17g %.17g %.17g" % (p[0], p[1], p[2]) for p in vertices]
    lines += ["f %d %d %d" % (f[0] + 1, f[1] + 1, f[2] + 1) for f in faces]
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass
class LandmarkSpec:
    indices: np.ndarray
    polygons: list  # index loops into `indices`

    @staticmethod
    def load(path) -> "LandmarkSpec":
        data = json.loads(Path(path).read_text())
        return LandmarkSpec(np.array(data["indices"], dtype=np.int64),
                            [list(p) for p in data["polygons"]])


@dataclass
class DomainData:
    vertices: np.ndarray   # (N, V, 3)
    identity: np.ndarray   # (N,)
    expression: np.ndarray  # (N,)


@dataclass
class Corpus:
    faces: np.ndarray
    topology_id: str
    landmarks: LandmarkSpec
    domains: dict  # name -> DomainData

    @property
    def n_vertices(self) -> int:
        return self.domains["regular"].vertices.shape[1]


def load_corpus(corpus_dir) -> Corpus:
    corpus_dir = Path(corpus_dir)
    manifest = json.loads((corpus_dir / "manifest.json").read_text())
    landmarks = LandmarkSpec.load((corpus_dir / manifest["landmarks"]).resolve())
    faces = None
    domains = {}
    for name, entry in manifest["domains"].items():
        meshes = []
        for rel in entry["meshes"]:
            v, f = load_obj(corpus_dir / rel)
            if faces is None:
                faces = f
                if topology_hash(faces) != manifest["topology_id"]:
                    raise ValueError("corpus topology hash mismatch with manifest")
            meshes.append(v)
        domains[name] = DomainData(np.stack(meshes),
                                   np.array(entry["identity"], dtype=np.int64),
                                   np.array(entry["expression"], dtype=np.int64))
    return Corpus(faces, manifest["topology_id"], landmarks, domains)


def load_rig(rig_dir):
    """Template blendshape rig: shape_00 is neutral."""
    paths = sorted(Path(rig_dir).glob("shape_*.obj"))
    shapes = []
    faces = None
    for p in paths:
        v, f = load_obj(p)
        faces = f if faces is None else faces
        shapes.append(v)
    return np.stack(shapes), faces


# --- deformation transfer (for expression augmentation) ----------------------


def _frames(verts, faces):
    e1 = verts[faces[:, 1]] - verts[faces[:, 0]]
    e2 = verts[faces[:, 2]] - verts[faces[:, 0]]
    n = np.cross(e1, e2)
    ln = np.linalg.norm(n, axis=1)
    n = n / np.sqrt(np.maximum(ln, 1e-14))[:, None]
    return np.stack([e1, e2, n], axis=2)


class ExpressionTransfer:
    """Least-squares deformation transfer onto one fixed target neutral.

    Matches the engine's semantics: vertex 0 is pinned at the target position
    translated by the source's first-vertex displacement, so identity and
    self-transfers are exact. The factorization depends on the target only
    and is reused across all rig expressions.
    """

    def __init__(self, tgt_rest, faces):
        import scipy.sparse as sp
        from scipy.sparse.linalg import splu

        self.faces = np.asarray(faces, dtype=np.int64)
        self.tgt_rest = np.asarray(tgt_rest, dtype=np.float64)
        nf, nv = len(self.faces), len(self.tgt_rest)
        self.nv = nv
        inv = np.linalg.inv(_frames(self.tgt_rest, self.faces))
        rows, cols, vals = [], [], []
        for fi in range(nf):
            i0, i1, i2 = (int(x) for x in self.faces[fi])
            W = inv[fi]
            for j in range(3):
                r = 3 * fi + j
                for col, val in ((i0, -(W[0, j] + W[1, j] + W[2, j])), (i1, W[0, j]),
                                 (i2, W[1, j]), (nv + fi, W[2, j])):
                    rows.append(r)
                    cols.append(col)
                    vals.append(val)
        A = sp.coo_matrix((vals, (rows, cols)), shape=(3 * nf, nv + nf)).tocsc()
        self._A_pin = np.asarray(A[:, 0].todense())
        self._A_free = A[:, 1:]
        self._solve = splu((self._A_free.T @ self._A_free).tocsc())

    def transfer(self, src_rest, src_deformed):
        rest_fr = _frames(src_rest, self.faces)
        def_fr = _frames(src_deformed, self.faces)
        grads = def_fr @ np.linalg.inv(rest_fr)
        b = grads.transpose(0, 2, 1).reshape(-1, 3)
        pin = self.tgt_rest[0] + (src_deformed[0] - src_rest[0])
        rhs = b - self._A_pin * pin[None, :]
        sol = np.column_stack([self._solve.solve(np.asarray(self._A_free.T @ rhs[:, k]).ravel())
                               for k in range(3)])
        return np.vstack([pin[None, :], sol[:self.nv - 1]])


def transfer_expression(src_rest, src_deformed, tgt_rest, faces):
    return ExpressionTransfer(tgt_rest, faces).transfer(src_rest, src_deformed)


def augment_expressions(neutrals, rig_shapes, faces, expression_indices=None):
    """Transfer each rig expression onto each neutral caricature.

    Returns (augmented_vertices, identity_labels, expression_tags): the
    originals followed by len(neutrals) x len(expressions) new meshes.
    """
    if expression_indices is None:
        expression_indices = range(1, len(rig_shapes))
    out = [np.asarray(v, dtype=np.float64) for v in neutrals]
    ident = list(range(len(neutrals)))
    etag = [0] * len(neutrals)
    rest = rig_shapes[0]
    for ni, neutral in enumerate(neutrals):
        solver = ExpressionTransfer(neutral, faces)
        for ei in expression_indices:
            out.append(solver.transfer(rest, rig_shapes[ei]))
            ident.append(ni)
            etag.append(int(ei))
    return np.stack(out), np.array(ident), np.array(etag)
