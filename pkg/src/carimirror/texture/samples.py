"""Texel-domain containers for texture fusion, with PNG/JSON persistence."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from ..errors import MeshError

UNASSIGNED = -1


@dataclass
class ViewSample:
    """One stylized view resampled into the texture chart.

    colors: (H, W, 3) linear RGB in [0, 1]; normals: (H, W, 3) unit where
    valid; valid: (H, W) bool; view_dir: unit camera-to-surface direction.
    """

    colors: np.ndarray
    normals: np.ndarray
    valid: np.ndarray
    view_dir: np.ndarray

    def __post_init__(self):
        self.colors = np.asarray(self.colors, dtype=np.float64)
        self.normals = np.asarray(self.normals, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        d = np.asarray(self.view_dir, dtype=np.float64).reshape(3)
        n = np.linalg.norm(d)
        if abs(n - 1.0) > 1e-6:
            raise MeshError("view_dir must be unit length")
        self.view_dir = d / n
        if self.colors.shape[:2] != self.valid.shape or self.normals.shape != self.colors.shape:
            raise MeshError("view sample arrays disagree on texel grid shape")

    @property
    def shape(self):
        return self.valid.shape

    def save(self, directory, name):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        col = np.clip(self.colors, 0, 1)
        col = np.where(self.valid[..., None], col, 0.0)
        Image.fromarray((col * 255).round().astype(np.uint8)).save(directory / f"{name}_color.png")
        nm = np.where(self.valid[..., None], (self.normals + 1) / 2, 0.0)
        Image.fromarray((np.clip(nm, 0, 1) * 255).round().astype(np.uint8)).save(
            directory / f"{name}_normal.png")
        Image.fromarray(self.valid.astype(np.uint8) * 255).save(directory / f"{name}_valid.png")
        (directory / f"{name}_view.json").write_text(
            json.dumps({"view_dir": [float(x) for x in self.view_dir]}))

    @staticmethod
    def load(directory, name) -> "ViewSample":
        directory = Path(directory)
        col = np.asarray(Image.open(directory / f"{name}_color.png"), dtype=np.float64) / 255.0
        nm = np.asarray(Image.open(directory / f"{name}_normal.png"), dtype=np.float64) / 255.0 * 2 - 1
        valid = np.asarray(Image.open(directory / f"{name}_valid.png")) > 127
        ln = np.linalg.norm(nm, axis=-1)
        safe = ln > 0.1
        nm[safe] /= ln[safe][..., None]
        d = json.loads((directory / f"{name}_view.json").read_text())["view_dir"]
        return ViewSample(col, nm, valid & safe, np.array(d))


@dataclass
class LabelMap:
    """Per-texel source-view index, UNASSIGNED (-1) where undecided."""

    labels: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int32)

    @property
    def assigned(self) -> np.ndarray:
        return self.labels != UNASSIGNED

    def save_png(self, path):
        arr = self.labels.copy()
        arr[arr == UNASSIGNED] = 255
        img = Image.fromarray(arr.astype(np.uint8), mode="P")
        palette = []
        for k in range(256):
            rng = np.random.default_rng(k)
            palette.extend(int(x) for x in rng.integers(0, 255, 3))
        img.putpalette(palette)
        img.save(path)

    @staticmethod
    def load_png(path) -> "LabelMap":
        arr = np.asarray(Image.open(path), dtype=np.int32)
        arr = arr.copy()
        arr[arr == 255] = UNASSIGNED
        return LabelMap(arr)


@dataclass
class TextureAtlas:
    """Fused texel grid plus the face-chart mask."""

    colors: np.ndarray   # (H, W, 3) linear RGB
    mask: np.ndarray     # (H, W) bool

    def __post_init__(self):
        self.colors = np.asarray(self.colors, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.colors.shape[:2] != self.mask.shape:
            raise MeshError("atlas color/mask shapes disagree")

    def clamped(self) -> "TextureAtlas":
        return TextureAtlas(np.clip(self.colors, 0.0, 1.0), self.mask)

    def save_png(self, path):
        img = np.clip(self.colors, 0, 1)
        Image.fromarray((img * 255).round().astype(np.uint8)).save(path)

    @staticmethod
    def load_png(path, mask=None) -> "TextureAtlas":
        arr = np.asarray(Image.open(path).convert("RGB"), dtype=np.float64) / 255.0
        if mask is None:
            mask = np.ones(arr.shape[:2], dtype=bool)
        return TextureAtlas(arr, mask)
