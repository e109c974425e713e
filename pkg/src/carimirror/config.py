"""Schema-versioned pipeline configuration (JSON), unknown keys rejected.

Defaults follow the published operating point: tracking weights
(mu_flow=1, mu_spa=10, mu_sm=0.001), latent smoothing mu_smo=0.001,
displacement regularizer 0.1, graph-cut data weight 1.2.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Optional

from pydantic import BaseModel, ConfigDict, ValidationError

from .errors import ConfigError

SCHEMA_VERSION = 1


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SynthSection(_Strict):
    resolution: tuple = (24, 28)
    n_views: int = 5
    image_size: int = 256
    focal: float = 300.0
    max_yaw_deg: float = 25.0
    n_frames: int = 30
    atlas_size: int = 96
    corpus_identities: int = 24
    corpus_expressions: int = 12


class StaticSection(_Strict):
    focal: float = 300.0
    outer_iters: int = 8
    photo_weight: float = 0.5
    reg_identity: float = 2.0
    reg_expression: float = 20.0
    lambda_reg: float = 0.1
    gn_iters: int = 10
    refine_weight: float = 20.0
    refine_rounds: int = 1
    optimize_intrinsics: bool = False
    atlas_size: int = 96


class TextureSection(_Strict):
    data_weight: float = 1.2
    alpha_sweeps: int = 10


class TrackSection(_Strict):
    mu_flow: float = 1.0
    mu_spa: float = 10.0
    mu_sm: float = 0.001
    flow_stride: int = 2


class TranslateSection(_Strict):
    mu_smo: float = 0.001
    source_domain: str = "regular"


class RenderSection(_Strict):
    image_size: int = 256
    frame_stride: int = 1


class PathsSection(_Strict):
    capture_dir: Optional[str] = None
    stylized_dir: Optional[str] = None
    frames_dir: Optional[str] = None
    rig_dir: Optional[str] = None
    track_file: Optional[str] = None
    meshes_dir: Optional[str] = None
    bundle_file: Optional[str] = None
    atlas_file: Optional[str] = None


class PipelineConfig(_Strict):
    schema_version: int = SCHEMA_VERSION
    seed: int = 0
    synth: SynthSection = SynthSection()
    static: StaticSection = StaticSection()
    texture: TextureSection = TextureSection()
    track: TrackSection = TrackSection()
    translate: TranslateSection = TranslateSection()
    render: RenderSection = RenderSection()
    paths: PathsSection = PathsSection()


def parse_config(data: dict) -> PipelineConfig:
    try:
        cfg = PipelineConfig(**data)
    except ValidationError as exc:
        first = exc.errors()[0]
        key = ".".join(str(p) for p in first["loc"])
        raise ConfigError(f"config key {key!r}: {first['msg']}", key=key) from exc
    if cfg.schema_version != SCHEMA_VERSION:
        raise ConfigError(
            f"config key 'schema_version': expected {SCHEMA_VERSION}, got {cfg.schema_version}",
            key="schema_version")
    return cfg


def load_config(path) -> PipelineConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    return parse_config(data)


def config_hash(cfg: PipelineConfig) -> str:
    blob = json.dumps(cfg.model_dump(mode="json"), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def require_path(cfg: PipelineConfig, key: str) -> Path:
    value = getattr(cfg.paths, key)
    if not value:
        raise ConfigError(f"config key 'paths.{key}' is required for this command",
                          key=f"paths.{key}")
    return Path(value)
