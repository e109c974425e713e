"""FastAPI service wrapping the pipeline commands.

Each stage is a synchronous POST endpoint taking the validated pipeline
config inline (plus an output directory) and returning the run manifest.
The CLI is a thin client of these endpoints.
"""
from __future__ import annotations

from typing import Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, ConfigDict

from . import __version__
from .config import PipelineConfig, parse_config
from .errors import CarimirrorError, ConfigError
from .pipeline import COMMANDS


class StageRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    config: dict = {}
    out_dir: str
    seed: Optional[int] = None


class StageResponse(BaseModel):
    command: str
    out_dir: str
    manifest: dict


class HealthResponse(BaseModel):
    status: str
    version: str
    commands: list


def create_app() -> FastAPI:
    app = FastAPI(title="carimirror", version=__version__,
                  description="multi-view face modeling, caricature texture fusion, "
                              "blendshape tracking and latent style translation")

    @app.get("/v1/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", version=__version__,
                              commands=sorted(COMMANDS.keys()))

    def make_endpoint(name, fn):
        def endpoint(req: StageRequest) -> StageResponse:
            try:
                cfg = parse_config(req.config)
                if req.seed is not None:
                    cfg = cfg.model_copy(update={"seed": req.seed})
                manifest = fn(cfg, req.out_dir)
            except ConfigError as exc:
                raise HTTPException(status_code=422, detail={
                    "error": "config", "key": exc.key, "message": str(exc)})
            except FileNotFoundError as exc:
                raise HTTPException(status_code=422, detail={
                    "error": "missing_input", "message": str(exc)})
            except CarimirrorError as exc:
                raise HTTPException(status_code=400, detail={
                    "error": type(exc).__name__, "message": str(exc)})
            return StageResponse(command=name, out_dir=req.out_dir, manifest=manifest)

        endpoint.__name__ = f"run_{name}"
        return endpoint

    for name, fn in COMMANDS.items():
        app.post(f"/v1/{name}", response_model=StageResponse, name=f"run_{name}")(
            make_endpoint(name, fn))
    return app


app = create_app()
