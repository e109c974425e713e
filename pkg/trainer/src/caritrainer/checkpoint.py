"""Reloadable torch checkpoints with atomic write-temp-then-rename."""
from __future__ import annotations

import os
import tempfile
from pathlib import Path

import torch


def atomic_write(path, write_fn):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    os.close(fd)
    try:
        write_fn(tmp)
        os.replace(tmp, path)
    except Exception:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_checkpoint(path, vae=None, generators=None, extra=None):
    state = {"extra": extra or {}}
    if vae is not None:
        state["encoder"] = vae.encoder.state_dict()
        state["decoder"] = vae.decoder.state_dict()
        state["head"] = vae.head.state_dict()
    if generators is not None:
        state["G"] = generators.G.state_dict()
        state["F"] = generators.F.state_dict()
        state["D_reg"] = generators.D_reg.state_dict()
        state["D_car"] = generators.D_car.state_dict()
    atomic_write(path, lambda tmp: torch.save(state, tmp))


def load_checkpoint(path, vae=None, generators=None):
    state = torch.load(path, weights_only=True)
    if vae is not None:
        vae.encoder.load_state_dict(state["encoder"])
        vae.decoder.load_state_dict(state["decoder"])
        vae.head.load_state_dict(state["head"])
    if generators is not None:
        generators.G.load_state_dict(state["G"])
        generators.F.load_state_dict(state["F"])
        generators.D_reg.load_state_dict(state["D_reg"])
        generators.D_car.load_state_dict(state["D_car"])
    return state.get("extra", {})
