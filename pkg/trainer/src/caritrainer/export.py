"""Weights-bundle writer in the engine's container format.

Layout: 8-byte little-endian manifest length, UTF-8 JSON manifest, then raw
little-endian float32 tensors concatenated in manifest order.
"""
from __future__ import annotations

import json
import struct

import numpy as np

from .checkpoint import atomic_write

FORMAT_VERSION = 1


def _coder_entries(prefix, module):
    entries = []
    for i, conv in enumerate(module.convs):
        entries.append((f"{prefix}_conv{i}_w", conv.weight.detach().cpu().numpy()))
        entries.append((f"{prefix}_conv{i}_b", conv.bias.detach().cpu().numpy()))
    return entries


def collect_tensors(models):
    """Ordered (name, array) pairs for the bundle, engine naming contract.

    models: dict with enc_regular, dec_regular, enc_caricature, dec_caricature,
    gen_reg2car, gen_car2reg.
    """
    entries = []
    for dom in ("regular", "caricature"):
        enc = models[f"enc_{dom}"]
        entries += _coder_entries(f"enc_{dom}", enc)
        entries.append((f"enc_{dom}_fc_mu_w", enc.fc_mu.weight.detach().cpu().numpy().T))
        entries.append((f"enc_{dom}_fc_mu_b", enc.fc_mu.bias.detach().cpu().numpy()))
        entries.append((f"enc_{dom}_fc_logvar_w", enc.fc_logvar.weight.detach().cpu().numpy().T))
        entries.append((f"enc_{dom}_fc_logvar_b", enc.fc_logvar.bias.detach().cpu().numpy()))
        dec = models[f"dec_{dom}"]
        entries.append((f"dec_{dom}_fc_w", dec.fc.weight.detach().cpu().numpy().T))
        entries.append((f"dec_{dom}_fc_b", dec.fc.bias.detach().cpu().numpy()))
        entries += _coder_entries(f"dec_{dom}", dec)
    for direction in ("reg2car", "car2reg"):
        gen = models[f"gen_{direction}"]
        entries.append((f"gen_{direction}_in_w", gen.fc_in.weight.detach().cpu().numpy().T))
        entries.append((f"gen_{direction}_in_b", gen.fc_in.bias.detach().cpu().numpy()))
        for j, (fc1, fc2) in enumerate(gen.blocks):
            entries.append((f"gen_{direction}_block{j}_fc1_w", fc1.weight.detach().cpu().numpy().T))
            entries.append((f"gen_{direction}_block{j}_fc1_b", fc1.bias.detach().cpu().numpy()))
            entries.append((f"gen_{direction}_block{j}_fc2_w", fc2.weight.detach().cpu().numpy().T))
            entries.append((f"gen_{direction}_block{j}_fc2_b", fc2.bias.detach().cpu().numpy()))
        entries.append((f"gen_{direction}_out_w", gen.fc_out.weight.detach().cpu().numpy().T))
        entries.append((f"gen_{direction}_out_b", gen.fc_out.bias.detach().cpu().numpy()))
    return entries


def export_bundle(path, topology_id, lambda_max, architecture, tensor_entries,
                  training_fingerprint="caritrainer"):
    tensors = [(name, np.ascontiguousarray(arr, dtype="<f4")) for name, arr in tensor_entries]
    manifest = {
        "format_version": FORMAT_VERSION,
        "topology_id": topology_id,
        "lambda_max": float(lambda_max),
        "architecture": architecture,
        "training_fingerprint": training_fingerprint,
        "tensors": [{"name": n, "shape": list(a.shape)} for n, a in tensors],
    }
    blob = json.dumps(manifest, sort_keys=True).encode("utf-8")

    def write(tmp):
        with open(tmp, "wb") as fh:
            fh.write(struct.pack("<Q", len(blob)))
            fh.write(blob)
            for _, arr in tensors:
                fh.write(arr.tobytes())

    atomic_write(path, write)
    return manifest
