"""Inference networks: graph-conv VAE coders per domain plus the latent-space
generators G (regular -> caricature) and F (back).

Tensor naming (shared contract with any trainer producing bundles):
  enc_<dom>_conv<i>_w / _b      (K, Cin, Cout) / (Cout,)
  enc_<dom>_fc_mu_w / _b        (V*C_last, latent) / (latent,)
  dec_<dom>_fc_w / _b           (latent, V*C_first) / (V*C_first,)
  dec_<dom>_conv<i>_w / _b
  gen_<dir>_in_w/_b, gen_<dir>_block<j>_fc{1,2}_w/_b, gen_<dir>_out_w/_b
with <dom> in {regular, caricature} and <dir> in {reg2car, car2reg}.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import MeshError, TopologyMismatchError, WeightsFormatError
from ..mesh import TriMesh
from .chebconv import apply_activation, cheb_graph_conv, normalized_graph_laplacian, scaled_operator
from .weights import WeightsBundle

DOMAINS = ("regular", "caricature")
DIRECTIONS = {"regular": "reg2car", "caricature": "car2reg"}
TARGET_DOMAIN = {"regular": "caricature", "caricature": "regular"}


@dataclass(frozen=True)
class LatentCode:
    values: np.ndarray
    domain: str

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64).reshape(-1))
        if self.domain not in DOMAINS:
            raise MeshError(f"unknown latent domain {self.domain!r}")

    @property
    def dim(self) -> int:
        return len(self.values)


class StyleTranslator:
    """Bundle-backed inference engine bound to one mesh topology."""

    def __init__(self, bundle: WeightsBundle, reference_mesh: TriMesh):
        if bundle.topology_id != reference_mesh.topology_id:
            raise TopologyMismatchError(
                f"weights were trained for topology {bundle.topology_id}, "
                f"mesh has {reference_mesh.topology_id}")
        arch = bundle.architecture
        if arch["n_vertices"] != reference_mesh.n_vertices:
            raise WeightsFormatError("architecture vertex count disagrees with mesh")
        self.bundle = bundle
        self.reference = reference_mesh
        L = normalized_graph_laplacian(reference_mesh.faces, reference_mesh.n_vertices)
        self.L_tilde = scaled_operator(L, bundle.lambda_max)
        self.latent_dims = {d: int(arch["latent_dims"][d]) for d in DOMAINS}

    # --- pieces -----------------------------------------------------------

    def _conv_stack(self, x, prefix, channels, activations):
        for i in range(len(channels) - 1):
            w = self.bundle.tensor(f"{prefix}_conv{i}_w")
            b = self.bundle.tensor(f"{prefix}_conv{i}_b")
            x = cheb_graph_conv(x, self.L_tilde, w, b, activations[i])
        return x

    def encode(self, mesh: TriMesh, domain: str) -> LatentCode:
        """Posterior mean of the domain's VAE encoder (no sampling)."""
        if domain not in DOMAINS:
            raise MeshError(f"unknown domain {domain!r}")
        if mesh.topology_id != self.bundle.topology_id:
            raise TopologyMismatchError("mesh topology does not match the loaded weights")
        arch = self.bundle.architecture
        x = self._conv_stack(mesh.vertices, f"enc_{domain}",
                             arch["encoder_channels"], arch["activations"]["encoder"])
        w = self.bundle.tensor(f"enc_{domain}_fc_mu_w")
        b = self.bundle.tensor(f"enc_{domain}_fc_mu_b")
        z = x.reshape(-1) @ np.asarray(w, dtype=np.float64) + np.asarray(b, dtype=np.float64)
        return LatentCode(z, domain)

    def decode(self, code: LatentCode) -> TriMesh:
        domain = code.domain
        if code.dim != self.latent_dims[domain]:
            raise MeshError(f"{domain} latent must be {self.latent_dims[domain]}-dim, got {code.dim}")
        arch = self.bundle.architecture
        w = np.asarray(self.bundle.tensor(f"dec_{domain}_fc_w"), dtype=np.float64)
        b = np.asarray(self.bundle.tensor(f"dec_{domain}_fc_b"), dtype=np.float64)
        x = (code.values @ w + b).reshape(self.reference.n_vertices, -1)
        x = self._conv_stack(x, f"dec_{domain}",
                             arch["decoder_channels"], arch["activations"]["decoder"])
        return self.reference.with_vertices(x)

    def translate_latent(self, code: LatentCode) -> LatentCode:
        direction = DIRECTIONS[code.domain]
        target = TARGET_DOMAIN[code.domain]
        if code.dim != self.latent_dims[code.domain]:
            raise MeshError("latent dimension does not match the generator input")
        arch = self.bundle.architecture
        act = arch["activations"]["generator"]
        h = code.values @ np.asarray(self.bundle.tensor(f"gen_{direction}_in_w"), np.float64) \
            + np.asarray(self.bundle.tensor(f"gen_{direction}_in_b"), np.float64)
        for j in range(int(arch["generator_blocks"])):
            y = apply_activation(
                h @ np.asarray(self.bundle.tensor(f"gen_{direction}_block{j}_fc1_w"), np.float64)
                + np.asarray(self.bundle.tensor(f"gen_{direction}_block{j}_fc1_b"), np.float64), act)
            h = h + y @ np.asarray(self.bundle.tensor(f"gen_{direction}_block{j}_fc2_w"), np.float64) \
                + np.asarray(self.bundle.tensor(f"gen_{direction}_block{j}_fc2_b"), np.float64)
        z = h @ np.asarray(self.bundle.tensor(f"gen_{direction}_out_w"), np.float64) \
            + np.asarray(self.bundle.tensor(f"gen_{direction}_out_b"), np.float64)
        return LatentCode(z, target)
