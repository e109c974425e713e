"""Torch networks mirroring the engine's forward-pass conventions exactly.

Tensor names, shapes, flattening order and the Chebyshev recurrence all
match the weights-bundle contract, so an exported bundle reproduces the
trainer's forward pass bit-for-bit up to float32 storage.
"""
from __future__ import annotations

import numpy as np
import torch
from torch import nn

ACTIVATIONS = {"identity": lambda x: x, "elu": torch.nn.functional.elu, "tanh": torch.tanh,
               "relu": torch.relu}


def normalized_graph_laplacian(faces, n_vertices) -> np.ndarray:
    f = np.asarray(faces)
    edges = np.vstack([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    edges = np.unique(np.sort(edges, axis=1), axis=0)
    A = np.zeros((n_vertices, n_vertices))
    A[edges[:, 0], edges[:, 1]] = 1.0
    A[edges[:, 1], edges[:, 0]] = 1.0
    deg = A.sum(axis=1)
    dinv = 1.0 / np.sqrt(np.maximum(deg, 1e-12))
    return np.eye(n_vertices) - (dinv[:, None] * A) * dinv[None, :]


def estimate_lambda_max(L, iters=100, seed=0) -> float:
    rng = np.random.default_rng(seed)
    x = rng.normal(size=L.shape[0])
    x /= np.linalg.norm(x)
    lam = 2.0
    for _ in range(iters):
        y = L @ x
        n = np.linalg.norm(y)
        if n < 1e-300:
            break
        lam = float(x @ y)
        x = y / n
    return max(lam, 1e-6)


def scaled_operator_np(L, lambda_max) -> np.ndarray:
    """2 L / lambda_max - I with the spectrum inside [-1, 1]."""
    return (2.0 / lambda_max) * L - np.eye(L.shape[0])


def _apply_operator(L_tilde, x):
    """L~ @ x over the vertex dimension; x: (B, V, C)."""
    b, v, c = x.shape
    flat = x.permute(1, 0, 2).reshape(v, b * c)
    if L_tilde.is_sparse:
        out = torch.sparse.mm(L_tilde, flat)
    else:
        out = L_tilde @ flat
    return out.reshape(v, b, c).permute(1, 0, 2)


class ChebConv(nn.Module):
    """sum_k T_k(L~) X W_k + b with weights stored (K, C_in, C_out)."""

    def __init__(self, k, c_in, c_out):
        super().__init__()
        self.weight = nn.Parameter(torch.randn(k, c_in, c_out) * (0.3 / np.sqrt(k * c_in)))
        self.bias = nn.Parameter(torch.zeros(c_out))

    def forward(self, x, L_tilde):
        # x: (B, V, C_in); L_tilde: (V, V) dense or sparse
        Tk_prev = x
        out = Tk_prev @ self.weight[0]
        if self.weight.shape[0] > 1:
            Tk = _apply_operator(L_tilde, x)
            out = out + Tk @ self.weight[1]
            for k in range(2, self.weight.shape[0]):
                Tk_next = 2.0 * _apply_operator(L_tilde, Tk) - Tk_prev
                Tk_prev, Tk = Tk, Tk_next
                out = out + Tk @ self.weight[k]
        return out + self.bias


def passthrough_init(conv: ChebConv, scale=1.0):
    """T_0 identity on the shared leading channels, rest near zero."""
    with torch.no_grad():
        conv.weight.mul_(0.02)
        d = min(conv.weight.shape[1], conv.weight.shape[2])
        for i in range(d):
            conv.weight[0, i, i] = scale
        conv.bias.zero_()
    return conv


class Encoder(nn.Module):
    def __init__(self, n_vertices, channels, k, latent, activations):
        super().__init__()
        self.convs = nn.ModuleList(
            [ChebConv(k, channels[i], channels[i + 1]) for i in range(len(channels) - 1)])
        for conv in self.convs:
            passthrough_init(conv)  # coordinate features flow from step one
        self.acts = activations
        feat = n_vertices * channels[-1]
        self.fc_mu = nn.Linear(feat, latent)
        self.fc_logvar = nn.Linear(feat, latent)
        with torch.no_grad():
            self.fc_logvar.weight.mul_(0.01)
            self.fc_logvar.bias.fill_(-4.0)  # start near-deterministic

    def features(self, x, L):
        for conv, act in zip(self.convs, self.acts):
            x = ACTIVATIONS[act](conv(x, L))
        return x.reshape(x.shape[0], -1)

    def forward(self, x, L):
        h = self.features(x, L)
        return self.fc_mu(h), self.fc_logvar(h)


class Decoder(nn.Module):
    def __init__(self, n_vertices, channels, k, latent, activations, mean_shape=None):
        super().__init__()
        self.n_vertices = n_vertices
        self.c_first = channels[0]
        self.fc = nn.Linear(latent, n_vertices * channels[0])
        self.convs = nn.ModuleList(
            [ChebConv(k, channels[i], channels[i + 1]) for i in range(len(channels) - 1)])
        self.acts = activations
        if mean_shape is not None:
            # start at the domain mean: bias carries the mean face, convs pass
            # the leading coordinate channels through
            with torch.no_grad():
                self.fc.weight.mul_(0.05)
                bias = torch.zeros(n_vertices, channels[0])
                bias[:, :3] = torch.as_tensor(mean_shape, dtype=torch.float32)
                self.fc.bias.copy_(bias.reshape(-1))
            for conv in self.convs:
                passthrough_init(conv)

    def forward(self, z, L):
        x = self.fc(z).reshape(z.shape[0], self.n_vertices, self.c_first)
        for conv, act in zip(self.convs, self.acts):
            x = ACTIVATIONS[act](conv(x, L))
        return x


class Generator(nn.Module):
    """Input FC -> residual FC blocks -> output FC, engine layout."""

    def __init__(self, d_in, d_out, hidden, blocks, activation):
        super().__init__()
        self.fc_in = nn.Linear(d_in, hidden)
        self.blocks = nn.ModuleList()
        for _ in range(blocks):
            self.blocks.append(nn.ModuleList([nn.Linear(hidden, hidden),
                                              nn.Linear(hidden, hidden)]))
        self.fc_out = nn.Linear(hidden, d_out)
        self.activation = activation

    def forward(self, z):
        act = ACTIVATIONS[self.activation]
        h = self.fc_in(z)
        for fc1, fc2 in self.blocks:
            h = h + fc2(act(fc1(h)))
        return self.fc_out(h)


class ShapeDiscriminator(nn.Module):
    """Judges decoded shapes (flattened vertex coordinates)."""

    def __init__(self, n_vertices, hidden=256):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(n_vertices * 3, hidden), nn.LeakyReLU(0.2),
            nn.Linear(hidden, hidden // 2), nn.LeakyReLU(0.2),
            nn.Linear(hidden // 2, 1))

    def forward(self, shapes):
        return self.net(shapes.reshape(shapes.shape[0], -1)).squeeze(-1)


class RecognitionHead(nn.Module):
    """Latent -> 128-dim identity feature plus the classifier layer."""

    def __init__(self, latent, n_identities, feature_dim=128, hidden=256):
        super().__init__()
        self.stack = nn.Sequential(
            nn.Linear(latent, hidden), nn.ELU(), nn.Linear(hidden, feature_dim))
        self.classifier = nn.Linear(feature_dim, n_identities)
        self.register_buffer("centers", torch.zeros(n_identities, feature_dim))

    def forward(self, z):
        f = self.stack(z)
        return f, self.classifier(f)
