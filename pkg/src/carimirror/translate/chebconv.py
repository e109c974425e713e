"""Chebyshev spectral graph convolution on the fixed mesh topology."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..errors import MeshError


def normalized_graph_laplacian(faces, n_vertices) -> sp.csr_matrix:
    """Symmetric normalized Laplacian I - D^-1/2 A D^-1/2 of the edge graph."""
    f = np.asarray(faces)
    edges = np.vstack([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    edges = np.unique(np.sort(edges, axis=1), axis=0)
    i, j = edges[:, 0], edges[:, 1]
    data = np.ones(len(edges))
    A = sp.coo_matrix((np.concatenate([data, data]),
                       (np.concatenate([i, j]), np.concatenate([j, i]))),
                      shape=(n_vertices, n_vertices)).tocsr()
    deg = np.asarray(A.sum(axis=1)).ravel()
    with np.errstate(divide="ignore"):
        dinv = 1.0 / np.sqrt(np.maximum(deg, 1e-12))
    D = sp.diags(dinv)
    return (sp.identity(n_vertices) - D @ A @ D).tocsr()


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


def scaled_operator(L, lambda_max) -> sp.csr_matrix:
    """2 L / lambda_max - I, spectrum pushed into [-1, 1]."""
    n = L.shape[0]
    return (2.0 / lambda_max) * L - sp.identity(n, format="csr")


def apply_activation(x, tag):
    if tag == "identity":
        return x
    if tag == "relu":
        return np.maximum(x, 0.0)
    if tag == "elu":
        return np.where(x > 0, x, np.expm1(x))
    if tag == "tanh":
        return np.tanh(x)
    raise MeshError(f"unknown activation tag {tag!r}")


def cheb_graph_conv(features, L_tilde, weights, bias=None, activation="identity"):
    """sum_k T_k(L~) X W_k + b with the Chebyshev recurrence.

    features: (V, C_in); weights: (K, C_in, C_out); bias: (C_out,).
    """
    X = np.asarray(features, dtype=np.float64)
    W = np.asarray(weights, dtype=np.float64)
    if X.ndim != 2 or W.ndim != 3 or X.shape[1] != W.shape[1]:
        raise MeshError(f"cheb conv shape mismatch: X {X.shape}, W {W.shape}")
    if X.shape[0] != L_tilde.shape[0]:
        raise MeshError("feature rows must equal the vertex count")
    K = W.shape[0]
    Tk_prev = X
    out = Tk_prev @ W[0]
    if K > 1:
        Tk = L_tilde @ X
        out += Tk @ W[1]
        for k in range(2, K):
            Tk_next = 2.0 * (L_tilde @ Tk) - Tk_prev
            Tk_prev, Tk = Tk, Tk_next
            out += Tk @ W[k]
    if bias is not None:
        out = out + np.asarray(bias)[None, :]
    return apply_activation(out, activation)
