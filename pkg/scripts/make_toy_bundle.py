#!/usr/bin/env python3
"""Build the committed toy weights bundle for the style-translation engine.

Deterministic, numpy-only construction: with identity activations the
encoder/decoder stacks reduce to affine maps, so PCA of each synthetic style
family gives exact least-squares coders, and ridge-fit affine maps (factored
through the generator's hidden width) give G and F. Run once; the output is
committed at fixtures/toy_weights.cmw.
"""
import argparse
from pathlib import Path

import numpy as np

from carimirror.mesh import EXPRESSION_DIM, IDENTITY_DIM, get_family
from carimirror.translate import estimate_lambda_max, make_bundle, normalized_graph_laplacian, save_weights

HIDDEN = 256
BLOCKS = 3
CHEB_K = 6
CHANNELS = [3, 8, 8, 8, 3]
LATENT = {"regular": 200, "caricature": 350}
N_TRAIN = 500
SEED = 20240601


def sample_pairs(family, n, seed):
    rng = np.random.default_rng(seed)
    xs, ys = [], []
    for _ in range(n):
        ident = np.clip(rng.normal(0.0, 0.8, IDENTITY_DIM), -2, 2)
        expr = rng.uniform(0.0, 0.9, EXPRESSION_DIM) * (rng.random(EXPRESSION_DIM) < 0.5)
        x = family.synthesize(ident, expr, style="regular")
        xs.append(x.vertices.reshape(-1))
        ys.append(family.exaggerate(x).vertices.reshape(-1))
    return np.stack(xs), np.stack(ys)


def pca_coder(X, latent):
    mean = X.mean(axis=0)
    Xc = X - mean
    _, s, Vt = np.linalg.svd(Xc, full_matrices=False)
    r = min(latent, int((s > 1e-12 * s[0]).sum()))
    comps = Vt[:r].T                      # (3V, r)
    W = np.zeros((X.shape[1], latent))
    W[:, :r] = comps
    return mean, W


def ridge_affine(Z_src, Z_tgt, lam=1e-8):
    A = np.hstack([Z_src, np.ones((len(Z_src), 1))])
    AtA = A.T @ A + lam * np.eye(A.shape[1])
    P = np.linalg.solve(AtA, A.T @ Z_tgt)   # (d_src + 1, d_tgt)
    M = P[:-1].T                             # (d_tgt, d_src)
    c = P[-1]
    return M, c


def factor_through_hidden(M, hidden):
    """M = A @ B with B (hidden, d_src), A (d_tgt, hidden)."""
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    r = int((s > 1e-14 * max(s[0], 1e-300)).sum())
    r = min(r, hidden)
    B = np.zeros((hidden, M.shape[1]))
    A = np.zeros((M.shape[0], hidden))
    root = np.sqrt(s[:r])
    B[:r] = root[:, None] * Vt[:r]
    A[:, :r] = U[:, :r] * root[None, :]
    return A, B


def passthrough_conv(k, c_in, c_out):
    W = np.zeros((k, c_in, c_out))
    d = min(c_in, c_out, 3)
    for i in range(d):
        W[0, i, i] = 1.0
    if c_in == c_out:
        W[0] = np.eye(c_in)
    return W


def generator_tensors(direction, M, c):
    A, B = factor_through_hidden(M, HIDDEN)
    t = {
        f"gen_{direction}_in_w": B.T,
        f"gen_{direction}_in_b": np.zeros(HIDDEN),
        f"gen_{direction}_out_w": A.T,
        f"gen_{direction}_out_b": c,
    }
    for j in range(BLOCKS):
        t[f"gen_{direction}_block{j}_fc1_w"] = np.zeros((HIDDEN, HIDDEN))
        t[f"gen_{direction}_block{j}_fc1_b"] = np.zeros(HIDDEN)
        t[f"gen_{direction}_block{j}_fc2_w"] = np.zeros((HIDDEN, HIDDEN))
        t[f"gen_{direction}_block{j}_fc2_b"] = np.zeros(HIDDEN)
    return t


def coder_tensors(domain, mean, W):
    t = {}
    for i in range(len(CHANNELS) - 1):
        t[f"enc_{domain}_conv{i}_w"] = passthrough_conv(CHEB_K, CHANNELS[i], CHANNELS[i + 1])
        t[f"enc_{domain}_conv{i}_b"] = np.zeros(CHANNELS[i + 1])
    t[f"enc_{domain}_fc_mu_w"] = W
    t[f"enc_{domain}_fc_mu_b"] = -(mean @ W)
    t[f"dec_{domain}_fc_w"] = W.T
    t[f"dec_{domain}_fc_b"] = mean
    for i in range(len(CHANNELS) - 1):
        t[f"dec_{domain}_conv{i}_w"] = passthrough_conv(CHEB_K, CHANNELS[i], CHANNELS[i + 1])
        t[f"dec_{domain}_conv{i}_b"] = np.zeros(CHANNELS[i + 1])
    return t


def build(out_path, resolution=None):
    family = get_family(tuple(resolution)) if resolution else get_family()
    mesh = family.template
    X, Y = sample_pairs(family, N_TRAIN, SEED)
    m_x, W_x = pca_coder(X, LATENT["regular"])
    m_y, W_y = pca_coder(Y, LATENT["caricature"])
    Zx = (X - m_x) @ W_x
    Zy = (Y - m_y) @ W_y
    Mg, cg = ridge_affine(Zx, Zy)
    Zy_hat = Zx @ Mg.T + cg
    Mf, cf = ridge_affine(Zy_hat, Zx)

    tensors = {}
    tensors.update(coder_tensors("regular", m_x, W_x))
    tensors.update(coder_tensors("caricature", m_y, W_y))
    tensors.update(generator_tensors("reg2car", Mg, cg))
    tensors.update(generator_tensors("car2reg", Mf, cf))

    L = normalized_graph_laplacian(mesh.faces, mesh.n_vertices)
    arch = {
        "n_vertices": mesh.n_vertices,
        "cheb_order": CHEB_K,
        "latent_dims": LATENT,
        "encoder_channels": CHANNELS,
        "decoder_channels": CHANNELS,
        "generator_hidden": HIDDEN,
        "generator_blocks": BLOCKS,
        "activations": {
            "encoder": ["identity"] * (len(CHANNELS) - 1),
            "decoder": ["identity"] * (len(CHANNELS) - 1),
            "generator": "identity",
        },
    }
    bundle = make_bundle(mesh.topology_id, estimate_lambda_max(L), arch, tensors,
                         training_fingerprint=f"toy-pca-ridge-seed{SEED}-n{N_TRAIN}")
    save_weights(bundle, out_path)
    return bundle


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "fixtures" / "toy_weights.cmw"))
    ap.add_argument("--resolution", type=int, nargs=2, default=None,
                    help="face grid (nu nv); default: the family default")
    args = ap.parse_args()
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    bundle = build(args.out, resolution=args.resolution)
    size = Path(args.out).stat().st_size
    print(f"wrote {args.out} ({size / 1e6:.1f} MB, {len(bundle.tensors)} tensors)")
