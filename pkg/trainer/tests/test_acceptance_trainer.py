"""Trainer acceptance: desk-scale two-style corpus, the published training
budget (200 epochs, batch 50, lr 1e-4), and the cross-component parity check
through the engine CLI. One long test carries the trained state through all
criteria; expect roughly 20-25 minutes.
"""
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
import torch

from caritrainer.data import load_corpus, load_obj, save_obj
from caritrainer.export import collect_tensors, export_bundle
from caritrainer.losses import cosine_distance, landmark_angle_vector
from caritrainer.models import Generator
from caritrainer.train import (
    TrainConfig,
    architecture_manifest,
    build_training_stack,
    train_cyclegan,
    train_vae,
)

CORPUS_CONFIG = {
    "seed": 21,
    "synth": {"resolution": (16, 18), "n_views": 3, "image_size": 160, "focal": 200.0,
              "n_frames": 4, "atlas_size": 48,
              "corpus_identities": 40, "corpus_expressions": 25},
}


def report(name, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    print(f"[trainer acceptance] {status}: {name}" + (f" ({detail})" if detail else ""))
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("acc_synth")
    cfg = out / "cfg.json"
    cfg.write_text(json.dumps(CORPUS_CONFIG, default=list))
    proc = subprocess.run(
        [sys.executable, "-m", "carimirror.cli", "synth", "--config", str(cfg),
         "--out", str(out / "data")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    return out / "data" / "corpus"


def test_full_training_acceptance(corpus_dir, tmp_path):
    corpus = load_corpus(corpus_dir)
    reg = corpus.domains["regular"]
    assert reg.identity.max() + 1 >= 20 and len(set(reg.expression)) >= 10
    cfg = TrainConfig(epochs=200, batch_size=50, lr=1e-4, seed=0)
    vaes, L_tilde, lam = build_training_stack(corpus, cfg)
    lm_idx = torch.as_tensor(corpus.landmarks.indices)

    histories = {}
    for domain in ("regular", "caricature"):
        data = torch.as_tensor(corpus.domains[domain].vertices, dtype=torch.float32)
        labels = torch.as_tensor(corpus.domains[domain].identity)
        histories[domain] = train_vae(vaes[domain], data, labels, lm_idx, cfg)
    for domain, hist in histories.items():
        ratio = hist[0] / hist[-1]
        report(f"{domain} VAE L_rec decreases >= 5x over 200 epochs", ratio >= 5.0,
               f"{hist[0]:.2f} -> {hist[-1]:.2f}, ratio {ratio:.2f}")
        avg = np.convolve(hist, np.ones(10) / 10, mode="valid")
        rises = float(np.maximum(np.diff(avg), 0).max())
        report(f"{domain} VAE loss non-increasing in 10-epoch moving average",
               rises <= 1e-2 * avg[0], f"max rise {rises:.2e}")

    # identity clustering in the latent space
    rng = np.random.default_rng(0)
    with torch.no_grad():
        Z = vaes["regular"].encode_mean(
            torch.as_tensor(reg.vertices, dtype=torch.float32)).numpy()
    ident = reg.identity
    wins = 0
    n_triplets = 1000
    for _ in range(n_triplets):
        a = rng.integers(len(Z))
        same = np.nonzero(ident == ident[a])[0]
        same = same[same != a]
        diff = np.nonzero(ident != ident[a])[0]
        s, d = int(rng.choice(same)), int(rng.choice(diff))
        za, zs, zd = (torch.as_tensor(Z[i]) for i in (a, s, d))
        wins += float(cosine_distance(za, zs)) < float(cosine_distance(za, zd))
    report("intra-identity cosine distance beats inter-identity in >= 90% of triplets",
           wins / n_triplets >= 0.90, f"{wins / n_triplets:.3f}")

    models, _ = train_cyclegan(vaes["regular"], vaes["caricature"], corpus, cfg)

    # expression-angle preservation vs untrained-generator baseline
    X = torch.as_tensor(reg.vertices[:200], dtype=torch.float32)
    with torch.no_grad():
        zx = vaes["regular"].encode_mean(X)
        decoded = vaes["caricature"].decoder(models.G(zx), vaes["caricature"].L)
        ang_in = landmark_angle_vector(X, lm_idx, corpus.landmarks.polygons)
        trained = float((landmark_angle_vector(decoded, lm_idx, corpus.landmarks.polygons)
                         - ang_in).norm(dim=1).mean())
        baselines = []
        for seed in (97, 98, 99):
            torch.manual_seed(seed)
            G0 = Generator(200, 350, 256, 3, "elu")
            dec0 = vaes["caricature"].decoder(G0(zx), vaes["caricature"].L)
            baselines.append(float((landmark_angle_vector(dec0, lm_idx, corpus.landmarks.polygons)
                                    - ang_in).norm(dim=1).mean()))
        base = float(np.mean(baselines))
    report("landmark-angle discrepancy <= 50% of untrained-generator baseline",
           trained <= 0.5 * base, f"trained {trained:.4f} vs baseline {base:.4f}")

    # export + engine parity through the CLI (external interface only)
    bundle_path = tmp_path / "trained.cmw"
    export_bundle(bundle_path, corpus.topology_id, lam,
                  architecture_manifest(corpus.n_vertices),
                  collect_tensors({
                      "enc_regular": vaes["regular"].encoder,
                      "dec_regular": vaes["regular"].decoder,
                      "enc_caricature": vaes["caricature"].encoder,
                      "dec_caricature": vaes["caricature"].decoder,
                      "gen_reg2car": models.G, "gen_car2reg": models.F,
                  }))
    mesh_v = reg.vertices[:2]
    with torch.no_grad():
        mu, _ = vaes["regular"].encoder(torch.as_tensor(mesh_v, dtype=torch.float32), L_tilde)
        expected = vaes["caricature"].decoder(models.G(mu), L_tilde).numpy()
    meshes_dir = tmp_path / "meshes"
    meshes_dir.mkdir()
    for k, v in enumerate(mesh_v):
        save_obj(meshes_dir / f"m_{k}.obj", v, corpus.faces)
    cli_cfg = tmp_path / "cli.json"
    cli_cfg.write_text(json.dumps({"translate": {"mu_smo": 0.0},
                                   "paths": {"meshes_dir": str(meshes_dir),
                                             "bundle_file": str(bundle_path)}}))
    proc = subprocess.run(
        [sys.executable, "-m", "carimirror.cli", "translate", "--config", str(cli_cfg),
         "--out", str(tmp_path / "out")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    worst = 0.0
    for k in range(2):
        got, _ = load_obj(tmp_path / "out" / "caricature" / f"frame_{k:03d}.obj")
        worst = max(worst, float(np.abs(got - expected[k]).max()))
    report("exported bundle: engine forward within 1e-5 of the trainer's", worst < 1e-5,
           f"worst {worst:.2e}")
