"""Train on a synth corpus and export an engine-ready weights bundle."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import torch

from .checkpoint import save_checkpoint
from .data import load_corpus
from .export import collect_tensors, export_bundle
from .train import TrainConfig, architecture_manifest, build_training_stack, train_cyclegan, train_vae


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="caritrain", description=__doc__)
    ap.add_argument("--corpus", required=True, help="corpus directory from `carimirror synth`")
    ap.add_argument("--out", required=True, help="output weights bundle path")
    ap.add_argument("--epochs", type=int, default=200)
    ap.add_argument("--batch-size", type=int, default=50)
    ap.add_argument("--lr", type=float, default=1e-4)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--checkpoint-dir", default=None,
                    help="optionally save reloadable torch checkpoints per phase")
    args = ap.parse_args(argv)

    corpus = load_corpus(args.corpus)
    cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, lr=args.lr, seed=args.seed)
    vaes, L_tilde, lam = build_training_stack(corpus, cfg)
    lm_idx = torch.as_tensor(corpus.landmarks.indices)

    def log(msg):
        print(msg, file=sys.stderr)

    histories = {}
    for domain in ("regular", "caricature"):
        data = torch.as_tensor(corpus.domains[domain].vertices, dtype=torch.float32)
        labels = torch.as_tensor(corpus.domains[domain].identity)
        histories[domain] = train_vae(vaes[domain], data, labels, lm_idx, cfg, log=log)
        if args.checkpoint_dir:
            save_checkpoint(Path(args.checkpoint_dir) / f"vae_{domain}.pt", vae=vaes[domain],
                            extra={"history": histories[domain]})
    models, gan_history = train_cyclegan(vaes["regular"], vaes["caricature"], corpus, cfg, log=log)
    if args.checkpoint_dir:
        save_checkpoint(Path(args.checkpoint_dir) / "cyclegan.pt", generators=models,
                        extra={"history": gan_history})

    tensors = collect_tensors({
        "enc_regular": vaes["regular"].encoder, "dec_regular": vaes["regular"].decoder,
        "enc_caricature": vaes["caricature"].encoder, "dec_caricature": vaes["caricature"].decoder,
        "gen_reg2car": models.G, "gen_car2reg": models.F,
    })
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    export_bundle(args.out, corpus.topology_id, lam, architecture_manifest(corpus.n_vertices),
                  tensors, training_fingerprint=f"caritrain-seed{args.seed}-epochs{args.epochs}")
    log(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
