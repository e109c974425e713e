"""Training drivers: per-domain VAEs (reconstruction + KL + expression +
identity losses), then the latent CycleGAN (adversarial + cycle + angle +
contrastive), both with Adam at the published batch size / learning rate."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .data import Corpus
from .losses import (
    LossConfig,
    adversarial_loss_d,
    adversarial_loss_g,
    angle_alignment_loss,
    cycle_loss,
    expression_loss,
    identity_loss,
    kl_loss,
    pair_contrastive_loss,
    reconstruction_loss,
    update_centers,
)
from .models import (
    Decoder,
    Encoder,
    Generator,
    RecognitionHead,
    ShapeDiscriminator,
    estimate_lambda_max,
    normalized_graph_laplacian,
    scaled_operator_np,
)

LATENT_DIMS = {"regular": 200, "caricature": 350}
CHANNELS = [3, 8, 8, 8, 3]
CHEB_K = 6
HIDDEN = 256
BLOCKS = 3
ENCODER_ACTS = ["elu", "elu", "elu", "identity"]
DECODER_ACTS = ["identity", "identity", "identity", "identity"]
GENERATOR_ACT = "elu"


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 50
    lr: float = 1e-4
    seed: int = 0
    losses: LossConfig = field(default_factory=LossConfig)


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    for k in range(0, n, batch_size):
        yield order[k:k + batch_size]


def architecture_manifest(n_vertices):
    return {
        "n_vertices": int(n_vertices),
        "cheb_order": CHEB_K,
        "latent_dims": dict(LATENT_DIMS),
        "encoder_channels": list(CHANNELS),
        "decoder_channels": list(CHANNELS),
        "generator_hidden": HIDDEN,
        "generator_blocks": BLOCKS,
        "activations": {"encoder": list(ENCODER_ACTS), "decoder": list(DECODER_ACTS),
                        "generator": GENERATOR_ACT},
    }


class DomainVAE:
    def __init__(self, domain, n_vertices, L_tilde, n_identities, cfg: TrainConfig,
                 mean_shape=None):
        latent = LATENT_DIMS[domain]
        self.domain = domain
        self.L = L_tilde
        self.encoder = Encoder(n_vertices, CHANNELS, CHEB_K, latent, ENCODER_ACTS)
        self.decoder = Decoder(n_vertices, CHANNELS, CHEB_K, latent, DECODER_ACTS,
                               mean_shape=mean_shape)
        self.head = RecognitionHead(latent, n_identities)
        self.cfg = cfg

    def parameters(self):
        return (list(self.encoder.parameters()) + list(self.decoder.parameters())
                + list(self.head.parameters()))

    def encode_mean(self, x):
        mu, _ = self.encoder(x, self.L)
        return mu


def train_vae(vae: DomainVAE, data: torch.Tensor, labels: torch.Tensor,
              landmark_indices, cfg: TrainConfig, log=None):
    """Returns per-epoch mean reconstruction loss."""
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    opt = torch.optim.Adam(vae.parameters(), lr=cfg.lr)
    lc = cfg.losses
    history = []
    for epoch in range(cfg.epochs):
        rec_sum, count = 0.0, 0
        for idx in _batches(len(data), cfg.batch_size, rng):
            x = data[idx]
            lab = labels[idx]
            mu, logvar = vae.encoder(x, vae.L)
            std = torch.exp(0.5 * logvar)
            z = mu + std * torch.randn_like(std)
            x_hat = vae.decoder(z, vae.L)
            l_rec = reconstruction_loss(x_hat, x)
            l_kl = kl_loss(mu, logvar)
            l_exp = expression_loss(x_hat, x, landmark_indices)
            feats, logits = vae.head(mu)
            l_id = identity_loss(feats, logits, lab, vae.head.centers, lc.mu_center)
            total = l_rec + lc.mu_kl * l_kl + lc.mu_exp * l_exp + lc.mu_id * l_id
            if not torch.isfinite(total):
                raise FloatingPointError(
                    f"NaN/inf loss in {vae.domain} VAE at epoch {epoch}: "
                    f"rec={float(l_rec)}, kl={float(l_kl)}, exp={float(l_exp)}, id={float(l_id)}")
            opt.zero_grad()
            total.backward()
            opt.step()
            update_centers(vae.head.centers, vae.head.stack(mu.detach()), lab,
                           lc.center_update)
            rec_sum += float(l_rec.detach()) * len(idx)
            count += len(idx)
        history.append(rec_sum / count)
        if log and (epoch % 20 == 0 or epoch == cfg.epochs - 1):
            log(f"{vae.domain} VAE epoch {epoch}: L_rec {history[-1]:.5f}")
    return history


@dataclass
class CycleGANModels:
    G: Generator
    F: Generator
    D_reg: ShapeDiscriminator
    D_car: ShapeDiscriminator


def train_cyclegan(vae_reg: DomainVAE, vae_car: DomainVAE, corpus: Corpus,
                   cfg: TrainConfig, log=None):
    """Frozen VAEs; trains G: reg->car and F: car->reg on posterior means."""
    torch.manual_seed(cfg.seed + 1)
    rng = np.random.default_rng(cfg.seed + 1)
    lc = cfg.losses
    n_vertices = corpus.n_vertices
    lm_idx = torch.as_tensor(corpus.landmarks.indices)
    polys = corpus.landmarks.polygons

    for p in vae_reg.parameters():
        p.requires_grad_(False)
    for p in vae_car.parameters():
        p.requires_grad_(False)

    X = torch.as_tensor(corpus.domains["regular"].vertices, dtype=torch.float32)
    Y = torch.as_tensor(corpus.domains["caricature"].vertices, dtype=torch.float32)
    lab_x = torch.as_tensor(corpus.domains["regular"].identity)
    lab_y = torch.as_tensor(corpus.domains["caricature"].identity)
    with torch.no_grad():
        Zx = vae_reg.encode_mean(X)
        Zy = vae_car.encode_mean(Y)

    models = CycleGANModels(
        G=Generator(LATENT_DIMS["regular"], LATENT_DIMS["caricature"], HIDDEN, BLOCKS, GENERATOR_ACT),
        F=Generator(LATENT_DIMS["caricature"], LATENT_DIMS["regular"], HIDDEN, BLOCKS, GENERATOR_ACT),
        D_reg=ShapeDiscriminator(n_vertices),
        D_car=ShapeDiscriminator(n_vertices),
    )
    opt_g = torch.optim.Adam(list(models.G.parameters()) + list(models.F.parameters()), lr=cfg.lr)
    opt_d = torch.optim.Adam(list(models.D_reg.parameters()) + list(models.D_car.parameters()),
                             lr=cfg.lr)
    history = []
    n = min(len(Zx), len(Zy))
    for epoch in range(cfg.epochs):
        g_sum, batches = 0.0, 0
        bx = list(_batches(len(Zx), cfg.batch_size, rng))
        by = list(_batches(len(Zy), cfg.batch_size, rng))
        for ix, iy in zip(bx, by):
            zx, zy = Zx[ix], Zy[iy]
            x_in, y_in = X[ix], Y[iy]
            # discriminators judge decoded shapes
            fake_y = vae_car.decoder(models.G(zx), vae_car.L)
            fake_x = vae_reg.decoder(models.F(zy), vae_reg.L)
            d_loss = (adversarial_loss_d(models.D_car(y_in), models.D_car(fake_y.detach()))
                      + adversarial_loss_d(models.D_reg(x_in), models.D_reg(fake_x.detach())))
            opt_d.zero_grad()
            d_loss.backward()
            opt_d.step()

            g_y = models.G(zx)
            f_x = models.F(zy)
            fake_y = vae_car.decoder(g_y, vae_car.L)
            fake_x = vae_reg.decoder(f_x, vae_reg.L)
            l_adv = adversarial_loss_g(models.D_car(fake_y)) + adversarial_loss_g(models.D_reg(fake_x))
            l_cyc = cycle_loss(models.F(g_y), zx) + cycle_loss(models.G(f_x), zy)
            l_ang = (angle_alignment_loss(fake_y, x_in, lm_idx, polys)
                     + angle_alignment_loss(fake_x, y_in, lm_idx, polys))
            l_pair = (pair_contrastive_loss(g_y, lab_x[ix], lc.tau)
                      + pair_contrastive_loss(f_x, lab_y[iy], lc.tau))
            total = l_adv + lc.mu_cyc * l_cyc + lc.mu_ang * l_ang + lc.mu_pair * l_pair
            if not torch.isfinite(total):
                raise FloatingPointError(f"NaN/inf CycleGAN loss at epoch {epoch}")
            opt_g.zero_grad()
            total.backward()
            opt_g.step()
            g_sum += float(total)
            batches += 1
        history.append(g_sum / max(batches, 1))
        if log and (epoch % 20 == 0 or epoch == cfg.epochs - 1):
            log(f"cyclegan epoch {epoch}: joint {history[-1]:.4f}")
    return models, history


def build_training_stack(corpus: Corpus, cfg: TrainConfig):
    """VAEs + operators for the corpus topology."""
    n_vertices = corpus.n_vertices
    L = normalized_graph_laplacian(corpus.faces, n_vertices)
    lam = estimate_lambda_max(L)
    L_dense = scaled_operator_np(L, lam)
    L_tilde = torch.as_tensor(L_dense, dtype=torch.float32).to_sparse_coo()
    vaes = {}
    for domain in ("regular", "caricature"):
        n_ids = int(corpus.domains[domain].identity.max()) + 1
        mean_shape = corpus.domains[domain].vertices.mean(axis=0)
        vaes[domain] = DomainVAE(domain, n_vertices, L_tilde, n_ids, cfg,
                                 mean_shape=mean_shape)
    return vaes, L_tilde, lam
