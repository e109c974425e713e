"""Training losses: VAE reconstruction/regularization/expression terms, the
identity (softmax + center) loss, and the latent CycleGAN terms."""
from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F


@dataclass
class LossConfig:
    mu_kl: float = 1e-5
    mu_exp: float = 5.0
    mu_id: float = 1.0
    mu_cyc: float = 10.0
    mu_ang: float = 5.0
    mu_pair: float = 1.0
    tau: float = 0.5
    mu_center: float = 0.1
    center_update: float = 0.5

    def __post_init__(self):
        for name in ("mu_kl", "mu_exp", "mu_id", "mu_cyc", "mu_ang", "mu_pair", "tau"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


def reconstruction_loss(x_hat, x):
    """Per-sample L1 norm of the coordinate difference, dataset mean."""
    return (x_hat - x).reshape(x.shape[0], -1).abs().sum(dim=1).mean()


def kl_loss(mu, logvar):
    """Closed-form KL(q || N(0, I)), batch mean."""
    return (-0.5 * (1.0 + logvar - mu.pow(2) - logvar.exp()).sum(dim=1)).mean()


def expression_loss(x_hat, x, landmark_indices):
    """Mean squared landmark-vertex error, (1/L) sum_i ||x_hat(i) - x(i)||^2."""
    d = x_hat[:, landmark_indices] - x[:, landmark_indices]
    return d.pow(2).sum(dim=2).mean(dim=1).mean()


def identity_loss(features, logits, labels, centers, mu_center):
    """Softmax cross-entropy plus the center-loss pull toward class centers."""
    ce = F.cross_entropy(logits, labels, reduction="sum")
    center_term = 0.5 * mu_center * (features - centers[labels]).pow(2).sum()
    return ce + center_term


def update_centers(centers, features, labels, alpha):
    """Standard center-loss running update, in-place on the buffer."""
    with torch.no_grad():
        for lab in labels.unique():
            sel = labels == lab
            delta = (centers[lab] - features[sel]).mean(dim=0)
            centers[lab] -= alpha * delta
    return centers


def landmark_angle_vector(shapes, landmark_indices, polygons):
    """Concatenated interior polygon angles per shape, differentiable."""
    pts = shapes[:, landmark_indices]  # (B, L, 3)
    out = []
    for poly in polygons:
        loop = pts[:, poly]  # (B, m, 3)
        prev = torch.roll(loop, 1, dims=1)
        nxt = torch.roll(loop, -1, dims=1)
        a = prev - loop
        b = nxt - loop
        cross = torch.linalg.cross(a, b).norm(dim=2)
        dot = (a * b).sum(dim=2)
        out.append(torch.atan2(cross, dot))
    return torch.cat(out, dim=1)


def angle_alignment_loss(translated_shapes, input_shapes, landmark_indices, polygons):
    """||Theta(decoded translated) - Theta(input)||^2, batch mean."""
    ta = landmark_angle_vector(translated_shapes, landmark_indices, polygons)
    tb = landmark_angle_vector(input_shapes, landmark_indices, polygons)
    return (ta - tb).pow(2).sum(dim=1).mean()


def adversarial_loss_d(d_real, d_fake):
    """Vanilla GAN discriminator loss: -log D(real) - log(1 - D(fake))."""
    return (F.binary_cross_entropy_with_logits(d_real, torch.ones_like(d_real))
            + F.binary_cross_entropy_with_logits(d_fake, torch.zeros_like(d_fake)))


def adversarial_loss_g(d_fake):
    """Generator side: make D call the fakes real."""
    return F.binary_cross_entropy_with_logits(d_fake, torch.ones_like(d_fake))


def cycle_loss(recovered, original):
    """L1 in latent space: ||F(G(x)) - x||_1, batch mean."""
    return (recovered - original).abs().sum(dim=1).mean()


def cosine_distance(a, b, eps=1e-12):
    denom = (a.norm(dim=-1) * b.norm(dim=-1)).clamp(min=eps)
    return 1.0 - (a * b).sum(dim=-1) / denom


def pair_contrastive_loss(codes, labels, tau):
    """Same-identity translated codes pulled together, others pushed past tau.

    lambda = 1 iff labels match; pairs come from the current batch.
    """
    n = codes.shape[0]
    if n < 2:
        return codes.sum() * 0.0
    ii, jj = torch.triu_indices(n, n, offset=1)
    d = cosine_distance(codes[ii], codes[jj])
    same = (labels[ii] == labels[jj]).to(codes.dtype)
    return (same * d + (1.0 - same) * torch.clamp(tau - d, min=0.0)).sum()
