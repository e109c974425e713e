import numpy as np
import pytest
import torch

from caritrainer.losses import (
    angle_alignment_loss,
    cosine_distance,
    cycle_loss,
    expression_loss,
    identity_loss,
    kl_loss,
    landmark_angle_vector,
    pair_contrastive_loss,
    reconstruction_loss,
)

torch.manual_seed(0)


def fd_grad(f, x, h=1e-6):
    g = torch.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.numel()):
        old = flat[i].item()
        flat[i] = old + h
        fp = float(f(x))
        flat[i] = old - h
        fm = float(f(x))
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * h)
    return g


def check_gradient(f, x, tol=1e-4):
    x = x.clone().double().requires_grad_(True)
    val = f(x)
    val.backward()
    analytic = x.grad.clone()
    numeric = fd_grad(f, x.detach().clone())
    denom = max(analytic.norm().item(), numeric.norm().item(), 1e-12)
    rel = (analytic - numeric).norm().item() / denom
    assert rel < tol, f"gradient mismatch {rel}"


class TestValues:
    def test_perfect_autoencoder_zero_rec_and_exp(self):
        x = torch.randn(4, 20, 3)
        lm = torch.arange(5)
        assert float(reconstruction_loss(x, x)) == 0.0
        assert float(expression_loss(x, x, lm)) == 0.0

    def test_standard_normal_posterior_zero_kl(self):
        mu = torch.zeros(6, 10)
        logvar = torch.zeros(6, 10)
        assert abs(float(kl_loss(mu, logvar))) < 1e-12

    def test_identity_loss_reduces_to_cross_entropy_without_centers(self):
        feats = torch.randn(8, 16)
        logits = torch.randn(8, 4)
        labels = torch.randint(0, 4, (8,))
        centers = torch.randn(4, 16)
        with_c = identity_loss(feats, logits, labels, centers, 0.0)
        ce = torch.nn.functional.cross_entropy(logits, labels, reduction="sum")
        assert abs(float(with_c - ce)) < 1e-6

    def test_identity_loss_constructed_optimum(self):
        centers = torch.randn(3, 8)
        labels = torch.tensor([0, 1, 2, 0])
        feats = centers[labels].clone()
        logits = torch.full((4, 3), -30.0)
        logits[torch.arange(4), labels] = 30.0
        val = identity_loss(feats, logits, labels, centers, 1.0)
        assert float(val) < 1e-3

    def test_cycle_zero_for_exact_inverse(self):
        z = torch.randn(5, 12)
        assert float(cycle_loss(z, z)) == 0.0

    def test_pair_loss_same_identity_identical_codes(self):
        z = torch.randn(1, 10)
        codes = torch.cat([z, z])
        labels = torch.tensor([3, 3])
        # float32 dot/norm rounding leaves ~1e-8 of residual distance
        assert abs(float(pair_contrastive_loss(codes, labels, 0.5))) < 1e-6

    def test_pair_loss_orthogonal_different_labels(self):
        codes = torch.zeros(2, 4)
        codes[0, 0] = 1.0
        codes[1, 1] = 1.0  # cosine distance exactly 1
        labels = torch.tensor([0, 1])
        val = pair_contrastive_loss(codes, labels, 1.5)
        assert abs(float(val) - 0.5) < 1e-7

    def test_angle_vector_matches_planar_square(self):
        pts = torch.tensor([[[0.0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]]])
        ang = landmark_angle_vector(pts, torch.arange(4), [[0, 1, 2, 3]])
        assert torch.allclose(ang, torch.full((1, 4), np.pi / 2, dtype=ang.dtype), atol=1e-6)


class TestGradients:
    def test_reconstruction_gradient(self):
        x = torch.randn(3, 12, 3).double()
        target = torch.randn(3, 12, 3).double()
        check_gradient(lambda v: reconstruction_loss(v, target), x)

    def test_kl_gradient(self):
        mu = torch.randn(4, 6).double()
        logvar = torch.randn(4, 6).double() * 0.3

        def f(v):
            return kl_loss(v[:, :6], v[:, 6:])

        check_gradient(f, torch.cat([mu, logvar], dim=1))

    def test_expression_gradient(self):
        x = torch.randn(2, 15, 3).double()
        target = torch.randn(2, 15, 3).double()
        lm = torch.tensor([1, 4, 9])
        check_gradient(lambda v: expression_loss(v, target, lm), x)

    def test_identity_gradient(self):
        labels = torch.tensor([0, 2, 1, 0])
        centers = torch.randn(3, 8).double()

        def f(v):
            feats = v[:, :8]
            logits = v[:, 8:]
            return identity_loss(feats, logits, labels, centers, 0.7)

        check_gradient(f, torch.randn(4, 11).double())

    def test_angle_gradient(self):
        target = torch.randn(2, 9, 3).double()
        lm = torch.arange(9)
        polys = [[0, 1, 2, 3], [4, 5, 6, 7, 8]]

        def f(v):
            return angle_alignment_loss(v, target, lm, polys)

        x = torch.randn(2, 9, 3).double()
        check_gradient(f, x)

    def test_pair_gradient(self):
        labels = torch.tensor([0, 0, 1, 2])

        def f(v):
            return pair_contrastive_loss(v, labels, 0.5)

        check_gradient(f, torch.randn(4, 7).double())

    def test_cycle_gradient(self):
        target = torch.randn(5, 9).double()
        # keep FD probes away from the L1 kink
        x = torch.randn(5, 9).double()
        x = torch.where((x - target).abs() < 1e-3, x + 0.01, x)
        check_gradient(lambda v: cycle_loss(v, target), x)
