from pathlib import Path

import numpy as np
import pytest

from oracles import numeric_quadratic_min

from carimirror.errors import TopologyMismatchError, WeightsFormatError
from carimirror.mesh import TriMesh, get_family
from carimirror.translate import (
    LatentCode,
    StyleTranslator,
    cheb_graph_conv,
    load_weights,
    make_bundle,
    save_weights,
    smooth_latent,
    translate_sequence,
)

FIXTURE = Path(__file__).resolve().parents[1] / "fixtures" / "toy_weights.cmw"


@pytest.fixture(scope="module")
def engine():
    family = get_family()
    bundle = load_weights(FIXTURE)
    return family, StyleTranslator(bundle, family.template)


class TestChebConv:
    def test_k1_identity_weights_pass_through(self):
        rng = np.random.default_rng(0)
        L = np.diag(rng.uniform(-1, 1, 6))
        X = rng.normal(size=(6, 4))
        W = np.eye(4)[None, :, :]
        out = cheb_graph_conv(X, L, W)
        assert np.array_equal(out, X)

    def test_zero_weights_broadcast_bias(self):
        rng = np.random.default_rng(1)
        L = np.diag(rng.uniform(-1, 1, 5))
        X = rng.normal(size=(5, 3))
        W = np.zeros((3, 3, 2))
        b = np.array([0.5, -1.0])
        out = cheb_graph_conv(X, L, W, b)
        assert np.allclose(out, b[None, :])

    def test_linear_in_features(self):
        rng = np.random.default_rng(2)
        Q, _ = np.linalg.qr(rng.normal(size=(10, 10)))
        L = Q @ np.diag(rng.uniform(-1, 1, 10)) @ Q.T
        W = rng.normal(size=(4, 3, 5))
        X1 = rng.normal(size=(10, 3))
        X2 = rng.normal(size=(10, 3))
        out = cheb_graph_conv(X1 + X2, L, W)
        out12 = cheb_graph_conv(X1, L, W) + cheb_graph_conv(X2, L, W)
        assert np.abs(out - out12).max() < 1e-12

    def test_recurrence_matches_direct_polynomial(self):
        rng = np.random.default_rng(3)
        Q, _ = np.linalg.qr(rng.normal(size=(10, 10)))
        L = Q @ np.diag(rng.uniform(-1, 1, 10)) @ Q.T
        X = rng.normal(size=(10, 2))
        for K in range(1, 5):
            W = np.zeros((K, 2, 2))
            W[K - 1] = np.eye(2)  # isolate the T_{K-1} term
            got = cheb_graph_conv(X, L, W)
            coeffs = np.zeros(K)
            coeffs[K - 1] = 1.0
            poly = np.polynomial.chebyshev.cheb2poly(coeffs)
            Tk = sum(c * np.linalg.matrix_power(L, i) for i, c in enumerate(poly))
            assert np.abs(got - Tk @ X).max() < 1e-10


class TestWeightsIO:
    def _tiny_bundle(self):
        rng = np.random.default_rng(4)
        tensors = {"a_w": rng.normal(size=(3, 4)).astype(np.float32),
                   "b_b": rng.normal(size=(4,)).astype(np.float32)}
        arch = {"n_vertices": 9, "latent_dims": {"regular": 2, "caricature": 3}}
        return make_bundle("abcd1234abcd1234", 1.5, arch, tensors)

    def test_roundtrip_bit_exact(self, tmp_path):
        bundle = self._tiny_bundle()
        p = tmp_path / "w.cmw"
        save_weights(bundle, p)
        back = load_weights(p)
        assert back.manifest == bundle.manifest
        for name in bundle.tensors:
            assert np.array_equal(back.tensors[name], bundle.tensors[name])
            assert back.tensors[name].dtype == np.float32

    def test_truncated_file_rejected(self, tmp_path):
        bundle = self._tiny_bundle()
        p = tmp_path / "w.cmw"
        save_weights(bundle, p)
        raw = p.read_bytes()
        (tmp_path / "t.cmw").write_bytes(raw[:-5])
        with pytest.raises(WeightsFormatError):
            load_weights(tmp_path / "t.cmw")

    def test_trailing_garbage_rejected(self, tmp_path):
        bundle = self._tiny_bundle()
        p = tmp_path / "w.cmw"
        save_weights(bundle, p)
        (tmp_path / "t.cmw").write_bytes(p.read_bytes() + b"xx")
        with pytest.raises(WeightsFormatError):
            load_weights(tmp_path / "t.cmw")

    def test_wrong_topology_refused(self, engine):
        family, _ = engine
        bundle = load_weights(FIXTURE)
        other = get_family((16, 18))
        with pytest.raises(TopologyMismatchError):
            StyleTranslator(bundle, other.template)


class TestEncodeDecode:
    def test_encode_deterministic_and_dimensioned(self, engine):
        family, eng = engine
        mesh = family.synthesize(seed=1)
        a = eng.encode(mesh, "regular")
        b = eng.encode(mesh, "regular")
        assert np.array_equal(a.values, b.values)
        assert a.dim == 200
        cari = family.synthesize(seed=1, style="exaggerated")
        assert eng.encode(cari, "caricature").dim == 350

    def test_decode_deterministic_topology(self, engine):
        family, eng = engine
        code = eng.encode(family.synthesize(seed=2), "regular")
        m1 = eng.decode(code)
        m2 = eng.decode(code)
        assert np.array_equal(m1.vertices, m2.vertices)
        assert m1.topology_id == family.topology_id

    def test_reconstruction_error_under_five_percent(self, engine):
        family, eng = engine
        errs = []
        for s in range(50):
            mesh = family.synthesize(seed=40_000 + s)
            rec = eng.decode(eng.encode(mesh, "regular"))
            errs.append(np.linalg.norm(rec.vertices - mesh.vertices, axis=1).mean()
                        / mesh.bbox_diagonal())
        assert max(errs) < 0.05

    def test_code_roundtrip(self, engine):
        family, eng = engine
        code = eng.encode(family.synthesize(seed=3), "regular")
        back = eng.encode(eng.decode(code), "regular")
        rel = np.linalg.norm(back.values - code.values) / max(np.linalg.norm(code.values), 1e-12)
        assert rel < 0.1

    def test_vertex_reordering_rejected(self, engine):
        family, eng = engine
        mesh = family.synthesize(seed=4)
        perm = np.random.default_rng(5).permutation(mesh.n_vertices)
        inv = np.argsort(perm)
        reordered = TriMesh(mesh.vertices[perm], inv[mesh.faces])
        with pytest.raises(TopologyMismatchError):
            eng.encode(reordered, "regular")


class TestTranslateLatent:
    def test_dims_and_determinism(self, engine):
        family, eng = engine
        code = eng.encode(family.synthesize(seed=6), "regular")
        out1 = eng.translate_latent(code)
        out2 = eng.translate_latent(code)
        assert out1.domain == "caricature" and out1.dim == 350
        assert np.array_equal(out1.values, out2.values)

    def test_cycle_consistency(self, engine):
        family, eng = engine
        worst = 0.0
        for s in range(20):
            code = eng.encode(family.synthesize(seed=50_000 + s), "regular")
            back = eng.translate_latent(eng.translate_latent(code))
            worst = max(worst, np.linalg.norm(back.values - code.values)
                        / max(np.linalg.norm(code.values), 1e-12))
        assert worst < 0.15

    def test_translation_actually_exaggerates(self, engine):
        family, eng = engine
        mesh = family.synthesize(seed=7)
        cari = eng.decode(eng.translate_latent(eng.encode(mesh, "regular")))
        target = family.exaggerate(mesh)
        base = np.linalg.norm(mesh.vertices - target.vertices, axis=1).mean()
        got = np.linalg.norm(cari.vertices - target.vertices, axis=1).mean()
        assert got < 0.25 * base  # far closer to the warped shape than the input


class TestSmoothLatent:
    def test_mu_zero_is_identity(self):
        rng = np.random.default_rng(8)
        c = LatentCode(rng.normal(size=350), "caricature")
        p1 = LatentCode(rng.normal(size=350), "caricature")
        p2 = LatentCode(rng.normal(size=350), "caricature")
        out = smooth_latent(p2, p1, c, 0.0)
        assert np.array_equal(out.values, c.values)

    def test_stationary_history_fixed_point(self):
        v = np.random.default_rng(9).normal(size=200)
        c = LatentCode(v, "regular")
        out = smooth_latent(c, c, c, 0.7)
        assert np.abs(out.values - v).max() < 1e-12

    def test_matches_numeric_minimizer(self):
        rng = np.random.default_rng(10)
        for trial in range(3):
            p2 = rng.normal(size=350)
            p1 = rng.normal(size=350)
            c = rng.normal(size=350)
            mu = 10 ** rng.uniform(-3, 0)

            def objective(x):
                return mu * np.sum((p2 - 2 * p1 + x) ** 2) + np.sum((x - c) ** 2)

            out = smooth_latent(LatentCode(p2, "caricature"), LatentCode(p1, "caricature"),
                                LatentCode(c, "caricature"), mu)
            # gradient of the scalar objective is closed-form linear: descend it
            x = np.array(c)
            step = 1.0 / (2 * (1 + mu))
            for _ in range(5000):
                grad = 2 * mu * (p2 - 2 * p1 + x) + 2 * (x - c)
                x_new = x - step * grad
                if np.abs(x_new - x).max() < 1e-15:
                    x = x_new
                    break
                x = x_new
            assert np.abs(out.values - x).max() < 1e-8

    def test_convex_combination_bound(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            p2, p1, c = rng.normal(size=(3, 64))
            mu = 10 ** rng.uniform(-4, 1)
            out = smooth_latent(LatentCode(p2, "regular"), LatentCode(p1, "regular"),
                                LatentCode(c, "regular"), mu).values
            lhs = np.linalg.norm(out - c)
            rhs = mu / (1 + mu) * np.linalg.norm(2 * p1 - p2 - c)
            assert lhs <= rhs + 1e-12


class TestTranslateSequence:
    def test_constant_input_constant_output(self, engine):
        family, eng = engine
        mesh = family.synthesize(seed=12)
        out = translate_sequence([mesh] * 6, eng, mu_smo=0.001)
        for a, b in zip(out[2:], out[3:]):
            assert np.abs(a.vertices - b.vertices).max() < 1e-6

    def test_smoothing_reduces_second_differences(self, engine):
        family, eng = engine
        rng = np.random.default_rng(13)
        meshes = [family.synthesize(seed=60_000 + s) for s in range(12)]

        def second_diff_norm(out):
            codes = [eng.encode(m, "caricature").values for m in out]
            return sum(np.linalg.norm(codes[k - 2] - 2 * codes[k - 1] + codes[k])
                       for k in range(2, len(codes)))

        rough = second_diff_norm(translate_sequence(meshes, eng, mu_smo=0.0))
        smooth = second_diff_norm(translate_sequence(meshes, eng, mu_smo=0.001))
        assert smooth <= rough + 1e-9

    def test_per_frame_timing_recorded(self, engine):
        family, eng = engine
        meshes = [family.synthesize(seed=70_000 + s) for s in range(5)]
        out, times = translate_sequence(meshes, eng, return_timing=True)
        assert len(times) == 5 and all(t > 0 for t in times)
