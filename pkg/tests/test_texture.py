import itertools

import numpy as np
import pytest

from carimirror.errors import CoverageError, MeshError
from carimirror.texture import (
    LabelMap,
    TextureAtlas,
    ViewSample,
    labeling_energy,
    matching_cost,
    poisson_blend,
    poisson_residual,
    solve_labeling,
    view_cost,
)
from carimirror.texture.samples import UNASSIGNED


def make_view(colors, normals=None, valid=None, view_dir=(0.0, 0.0, 1.0)):
    colors = np.asarray(colors, dtype=float)
    h, w = colors.shape[:2]
    if normals is None:
        normals = np.tile(np.array([0.0, 0.0, -1.0]), (h, w, 1))
    if valid is None:
        valid = np.ones((h, w), dtype=bool)
    return ViewSample(colors, normals, valid, np.asarray(view_dir, float))


def random_views(rng, n_views, h, w):
    """Views with random colors and random (unit) normals, all texels valid."""
    views = []
    for _ in range(n_views):
        colors = rng.uniform(0, 1, (h, w, 3))
        normals = rng.normal(size=(h, w, 3))
        normals /= np.linalg.norm(normals, axis=-1, keepdims=True)
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        views.append(make_view(colors, normals, view_dir=d))
    return views


def brute_force_min(views, data_weight=1.2):
    h, w = views[0].shape
    n = len(views)
    best_energy, best_labels = np.inf, None
    for assign in itertools.product(range(n), repeat=h * w):
        lab = np.array(assign, dtype=np.int32).reshape(h, w)
        e = labeling_energy(views, LabelMap(lab), data_weight)
        if e < best_energy:
            best_energy, best_labels = e, lab
    return best_energy, best_labels


class TestCosts:
    def test_identical_views_zero_matching(self):
        rng = np.random.default_rng(0)
        img = rng.uniform(0, 1, (3, 3, 3))
        vi, vj = make_view(img), make_view(img.copy())
        assert matching_cost((0, 0), (0, 1), vi, vj) == 0.0

    def test_matching_symmetry_in_views(self):
        rng = np.random.default_rng(1)
        vi = make_view(rng.uniform(0, 1, (3, 3, 3)))
        vj = make_view(rng.uniform(0, 1, (3, 3, 3)))
        a = matching_cost((1, 1), (1, 2), vi, vj)
        b = matching_cost((1, 1), (1, 2), vj, vi)
        assert abs(a - b) < 1e-15

    def test_matching_direct_value(self):
        ci = np.zeros((1, 2, 3))
        cj = np.zeros((1, 2, 3))
        ci[0, 0] = [1.0, 0.0, 0.0]
        vi, vj = make_view(ci), make_view(cj)
        assert abs(matching_cost((0, 0), (0, 1), vi, vj) - 1.0) < 1e-15

    def test_matching_invalid_texel_infinite(self):
        vi = make_view(np.zeros((2, 2, 3)))
        valid = np.ones((2, 2), bool)
        valid[0, 0] = False
        vj = make_view(np.zeros((2, 2, 3)), valid=valid)
        assert matching_cost((0, 0), (0, 1), vi, vj) == np.inf

    @pytest.mark.parametrize("n,expect", [
        ((0.0, 0.0, -1.0), 0.0),
        ((0.0, 0.0, 1.0), 2.0),
        ((1.0, 0.0, 0.0), 2.0 - np.sqrt(2.0)),
    ])
    def test_view_cost_orientations(self, n, expect):
        h, w = 1, 1
        normals = np.array(n, float).reshape(1, 1, 3)
        v = make_view(np.zeros((h, w, 3)), normals, view_dir=(0, 0, 1.0))
        assert abs(view_cost((0, 0), v) - expect) < 1e-12

    def test_view_cost_invalid_infinite(self):
        v = make_view(np.zeros((1, 1, 3)), valid=np.zeros((1, 1), bool))
        assert view_cost((0, 0), v) == np.inf


class TestSolveLabeling:
    def test_single_view_all_zero(self):
        rng = np.random.default_rng(2)
        views = random_views(rng, 1, 3, 4)
        lm = solve_labeling(views)
        assert (lm.labels == 0).all()

    def test_two_label_matches_bruteforce_on_grids(self):
        rng = np.random.default_rng(3)
        for trial in range(30):
            h, w = rng.integers(1, 4), rng.integers(2, 5)
            if h * w > 12:
                continue
            views = random_views(rng, 2, int(h), int(w))
            lm = solve_labeling(views)
            e_min, _ = brute_force_min(views)
            e_got = labeling_energy(views, lm)
            assert e_got <= e_min + 1e-9

    def test_three_label_expansion_close_to_optimum(self):
        rng = np.random.default_rng(4)
        for trial in range(10):
            views = random_views(rng, 3, 2, 2)
            lm, stats = solve_labeling(views, return_stats=True)
            e_min, _ = brute_force_min(views)
            assert stats.final_energy <= e_min * 1.01 + 1e-12
            diffs = np.diff([stats.initial_energy] + stats.sweep_energies)
            assert (diffs <= 1e-9).all()

    def test_identical_views_reduce_to_data_argmin(self):
        rng = np.random.default_rng(5)
        colors = rng.uniform(0, 1, (4, 4, 3))
        views = []
        for _ in range(3):
            normals = rng.normal(size=(4, 4, 3))
            normals /= np.linalg.norm(normals, axis=-1, keepdims=True)
            d = rng.normal(size=3)
            d /= np.linalg.norm(d)
            views.append(make_view(colors, normals, view_dir=d))
        lm = solve_labeling(views)
        from carimirror.texture.costs import data_cost_volume
        vol = data_cost_volume(views)
        assert (lm.labels == np.argmin(vol, axis=0)).all()

    def test_single_valid_view_texels_hard_assigned(self):
        rng = np.random.default_rng(6)
        views = random_views(rng, 2, 2, 3)
        views[0].valid[0, 0] = False
        lm = solve_labeling(views)
        assert lm.labels[0, 0] == 1

    def test_uncovered_face_texel_errors(self):
        rng = np.random.default_rng(7)
        views = random_views(rng, 2, 2, 2)
        for v in views:
            v.valid[1, 1] = False
        mask = np.ones((2, 2), bool)
        with pytest.raises(CoverageError) as ei:
            solve_labeling(views, face_mask=mask)
        assert (1, 1) in ei.value.uncovered

    def test_final_energy_beats_argmin_initialization(self):
        rng = np.random.default_rng(8)
        views = random_views(rng, 3, 5, 5)
        lm, stats = solve_labeling(views, return_stats=True)
        assert stats.final_energy <= stats.initial_energy + 1e-12

    def test_permutation_of_views_relabels_only(self):
        rng = np.random.default_rng(9)
        views = random_views(rng, 2, 3, 3)
        lm = solve_labeling(views)
        lm_swapped = solve_labeling(views[::-1])
        assert (lm.labels == 1 - lm_swapped.labels).all()


class TestPoisson:
    def test_single_label_reproduces_source(self):
        rng = np.random.default_rng(10)
        img = rng.uniform(0.1, 0.9, (6, 6, 3))
        view = make_view(img)
        labels = LabelMap(np.zeros((6, 6), np.int32))
        template = TextureAtlas(img.copy(), np.ones((6, 6), bool))
        out = poisson_blend(labels, [view], template)
        assert np.abs(out.colors - img).max() < 1e-5

    def test_constant_views_constant_output(self):
        img = np.full((5, 5, 3), 0.4)
        view = make_view(img)
        labels = LabelMap(np.zeros((5, 5), np.int32))
        template = TextureAtlas(np.full((5, 5, 3), 0.4), np.ones((5, 5), bool))
        out = poisson_blend(labels, [view], template)
        assert np.ptp(out.colors) < 1e-9

    def test_checkerboard_labels_satisfy_discrete_system(self):
        rng = np.random.default_rng(11)
        views = random_views(rng, 2, 8, 8)
        lab = np.indices((8, 8)).sum(axis=0) % 2
        labels = LabelMap(lab.astype(np.int32))
        template = TextureAtlas(rng.uniform(0, 1, (8, 8, 3)), np.ones((8, 8), bool))
        out = poisson_blend(labels, views, template)
        assert poisson_residual(labels, views, template, out) < 1e-6

    def test_linear_superposition(self):
        rng = np.random.default_rng(12)
        h = w = 5
        lab = LabelMap(np.zeros((h, w), np.int32))
        va = make_view(rng.uniform(0, 1, (h, w, 3)))
        vb = make_view(rng.uniform(0, 1, (h, w, 3)))
        ta = TextureAtlas(rng.uniform(0, 1, (h, w, 3)), np.ones((h, w), bool))
        tb = TextureAtlas(rng.uniform(0, 1, (h, w, 3)), np.ones((h, w), bool))
        out_a = poisson_blend(lab, [va], ta).colors
        out_b = poisson_blend(lab, [vb], tb).colors
        v_sum = make_view(va.colors + vb.colors)
        t_sum = TextureAtlas(ta.colors + tb.colors, ta.mask)
        out_sum = poisson_blend(lab, [v_sum], t_sum).colors
        assert np.abs(out_sum - (out_a + out_b)).max() < 1e-9

    def test_disconnected_components_independent(self):
        rng = np.random.default_rng(13)
        views = random_views(rng, 1, 5, 5)
        lab = np.full((5, 5), UNASSIGNED, np.int32)
        lab[0:2, 0:2] = 0
        lab[3:5, 3:5] = 0
        template = TextureAtlas(rng.uniform(0, 1, (5, 5, 3)), np.ones((5, 5), bool))
        out = poisson_blend(LabelMap(lab), views, template)
        # unassigned texels keep the template exactly
        un = lab == UNASSIGNED
        assert np.abs(out.colors[un] - template.colors[un]).max() == 0.0

    def test_empty_mask_errors(self):
        rng = np.random.default_rng(14)
        views = random_views(rng, 1, 3, 3)
        template = TextureAtlas(rng.uniform(0, 1, (3, 3, 3)), np.ones((3, 3), bool))
        with pytest.raises(MeshError):
            poisson_blend(LabelMap(np.full((3, 3), UNASSIGNED, np.int32)), views, template)


class TestIO:
    def test_viewsample_roundtrip(self, tmp_path):
        rng = np.random.default_rng(15)
        views = random_views(rng, 1, 4, 4)
        views[0].save(tmp_path, "v0")
        back = ViewSample.load(tmp_path, "v0")
        assert back.shape == views[0].shape
        assert np.abs(back.colors - views[0].colors).max() < 1.0 / 255 + 1e-9
        assert np.abs(back.view_dir - views[0].view_dir).max() < 1e-12

    def test_labelmap_roundtrip(self, tmp_path):
        lab = np.array([[0, 1], [UNASSIGNED, 2]], np.int32)
        LabelMap(lab).save_png(tmp_path / "labels.png")
        back = LabelMap.load_png(tmp_path / "labels.png")
        assert (back.labels == lab).all()

    def test_atlas_roundtrip(self, tmp_path):
        rng = np.random.default_rng(16)
        atlas = TextureAtlas(rng.uniform(0, 1, (5, 5, 3)), np.ones((5, 5), bool))
        atlas.save_png(tmp_path / "atlas.png")
        back = TextureAtlas.load_png(tmp_path / "atlas.png")
        assert np.abs(back.colors - atlas.colors).max() < 1.0 / 255 + 1e-9
