import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uaept.errors import InvalidParams, PredictorShapeMismatch
from uaept.grid import BoundingBox, ExtremePoints, PointRC, bbox_from_extreme_points, box_mask, extract_extreme_points
from uaept.metrics import iou
from uaept.phantom import (
    ShapeParams,
    SpeckleParams,
    generate_phantom,
    initial_pseudo_from_box,
    random_shape_params,
)
from uaept.predictor import Predictor, StackPredictor, SyntheticPredictor
from uaept.refinement import (
    RefineConfig,
    Sample,
    align_to_reference,
    refine_pseudo_label,
    run_refinement_loop,
    scale_pair,
    uncertainty_cost_map,
)
from uaept.resample import resize_bilinear
from uaept.tracing import build_cost_map, sobel_gradient, trace_pseudo_label
from uaept.uncertainty import ensemble_mean, ensemble_variance


def disk(h, w, r, c=None):
    cr, cc = c if c is not None else ((h - 1) / 2, (w - 1) / 2)
    rr, cols = np.mgrid[0:h, 0:w]
    return (rr - cr) ** 2 + (cols - cc) ** 2 <= r * r


def phantom_stack(seed, T=20, sharpness=8.0, noise=0.5):
    ph = generate_phantom(64, 64, random_shape_params([seed, 7]), seed=seed)
    stack = SyntheticPredictor(ph.gt, sharpness, noise).predict_stochastic(ph.image, T, seed)
    return ph, stack


class TestScalePair:
    def test_identity_scales(self):
        img = np.random.default_rng(0).random((20, 24))
        x1, x2, f = scale_pair(img, (1.0, 1.0), 3)
        assert f == (1.0, 1.0)
        assert np.array_equal(x1, img) and np.array_equal(x2, img)

    def test_half_scale_shape(self):
        img = np.random.default_rng(1).random((64, 64))
        x1, x2, f = scale_pair(img, (0.5, 1.0), 0)
        shapes = {0.5: (32, 32), 1.0: (64, 64)}
        assert x1.shape == shapes[f[0]] and x2.shape == shapes[f[1]]
        assert f[0] != f[1]

    def test_distinct_draws(self):
        img = np.zeros((16, 16))
        for seed in range(30):
            _, _, (f1, f2) = scale_pair(img, (0.75, 1.0, 1.25), seed)
            assert f1 != f2

    def test_deterministic(self):
        img = np.random.default_rng(2).random((16, 16))
        a = scale_pair(img, (0.75, 1.0, 1.25), [1, 2, 3])
        b = scale_pair(img, (0.75, 1.0, 1.25), [1, 2, 3])
        assert a[2] == b[2] and np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_needs_two_factors(self):
        with pytest.raises(InvalidParams):
            scale_pair(np.zeros((4, 4)), (1.0,), 0)


class TestResample:
    @given(st.integers(1, 40), st.integers(1, 40), st.floats(-5, 5))
    def test_constant_round_trip_exact(self, h, w, v):
        g = np.full((24, 24), v)
        up = resize_bilinear(g, h, w)
        assert np.array_equal(up, np.full((h, w), v))
        assert np.array_equal(resize_bilinear(up, 24, 24), g)

    def test_ramp_half_pixel_centres(self):
        W, w = 40, 28
        g = np.tile(np.arange(W, dtype=float), (3, 1))
        out = resize_bilinear(g, 3, w)
        expected = np.clip((np.arange(w) + 0.5) * W / w - 0.5, 0, W - 1)
        assert np.abs(out[0] - expected).max() < 1e-6

    def test_same_size_copy(self):
        g = np.random.default_rng(0).random((5, 6))
        out = resize_bilinear(g, 5, 6)
        assert np.array_equal(out, g) and out is not g

    def test_rejects_empty(self):
        with pytest.raises(InvalidParams):
            resize_bilinear(np.zeros((3, 3)), 0, 3)


class TestAlign:
    def test_identity(self):
        p = np.random.default_rng(0).random((12, 12))
        assert np.array_equal(align_to_reference(p, 12, 12), p)

    def test_constant(self):
        assert np.array_equal(align_to_reference(np.full((9, 9), 0.3), 16, 16), np.full((16, 16), 0.3))

    def test_checkerboard_no_overshoot(self):
        cb = (np.indices((10, 10)).sum(axis=0) % 2).astype(float)
        for size in [(7, 7), (13, 17), (20, 20)]:
            out = align_to_reference(cb, *size)
            assert out.min() >= 0.0 and out.max() <= 1.0


class TestSyntheticPredictor:
    def test_protocol(self):
        assert isinstance(SyntheticPredictor(disk(16, 16, 5)), Predictor)
        assert isinstance(StackPredictor(np.zeros((2, 4, 4))), Predictor)

    def test_noise_free_zero_variance(self):
        gt = disk(32, 32, 9)
        s = SyntheticPredictor(gt, 4.0, 0.0).predict_stochastic(np.zeros((32, 32)), 5, 0)
        assert np.array_equal(ensemble_variance(s), np.zeros((32, 32)))

    def test_sharp_matches_gt_away_from_edge(self):
        gt = disk(40, 40, 12)
        p = SyntheticPredictor(gt, 50.0).predict(np.zeros((40, 40)))
        from scipy import ndimage

        far = (ndimage.distance_transform_edt(gt) >= 2) | (ndimage.distance_transform_edt(~gt) >= 2)
        assert np.abs(p - gt)[far].max() < 0.01

    def test_deterministic(self):
        pred = SyntheticPredictor(disk(24, 24, 7), 4.0, 0.7)
        a = pred.predict_stochastic(np.zeros((24, 24)), 4, [3, 1])
        b = pred.predict_stochastic(np.zeros((24, 24)), 4, [3, 1])
        assert np.array_equal(a, b)

    def test_resamples_to_input(self):
        pred = SyntheticPredictor(disk(32, 32, 9))
        assert pred.predict(np.zeros((24, 24))).shape == (24, 24)

    def test_epoch_ramp(self):
        pred = SyntheticPredictor(disk(16, 16, 5), 1.0, sharpness_ramp=0.5)
        pred.set_epoch(4)
        assert pred.sharpness == 3.0

    def test_variance_concentrates_on_boundary(self):
        gt = disk(48, 48, 14)
        s = SyntheticPredictor(gt, 4.0, 1.0).predict_stochastic(np.zeros((48, 48)), 20, 0)
        var = ensemble_variance(s)
        from scipy import ndimage

        band = (ndimage.distance_transform_edt(gt) <= 3) & gt | (ndimage.distance_transform_edt(~gt) <= 3) & ~gt
        assert var[band].sum() / var.sum() > 0.8

    def test_stack_predictor(self):
        s = np.random.default_rng(0).random((4, 8, 8))
        sp = StackPredictor(s)
        assert np.array_equal(sp.predict_stochastic(np.zeros((8, 8)), 3, 0), s[:3])
        with pytest.raises(InvalidParams):
            sp.predict_stochastic(np.zeros((8, 8)), 5, 0)


class TestPhantom:
    def test_ellipse_area(self):
        ph = generate_phantom(64, 64, ShapeParams(axes=(10, 6)), seed=0)
        assert abs(ph.gt.sum() - math.pi * 60) / (math.pi * 60) < 0.05

    def test_two_level_image(self):
        ph = generate_phantom(64, 64, ShapeParams(axes=(12, 16)), seed=0)
        assert set(np.unique(ph.image)) == {0.2, 0.6}
        assert np.all(ph.image[ph.gt] == 0.2)

    def test_sobel_ridge_covers_boundary(self):
        from uaept.tracing import contour_pixels

        ph = generate_phantom(64, 64, ShapeParams(axes=(12, 16)), seed=0)
        G = sobel_gradient(ph.image)
        assert np.all(G[contour_pixels(ph.gt)] > 0)

    def test_same_seed_same_sample(self):
        p = random_shape_params(5)
        a = generate_phantom(64, 64, p, SpeckleParams(0.1), seed=9)
        b = generate_phantom(64, 64, p, SpeckleParams(0.1), seed=9)
        assert np.array_equal(a.image, b.image) and np.array_equal(a.gt, b.gt)

    def test_extreme_points_match_gt(self):
        ph = generate_phantom(64, 64, random_shape_params(3), seed=3)
        assert ph.ep == extract_extreme_points(ph.gt)

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(height=16, width=64),
            dict(shape=ShapeParams(axes=(40, 10))),
            dict(shape=ShapeParams(perturbation=0.6)),
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(InvalidParams):
            generate_phantom(**kwargs)


class TestInitialPseudo:
    def test_box_fill(self):
        ep = ExtremePoints(PointRC(1, 2), PointRC(3, 2), PointRC(2, 1), PointRC(2, 3))
        m = initial_pseudo_from_box(ep, 5, 5)
        assert m.sum() == 9 and np.array_equal(m, box_mask(BoundingBox(1, 3, 1, 3), 5, 5))

    @pytest.mark.parametrize("size", [20, 31, 44])
    def test_ellipse_area_ratio(self, size):
        ep = ExtremePoints(PointRC(2, 20), PointRC(size + 1, 20), PointRC(10, 3), PointRC(10, size + 2))
        m = initial_pseudo_from_box(ep, 64, 64, "inscribed-ellipse")
        assert abs(m.sum() / (size * size) - math.pi / 4) < 0.05
        assert not np.any(m & ~initial_pseudo_from_box(ep, 64, 64))

    def test_single_pixel_box(self):
        p = PointRC(4, 4)
        ep = ExtremePoints(p, p, p, p)
        for mode in ("box-fill", "inscribed-ellipse"):
            m = initial_pseudo_from_box(ep, 8, 8, mode)
            assert m.sum() == 1 and m[4, 4]

    def test_unknown_mode(self):
        p = PointRC(1, 1)
        with pytest.raises(InvalidParams):
            initial_pseudo_from_box(ExtremePoints(p, p, p, p), 4, 4, "blob")


class TestRefine:
    def test_disk(self):
        gt = disk(48, 48, 14)
        s = SyntheticPredictor(gt, 8.0, 0.5).predict_stochastic(np.zeros((48, 48)), 20, 0)
        out = refine_pseudo_label(s, extract_extreme_points(gt))
        assert iou(out, gt) >= 0.9

    def test_zero_variance_is_gradient_only(self):
        gt = disk(40, 40, 12)
        s = SyntheticPredictor(gt, 4.0, 0.0).predict_stochastic(np.zeros((40, 40)), 4, 0)
        ep = extract_extreme_points(gt)
        ref = trace_pseudo_label(build_cost_map(sobel_gradient(ensemble_mean(s)), np.zeros((40, 40))), ep)
        assert np.array_equal(refine_pseudo_label(s, ep), ref)

    def test_robust_to_variance_far_from_boundary(self):
        gt = disk(48, 48, 12)
        ep = extract_extreme_points(gt)
        s = SyntheticPredictor(gt, 8.0, 0.3).predict_stochastic(np.zeros((48, 48)), 20, 1)
        base = iou(refine_pseudo_label(s, ep), gt)
        from scipy import ndimage

        far = ndimage.distance_transform_edt(~gt) > 6
        noisy = s.copy()
        rng = np.random.default_rng(5)
        noisy[:, far] = np.clip(noisy[:, far] + rng.normal(0, 0.3, (20, far.sum())), 0, 1)
        assert abs(iou(refine_pseudo_label(noisy, ep), gt) - base) <= 0.02

    @pytest.mark.parametrize("seed", range(5))
    def test_label_contains_points_and_stays_in_box(self, seed):
        ph, s = phantom_stack(seed)
        cfg = RefineConfig()
        out = refine_pseudo_label(s, ph.ep, cfg)
        assert all(out[p] for p in ph.ep.points())
        allowed = box_mask(bbox_from_extreme_points(ph.ep).dilate(cfg.margin, 64, 64), 64, 64)
        assert not np.any(out & ~allowed)

    def test_cost_map_positive(self):
        _, s = phantom_stack(0)
        assert uncertainty_cost_map(s).grid.min() > 0


class TestConfig:
    def test_refresh_schedule(self):
        assert RefineConfig(K=100, max_epochs=300).refresh_epochs() == [100, 200, 300]
        assert RefineConfig(K=7, max_epochs=20).refresh_epochs() == [7, 14]
        assert RefineConfig(K=50, max_epochs=20).refresh_epochs() == []

    @given(st.integers(1, 50), st.integers(1, 200))
    def test_refresh_schedule_property(self, K, E):
        r = RefineConfig(K=K, max_epochs=E).refresh_epochs()
        assert len(r) == E // K and all(e % K == 0 and 0 < e <= E for e in r)

    @pytest.mark.parametrize(
        "kw",
        [dict(T=1), dict(K=0), dict(max_epochs=0), dict(margin=-1), dict(scale_set=(1.0,)), dict(alpha=-1), dict(usc_mode="x")],
    )
    def test_invalid(self, kw):
        with pytest.raises(InvalidParams):
            RefineConfig(**kw)

    def test_dict_round_trip(self):
        cfg = RefineConfig(T=5, weights={"lambda1": 0.5, "lambda2": 2.0})
        assert RefineConfig.from_dict(cfg.to_dict()) == cfg

    def test_unknown_key(self):
        with pytest.raises(InvalidParams):
            RefineConfig.from_dict({"T": 4, "gamma": 1})


def _loop_inputs(n=2, seed=0):
    samples, preds = [], []
    for k in range(n):
        ph = generate_phantom(64, 64, random_shape_params([seed, k]), SpeckleParams(0.05), seed=[seed, k])
        init = initial_pseudo_from_box(ph.ep, 64, 64)
        samples.append(Sample(ph.image, ph.ep, init, ph.gt, f"s{k}"))
        preds.append(SyntheticPredictor(ph.gt, 0.25, 1.0, 0.5))
    return samples, preds


class TestLoop:
    def test_schedule_and_log(self):
        samples, preds = _loop_inputs()
        cfg = RefineConfig(T=6, K=2, max_epochs=5)
        out = run_refinement_loop(samples, preds, cfg)
        assert sorted({e for (_, e) in out.labels}) == [0, 2, 4]
        assert len(out.epochs) == 5 * 2
        assert all(r["total"] == r["boxalign"] + r["usc"] + r["pl"] for r in out.epochs)
        assert sorted(out.iou_table()) == [0, 2, 4]

    def test_deterministic(self):
        cfg = RefineConfig(T=6, K=2, max_epochs=4, seed=3)
        a = run_refinement_loop(*_loop_inputs(), cfg)
        b = run_refinement_loop(*_loop_inputs(), cfg)
        assert a.epochs == b.epochs and a.refreshes == b.refreshes
        assert all(np.array_equal(a.labels[k], b.labels[k]) for k in a.labels)

    def test_improves_on_box_fill(self):
        samples, preds = _loop_inputs(3)
        out = run_refinement_loop(samples, preds, RefineConfig(T=10, K=2, max_epochs=6))
        table = out.iou_table()
        assert np.median(table[6]) > np.median(table[0]) + 0.05

    def test_shape_mismatch(self):
        class Bad:
            def predict(self, image):
                return np.zeros((3, 3))

            def predict_stochastic(self, image, T, seed):
                return np.zeros((T, 3, 3))

        samples, _ = _loop_inputs(1)
        with pytest.raises(PredictorShapeMismatch):
            run_refinement_loop(samples, Bad(), RefineConfig(T=2, K=1, max_epochs=1))

    def test_predictor_count(self):
        samples, preds = _loop_inputs(2)
        with pytest.raises(InvalidParams):
            run_refinement_loop(samples, preds[:1], RefineConfig(max_epochs=1))

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 1000))
    def test_refreshed_labels_respect_points(self, seed):
        samples, preds = _loop_inputs(1, seed)
        cfg = RefineConfig(T=4, K=1, max_epochs=1, seed=seed)
        out = run_refinement_loop(samples, preds, cfg)
        label = out.final_labels()[0]
        ep = samples[0].ep
        assert all(label[p] for p in ep.points())
        allowed = box_mask(bbox_from_extreme_points(ep).dilate(cfg.margin, 64, 64), 64, 64)
        assert not np.any(label & ~allowed)
