import numpy as np
import pytest

from stillsplat.adam import Adam
from stillsplat.features import FeatureMap
from stillsplat.imaging import ImageBuffer, ProbabilityMask
from stillsplat.tmp import (
    SKIPPED,
    TmpModel,
    TmpSchedule,
    binarize,
    load_tmp,
    make_tmp_optimizer,
    predict_backward,
    predict_forward,
    predict_mask,
    save_tmp,
    tmp_step,
    transient_loss,
)

from oracles import fd_gradient, scalar_bilinear


def fmap_from(values, patch=4):
    return FeatureMap(np.asarray(values, dtype=np.float32), patch_size=patch)


class TestPredictMask:
    def test_zero_model_gives_uniform_half(self):
        rng = np.random.default_rng(0)
        feats = fmap_from(rng.normal(0, 1, (4, 4, 8)))
        mask = predict_mask(TmpModel.zeros(8), feats, 16, 16)
        assert np.allclose(mask.values, 0.5)

    def test_patch_dilation_spreads_to_8_neighbors(self):
        # craft features so exactly one patch fires hot
        dim = 4
        feats = np.zeros((5, 5, dim), dtype=np.float32)
        feats[2, 2, 0] = 1.0
        model = TmpModel(np.array([40.0, 0, 0, 0]), 0.0)
        p, cache = predict_forward(model, fmap_from(feats), 20, 20, dilate_patches=True)
        # inspect the dilated patch grid through the cache-independent route:
        z = feats.astype(np.float64) @ model.weights
        probs = 1 / (1 + np.exp(-z))
        from stillsplat.tmp import _max_dilate

        dilated, _, _ = _max_dilate(probs)
        hot = dilated > 0.99
        expected = np.zeros((5, 5), dtype=bool)
        expected[1:4, 1:4] = True
        assert np.array_equal(hot, expected)

    def test_matches_scalar_reference_pipeline(self):
        rng = np.random.default_rng(7)
        dim = 6
        feats = rng.normal(0, 1, (4, 5, dim))
        model = TmpModel(rng.normal(0, 1, dim), float(rng.normal()))
        got = predict_mask(model, fmap_from(feats), 17, 13)
        # independent scalar route: sigmoid -> 3x3 max -> bilinear
        z = feats.astype(np.float32).astype(np.float64) @ model.weights + model.bias
        probs = 1 / (1 + np.exp(-z))
        gh, gw = probs.shape
        dil = np.zeros_like(probs)
        for i in range(gh):
            for j in range(gw):
                best = -np.inf
                for di in (-1, 0, 1):
                    for dj in (-1, 0, 1):
                        ii, jj = i + di, j + dj
                        if 0 <= ii < gh and 0 <= jj < gw:
                            best = max(best, probs[ii, jj])
                dil[i, j] = best
        expected = scalar_bilinear(dil, 17, 13)
        assert np.abs(got.values - expected).max() <= 1e-6

    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            predict_mask(TmpModel.zeros(4), fmap_from(np.zeros((2, 2, 8))), 8, 8)

    def test_weight_gradient_matches_fd(self):
        rng = np.random.default_rng(9)
        dim = 5
        feats = fmap_from(rng.normal(0, 1, (3, 4, dim)))
        model = TmpModel(rng.normal(0, 0.5, dim), 0.3)
        target = rng.random((12, 16))

        def loss_value():
            p = predict_mask(model, feats, 16, 12)
            return float(((p.values - target) ** 2).sum())

        p, cache = predict_forward(model, feats, 16, 12)
        g_up = 2.0 * (p.values - target)
        g_w, g_b = predict_backward(cache, g_up)
        fd_w = fd_gradient(loss_value, model.weights, eps=1e-6)
        assert np.abs(fd_w - g_w).max() <= 1e-4 * max(1.0, np.abs(g_w).max())
        bias_holder = np.array([model.bias])

        def loss_bias():
            m = TmpModel(model.weights, float(bias_holder[0]))
            p2 = predict_mask(m, feats, 16, 12)
            return float(((p2.values - target) ** 2).sum())

        fd_b = fd_gradient(loss_bias, bias_holder, eps=1e-6)[0]
        assert abs(fd_b - g_b) <= 1e-4 * max(1.0, abs(g_b))


class TestTransientLoss:
    def make_pair(self, h=8, w=8, diff=0.2):
        img = ImageBuffer(np.full((h, w, 3), 0.5))
        ren = ImageBuffer(np.full((h, w, 3), 0.5 - diff))
        return img, ren

    def test_zero_mask_gives_pure_rgb_term(self):
        img, ren = self.make_pair(diff=0.2)
        p = ProbabilityMask(np.zeros((8, 8)))
        loss, grad, parts = transient_loss(p, ProbabilityMask(np.zeros((8, 8))), img, ren, 0.1)
        assert loss == pytest.approx(0.2)
        assert parts["reg"] == 0.0 and parts["consist"] == 0.0

    def test_full_mask_zero_phat_gives_lambda(self):
        img, ren = self.make_pair(diff=0.0)
        p = ProbabilityMask(np.ones((8, 8)))
        loss, grad, parts = transient_loss(p, ProbabilityMask(np.zeros((8, 8))), img, ren, 0.1)
        assert loss == pytest.approx(0.1)

    def test_nonnegative_and_zero_iff_perfect(self):
        img, ren = self.make_pair(diff=0.0)
        p = ProbabilityMask(np.zeros((8, 8)))
        loss, _, _ = transient_loss(p, ProbabilityMask(np.zeros((8, 8))), img, ren, 0.1)
        assert loss == 0.0
        rng = np.random.default_rng(2)
        p2 = ProbabilityMask(rng.random((8, 8)))
        img2 = ImageBuffer(rng.random((8, 8, 3)))
        ren2 = ImageBuffer(rng.random((8, 8, 3)))
        loss2, _, _ = transient_loss(p2, ProbabilityMask(rng.random((8, 8))), img2, ren2, 0.1)
        assert loss2 > 0.0

    def test_gradient_matches_fd(self):
        rng = np.random.default_rng(3)
        img = ImageBuffer(rng.random((6, 6, 3)))
        ren = ImageBuffer(rng.random((6, 6, 3)))
        p_arr = rng.uniform(0.1, 0.9, (6, 6))
        ph = ProbabilityMask(rng.random((6, 6)))

        def value():
            loss, _, _ = transient_loss(ProbabilityMask(p_arr), ph, img, ren, 0.1)
            return loss

        _, grad, _ = transient_loss(ProbabilityMask(p_arr), ph, img, ren, 0.1)
        fd = fd_gradient(value, p_arr, eps=1e-6)
        assert np.abs(fd - grad).max() <= 1e-6

    def test_detach_contract(self):
        # with shared features P == P_hat; the gradient must match FD of the
        # loss with P_hat FROZEN, and differ from FD with P_hat recomputed
        rng = np.random.default_rng(5)
        dim = 4
        feats = fmap_from(rng.normal(0, 1, (3, 3, dim)))
        model = TmpModel(rng.normal(0, 0.5, dim), 0.0)
        img = ImageBuffer(rng.random((12, 12, 3)))
        ren = ImageBuffer(rng.random((12, 12, 3)))

        def loss_at(weights, frozen_phat):
            m = TmpModel(weights, model.bias)
            p = predict_mask(m, feats, 12, 12)
            ph = frozen_phat if frozen_phat is not None else predict_mask(m, feats, 12, 12)
            loss, _, _ = transient_loss(p, ph, img, ren, 0.1)
            return loss

        p, cache = predict_forward(model, feats, 12, 12)
        ph0 = predict_mask(model, feats, 12, 12)
        _, g_p, _ = transient_loss(p, ph0, img, ren, 0.1)
        g_w, _ = predict_backward(cache, g_p)

        eps = 1e-6
        fd_frozen = np.zeros(dim)
        fd_full = np.zeros(dim)
        for k in range(dim):
            w_hi, w_lo = model.weights.copy(), model.weights.copy()
            w_hi[k] += eps
            w_lo[k] -= eps
            fd_frozen[k] = (loss_at(w_hi, ph0) - loss_at(w_lo, ph0)) / (2 * eps)
            fd_full[k] = (loss_at(w_hi, None) - loss_at(w_lo, None)) / (2 * eps)
        assert np.abs(g_w - fd_frozen).max() <= 1e-5 * max(1.0, np.abs(g_w).max())
        assert np.abs(g_w - fd_full).max() > 1e-4  # the through-P_hat path is absent


class TestClosedFormOptimum:
    """Per-pixel optimum of residual + prior terms: threshold at the prior."""

    @staticmethod
    def optimize_pixel(residual, lam=0.1, steps=2000, lr=0.05):
        theta = np.array([0.0])
        opt = Adam({"theta": lr})
        for _ in range(steps):
            p = 1 / (1 + np.exp(-theta[0]))
            grad_p = -residual + lam
            grad_theta = grad_p * p * (1 - p)
            opt.step({"theta": theta}, {"theta": np.array([grad_theta])})
        return 1 / (1 + np.exp(-theta[0]))

    def test_indicator_reproduced(self):
        for r, expected in [(0.2, 1.0), (0.05, 0.0), (0.3, 1.0), (0.08, 0.0)]:
            p = self.optimize_pixel(r)
            assert abs(p - expected) <= 1e-3, (r, p)

    def test_below_prior_goes_to_zero(self):
        p = self.optimize_pixel(0.09)
        assert p <= 1e-3

    def test_closed_form_boundary_branch(self):
        # the indicator's <= branch claims the exact-equality point
        lam = 0.1
        indicator = lambda r: 1.0 if r > lam else 0.0
        assert indicator(lam) == 0.0
        assert indicator(lam + 1e-12) == 1.0


class TestBinarize:
    def test_strictly_greater(self):
        p = ProbabilityMask(np.full((4, 4), 0.5))
        assert binarize(p, 0.5).count == 0

    def test_above_threshold_full(self):
        p = ProbabilityMask(np.full((4, 4), 0.6))
        assert binarize(p, 0.5).count == 16

    def test_threshold_validated(self):
        with pytest.raises(ValueError):
            binarize(ProbabilityMask(np.zeros((2, 2))), 1.0)

    def test_matches_closed_form_on_converged_pixels(self):
        rng = np.random.default_rng(11)
        residuals = np.concatenate([rng.uniform(0.0, 0.095, 10), rng.uniform(0.105, 0.3, 10)])
        probs = np.array([[TestClosedFormOptimum.optimize_pixel(r) for r in residuals]])
        got = binarize(ProbabilityMask(probs))
        expected = (residuals > 0.1)[None, :]
        assert np.array_equal(got.bits, expected)


class FakeProvider:
    def __init__(self, feats):
        self.feats = feats

    def reference_features(self, frame):
        return self.feats

    def render_features(self, frame, render_out, iteration):
        return self.feats


class FakeFrame:
    def __init__(self, image, index=0):
        self.image = image
        self.index = index


class FakeRender:
    def __init__(self, color):
        self.color = color
        self.id_map = None


class TestTmpStep:
    def test_skipped_before_start(self):
        model = TmpModel.zeros(4)
        sched = TmpSchedule(start_iteration=500)
        out = tmp_step(model, None, None, None, sched, 100, None, make_tmp_optimizer(sched))
        assert out is SKIPPED

    def test_skipped_during_reset_pause(self):
        model = TmpModel.zeros(4)
        sched = TmpSchedule(start_iteration=500, pause_after_reset=250)
        out = tmp_step(model, None, None, None, sched, 3100, 3000, make_tmp_optimizer(sched))
        assert out is SKIPPED

    def test_separable_features_reach_95_percent_accuracy(self):
        rng = np.random.default_rng(13)
        dim = 16
        gh = gw = 8
        patch = 4
        h = w = gh * patch
        static_emb = rng.normal(0, 1, (3, dim)) / np.sqrt(dim)
        transient_emb = rng.normal(0, 1, dim) / np.sqrt(dim)
        labels = rng.random((gh, gw)) < 0.3
        feats = np.empty((gh, gw, dim), dtype=np.float32)
        for i in range(gh):
            for j in range(gw):
                base = transient_emb if labels[i, j] else static_emb[rng.integers(3)]
                feats[i, j] = base + rng.normal(0, 0.03, dim)
        # residual image: high where transient, tiny elsewhere
        res = np.where(np.repeat(np.repeat(labels, patch, 0), patch, 1), 0.6, 0.005)
        img = ImageBuffer(np.stack([np.full((h, w), 0.5)] * 3, axis=2))
        ren = ImageBuffer(np.clip(img.data - res[:, :, None], 0, 1))
        model = TmpModel.zeros(dim)
        sched = TmpSchedule(start_iteration=0, use_consistency=False, dilate_patches=False)
        opt = make_tmp_optimizer(sched)
        provider = FakeProvider(fmap_from(feats, patch))
        frame = FakeFrame(img)
        render_out = FakeRender(ren)
        for it in range(200):
            out = tmp_step(model, frame, render_out, provider, sched, it, None, opt)
            assert out is not SKIPPED
        z = feats.astype(np.float64) @ model.weights + model.bias
        pred = (1 / (1 + np.exp(-z))) > 0.5
        accuracy = float((pred == labels).mean())
        assert accuracy >= 0.95


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(17)
        model = TmpModel(rng.normal(0, 1, 12), 0.37)
        path = tmp_path / "tmp.bin"
        save_tmp(model, path)
        back = load_tmp(path)
        assert back.dim == 12
        assert np.array_equal(back.weights, model.weights.astype(np.float32).astype(np.float64))
        assert back.bias == pytest.approx(model.bias, abs=1e-7)

    def test_malformed(self, tmp_path):
        p = tmp_path / "x.bin"
        p.write_bytes(b"JUNKJUNKJUNK")
        with pytest.raises(ValueError):
            load_tmp(p)
