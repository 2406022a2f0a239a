import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from protoicl.errors import ConfigError, DimensionError
from protoicl.gradcheck import finite_diff_check, loss_suite
from protoicl.losses import (LossWeights, PairSample, cosine_similarity, loss_add, loss_base,
                             loss_center, loss_cos, loss_inc, loss_l1, loss_mse, sample_pairs)
from protoicl.nn import Network, forward

DEFAULT = LossWeights()


class TestCosine:
    def test_self_and_opposite(self, rng):
        v = rng.normal(size=5)
        assert cosine_similarity(v, v) == pytest.approx(1.0, abs=1e-15)
        assert cosine_similarity(v, -v) == pytest.approx(-1.0, abs=1e-15)

    def test_closed_form(self):
        assert cosine_similarity([1, 0], [1, 1]) == pytest.approx(1 / math.sqrt(2), abs=1e-12)

    def test_zero_vector_returns_zero(self):
        assert cosine_similarity([0, 0], [1, 1]) == 0.0

    def test_clamped(self):
        v = np.array([1e-3, 3e5, 7.0])
        assert -1.0 <= cosine_similarity(v, v * 3) <= 1.0


def test_default_weights():
    w = LossWeights()
    assert (w.lambda_mse, w.lambda_cos, w.lambda_l1, w.lambda_reg, w.lambda_center) == (1, 10, 1e-3, 10, 1)
    with pytest.raises(ConfigError):
        LossWeights(lambda_cos=-1)


class TestTerms:
    def test_mse(self):
        assert loss_mse([[1.0, 2.0]], [[1.0, 2.0]]) == 0
        assert loss_mse([[1.0, 1.0]], [[0.0, 0.0]]) == 2
        assert loss_mse([[1.0, 0.0], [0.0, 2.0]], np.zeros((2, 2))) == 2.5
        with pytest.raises(DimensionError):
            loss_mse(np.zeros((2, 2)), np.zeros((2, 3)))

    def test_l1(self):
        assert loss_l1(np.zeros((3, 4))) == 0
        assert loss_l1([[1.0, -2.0, 3.0]]) == 6
        assert loss_l1([[1.0, 0.0], [0.0, -1.0]]) == 1

    def test_cos(self):
        same = [PairSample(0, 1, True)]
        diff = [PairSample(0, 1, False)]
        assert loss_cos([[1.0, 2.0], [1.0, 2.0]], [0, 0], same) == pytest.approx(0, abs=1e-15)
        assert loss_cos([[1.0, 0.0], [0.0, 1.0]], [0, 1], diff) == 0
        assert loss_cos([[1.0, 0.0], [1.0, 1.0]], [0, 1], diff) == pytest.approx(0.70711, abs=1e-5)
        assert loss_cos([[1.0, 0.0]], [0], []) == 0

    def test_cos_rejects_bad_pairs(self):
        with pytest.raises(DimensionError):
            loss_cos(np.ones((2, 2)), [0, 0], [PairSample(1, 1, True)])

    def test_center(self):
        means = {0: np.array([1.0, 1.0]), 1: np.array([0.0, 2.0])}
        assert loss_center([[1.0, 1.0], [0.0, 2.0]], [0, 1], means) == 0
        assert loss_center([[0.0, 0.0]], [0], means) == 2
        # squared distances 2 and 4
        assert loss_center([[0.0, 0.0], [0.0, 0.0]], [0, 1], means) == 3
        with pytest.raises(ConfigError):
            loss_center([[0.0, 0.0]], [7], means)

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, (4, 3), elements=st.floats(-5, 5)),
           st.lists(st.floats(0.01, 100), min_size=4, max_size=4))
    def test_cos_scale_invariant(self, codes, scales):
        pairs = [PairSample(0, 1, True), PairSample(2, 3, False), PairSample(1, 2, False)]
        labels = [0, 0, 1, 2]
        scaled = codes * np.array(scales)[:, None]
        assert loss_cos(scaled, labels, pairs) == pytest.approx(loss_cos(codes, labels, pairs), abs=1e-9)

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, (5, 3), elements=st.floats(-5, 5)))
    def test_terms_nonnegative(self, codes):
        pairs = [PairSample(0, 1, True), PairSample(2, 3, False), PairSample(3, 4, True)]
        value = loss_cos(codes, [0, 0, 1, 2, 2], pairs)
        assert 0 <= value <= 2
        assert loss_l1(codes) >= 0
        assert loss_mse(codes, codes[::-1]) >= 0


class TestSamplePairs:
    def test_batch_of_two(self, rng):
        pairs = sample_pairs([3, 4], 20, rng)
        assert len(pairs) == 20
        assert all({p.index_a, p.index_b} == {0, 1} and not p.same_class for p in pairs)

    def test_deterministic(self):
        labels = np.arange(10) % 3
        a = sample_pairs(labels, 30, np.random.default_rng(5))
        b = sample_pairs(labels, 30, np.random.default_rng(5))
        assert a == b

    def test_too_small_batch(self, rng):
        assert sample_pairs([1], 5, rng) == []

    def test_same_class_fraction(self, rng):
        # 2 of the 6 unordered pairs of (A, A, B, B) are same-class
        pairs = sample_pairs(["A", "A", "B", "B"], 10_000, rng)
        frac = np.mean([p.same_class for p in pairs])
        assert abs(frac - 1 / 3) < 0.02
        assert all(p.index_a != p.index_b for p in pairs)

    def test_single_class_batch_all_same(self, rng):
        assert all(p.same_class for p in sample_pairs(np.zeros(8), 16, rng))


def _batch(rng, n=12, d=10, code=4, classes=3):
    net = Network.create([d, 6, code], rng)
    x = rng.normal(size=(n, d))
    y = np.arange(n) % classes
    pairs = sample_pairs(y, n, rng)
    means = {c: rng.normal(size=code) for c in range(classes)}
    return net, x, y, pairs, means


class TestComposites:
    def test_all_zero_weights(self, rng):
        net, x, y, pairs, means = _batch(rng)
        zero = LossWeights(0, 0, 0, 0, 0)
        value, grads = loss_base(net, x, y, pairs, zero)
        assert value == 0 and all(np.all(g == 0) for g in grads.values())
        value, grads = loss_add(net, x, y, pairs, zero, means)
        assert value == 0 and all(np.all(g == 0) for g in grads.values())

    def test_mse_only_reduces(self, rng):
        net, x, y, pairs, _ = _batch(rng)
        value, _ = loss_base(net, x, y, pairs, LossWeights(1, 0, 0, 0, 0))
        _, recon, _ = forward(net, x)
        assert value == loss_mse(recon, x)

    def test_base_component_sum(self, rng):
        net, x, y, pairs, _ = _batch(rng)
        codes, recon, _ = forward(net, x)
        oracle = 1 * loss_mse(recon, x) + 10 * loss_cos(codes, y, pairs) + 1e-3 * loss_l1(codes)
        assert loss_base(net, x, y, pairs, DEFAULT)[0] == pytest.approx(oracle, abs=1e-12)

    def test_add_component_sum_and_decoder_untouched(self, rng):
        net, x, y, pairs, means = _batch(rng)
        codes, _, _ = forward(net, x)
        oracle = 1 * loss_center(codes, y, means) + 10 * loss_cos(codes, y, pairs)
        value, grads = loss_add(net, x, y, pairs, DEFAULT, means)
        assert value == pytest.approx(oracle, abs=1e-12)
        assert all(np.all(grads[k] == 0) for k in net.decoder_keys())

    def test_add_zero_when_codes_at_means(self, rng):
        net, x, y, pairs, _ = _batch(rng)
        codes, _, _ = forward(net, x)
        # one sample per class so each code is its own class mean
        means = {i: codes[i] for i in range(3)}
        value, _ = loss_add(net, x[:3], np.arange(3), [], LossWeights(lambda_cos=0), means)
        assert value == 0

    def test_inc_component_sum(self, rng):
        net, x, y, pairs, _ = _batch(rng)
        pen_grads = {k: rng.normal(size=v.shape) for k, v in net.parameters().items()}
        base_value, base_grads = loss_base(net, x, y, pairs, DEFAULT)
        value, grads = loss_inc(net, x, y, pairs, DEFAULT, (0.37, pen_grads))
        assert value == pytest.approx(base_value + 10 * 0.37, abs=1e-12)
        for k in grads:
            np.testing.assert_allclose(grads[k], base_grads[k] + 10 * pen_grads[k], atol=1e-12)

    def test_inc_reduces_to_base(self, rng):
        net, x, y, pairs, _ = _batch(rng)
        w = LossWeights(lambda_reg=0)
        zero_pen = {k: np.ones_like(v) for k, v in net.parameters().items()}
        assert loss_inc(net, x, y, pairs, w, (5.0, zero_pen))[0] == loss_base(net, x, y, pairs, w)[0]
        assert loss_inc(net, x, y, pairs, DEFAULT, None)[0] == loss_base(net, x, y, pairs, DEFAULT)[0]

    def test_gradient_is_weighted_sum(self, rng):
        net, x, y, pairs, _ = _batch(rng)
        parts = [loss_base(net, x, y, pairs, LossWeights(**{k: 1.0, **{o: 0.0 for o in
                 ("lambda_mse", "lambda_cos", "lambda_l1") if o != k}}))[1]
                 for k in ("lambda_mse", "lambda_cos", "lambda_l1")]
        _, total = loss_base(net, x, y, pairs, DEFAULT)
        for k in total:
            np.testing.assert_allclose(total[k], parts[0][k] + 10 * parts[1][k] + 1e-3 * parts[2][k], atol=1e-12)

    def test_zero_code_pair_skipped(self):
        # the zero-norm pair contributes similarity 0 and no gradient
        from protoicl.losses import _cos_terms
        value, grad = _cos_terms(np.array([[0.0, 0.0], [1.0, 0.0]]), [PairSample(0, 1, True)])
        assert value == 1.0 and np.all(grad == 0)


@pytest.mark.parametrize("name", ["mse", "cos", "l1", "center", "base", "add", "inc_si", "inc_mas"])
def test_gradients_match_finite_differences(name):
    for seed in range(3):
        net, fn, batch = loss_suite(seed)[name]
        rep = finite_diff_check(net, fn, batch, tol=1e-4, rng=np.random.default_rng(seed))
        assert rep.passed, (seed, rep)


def test_per_sample_abs_grads_match_loop(rng):
    from protoicl.losses import per_sample_abs_grads
    net, x, y, _, means = _batch(rng, n=6)
    w = LossWeights(lambda_mse=1.0, lambda_l1=0.5, lambda_center=2.0)
    fast = per_sample_abs_grads(net, x, y, w, means)
    slow = {k: np.zeros_like(v) for k, v in fast.items()}
    for i in range(6):
        _, g_base = loss_base(net, x[i:i + 1], y[i:i + 1], [], w)
        _, g_center = loss_add(net, x[i:i + 1], y[i:i + 1], [], LossWeights(lambda_cos=0, lambda_center=2.0), means)
        for k in slow:
            slow[k] += np.abs(g_base[k] + g_center[k])
    for k in fast:
        np.testing.assert_allclose(fast[k], slow[k], rtol=1e-10, atol=1e-13)
