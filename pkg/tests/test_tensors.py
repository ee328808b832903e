import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from eedlab.errors import DegenerateInputError, InvalidArgumentError
from eedlab.tensors import (EUCLIDEAN, KL_DIVERGENCE, NEG_COSINE, channel,
                            distance, tensor)

KL_HAND_VALUE = 0.8 * math.log(1.6) + 0.2 * math.log(0.4)  # 0.19274476 nats


class TestTensorConstruction:
    def test_rejects_nan(self):
        with pytest.raises(InvalidArgumentError):
            tensor([1.0, float("nan")])

    def test_rejects_inf(self):
        with pytest.raises(InvalidArgumentError):
            tensor([float("inf")])

    def test_float32_row_major(self):
        t = tensor([[1, 2], [3, 4]])
        assert t.dtype == np.float32 and t.flags.c_contiguous


class TestDistances:
    def test_neg_cosine_self_similarity(self):
        v = tensor([1.0, -2.0, 3.0])
        assert distance(NEG_COSINE, v, v) == pytest.approx(-1.0, abs=1e-12)

    def test_kl_identical_is_zero(self):
        p = tensor([0.3, 0.7])
        assert distance(KL_DIVERGENCE, p, p) == pytest.approx(0.0, abs=1e-12)

    def test_kl_hand_value(self):
        d = distance(KL_DIVERGENCE, tensor([0.8, 0.2]), tensor([0.5, 0.5]))
        assert d == pytest.approx(KL_HAND_VALUE, abs=1e-5)
        assert d == pytest.approx(0.19274, abs=1e-5)

    def test_shape_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            distance(EUCLIDEAN, tensor([1.0, 2.0]), tensor([1.0]))

    def test_neg_cosine_degenerate_norm(self):
        with pytest.raises(DegenerateInputError):
            distance(NEG_COSINE, tensor([0.0, 0.0]), tensor([1.0, 0.0]))

    def test_kl_rejects_non_distribution(self):
        with pytest.raises(InvalidArgumentError):
            distance(KL_DIVERGENCE, tensor([0.8, 0.8]), tensor([0.5, 0.5]))
        with pytest.raises(InvalidArgumentError):
            distance(KL_DIVERGENCE, tensor([1.5, -0.5]), tensor([0.5, 0.5]))

    def test_kl_survives_zero_probability(self):
        # clamped at 1e-7 and renormalized rather than diverging
        d = distance(KL_DIVERGENCE, tensor([1.0, 0.0]), tensor([0.5, 0.5]))
        assert np.isfinite(d) and d > 0

    def test_unknown_kind(self):
        with pytest.raises(InvalidArgumentError):
            distance("manhattan", tensor([1.0]), tensor([1.0]))


class TestDistanceProperties:
    @given(hnp.arrays(np.float32, 6, elements=st.floats(-10, 10, width=32)),
           hnp.arrays(np.float32, 6, elements=st.floats(-10, 10, width=32)),
           hnp.arrays(np.float32, 6, elements=st.floats(-10, 10, width=32)))
    @settings(max_examples=60, deadline=None)
    def test_euclidean_metric_axioms(self, a, b, c):
        dab = distance(EUCLIDEAN, a, b)
        assert dab >= 0
        assert dab == distance(EUCLIDEAN, b, a)  # symmetry exact
        assert dab <= distance(EUCLIDEAN, a, c) + distance(EUCLIDEAN, c, b) + 1e-6

    @given(st.lists(st.floats(0.01, 1.0), min_size=2, max_size=6),
           st.lists(st.floats(0.01, 1.0), min_size=2, max_size=6))
    @settings(max_examples=40, deadline=None)
    def test_kl_non_negative(self, p, q):
        if len(p) != len(q):
            q = (q * len(p))[:len(p)]
        p = np.asarray(p) / np.sum(p)
        q = np.asarray(q) / np.sum(q)
        assert distance(KL_DIVERGENCE, p, q) >= -1e-12

    @given(st.floats(0.01, 100.0))
    @settings(max_examples=30, deadline=None)
    def test_neg_cosine_scale_invariant(self, scale):
        rng = np.random.default_rng(11)
        a = rng.standard_normal(8)
        b = rng.standard_normal(8)
        assert distance(NEG_COSINE, a, b) == pytest.approx(
            distance(NEG_COSINE, scale * a, b), abs=1e-6)

    def test_kl_zero_iff_equal_within_clamp(self):
        rng = np.random.default_rng(5)
        p = rng.uniform(0.1, 1.0, size=5)
        p /= p.sum()
        q = rng.uniform(0.1, 1.0, size=5)
        q /= q.sum()
        assert distance(KL_DIVERGENCE, p, p) == pytest.approx(0.0, abs=1e-12)
        if not np.allclose(p, q):
            assert distance(KL_DIVERGENCE, p, q) > 1e-6


class TestChannel:
    def test_single_channel_is_whole_plane(self):
        t = tensor(np.arange(12.0), dims=(1, 3, 4))
        np.testing.assert_array_equal(channel(t, 0), t[0])

    def test_constant_stack(self):
        t = tensor(np.full((2, 3, 3), 7.0))
        np.testing.assert_array_equal(channel(t, 1), np.full((3, 3), 7.0, np.float32))

    def test_stacking_channels_reproduces_tensor(self):
        rng = np.random.default_rng(3)
        t = tensor(rng.standard_normal((3, 4, 4)))
        rebuilt = np.stack([channel(t, i) for i in range(3)])
        assert np.array_equal(rebuilt, t)

    def test_out_of_range(self):
        t = tensor(np.zeros((2, 2, 2)))
        with pytest.raises(InvalidArgumentError):
            channel(t, 2)

    def test_needs_three_dims(self):
        with pytest.raises(InvalidArgumentError):
            channel(tensor(np.zeros((4, 4))), 0)
