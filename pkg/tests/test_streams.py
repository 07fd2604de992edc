import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from cbrw.streams import (Family, SampleBuffer, StreamSpec, TailModel, absolute_moment, bernoulli, constant,
                          draw, draw_batch, gaussian, heavy_tail, kept_indices, random_source,
                          subgaussian_proxy, truncated_mean)


def test_constant_draws_are_exact():
    rng = random_source(0)
    s = constant(1.0)
    assert all(draw(s, rng) == 1.0 for _ in range(20))


def test_bernoulli_one_always_one():
    rng = random_source(0)
    assert set(draw_batch(bernoulli(1.0), rng, 1000)) == {1.0}


def test_gaussian_mean_within_clt_band():
    # 3 sd / sqrt(n) = 0.003 at n = 1e6; the stated band is 0.005
    x = draw_batch(gaussian(0.0, 1.0), random_source(7), 10**6)
    assert abs(x.mean()) <= 0.005


def test_batch_equals_consecutive_single_draws():
    for spec in (gaussian(0.3, 2.0), bernoulli(0.4), heavy_tail(1.0, 1.5)):
        a, b = random_source(5, "x"), random_source(5, "x")
        batch = draw_batch(spec, a, 50)
        singles = np.array([draw(spec, b) for _ in range(50)])
        np.testing.assert_array_equal(batch, singles)


def test_substreams_are_reproducible_and_distinct():
    a = random_source(11, "walk", 3).random(8)
    b = random_source(11, "walk", 3).random(8)
    c = random_source(11, "walk", 4).random(8)
    d = random_source(11, "instance", 3).random(8)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


def test_substream_independent_of_creation_order():
    random_source(1, "walk", 0).random(100)
    late = random_source(1, "walk", 9).random(4)
    np.testing.assert_array_equal(late, random_source(1, "walk", 9).random(4))


class TestTruncatedMean:
    def test_hand_example(self):
        # t=1 threshold (1/ln 2)^(2/3) ~ 1.277 drops 10; t=2 threshold ~ 2.027 keeps -0.5
        assert truncated_mean([10.0, -0.5], 0.5, 1.0, 1.5) == pytest.approx(-0.25)
        assert list(kept_indices([10.0, -0.5], 0.5, 1.0, 1.5)) == [2]

    def test_all_zero(self):
        assert truncated_mean(np.zeros(17), 0.01, 2.0, 1.3) == 0.0

    def test_huge_u_is_plain_mean(self):
        x = draw_batch(heavy_tail(1.0, 1.5), random_source(2), 500)
        assert truncated_mean(x, 0.1, 1e12, 1.5) == pytest.approx(x.mean(), rel=1e-12)

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            truncated_mean([], 0.1, 1.0, 1.5)
        for p in (0.0, 0.51, 1.0):
            with pytest.raises(ValueError):
                truncated_mean([1.0], p, 1.0, 1.5)

    def test_accepts_sample_buffer(self):
        buf = SampleBuffer([10.0, -0.5])
        assert truncated_mean(buf, 0.5, 1.0, 1.5) == pytest.approx(-0.25)

    @given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=60),
           st.floats(0.01, 100.0), st.floats(1.0, 50.0), st.floats(1.05, 1.95), st.floats(1e-6, 0.5))
    def test_kept_set_grows_with_u(self, xs, u, factor, b, p):
        small = set(kept_indices(xs, p, u, b))
        large = set(kept_indices(xs, p, u * factor, b))
        assert small <= large

    @given(st.lists(st.floats(-5.0, 5.0), min_size=1, max_size=40), st.floats(1.05, 1.95))
    def test_threshold_above_max_is_plain_mean(self, xs, b):
        x = np.array(xs)
        p = 0.5
        # smallest per-index threshold is at t=1: (u / ln 2)^(1/b); pick u so it exceeds max|x|
        u = (np.max(np.abs(x)) + 1.0) ** b * math.log(2.0)
        assert truncated_mean(x, p, u, b) == pytest.approx(float(np.sum(x) / x.size), abs=1e-12)


class TestSampleBuffer:
    @given(st.lists(st.lists(st.floats(-1e6, 1e6), max_size=40), max_size=10))
    def test_count_and_sum(self, chunks):
        buf = SampleBuffer()
        flat = []
        for c in chunks:
            buf.extend(c)
            flat.extend(c)
        assert buf.count == len(flat) == len(buf.values)
        assert buf.total == pytest.approx(math.fsum(flat), rel=1e-9, abs=1e-6)
        np.testing.assert_array_equal(buf.values, np.array(flat, dtype=float))

    def test_empty_mean_rejected(self):
        with pytest.raises(ValueError):
            SampleBuffer().mean()


class TestSpecs:
    def test_proxy_variances(self):
        assert subgaussian_proxy(gaussian(0.0, 2.5)) == 2.5
        assert subgaussian_proxy(bernoulli(0.3)) == 0.25
        assert subgaussian_proxy(constant(4.0)) == 0.0
        assert subgaussian_proxy(constant(0.0, xi=1.0)) == 1.0
        assert subgaussian_proxy(gaussian(0.0, 2.0, xi=1.0)) == 2.0

    def test_proxy_rejected_for_heavy(self):
        with pytest.raises(ValueError):
            subgaussian_proxy(heavy_tail(0.0, 1.5))

    def test_invalid_specs(self):
        with pytest.raises(ValueError):
            bernoulli(1.2)
        with pytest.raises(ValueError):
            gaussian(0.0, 0.0)
        with pytest.raises(ValueError):
            heavy_tail(0.0, 1.5, tail_index=1.4)  # b >= tail index: infinite moment
        with pytest.raises(ValueError):
            StreamSpec(Family.HEAVY_TAIL, 0.0, tail_index=2.5, scale=1.0)  # sub-gaussian tail model
        with pytest.raises(ValueError):
            TailModel.heavy(2.5)
        with pytest.raises(ValueError):
            TailModel(xi=1.0, b=1.5)

    def test_declared_u_below_exact_moment_rejected(self):
        exact = heavy_tail(1.0, 1.5).u
        with pytest.raises(ValueError):
            heavy_tail(1.0, 1.5, u=0.5 * exact)
        assert heavy_tail(1.0, 1.5, u=2 * exact).u == 2 * exact

    def test_gaussian_moment_closed_form(self):
        # E|Z|^b = 2^(b/2) Gamma((b+1)/2) / sqrt(pi)
        b = 1.5
        expected = 2 ** (b / 2) * special.gamma((b + 1) / 2) / math.sqrt(math.pi)
        assert absolute_moment(gaussian(0.0, 1.0), b) == pytest.approx(expected, rel=1e-9)

    def test_heavy_moment_centered_closed_form(self):
        # for mu = 0 the moment is E[P^b] of Lomax(a, 1) = Gamma(b+1) Gamma(a-b) / Gamma(a)
        a, b = 2.5, 1.5
        expected = special.gamma(b + 1) * special.gamma(a - b) / special.gamma(a)
        assert heavy_tail(0.0, b, tail_index=a).u == pytest.approx(expected, rel=1e-8)

    def test_heavy_moment_self_check(self):
        spec = heavy_tail(1.0, 1.5)
        x = draw_batch(spec, random_source(4, "moment"), 10**6)
        assert np.mean(np.abs(x) ** 1.5) <= spec.u * 1.1

    def test_heavy_tail_mean(self):
        x = draw_batch(heavy_tail(2.0, 1.5), random_source(9), 400_000)
        assert abs(x.mean() - 2.0) < 0.05

    @settings(max_examples=25)
    @given(st.floats(-3, 3), st.floats(0.1, 4.0))
    def test_with_mean_keeps_family(self, mu, var):
        s = gaussian(0.0, var).with_mean(mu)
        assert s.family is Family.GAUSSIAN and s.mean == mu and s.variance == var
