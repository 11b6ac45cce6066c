import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tdoracle.ttf import TTF, SlopeBounds, link, minimum

from conftest import DAY, ttfs


def tri():
    return TTF([0, 100, 200], [10, 20, 10], DAY)


class TestEval:
    def test_constant(self):
        assert TTF.constant(5, DAY).eval(123456) == 5

    def test_segment_midpoint(self):
        assert tri().eval(50) == 15

    def test_periodic(self):
        assert tri().eval(DAY + 50) == 15

    def test_wrap_segment_interpolates_across_midnight(self):
        f = TTF([100, 86300], [10, 30], DAY)
        # halfway between 86300 and 100 + 86400
        assert f.eval(0) == pytest.approx(20.0)

    def test_vector_matches_scalar(self, rng):
        f = tri()
        ts = rng.uniform(-DAY, 3 * DAY, 200)
        assert np.array_equal(f.eval(ts), np.array([f.eval(t) for t in ts]))

    def test_single_breakpoint_is_constant(self):
        f = TTF([300], [7], DAY)
        assert f.is_constant and f.eval(5000) == 7


class TestConstruction:
    @pytest.mark.parametrize(
        "times,delays",
        [([], []), ([0, 0], [1, 2]), ([5, 3], [1, 2]), ([DAY], [3]), ([-1], [3]), ([0], [0.5])],
    )
    def test_rejects(self, times, delays):
        with pytest.raises(ValueError):
            TTF(times, delays, DAY)

    def test_immutable(self):
        f = tri()
        with pytest.raises(ValueError):
            f.delays[0] = 3


class TestArrival:
    def test_constant(self):
        assert TTF.constant(5, DAY).arrival(10) == 15

    def test_slope_just_above_minus_one_stays_increasing(self):
        delta = 1e-3
        f = TTF([0, 1000], [1001, 1001 - (1 - delta) * 1000], DAY)
        assert f.is_fifo()
        ts = np.linspace(0, 1000, 2001)
        assert np.all(np.diff(f.arrival(ts)) > 0)

    @settings(max_examples=30, deadline=None)
    @given(ttfs())
    def test_arrival_monotone_dense(self, f):
        ts = np.sort(np.random.default_rng(0).uniform(0, 2 * DAY, 10_000))
        assert np.all(np.diff(f.arrival(ts)) >= 0)


class TestFifo:
    def test_constant(self):
        assert TTF.constant(5, DAY).is_fifo()

    def test_steep_drop(self):
        assert not TTF([0, 100], [200, 50], DAY).is_fifo()

    def test_slope_exactly_minus_one(self):
        assert not TTF([0, 100], [200, 100], DAY).is_fifo()


class TestSlopes:
    def test_constant(self):
        assert TTF.constant(4, DAY).slope_range() == SlopeBounds(0.0, 0.0)

    def test_wrap_segment(self):
        sb = TTF([0, 100], [10, 20], 200).slope_range()
        assert sb.lambda_max == pytest.approx(0.1)
        assert sb.lambda_min == pytest.approx(0.1)

    def test_concave_arc_has_no_spoiling_point(self):
        # up then down over the day; the rise at midnight is the period boundary
        assert TTF([0, 43200], [10, 20], DAY).concavity_spoiling() == 0

    def test_peak_then_flat_counts_the_foot(self):
        assert tri().concavity_spoiling() == 1

    def test_v_shape_has_one(self):
        assert TTF([0, 100, 200], [10, 5, 10], DAY).concavity_spoiling() == 1


class TestLink:
    def test_constants(self):
        assert link(TTF.constant(5, DAY), TTF.constant(7, DAY)) == TTF.constant(12, DAY)

    def test_constant_second_leg_shifts(self):
        f = tri()
        h = link(f, TTF.constant(1, DAY))
        ts = np.linspace(0, DAY, 500)
        assert np.allclose(h.eval(ts), f.eval(ts) + 1)

    @settings(max_examples=60, deadline=None)
    @given(ttfs(max_points=4), ttfs(max_points=4))
    def test_pointwise(self, f, g):
        h = link(f, g)
        ts = np.random.default_rng(1).uniform(0, DAY, 10_000)
        want = f.eval(ts) + g.eval(ts + f.eval(ts))
        assert np.allclose(h.eval(ts), want, rtol=1e-9, atol=1e-7)

    @settings(max_examples=40, deadline=None)
    @given(ttfs(), ttfs(), ttfs())
    def test_associative(self, f, g, h):
        ts = np.random.default_rng(2).uniform(0, DAY, 1000)
        a = link(link(f, g), h).eval(ts)
        b = link(f, link(g, h)).eval(ts)
        assert np.allclose(a, b, rtol=1e-9, atol=1e-7)

    @settings(max_examples=60, deadline=None)
    @given(ttfs(), ttfs())
    def test_fifo_closure_and_size(self, f, g):
        h = link(f, g)
        assert h.is_fifo()
        assert len(h) <= len(f) + len(g) + 1

    def test_period_mismatch(self):
        with pytest.raises(ValueError):
            link(TTF.constant(1, DAY), TTF.constant(1, 100))


class TestMinimum:
    def test_idempotent(self):
        assert minimum(tri(), tri()) == tri()

    def test_constants(self):
        assert minimum(TTF.constant(5, DAY), TTF.constant(7, DAY)) == TTF.constant(5, DAY)

    def test_crossing_pair(self):
        f = TTF([0, 43200], [10, 50], DAY)
        g = TTF.constant(30, DAY)
        h = minimum(f, g)
        ts = np.random.default_rng(3).uniform(0, DAY, 10_000)
        assert np.allclose(h.eval(ts), np.minimum(f.eval(ts), g.eval(ts)), rtol=1e-12, atol=1e-9)

    @settings(max_examples=60, deadline=None)
    @given(ttfs(), ttfs(), ttfs())
    def test_lattice_laws(self, f, g, h):
        ts = np.random.default_rng(4).uniform(0, DAY, 1000)
        m = minimum(f, g)
        assert np.allclose(m.eval(ts), minimum(g, f).eval(ts))
        assert np.allclose(minimum(m, h).eval(ts), minimum(f, minimum(g, h)).eval(ts))
        assert np.allclose(minimum(f, f).eval(ts), f.eval(ts))
        assert np.allclose(m.eval(ts), np.minimum(f.eval(ts), g.eval(ts)), atol=1e-9)
        assert len(m) <= 2 * (len(f) + len(g))


@settings(max_examples=50, deadline=None)
@given(ttfs(), st.floats(0, DAY, allow_nan=False), st.integers(-5, 5))
def test_periodicity(f, t, k):
    assert f.eval(t + k * DAY) == pytest.approx(f.eval(t), rel=1e-12, abs=1e-9)
