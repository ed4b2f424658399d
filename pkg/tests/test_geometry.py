import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from anisoreg.field import Grid
from anisoreg.geometry import (GeometryError, Polydisc, QuasiMetric, SplitPoint, clipped_fraction,
                               d_M, polydisc_mask, quasimetric_ball, region_stats,
                               sublevel_measure, twop_dist, unit_ball_volume)

coords = st.floats(-2, 2, allow_nan=False)


@pytest.mark.parametrize("k,vol", [(1, 2.0), (2, math.pi), (3, 4 * math.pi / 3)])
def test_unit_ball_volume(k, vol):
    assert unit_ball_volume(k) == pytest.approx(vol)


def test_split_point_roundtrip():
    sp = SplitPoint.from_coords([1, 2, 3], 2)
    assert sp.prime == (1.0, 2.0) and sp.doubleprime == (3.0,)
    np.testing.assert_array_equal(sp.coords, [1, 2, 3])
    with pytest.raises(GeometryError):
        SplitPoint.from_coords([1, 2], 2)


def test_polydisc_open_balls():
    q = Polydisc(SplitPoint((0.0,), (0.0,)), 1.0, 0.5)
    assert q.contains(np.array([[0.999, 0.499]]))[0]
    assert not q.contains(np.array([[1.0, 0.0]]))[0]
    assert not q.contains(np.array([[0.0, 0.5]]))[0]
    assert q.volume() == pytest.approx(2 * 1.0 * 2 * 0.5)


def test_d_M_mismatched_split():
    with pytest.raises(GeometryError):
        d_M(SplitPoint((0.0,), (0.0, 1.0)), SplitPoint((0.0, 1.0), (0.0,)), QuasiMetric(1, 1.5, 1))


@given(st.lists(coords, min_size=3, max_size=3), st.lists(coords, min_size=3, max_size=3),
       st.sampled_from([0.5, 1.0, 2.0]), st.sampled_from([1.2, 1.5, 1.8]))
def test_d_M_symmetric_and_definite(x, y, M, p):
    q = QuasiMetric(M, p, 1)
    assert d_M(x, y, q) == d_M(y, x, q)
    assert d_M(x, x, q) == 0
    if not np.allclose(x, y, atol=0):
        assert d_M(x, y, q) > 0


@given(st.lists(coords, min_size=2, max_size=2), st.floats(0.01, 2), st.floats(0.2, 3),
       st.sampled_from([1.2, 1.5, 1.8]), st.integers(0, 2 ** 31))
def test_ball_is_polydisc(c, rho, M, p, seed):
    q = QuasiMetric(M, p, 1)
    ball = quasimetric_ball(SplitPoint.from_coords(c, 1), rho, q)
    pts = np.asarray(c) + np.random.default_rng(seed).uniform(-3, 3, size=(200, 2))
    np.testing.assert_array_equal(ball.contains(pts), d_M(pts, np.asarray(c), q) < rho)


@pytest.mark.parametrize("M", [1.0, 2.0])
@pytest.mark.parametrize("p", [1.2, 1.5, 1.8])
def test_quasi_triangle_sampled(M, p):
    q = QuasiMetric(M, p, 1)
    rng = np.random.default_rng(11)
    x, y, z = rng.uniform(-1, 1, size=(3, 20000, 3))
    lhs = d_M(x, z, q)
    rhs = q.gamma_q * (d_M(x, y, q) + d_M(y, z, q))
    assert np.all(lhs <= rhs * (1 + 1e-12))


def test_quasi_triangle_constant_is_sharp():
    # collinear prime displacements realize the constant
    p = 1.5
    q = QuasiMetric(1.0, p, 1)
    x, y, z = np.array([0.0, 0.0]), np.array([1.0, 0.0]), np.array([2.0, 0.0])
    assert d_M(x, z, q) == pytest.approx(q.gamma_q * (d_M(x, y, q) + d_M(y, z, q)))


def test_twop_dist_monotone():
    rng = np.random.default_rng(0)
    K = rng.uniform(0.3, 0.7, size=(50, 2))
    B = np.array([[0.0, t] for t in np.linspace(0, 1, 11)] + [[t, 0.0] for t in np.linspace(0, 1, 11)])
    full = twop_dist(K, B, 1.0, 1.5, 1)
    assert twop_dist(K[:10], B, 1.0, 1.5, 1) >= full
    assert twop_dist(K, B, 4.0, 1.5, 1) <= full
    # brute force
    brute = min(abs(k[0] - b[0]) ** (2 / 1.5) + abs(k[1] - b[1]) for k in K for b in B)
    assert full == pytest.approx(brute, rel=1e-12)


class TestRegions:
    g = Grid.box((11, 11), (0, 0), (1, 1), 1)

    def test_mask_matches_contains(self):
        reg = Polydisc(SplitPoint((0.5,), (0.45,)), 0.21, 0.3)
        mask = polydisc_mask(self.g, reg)
        np.testing.assert_array_equal(mask.ravel(), reg.contains(self.g.points()))

    def test_clipped_fraction(self):
        inside = Polydisc(SplitPoint((0.5,), (0.5,)), 0.2, 0.2)
        assert clipped_fraction(self.g, inside) == 0.0
        corner = Polydisc(SplitPoint((0.0,), (0.0,)), 0.25, 0.25)
        # 5x5 lattice sites, 3x3 inside the box
        assert clipped_fraction(self.g, corner) == pytest.approx(1 - 9 / 25)
        assert not corner.inside(self.g) and inside.inside(self.g)

    def test_stats_and_sublevel(self):
        u = self.g.evaluate(lambda x, y: x + 0 * y)
        reg = Polydisc(SplitPoint((0.5,), (0.5,)), 0.25, 0.15)
        st_ = region_stats(u, reg)
        assert st_.sup == pytest.approx(0.7) and st_.inf == pytest.approx(0.3)
        assert st_.count == 5 * 3
        assert st_.osc == pytest.approx(0.4)
        assert sublevel_measure(u, reg, 0.5) == pytest.approx(9 * self.g.cell_volume)

    def test_empty_region(self):
        u = self.g.evaluate(lambda x, y: x)
        with pytest.raises(GeometryError):
            region_stats(u, Polydisc(SplitPoint((0.55,), (0.55,)), 0.01, 0.01))
