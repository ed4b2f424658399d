import numpy as np
import pytest
from hypothesis import given, strategies as st

from anisoreg import profiles

from conftest import unit_grid


@given(st.integers(0, 10 ** 6), st.sampled_from([2, 3]))
def test_random_profile_range(seed, ndim):
    prof = profiles.random_positive(seed, ndim)
    pts = np.random.default_rng(seed).uniform(-2, 2, size=(ndim, 500))
    vals = prof(*pts)
    assert np.all(vals >= 0.4 - 1e-12) and np.all(vals <= 1.6 + 1e-12)


def test_family_is_pinned():
    a = [p(0.3, 0.7) for p in profiles.family()]
    b = [p(0.3, 0.7) for p in profiles.family()]
    assert a == b and len(set(a)) == profiles.FAMILY_SIZE


@pytest.mark.parametrize("name,kw,expect", [
    ("constant", {"value": 2.0}, 2.0),
    ("affine", {"offset": 1.0, "slope": [1.0, 2.0]}, 1.0 + 0.5 + 0.5),
    ("sine", {"amplitude": 0.5}, 1.0 + 0.5 * np.sin(2 * np.pi * 0.25)),
])
def test_named(name, kw, expect):
    assert profiles.named_profile(name, **kw)(0.5, 0.25) == pytest.approx(expect)


def test_unknown_profile():
    with pytest.raises(ValueError, match="unknown"):
        profiles.named_profile("spiral")


def test_manufactured_boundary_is_affine():
    g = unit_grid(17)
    bc = profiles.boundary(g, profiles.manufactured_solution)
    y = g.points()[g.boundary_mask().ravel(), 1]
    np.testing.assert_allclose(bc.boundary_values(), y, atol=1e-15)
