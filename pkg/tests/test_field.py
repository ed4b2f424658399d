import csv
import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from anisoreg.field import (MAGIC, BoundaryData, FieldFormatError, Grid, ScalarField, export_csv,
                            load, partial, save, truncate)


def grid2(n=5, m=4):
    return Grid.box((n, m), (0.0, -1.0), (1.0, 1.0), 1)


class TestGrid:
    def test_box_spacing_and_bounds(self):
        g = grid2()
        assert g.spacing == (0.25, 2 / 3)
        np.testing.assert_allclose(g.upper, [1.0, 1.0])
        assert g.cell_volume == pytest.approx(0.25 * 2 / 3)

    @pytest.mark.parametrize("kw", [
        dict(dims=(2, 5), spacing=(1, 1), origin=(0, 0), split=1),
        dict(dims=(3, 3), spacing=(0, 1), origin=(0, 0), split=1),
        dict(dims=(3, 3), spacing=(1, 1), origin=(0, 0), split=2),
        dict(dims=(3,), spacing=(1,), origin=(0,), split=1),
    ])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            Grid(**kw)

    def test_points_row_major(self):
        g = grid2(3, 3)
        pts = g.points()
        assert pts.shape == (9, 2)
        np.testing.assert_allclose(pts[1], [0.0, 0.0])
        np.testing.assert_allclose(pts[3], [0.5, -1.0])

    def test_boundary_mask_count(self):
        g = Grid.box((4, 5, 6), (0, 0, 0), (1, 1, 1), 1)
        assert g.boundary_mask().sum() == 4 * 5 * 6 - 2 * 3 * 4


class TestScalarField:
    def test_rejects_nonfinite(self):
        g = grid2()
        with pytest.raises(ValueError):
            ScalarField(g, np.full(g.dims, np.nan))

    @given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
    def test_interpolation_exact_for_multilinear(self, a, b, c):
        g = grid2(6, 7)
        u = g.evaluate(lambda x, y: a + b * x + c * x * y)
        rng = np.random.default_rng(0)
        pts = rng.uniform([0, -1], [1, 1], size=(20, 2))
        np.testing.assert_allclose(u.interpolate(pts), a + b * pts[:, 0] + c * pts[:, 0] * pts[:, 1],
                                   atol=1e-12)

    def test_interpolation_outside_raises(self):
        u = grid2().evaluate(lambda x, y: x + y)
        with pytest.raises(ValueError):
            u.value_at((1.5, 0.0))

    def test_scaling(self):
        u = grid2().evaluate(lambda x, y: x - y)
        assert (2 * u).sup_norm() == pytest.approx(2 * u.sup_norm())


def test_partial_forward_difference():
    u = grid2().evaluate(lambda x, y: 3 * x + y ** 2)
    np.testing.assert_allclose(partial(u, 0), 3.0)
    assert partial(u, 1).shape == (5, 3)
    with pytest.raises(IndexError):
        partial(u, 2)


@given(st.floats(-1, 1), st.sampled_from([1, -1]))
def test_truncation_nonnegative_and_split(k, sign):
    u = grid2().evaluate(lambda x, y: np.sin(3 * x) * y)
    w = truncate(u, k, sign)
    assert np.all(w.values >= 0)
    # (u-k)_+ - (u-k)_- == u - k
    np.testing.assert_allclose(truncate(u, k, 1).values - truncate(u, k, -1).values, u.values - k)


class TestBoundary:
    def test_from_pairs_each_node_once(self):
        g = grid2(3, 3)
        idx = np.flatnonzero(g.boundary_mask().ravel())
        bc = BoundaryData.from_pairs(g, [(i, float(i)) for i in idx])
        np.testing.assert_allclose(bc.boundary_values(), idx)
        with pytest.raises(ValueError, match="twice"):
            BoundaryData.from_pairs(g, [(i, 0.0) for i in idx] + [(idx[0], 1.0)])
        with pytest.raises(ValueError, match="unassigned"):
            BoundaryData.from_pairs(g, [(i, 0.0) for i in idx[1:]])
        with pytest.raises(ValueError, match="not a boundary"):
            BoundaryData.from_pairs(g, [(4, 0.0)])

    def test_from_csv(self, tmp_path):
        g = grid2(3, 3)
        idx = np.flatnonzero(g.boundary_mask().ravel())
        path = tmp_path / "bc.csv"
        with open(path, "w", newline="") as fh:
            fh.write("# boundary\nnode,value\n")
            csv.writer(fh).writerows([(i, 0.5 * i) for i in idx])
        bc = BoundaryData.from_csv(g, path)
        np.testing.assert_allclose(bc.boundary_values(), 0.5 * idx)


class TestPersistence:
    @given(hnp.arrays(np.float64, (4, 5), elements=st.floats(-1e6, 1e6)),
           st.one_of(st.none(), st.floats(1.01, 1.99)))
    def test_roundtrip(self, tmp_path_factory, vals, p):
        g = grid2(4, 5)
        u = ScalarField(g, vals, p)
        path = tmp_path_factory.mktemp("anis") / "u.anis"
        save(u, path)
        v = load(path)
        assert v.grid == g
        assert v.p == p
        np.testing.assert_array_equal(v.values, u.values)

    def test_layout(self, tmp_path):
        u = grid2().evaluate(lambda x, y: x)
        path = tmp_path / "u.anis"
        save(u, path)
        data = path.read_bytes()
        assert data[:4] == MAGIC
        assert struct.unpack_from("<III", data, 4) == (1, 2, 1)
        assert len(data) == 4 + 12 + 8 + 2 * 24 + 4 + 8 * 20 + 4

    @pytest.mark.parametrize("mutate,msg", [
        (lambda b: b"XXXX" + b[4:], "malformed header"),
        (lambda b: b[:30], "malformed header"),
        (lambda b: b[:-20], "truncated payload"),
        (lambda b: b[:-12] + bytes([b[-12] ^ 1]) + b[-11:], "checksum mismatch"),
        (lambda b: b[:40] + bytes([b[40] ^ 1]) + b[41:], "checksum mismatch"),
    ])
    def test_corruption(self, tmp_path, mutate, msg):
        u = grid2().evaluate(lambda x, y: x * y)
        path = tmp_path / "u.anis"
        save(u, path)
        path.write_bytes(mutate(path.read_bytes()))
        with pytest.raises(FieldFormatError, match=msg):
            load(path)

    def test_export_csv(self, tmp_path):
        u = grid2(3, 3).evaluate(lambda x, y: x + 10 * y)
        path = tmp_path / "u.csv"
        export_csv(u, path)
        rows = list(csv.reader(open(path)))
        assert rows[0] == ["x1", "x2", "u"]
        assert len(rows) == 10
        x, y, val = map(float, rows[5])
        assert val == x + 10 * y
