import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reachkit.errors import GridMismatchError, OutOfDomainError
from reachkit.grid import (AxisSpec, BoolMask, Grid3, ScalarField,
                           gradient_central, index_to_state, interpolate,
                           make_grid, nearest_index, read_field, read_mask,
                           set_metrics, sublevel_set, write_field, write_mask)


@pytest.fixture
def grid998():
    return make_grid(9, 9, 8)


class TestAxisSpec:
    def test_non_periodic_spacing(self):
        ax = AxisSpec(-4.0, 4.0, 9)
        assert ax.spacing == pytest.approx(1.0)
        assert ax.coords[0] == -4.0 and ax.coords[-1] == 4.0

    def test_periodic_spacing_aliases_hi(self):
        ax = AxisSpec(-np.pi, np.pi, 8, periodic=True)
        assert ax.spacing == pytest.approx(np.pi / 4)
        # hi itself is not a coordinate on a periodic axis
        assert ax.coords[-1] == pytest.approx(np.pi - np.pi / 4)

    @pytest.mark.parametrize("lo,hi,count", [(1.0, 1.0, 5), (2.0, 1.0, 5), (0.0, 1.0, 2)])
    def test_invalid_axes_rejected(self, lo, hi, count):
        with pytest.raises(ValueError):
            AxisSpec(lo, hi, count)

    def test_theta_axis_must_be_periodic(self):
        with pytest.raises(ValueError):
            Grid3(AxisSpec(-4, 4, 9), AxisSpec(-4, 4, 9), AxisSpec(-np.pi, np.pi, 8))


class TestIndexToState:
    def test_center_of_symmetric_axes(self, grid998):
        assert index_to_state(grid998, 4, 4, 0) == pytest.approx((0.0, 0.0, -np.pi))

    def test_lowest_corner(self, grid998):
        assert index_to_state(grid998, 0, 0, 0) == pytest.approx((-4.0, -4.0, -np.pi))

    def test_periodic_axis_midpoint(self, grid998):
        assert index_to_state(grid998, 0, 0, 4) == pytest.approx((-4.0, -4.0, 0.0))

    def test_out_of_range_raises(self, grid998):
        with pytest.raises(IndexError):
            index_to_state(grid998, 9, 0, 0)


class TestInterpolate:
    def test_constant_field(self, grid998):
        field = ScalarField.full(grid998, 3.0)
        assert interpolate(field, (0.3, -1.7, 2.0)) == pytest.approx(3.0)

    def test_nodal_exactness(self, grid998):
        rng = np.random.default_rng(0)
        field = ScalarField(grid998, rng.normal(size=grid998.shape))
        s = index_to_state(grid998, 3, 5, 2)
        assert interpolate(field, s) == pytest.approx(field.values[3, 5, 2])

    def test_linear_exactness_at_midpoint(self, grid998):
        xs = grid998.x.coords[:, None, None]
        field = ScalarField(grid998, np.broadcast_to(2.0 * xs, grid998.shape).copy())
        v_mid = interpolate(field, (-3.5, 0.0, 0.0))
        assert v_mid == pytest.approx(0.5 * (field.values[0, 4, 4] + field.values[1, 4, 4]))

    def test_wrap_equivalence(self, grid998):
        rng = np.random.default_rng(1)
        field = ScalarField(grid998, rng.normal(size=grid998.shape))
        a = interpolate(field, (0.5, 0.5, 1.1))
        b = interpolate(field, (0.5, 0.5, 1.1 + 2 * np.pi))
        assert a == pytest.approx(b, abs=1e-12)

    def test_out_of_domain_raises(self, grid998):
        field = ScalarField.full(grid998, 0.0)
        with pytest.raises(OutOfDomainError):
            interpolate(field, (4.5, 0.0, 0.0))


class TestGradientCentral:
    def test_constant_field_zero_gradient(self, grid998):
        field = ScalarField.full(grid998, 7.0)
        assert gradient_central(field, 4, 4, 4) == pytest.approx((0.0, 0.0, 0.0))

    def test_linear_in_x_exact(self, grid998):
        xs = grid998.x.coords[:, None, None]
        field = ScalarField(grid998, np.broadcast_to(xs, grid998.shape).copy())
        assert gradient_central(field, 4, 4, 4) == pytest.approx((1.0, 0.0, 0.0))

    def test_sin_theta_derivative(self):
        grid = make_grid(3, 3, 64)
        theta = grid.theta.coords[None, None, :]
        field = ScalarField(grid, np.broadcast_to(np.sin(theta), grid.shape).copy())
        k0 = int(round((0.0 - grid.theta.lo) / grid.theta.spacing))
        px, py, pt = gradient_central(field, 1, 1, k0)
        assert abs(pt - 1.0) <= 0.01
        assert px == pytest.approx(0.0) and py == pytest.approx(0.0)

    def test_boundary_one_sided(self, grid998):
        xs = grid998.x.coords[:, None, None]
        field = ScalarField(grid998, np.broadcast_to(xs**2, grid998.shape).copy())
        px, _, _ = gradient_central(field, 0, 4, 4)
        expected = (field.values[1, 4, 4] - field.values[0, 4, 4]) / grid998.x.spacing
        assert px == pytest.approx(expected)


class TestSublevelSet:
    def test_all_above_threshold_empty(self, grid998):
        assert sublevel_set(ScalarField.full(grid998, 1.0), 0.0).count() == 0

    def test_all_below_threshold_full(self, grid998):
        mask = sublevel_set(ScalarField.full(grid998, -1.0), 0.0)
        assert mask.count() == grid998.num_cells

    def test_strict_inequality_at_boundary(self):
        grid = make_grid(3, 3, 3)
        values = np.zeros(grid.shape)
        values[0, 0, 0] = -0.1
        values[0, 0, 2] = 0.1
        mask = sublevel_set(ScalarField(grid, values), 0.0)
        assert bool(mask.bits[0, 0, 0]) is True
        assert bool(mask.bits[0, 0, 1]) is False
        assert bool(mask.bits[0, 0, 2]) is False

    @given(t1=st.floats(-2, 2), t2=st.floats(-2, 2))
    @settings(max_examples=30, deadline=None)
    def test_threshold_monotonicity(self, t1, t2):
        grid = make_grid(5, 5, 4)
        rng = np.random.default_rng(42)
        field = ScalarField(grid, rng.uniform(-2, 2, size=grid.shape))
        lo, hi = min(t1, t2), max(t1, t2)
        smaller = sublevel_set(field, lo)
        larger = sublevel_set(field, hi)
        assert np.all(~smaller.bits | larger.bits)


class TestSetMetrics:
    def test_identical_nonempty(self, grid998):
        bits = np.zeros(grid998.shape, dtype=bool)
        bits[2:4] = True
        a = BoolMask(grid998, bits)
        m = set_metrics(a, BoolMask(grid998, bits.copy()))
        assert m == {"iou": 1.0, "frac_a_in_b": 1.0, "frac_b_in_a": 1.0}

    def test_disjoint(self, grid998):
        a = np.zeros(grid998.shape, dtype=bool)
        b = np.zeros(grid998.shape, dtype=bool)
        a[0], b[1] = True, True
        m = set_metrics(BoolMask(grid998, a), BoolMask(grid998, b))
        assert m["iou"] == 0.0

    def test_subset_arithmetic(self, grid998):
        a = np.zeros(grid998.shape, dtype=bool)
        b = np.zeros(grid998.shape, dtype=bool)
        a.ravel()[:10] = True
        b.ravel()[:40] = True
        m = set_metrics(BoolMask(grid998, a), BoolMask(grid998, b))
        assert m["iou"] == pytest.approx(0.25)
        assert m["frac_a_in_b"] == pytest.approx(1.0)
        assert m["frac_b_in_a"] == pytest.approx(0.25)

    def test_both_empty(self, grid998):
        m = set_metrics(BoolMask.empty(grid998), BoolMask.empty(grid998))
        assert m["iou"] == 1.0

    def test_grid_mismatch_raises(self, grid998):
        other = make_grid(5, 5, 4)
        with pytest.raises(GridMismatchError):
            set_metrics(BoolMask.empty(grid998), BoolMask.empty(other))

    @given(seed=st.integers(0, 1000))
    @settings(max_examples=25, deadline=None)
    def test_iou_symmetry(self, seed):
        grid = make_grid(4, 4, 3)
        rng = np.random.default_rng(seed)
        a = BoolMask(grid, rng.random(grid.shape) < 0.4)
        b = BoolMask(grid, rng.random(grid.shape) < 0.4)
        assert set_metrics(a, b)["iou"] == set_metrics(b, a)["iou"]


class TestNearestIndex:
    def test_clamps_position_and_wraps_heading(self, grid998):
        assert nearest_index(grid998, (9.0, -9.0, 0.0)) == (8, 0, 4)
        i, j, k = nearest_index(grid998, (0.0, 0.0, np.pi - 1e-9))
        assert (i, j) == (4, 4)
        assert k == 0  # pi aliases -pi


class TestVFLD:
    def test_field_round_trip_bitwise(self, tmp_path, grid998):
        rng = np.random.default_rng(3)
        field = ScalarField(grid998, rng.normal(size=grid998.shape))
        path = tmp_path / "field.vfld"
        write_field(path, field)
        write_field(tmp_path / "again.vfld", read_field(path))
        assert path.read_bytes() == (tmp_path / "again.vfld").read_bytes()
        assert np.array_equal(read_field(path).values, field.values)

    def test_mask_round_trip(self, tmp_path, grid998):
        rng = np.random.default_rng(4)
        mask = BoolMask(grid998, rng.random(grid998.shape) < 0.3)
        path = tmp_path / "mask.vfld"
        write_mask(path, mask)
        assert np.array_equal(read_mask(path).bits, mask.bits)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bogus.vfld"
        path.write_bytes(b"NOTVFLD!" + b"\x00" * 100)
        with pytest.raises(ValueError, match="magic"):
            read_field(path)

    def test_payload_size_checked(self, tmp_path, grid998):
        field = ScalarField.full(grid998, 1.0)
        path = tmp_path / "field.vfld"
        write_field(path, field)
        data = path.read_bytes()
        path.write_bytes(data[:-8])
        with pytest.raises(ValueError, match="payload"):
            read_field(path)

    def test_mask_and_field_payloads_disambiguated(self, tmp_path, grid998):
        write_mask(tmp_path / "m.vfld", BoolMask.empty(grid998))
        with pytest.raises(ValueError):
            read_field(tmp_path / "m.vfld")
