import numpy as np
import pytest

from riverflow.grid import (
    BoundaryCondition,
    FieldFormatError,
    RiverGrid,
    ScalarField,
    VectorField,
    field_rmse,
    grid_from_centerline,
    load_centerline,
    load_field,
    make_bend_grid,
    save_centerline,
    save_field,
    velocity_magnitude,
)


@pytest.fixture
def grid():
    return make_bend_grid(n_across=5, n_along=9, spacing_m=2.0)


def const_field(grid, c):
    return ScalarField(grid, np.full((grid.n_across, grid.n_along), float(c)))


class TestGridGeometry:
    def test_node_count(self):
        g = make_bend_grid(41, 501, 2.4)
        assert g.n_nodes == 41 * 501 == 20541

    def test_across_axis_unit_norm(self, grid):
        norms = np.linalg.norm(grid.across_axis, axis=1)
        assert np.max(np.abs(norms - 1.0)) <= 1e-12

    def test_centerline_arc_length_strictly_increasing(self, grid):
        seg = np.linalg.norm(np.diff(grid.centerline, axis=0), axis=1)
        assert np.all(seg > 0)
        # stations are spaced by the nominal spacing
        assert np.allclose(seg, grid.spacing_m, rtol=1e-12)

    def test_across_axis_perpendicular_to_tangent(self, grid):
        dots = np.sum(grid.tangents() * grid.across_axis, axis=1)
        assert np.max(np.abs(dots)) < 1e-9

    def test_vectorization_round_trip_across_fastest(self, grid):
        vals = np.arange(grid.n_nodes, dtype=float).reshape(grid.n_across, grid.n_along)
        vec = grid.to_vector(vals)
        # flat index j * n_across + i belongs to node (i, j)
        assert vec[3 * grid.n_across + 2] == vals[2, 3]
        assert np.array_equal(grid.from_vector(vec), vals)


class TestFieldRmse:
    def test_identity_is_zero(self, grid):
        f = const_field(grid, 1.25)
        assert field_rmse(f, f) == 0.0

    def test_constant_offset(self, grid):
        assert field_rmse(const_field(grid, 2.0), const_field(grid, -1.5)) == pytest.approx(3.5, abs=1e-15)

    def test_direct_formula_evaluation(self):
        g = make_bend_grid(1, 2, 1.0)
        a = ScalarField(g, np.array([[0.0, 0.0]]))
        b = ScalarField(g, np.array([[3.0, 4.0]]))
        # rmse = sqrt((9 + 16) / 2) = sqrt(12.5)
        assert field_rmse(a, b) == pytest.approx(np.sqrt(12.5), abs=1e-12)

    def test_symmetry_nonnegativity_zero_iff_equal(self, grid):
        rng = np.random.default_rng(3)
        for _ in range(20):
            a = ScalarField(grid, rng.normal(size=(grid.n_across, grid.n_along)))
            b = ScalarField(grid, rng.normal(size=(grid.n_across, grid.n_along)))
            assert field_rmse(a, b) == field_rmse(b, a) >= 0
            assert (field_rmse(a, b) == 0) == np.array_equal(a.values, b.values)

    def test_shape_mismatch_rejected(self, grid):
        other = make_bend_grid(4, 9, 2.0)
        with pytest.raises(ValueError):
            field_rmse(const_field(grid, 0), const_field(other, 0))


class TestVelocityMagnitude:
    def test_pythagorean_triple(self, grid):
        shape = (grid.n_across, grid.n_along)
        v = VectorField(grid, np.full(shape, 3.0), np.full(shape, 4.0))
        assert np.all(velocity_magnitude(v).values == 5.0)

    def test_zero(self, grid):
        shape = (grid.n_across, grid.n_along)
        v = VectorField(grid, np.zeros(shape), np.zeros(shape))
        assert np.all(velocity_magnitude(v).values == 0.0)

    def test_sign_symmetry(self, grid):
        shape = (grid.n_across, grid.n_along)
        v = VectorField(grid, np.full(shape, -3.0), np.full(shape, 4.0))
        assert np.all(velocity_magnitude(v).values == 5.0)

    def test_rotation_invariance(self, grid):
        rng = np.random.default_rng(11)
        shape = (grid.n_across, grid.n_along)
        e, n = rng.normal(size=shape), rng.normal(size=shape)
        base = velocity_magnitude(VectorField(grid, e, n)).values
        theta = 0.7368
        c, s = np.cos(theta), np.sin(theta)
        rot = velocity_magnitude(VectorField(grid, c * e - s * n, s * e + c * n)).values
        assert np.max(np.abs(base - rot)) < 1e-12


class TestFieldIO:
    def test_round_trip_float64_identical(self, grid, tmp_path):
        rng = np.random.default_rng(5)
        f = ScalarField(grid, rng.normal(size=(grid.n_across, grid.n_along)))
        p = tmp_path / "f.rfs"
        save_field(f, p, dtype="float64")
        g = load_field(p, grid)
        assert np.array_equal(g.values, f.values)

    def test_float32_payload_bit_exact(self, grid, tmp_path):
        rng = np.random.default_rng(6)
        f = ScalarField(grid, rng.normal(size=(grid.n_across, grid.n_along)))
        p = tmp_path / "f.rfs"
        save_field(f, p, dtype="float32")
        once = load_field(p, grid)
        twice = load_field(p, grid)
        assert np.array_equal(once.values, twice.values)
        assert np.array_equal(once.values, f.values.astype(np.float32).astype(np.float64))

    def test_vector_round_trip(self, grid, tmp_path):
        rng = np.random.default_rng(7)
        shape = (grid.n_across, grid.n_along)
        v = VectorField(grid, rng.normal(size=shape), rng.normal(size=shape))
        p = tmp_path / "v.rfs"
        save_field(v, p, dtype="float64")
        w = load_field(p, grid)
        assert np.array_equal(w.easting, v.easting)
        assert np.array_equal(w.northing, v.northing)

    def test_declared_shape_violation(self, grid, tmp_path):
        f = const_field(grid, 1.0)
        p = tmp_path / "f.rfs"
        save_field(f, p, dtype="float32")
        data = p.read_bytes()
        p.write_bytes(data[:-4])  # drop one float: payload no longer matches header
        with pytest.raises(FieldFormatError):
            load_field(p, grid)

    def test_nan_payload_rejected(self, grid, tmp_path):
        f = const_field(grid, 1.0)
        p = tmp_path / "f.rfs"
        save_field(f, p, dtype="float32")
        data = bytearray(p.read_bytes())
        nan = np.array([np.nan], dtype="<f4").tobytes()
        data[-4:] = nan
        p.write_bytes(bytes(data))
        with pytest.raises(FieldFormatError):
            load_field(p, grid)

    def test_bad_magic_rejected(self, tmp_path):
        p = tmp_path / "junk.rfs"
        p.write_bytes(b"NOPE\nend_header\n")
        with pytest.raises(FieldFormatError):
            load_field(p)

    def test_centerline_round_trip(self, grid, tmp_path):
        p = tmp_path / "cl.txt"
        save_centerline(grid, p)
        pts, n_across, spacing = load_centerline(p)
        assert np.allclose(pts, grid.centerline)
        rebuilt = grid_from_centerline(pts, n_across, spacing)
        assert rebuilt.compatible(grid)


class TestBoundaryCondition:
    def test_positive_discharge_required(self):
        with pytest.raises(ValueError):
            BoundaryCondition(-5.0, 30.0)
        with pytest.raises(ValueError):
            BoundaryCondition(0.0, 30.0)

    def test_valid(self):
        bc = BoundaryCondition(146.1, 29.9)
        assert bc.discharge_q == 146.1


class TestImmutability:
    def test_field_values_read_only(self, grid):
        f = const_field(grid, 1.0)
        with pytest.raises(ValueError):
            f.values[0, 0] = 2.0

    def test_nonfinite_rejected(self, grid):
        vals = np.ones((grid.n_across, grid.n_along))
        vals[2, 2] = np.inf
        with pytest.raises(ValueError):
            ScalarField(grid, vals)
