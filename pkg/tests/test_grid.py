"""
Tests for the grid module.

Cubes, tensor grids, sampled fields, potential generators and the CSV
field format.
"""
import os
import tempfile

import numpy as np
import pytest

from ucplab.errors import GridMismatchError, InvalidGridError, ValidationError
from ucplab.grid import (
    BoundaryCondition,
    CoefficientField,
    Domain,
    Grid,
    ScalarField,
    alloy_potential,
    cell_indices,
    random_potential,
    read_coefficients_csv,
    read_field_csv,
    sinusoidal_potential,
    write_field_csv,
)


@pytest.fixture
def dirichlet_grid():
    return Grid(Domain(1, 3.0), 29)


@pytest.fixture
def periodic_grid():
    return Grid(Domain(2, 2.0, BoundaryCondition.PERIODIC), 8)


class TestDomain:
    """Test the cube and its unit-cell lattice."""

    def test_rejects_nonpositive_side(self):
        """L must be positive."""
        with pytest.raises(ValidationError, match="L must be positive"):
            Domain(1, 0.0)

    def test_rejects_fractional_dimension(self):
        """d must be a positive integer."""
        with pytest.raises(ValidationError):
            Domain(1.5, 1.0)

    def test_lattice_indices_odd_side(self):
        """L = 3 holds the cells j = -1, 0, 1."""
        assert Domain(1, 3.0).lattice_indices() == [(-1,), (0,), (1,)]

    def test_lattice_indices_count_in_2d(self):
        """L = 5 in two dimensions holds 25 unit cells."""
        assert len(Domain(2, 5.0).lattice_indices()) == 25

    def test_no_cell_fits_small_cube(self):
        """A cube smaller than a unit cell contains no lattice cell."""
        assert Domain(1, 0.5).lattice_indices() == []

    def test_boundary_condition_from_string(self):
        """Boundary conditions accept their string value."""
        assert Domain(1, 1.0, "periodic").bc is BoundaryCondition.PERIODIC


class TestGrid:
    """Test node placement and mesh width."""

    def test_dirichlet_mesh_width(self, dirichlet_grid):
        """Dirichlet grids exclude the boundary: h = L/(n+1)."""
        assert dirichlet_grid.h == pytest.approx(0.1)
        assert dirichlet_grid.axis[0] == pytest.approx(-1.4)
        assert dirichlet_grid.axis[-1] == pytest.approx(1.4)

    def test_periodic_nodes_are_cell_centred(self, periodic_grid):
        """Periodic nodes sit at cell centres, h = L/n."""
        assert periodic_grid.h == pytest.approx(0.25)
        assert periodic_grid.axis[0] == pytest.approx(-0.875)
        assert periodic_grid.points.shape == (64, 2)

    def test_refined_halves_mesh_width(self, dirichlet_grid, periodic_grid):
        """refined() halves h for both boundary conditions."""
        assert dirichlet_grid.refined().h == pytest.approx(dirichlet_grid.h / 2)
        assert periodic_grid.refined().h == pytest.approx(periodic_grid.h / 2)

    def test_too_few_nodes(self):
        """n must be at least 2."""
        with pytest.raises(InvalidGridError):
            Grid(Domain(1, 1.0), 1)

    def test_three_dimensional_limit(self):
        """Three-dimensional grids are capped at 40 nodes per axis."""
        with pytest.raises(InvalidGridError, match="three dimensions"):
            Grid(Domain(3, 1.0), 41)

    def test_for_resolution(self):
        """for_resolution places about ``resolution`` nodes per unit length."""
        grid = Grid.for_resolution(Domain(1, 3.0), 10)
        assert grid.n == 29
        assert grid.h == pytest.approx(0.1)

    def test_boundary_layer_mask(self, dirichlet_grid):
        """Only the first and last node touch the eliminated boundary in 1D."""
        mask = dirichlet_grid.boundary_layer_mask()
        assert mask.sum() == 2
        assert mask[0] and mask[-1]

    def test_check_same_mismatch(self, dirichlet_grid):
        """Different grids raise GridMismatchError."""
        with pytest.raises(GridMismatchError):
            dirichlet_grid.check_same(Grid(Domain(1, 3.0), 30))


class TestScalarField:
    """Test sampled fields and the discrete inner product."""

    def test_inner_product_weighted_by_cell(self, periodic_grid):
        """The constant 1 has squared norm equal to the cube volume."""
        one = ScalarField.constant(periodic_grid, 1.0)
        assert one.inner(one) == pytest.approx(4.0)

    def test_values_are_read_only(self, dirichlet_grid):
        """Field values cannot be mutated in place."""
        field_ = ScalarField.zeros(dirichlet_grid)
        with pytest.raises(ValueError):
            field_.values[0] = 1.0

    def test_size_mismatch(self, dirichlet_grid):
        """A value array of the wrong length raises GridMismatchError."""
        with pytest.raises(GridMismatchError):
            ScalarField(dirichlet_grid, np.ones(3))

    def test_nonfinite_values(self, dirichlet_grid):
        """NaN values are rejected."""
        values = np.zeros(dirichlet_grid.size)
        values[3] = np.nan
        with pytest.raises(ValidationError):
            ScalarField(dirichlet_grid, values)

    def test_arithmetic(self, dirichlet_grid):
        """Sum and difference stay on the grid."""
        a = ScalarField.constant(dirichlet_grid, 2.0)
        b = ScalarField.constant(dirichlet_grid, 0.5)
        assert np.allclose((a - b).values, 1.5)
        assert np.allclose((a + b.scaled(2)).values, 3.0)


class TestPotentials:
    """Test the potential generators."""

    def test_random_potential_bounded_and_seeded(self, periodic_grid):
        """Random potentials respect |V| <= K and repeat for a fixed seed."""
        V1 = random_potential(periodic_grid, 2.0, seed=7)
        V2 = random_potential(periodic_grid, 2.0, seed=7)
        assert V1.sup_norm <= 2.0
        assert np.array_equal(V1.values, V2.values)

    def test_alloy_constant_per_cell(self):
        """Alloy potentials take one value on each unit cell."""
        grid = Grid(Domain(1, 3.0, BoundaryCondition.PERIODIC), 30)
        V = alloy_potential(grid, 1.0, seed=3)
        cells = cell_indices(grid)[:, 0]
        for cell in range(3):
            assert np.ptp(V.values[cells == cell]) == 0.0

    def test_sinusoidal_bound(self, periodic_grid):
        """The sinusoidal generator is bounded by its amplitude."""
        assert sinusoidal_potential(periodic_grid, 1.5).sup_norm <= 1.5 + 1e-12

    def test_negative_bound_rejected(self, periodic_grid):
        """K must be nonnegative."""
        with pytest.raises(ValidationError):
            random_potential(periodic_grid, -1.0, seed=0)


class TestCoefficientField:
    """Test coefficient matrices."""

    def test_identity_inverse_at_origin(self, periodic_grid):
        """The identity is its own inverse."""
        a = CoefficientField.identity(periodic_grid)
        assert np.allclose(a.a_inv_at_origin, np.eye(2))
        assert a.is_symmetric()

    def test_scalar_coefficients_keep_function(self, periodic_grid):
        """Scalar coefficients evaluate exactly off the nodes."""
        a = CoefficientField.scalar(periodic_grid, lambda p: 1.0 + 0.1 * p[:, 0])
        values = a.evaluate(np.array([[0.5, 0.0]]))
        assert values[0] == pytest.approx(1.05 * np.eye(2))


class TestCsvRoundTrip:
    """Test the field and coefficient CSV formats."""

    def test_field_round_trip(self, periodic_grid):
        """write_field_csv and read_field_csv preserve values exactly."""
        V = random_potential(periodic_grid, 1.0, seed=1)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "V.csv")
            write_field_csv(V, path)
            assert np.array_equal(read_field_csv(path, periodic_grid).values, V.values)

    def test_field_index_out_of_range(self, dirichlet_grid):
        """Node indices outside the grid raise GridMismatchError."""
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "bad.csv")
            with open(path, "w", encoding="utf-8") as f:
                f.write("i0,value\n99,1.0\n")
            with pytest.raises(GridMismatchError):
                read_field_csv(path, dirichlet_grid)

    def test_coefficients_must_cover_grid(self, dirichlet_grid):
        """A coefficient file with missing nodes is rejected."""
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "a.csv")
            with open(path, "w", encoding="utf-8") as f:
                f.write("i0,a11\n0,1.0\n")
            with pytest.raises(GridMismatchError, match="covers 1 of 29"):
                read_coefficients_csv(path, dirichlet_grid)
