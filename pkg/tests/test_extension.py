"""
Tests for the extension module.

The ghost-dimension extension F(x', y) and its discrete residuals.
"""
import os
import tempfile

import numpy as np
import pytest

from ucplab.errors import EmptyBasisError, ValidationError
from ucplab.extension import build_extension, residual, s_case, write_extension_csv
from ucplab.grid import Domain, Grid, ScalarField
from ucplab.operators import build_schrodinger
from ucplab.spectral import EnergyWindow, random_in_range, spectrum_below


def basis_on_cube(V_value=0.0, E=10.0):
    grid = Grid(Domain(1, 3.0), 59)
    V = ScalarField.constant(grid, V_value)
    op = build_schrodinger(grid.domain, grid.n, V)
    return op, V, spectrum_below(op, EnergyWindow.below(E))


class TestSCase:
    """Test the three branches of s_E(y)."""

    def test_positive_energy(self):
        """E > 0 gives sinh(√E y)/√E."""
        assert s_case(4.0, 0.5) == pytest.approx(np.sinh(1.0) / 2.0)

    def test_zero_energy(self):
        """E = 0 gives y."""
        assert s_case(0.0, 0.7) == pytest.approx(0.7)

    def test_negative_energy(self):
        """E < 0 gives sin(√|E| y)/√|E|."""
        assert s_case(-9.0, 0.5) == pytest.approx(np.sin(1.5) / 3.0)

    def test_vectorized(self):
        """Arrays broadcast; s(0) = 0 and s'(0) = 1 on every branch."""
        E = np.array([-4.0, 0.0, 4.0])
        assert np.allclose(s_case(E, 0.0), 0.0)
        assert np.allclose(s_case(E, 1e-7) / 1e-7, 1.0)

    def test_continuous_at_zero_energy(self):
        """Tiny energies approach the linear branch."""
        assert s_case(1e-9, 0.8) == pytest.approx(0.8, rel=1e-8)

    @pytest.mark.parametrize("E", [1e-8, -1e-8])
    def test_near_zero_energy_matches_series(self, E):
        """At |E| = 1e-8 both branches agree with y + E y³/6 to 1e-12."""
        y = np.linspace(0.0, 1.0, 11)
        assert np.max(np.abs(s_case(E, y) - (y + E * y ** 3 / 6))) <= 1e-12


class TestBuildExtension:
    """Test assembly of F."""

    def test_vanishes_at_zero(self):
        """F(·, 0) = 0."""
        _, _, basis = basis_on_cube()
        ext = build_extension(basis, random_in_range(basis, seed=1), Y=1.0, ny=41)
        assert np.allclose(ext.slice_at(ext.zero_index).values, 0.0)
        assert ext.values.shape == (41, basis.grid.size)

    def test_default_y_spacing_matches_grid(self):
        """By default hy is close to the base mesh width."""
        _, _, basis = basis_on_cube()
        ext = build_extension(basis, random_in_range(basis, seed=1))
        assert ext.hy == pytest.approx(basis.grid.h, rel=0.1)
        assert len(ext.y_grid) % 2 == 1

    @pytest.mark.parametrize("ny", [3, 40])
    def test_invalid_ny(self, ny):
        """ny must be odd and at least 5."""
        _, _, basis = basis_on_cube()
        with pytest.raises(ValidationError):
            build_extension(basis, random_in_range(basis, seed=1), ny=ny)

    def test_empty_basis(self):
        """An empty window has nothing to extend."""
        _, _, basis = basis_on_cube(E=0.5)
        with pytest.raises(EmptyBasisError):
            build_extension(basis, ScalarField.zeros(basis.grid))


class TestResidual:
    """Test ΔF = VF and ∂_y F(·, 0) = ψ on the grid."""

    def test_residuals_small(self):
        """Fine y grids give small residuals; the one-sided derivative is second order."""
        op, V, basis = basis_on_cube()
        ext = build_extension(basis, random_in_range(basis, seed=2), Y=1.0, ny=401)
        result = residual(ext, V, op)
        assert result.l2_residual < 1e-3
        assert result.boundary_error <= 1e-6 + 1.1 * np.max(basis.eigenvalues) * ext.hy ** 2 / 3

    def test_second_order_in_y(self):
        """Halving hy divides the residual by about four."""
        op, V, basis = basis_on_cube()
        psi = random_in_range(basis, seed=2)
        coarse = residual(build_extension(basis, psi, Y=1.0, ny=101), V, op)
        fine = residual(build_extension(basis, psi, Y=1.0, ny=201), V, op)
        assert 3.5 < coarse.l2_residual / fine.l2_residual < 4.5

    def test_refining_base_grid_refines_y(self):
        """With the default y spacing, doubling the nodes of the cube divides the residual by about four."""
        results = []
        for n in (59, 119):
            grid = Grid(Domain(1, 3.0), n)
            V = ScalarField.zeros(grid)
            op = build_schrodinger(grid.domain, n, V)
            basis = spectrum_below(op, EnergyWindow.below(10.0))
            assert len(basis) == 3
            ext = build_extension(basis, random_in_range(basis, seed=2))
            results.append(residual(ext, V, op))
        coarse, fine = results
        assert 3.5 < coarse.l2_residual / fine.l2_residual < 4.5
        assert 3.5 < coarse.boundary_error / fine.boundary_error < 4.5

    def test_negative_energies(self):
        """A deep constant well puts every energy below zero."""
        op, V, basis = basis_on_cube(V_value=-20.0, E=-12.0)
        assert np.all(basis.eigenvalues < 0)
        ext = build_extension(basis, random_in_range(basis, seed=3), Y=1.0, ny=801)
        assert residual(ext, V, op).l2_residual < 1e-3

    def test_default_stencil(self):
        """Without an operator the Laplacian of the basis grid is used."""
        op, V, basis = basis_on_cube()
        ext = build_extension(basis, random_in_range(basis, seed=2), Y=1.0, ny=201)
        assert residual(ext, V).l2_residual == pytest.approx(residual(ext, V, op).l2_residual)


class TestExport:
    """Test CSV slices."""

    def test_slices_written(self):
        """Every node of every kept slice becomes a row."""
        _, _, basis = basis_on_cube()
        ext = build_extension(basis, random_in_range(basis, seed=1), Y=1.0, ny=11)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "F.csv")
            write_extension_csv(ext, path, every=5)
            with open(path, encoding="utf-8") as f:
                lines = f.read().splitlines()
        assert lines[0].startswith("# operator=")
        assert lines[1] == "iy,y,i0,value"
        assert len(lines) == 2 + 3 * basis.grid.size
