"""
Tests for the operators module.

Finite-difference Schrödinger and elliptic operators, Assumption A checks
and the pointwise differential inequality.
"""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ucplab.errors import CoverageError, NonEllipticCoefficientError, NonSymmetricCoefficientError
from ucplab.grid import (
    BoundaryCondition,
    CoefficientField,
    Domain,
    Grid,
    ScalarField,
    random_potential,
    shifted_potential,
)
from ucplab.operators import (
    EllipticityParams,
    OperatorKind,
    build_elliptic,
    build_schrodinger,
    check_assumption_A,
    check_differential_inequality,
)


def discrete_dirichlet_eigenvalues(L, n):
    h = L / (n + 1)
    k = np.arange(1, n + 1)
    return 4.0 / h ** 2 * np.sin(k * np.pi * h / (2 * L)) ** 2


class TestSchrodinger:
    """Test -Δ + V."""

    def test_dirichlet_spectrum_matches_closed_form(self):
        """The 1D Dirichlet Laplacian has eigenvalues (4/h²) sin²(kπh/2L)."""
        op = build_schrodinger(Domain(1, 1.0), 63)
        eig = np.linalg.eigvalsh(op.to_dense())
        assert np.allclose(eig, discrete_dirichlet_eigenvalues(1.0, 63), rtol=1e-10)

    def test_ground_state_approximates_pi_squared(self):
        """On L = 1 the lowest eigenvalue tends to π²."""
        op = build_schrodinger(Domain(1, 1.0), 255)
        assert np.linalg.eigvalsh(op.to_dense())[0] == pytest.approx(np.pi ** 2, rel=1e-4)

    def test_eigenvalues_converge_second_order(self):
        """On L = π the errors |λ_k - k²|, k <= 3, drop by about 4 from n = 200 to 400."""
        errors = []
        for n in (200, 400):
            eig = np.linalg.eigvalsh(build_schrodinger(Domain(1, np.pi), n).to_dense())[:3]
            errors.append(np.abs(eig - np.arange(1, 4) ** 2))
        factors = errors[0] / errors[1]
        assert np.all((factors >= 3.4) & (factors <= 4.6))

    def test_periodic_constant_is_null(self):
        """Constants lie in the kernel of the periodic Laplacian."""
        grid = Grid(Domain(2, 2.0, BoundaryCondition.PERIODIC), 10)
        op = build_schrodinger(grid.domain, grid.n)
        one = ScalarField.constant(grid, 1.0)
        assert np.allclose(op.apply(one).values, 0.0)

    def test_potential_on_diagonal(self):
        """A constant potential shifts the spectrum."""
        grid = Grid(Domain(1, 2.0), 31)
        bare = build_schrodinger(grid.domain, grid.n)
        shifted = build_schrodinger(grid.domain, grid.n, ScalarField.constant(grid, 3.0))
        assert np.allclose(
            np.linalg.eigvalsh(shifted.to_dense()), np.linalg.eigvalsh(bare.to_dense()) + 3.0
        )

    def test_shifted_potential_annihilates_eigenfunction(self):
        """With V - E the eigenfunction of H for E lies in the kernel."""
        grid = Grid(Domain(1, 2.0), 63)
        V = random_potential(grid, 1.0, seed=5)
        eig, vec = np.linalg.eigh(build_schrodinger(grid.domain, grid.n, V).to_dense())
        op = build_schrodinger(grid.domain, grid.n, shifted_potential(V, eig[0]))
        psi = ScalarField(grid, vec[:, 0])
        assert np.max(np.abs(op.apply(psi).values)) < 1e-8

    def test_label_names_parameters(self):
        """The label identifies kind, dimension, size and boundary."""
        op = build_schrodinger(Domain(2, 3.0, "periodic"), 12)
        assert op.label == "schrodinger-d2-L3-n12-periodic"
        assert op.kind is OperatorKind.SCHRODINGER

    def test_gershgorin_bounds(self):
        """Gershgorin bounds enclose the spectrum."""
        grid = Grid(Domain(2, 2.0), 9)
        op = build_schrodinger(grid.domain, grid.n, random_potential(grid, 2.0, seed=4))
        eig = np.linalg.eigvalsh(op.to_dense())
        assert op.lower_bound() <= eig[0] + 1e-9
        assert eig[-1] <= op.norm_estimate() + 1e-9

    @pytest.mark.property
    @settings(max_examples=25, deadline=None)
    @given(
        d=st.integers(1, 2),
        n=st.integers(3, 9),
        periodic=st.booleans(),
        seed=st.integers(0, 2 ** 16),
    )
    def test_always_symmetric(self, d, n, periodic, seed):
        """Assembled operators are symmetric for any potential."""
        bc = BoundaryCondition.PERIODIC if periodic else BoundaryCondition.DIRICHLET
        grid = Grid(Domain(d, 2.0, bc), n)
        op = build_schrodinger(grid.domain, n, random_potential(grid, 5.0, seed))
        assert op.is_symmetric()


class TestElliptic:
    """Test L + V with variable coefficients."""

    def test_identity_coefficients_reproduce_laplacian(self):
        """Identity coefficients give exactly the Schrödinger matrix."""
        grid = Grid(Domain(2, 2.0), 11)
        lap = build_schrodinger(grid.domain, grid.n)
        ell = build_elliptic(grid.domain, grid.n, CoefficientField.identity(grid))
        assert abs(lap.matrix - ell.matrix).max() < 1e-12
        assert ell.kind is OperatorKind.ELLIPTIC

    def test_variable_coefficients_symmetric(self):
        """Anisotropic smooth coefficients keep the matrix symmetric."""
        grid = Grid(Domain(2, 2.0, "periodic"), 12)

        def a(points):
            out = np.zeros((points.shape[0], 2, 2))
            out[:, 0, 0] = 2.0 + np.sin(np.pi * points[:, 1])
            out[:, 1, 1] = 1.5
            out[:, 0, 1] = out[:, 1, 0] = 0.3
            return out

        op = build_elliptic(grid.domain, grid.n, CoefficientField.from_function(grid, a))
        assert op.is_symmetric()

    @pytest.mark.parametrize("d, L, n", [(1, 1.0, 3), (2, 2.0, 9)])
    def test_scalar_coefficient_scales_laplacian(self, d, L, n):
        """a ≡ 2 gives twice the Schrödinger matrix and twice its eigenvalues."""
        grid = Grid(Domain(d, L), n)
        lap = build_schrodinger(grid.domain, grid.n)
        ell = build_elliptic(grid.domain, grid.n, CoefficientField.constant(grid, 2.0 * np.eye(d)))
        assert abs(ell.matrix - 2.0 * lap.matrix).max() < 1e-10
        assert np.allclose(np.linalg.eigvalsh(ell.to_dense()), 2.0 * np.linalg.eigvalsh(lap.to_dense()))

    @pytest.mark.parametrize(
        "d, matrix",
        [
            (1, [[2.0]]),
            (2, [[1.0, 0.1], [0.1, 1.0]]),
            (2, [[2.0, -0.3], [-0.3, 1.0]]),
        ],
    )
    def test_constant_coefficients_positive(self, d, matrix):
        """Constant elliptic coefficients give a symmetric positive definite Dirichlet matrix."""
        grid = Grid(Domain(d, 2.0), 10)
        op = build_elliptic(grid.domain, grid.n, CoefficientField.constant(grid, matrix))
        assert op.is_symmetric()
        assert np.min(np.linalg.eigvalsh(op.to_dense())) > 0.0

    def test_nonsymmetric_coefficients_rejected(self):
        """a^{12} != a^{21} raises NonSymmetricCoefficientError."""
        grid = Grid(Domain(2, 2.0), 5)
        with pytest.raises(NonSymmetricCoefficientError):
            build_elliptic(grid.domain, grid.n, CoefficientField.constant(grid, [[1.0, 0.5], [0.0, 1.0]]))

    def test_indefinite_coefficients_rejected(self):
        """A nonpositive quadratic form raises NonEllipticCoefficientError."""
        grid = Grid(Domain(2, 2.0), 5)
        with pytest.raises(NonEllipticCoefficientError):
            build_elliptic(grid.domain, grid.n, CoefficientField.constant(grid, [[1.0, 0.0], [0.0, -1.0]]))


class TestAssumptionA:
    """Test the ellipticity and Lipschitz check."""

    @pytest.fixture
    def tilted(self):
        grid = Grid(Domain(1, 2.0), 199)
        return CoefficientField.scalar(grid, lambda p: 1.0 + 0.1 * p[:, 0])

    def test_identity_satisfies_assumption(self):
        """Identity coefficients satisfy A(r, 1, 0)."""
        grid = Grid(Domain(2, 2.0), 15)
        report = check_assumption_A(CoefficientField.identity(grid), EllipticityParams(0.9, 1.0, 0.0))
        assert report.holds
        assert report.worst_lipschitz == 0.0

    def test_lipschitz_constant_detected(self, tilted):
        """A slope of 0.1 violates θ₂ = 0.05 and satisfies θ₂ = 0.2."""
        assert not check_assumption_A(tilted, EllipticityParams(0.9, 1.2, 0.05)).holds
        report = check_assumption_A(tilted, EllipticityParams(0.9, 1.2, 0.2))
        assert report.holds
        assert report.worst_lipschitz == pytest.approx(0.1, rel=1e-6)

    def test_ellipticity_bound(self, tilted):
        """θ₁ = 1.05 is too tight for coefficients reaching 1.09."""
        assert not check_assumption_A(tilted, EllipticityParams(0.9, 1.05, 0.2)).holds

    @pytest.mark.parametrize(
        "theta1, theta2, holds",
        [(3.0, 1.0, True), (2.0, 1.0, False), (3.0, 0.5, False)],
    )
    def test_oscillating_coefficient(self, theta1, theta2, holds):
        """a = 2 + sin x on B(0, 1.5) ranges over (1, 3) with slope at most 1."""
        grid = Grid(Domain(1, 4.0), 199)
        a = CoefficientField.scalar(grid, lambda p: 2.0 + np.sin(p[:, 0]))
        report = check_assumption_A(a, EllipticityParams(1.5, theta1, theta2))
        assert report.holds is holds
        assert report.worst_lipschitz < 1.0

    def test_ball_outside_grid(self, tilted):
        """r beyond the cube raises CoverageError."""
        with pytest.raises(CoverageError):
            check_assumption_A(tilted, EllipticityParams(1.5, 2.0, 1.0))


class TestDifferentialInequality:
    """Test |Δψ| <= |Vψ| at interior nodes."""

    def test_eigenfunction_with_matching_potential(self):
        """An eigenfunction with V ≡ λ satisfies the inequality with equality."""
        grid = Grid(Domain(1, 1.0), 63)
        op = build_schrodinger(grid.domain, grid.n)
        eig, vec = np.linalg.eigh(op.to_dense())
        psi = ScalarField(grid, vec[:, 0])
        report = check_differential_inequality(op, psi, ScalarField.constant(grid, eig[0]))
        assert report.holds
        assert report.nodes_checked == 61

    def test_zero_potential_fails_for_curved_field(self):
        """A non-harmonic field violates |Δψ| <= 0."""
        grid = Grid(Domain(1, 1.0), 63)
        op = build_schrodinger(grid.domain, grid.n)
        psi = ScalarField.from_function(grid, lambda p: np.cos(np.pi * p[:, 0]))
        report = check_differential_inequality(op, psi, ScalarField.zeros(grid))
        assert not report.holds
        assert report.max_violation > report.tolerance

    def test_empty_mask(self):
        """No checked nodes means the inequality holds vacuously."""
        grid = Grid(Domain(1, 1.0), 15)
        op = build_schrodinger(grid.domain, grid.n)
        psi = ScalarField.constant(grid, 1.0)
        report = check_differential_inequality(op, psi, psi, mask=np.zeros(grid.size, dtype=bool))
        assert report.holds and report.nodes_checked == 0
