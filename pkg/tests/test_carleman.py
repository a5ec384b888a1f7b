"""
Tests for the carleman module.

The weight ψ∘σ, its two-sided bounds, and the grid functionals of the
Carleman inequality.
"""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import exp1

from ucplab.carleman import (
    CarlemanWeight,
    annulus_bump,
    carleman_functionals,
    check_weight_bounds,
    estimate_C2,
    log_radial_bump,
    psi_weight,
    sample_unit_ball,
    sigma,
    weight_constant,
)
from ucplab.errors import DomainError, NonEllipticCoefficientError, SupportError, ValidationError
from ucplab.grid import Domain, Grid, ScalarField
from ucplab.operators import build_schrodinger


def closed_form_psi(s, mu):
    """s·exp(-Ein(μs)) with Ein(z) = E₁(z) + γ + ln z."""
    z = mu * s
    return s * np.exp(-(exp1(z) + np.euler_gamma + np.log(z)))


@pytest.fixture
def identity_weight():
    return CarlemanWeight(1.0, np.eye(2))


@pytest.fixture
def unit_ball_setup():
    grid = Grid(Domain(2, 2.0), 63)
    op = build_schrodinger(grid.domain, grid.n)
    return grid, op, CarlemanWeight.for_operator(op, 1.0)


class TestWeight:
    """Test σ, ψ and their constants."""

    def test_weight_constant(self):
        """C₃ = e·μ."""
        assert weight_constant(2.0) == pytest.approx(2 * np.e)

    def test_sigma_is_euclidean_for_identity(self, identity_weight):
        """With a(0) = I, σ(x) = |x|."""
        assert sigma(identity_weight, np.array([3.0, 4.0])) == pytest.approx(5.0)

    def test_sigma_anisotropic(self):
        """σ uses the inverse coefficients at the origin."""
        weight = CarlemanWeight(1.0, np.diag([4.0, 1.0]))
        assert weight.sigma(np.array([[1.0, 0.0], [0.0, 1.0]])) == pytest.approx([2.0, 1.0])

    @pytest.mark.parametrize("s", [1e-4, 0.01, 0.3, 1.0])
    @pytest.mark.parametrize("mu", [0.5, 1.0, 3.0])
    def test_psi_matches_exponential_integral(self, s, mu):
        """Quadrature reproduces s·exp(-Ein(μs))."""
        weight = CarlemanWeight(mu, np.eye(1))
        assert psi_weight(weight, s) == pytest.approx(closed_form_psi(s, mu), rel=1e-10, abs=1e-12)

    def test_table_matches_quadrature(self, identity_weight):
        """The Hermite table agrees with direct quadrature on [0, 1]."""
        s = np.linspace(0.0, 1.0, 37)
        direct = np.array([psi_weight(identity_weight, v) for v in s])
        assert np.allclose(identity_weight.psi(s), direct, atol=1e-10)

    def test_psi_beyond_table(self, identity_weight):
        """Arguments past the table fall back to quadrature."""
        assert identity_weight.psi(np.array([2.5]))[0] == pytest.approx(psi_weight(identity_weight, 2.5))

    def test_psi_slope_at_origin(self, identity_weight):
        """ψ(s) ~ s near zero."""
        assert psi_weight(identity_weight, 1e-8) / 1e-8 == pytest.approx(1.0, rel=1e-6)

    def test_negative_argument(self, identity_weight):
        """ψ is defined for s >= 0 only."""
        with pytest.raises(DomainError):
            psi_weight(identity_weight, -0.1)
        with pytest.raises(DomainError):
            identity_weight.psi(np.array([0.1, -0.1]))

    def test_indefinite_coefficients(self):
        """a_ij(0) must be positive definite."""
        with pytest.raises(NonEllipticCoefficientError):
            CarlemanWeight(1.0, np.diag([1.0, -1.0]))

    def test_mu_positive(self):
        """μ must be positive."""
        with pytest.raises(ValidationError):
            CarlemanWeight(0.0, np.eye(1))

    @pytest.mark.property
    @settings(max_examples=30, deadline=None)
    @given(a=st.floats(0.05, 1.0), b=st.floats(0.05, 1.0), mu=st.floats(0.1, 5.0))
    def test_psi_increasing(self, a, b, mu):
        """ψ is increasing on [0, ∞)."""
        weight = CarlemanWeight(mu, np.eye(1))
        lo, hi = sorted((a, b))
        assert psi_weight(weight, lo) <= psi_weight(weight, hi) + 1e-15


class TestWeightBounds:
    """Test |x| / (C₃√θ₁) <= w(x) <= √θ₁ |x|."""

    def test_bounds_hold_on_unit_ball(self, identity_weight):
        """No sampled point violates the bounds for a(0) = I, θ₁ = 1."""
        report = check_weight_bounds(identity_weight, 1.0, sample_unit_ball(2, 10_000, seed=0))
        assert report.violations == 0
        assert report.margin >= -1e-12
        assert report.points_checked == 10_000

    def test_points_outside_ball(self, identity_weight):
        """Points beyond B(0, 1) are rejected."""
        with pytest.raises(ValidationError):
            check_weight_bounds(identity_weight, 1.0, np.array([[2.0, 0.0]]))

    def test_samples_inside_ball(self):
        """sample_unit_ball stays inside B(0, 1)."""
        points = sample_unit_ball(3, 500, seed=4)
        assert np.all(np.linalg.norm(points, axis=1) <= 1.0)


class TestFunctionals:
    """Test both sides of the Carleman inequality."""

    def test_annulus_bump_support(self, unit_ball_setup):
        """Bumps vanish outside their annulus."""
        grid, _, _ = unit_ball_setup
        f = annulus_bump(grid, 0.1, 0.5)
        r = np.linalg.norm(grid.points, axis=1)
        assert np.all(f.values[(r <= 0.1) | (r >= 0.5)] == 0.0)
        assert f.sup_norm > 0

    def test_annulus_bump_peaks_at_amplitude(self, unit_ball_setup):
        """Bumps are scaled to their amplitude, even for thin annuli."""
        grid, _, _ = unit_ball_setup
        r = np.linalg.norm(grid.points, axis=1)
        f = annulus_bump(grid, 0.35, 0.45, amplitude=2.0)
        assert 0.5 < f.sup_norm <= 2.0
        assert f.values[np.argmin(np.abs(r - 0.4))] == pytest.approx(2.0, rel=0.1)

    def test_log_radial_bump_support(self, unit_ball_setup):
        """The log-Gaussian bump peaks at its radius and is cut to its annulus."""
        grid, _, _ = unit_ball_setup
        f = log_radial_bump(grid, 0.4, 0.15)
        r = np.linalg.norm(grid.points, axis=1)
        assert np.all(f.values[(r <= 0.05) | (r >= 0.95)] == 0.0)
        assert np.all(f.values[r <= 0.4 * np.exp(-0.9)] == 0.0)
        assert f.sup_norm <= 1.0
        assert f.values[np.argmin(np.abs(r - 0.4))] == pytest.approx(1.0, rel=0.05)

    def test_log_radial_bump_parameters(self, unit_ball_setup):
        """Radius must lie inside the annulus and the width must be positive."""
        grid, _, _ = unit_ball_setup
        with pytest.raises(ValidationError):
            log_radial_bump(grid, 0.4, 0.0)
        with pytest.raises(ValidationError):
            log_radial_bump(grid, 0.97, 0.1)

    def test_ratio_positive_and_finite(self, unit_ball_setup):
        """A bump inside the annulus gives a finite positive ratio."""
        grid, op, weight = unit_ball_setup
        result = carleman_functionals(weight, op, annulus_bump(grid, 0.2, 0.6), alpha=5.0)
        assert 0 < result.ratio < np.inf
        assert not result.anomaly
        assert result.lhs == pytest.approx(result.lhs_grad + result.lhs_cube)

    @pytest.mark.parametrize("factor", [1e-160, 1e-30, 1e40])
    def test_ratio_invariant_under_scaling(self, unit_ball_setup, factor):
        """Scaling f by any factor leaves the ratio unchanged."""
        grid, op, weight = unit_ball_setup
        f = annulus_bump(grid, 0.3, 0.7)
        reference = carleman_functionals(weight, op, f, alpha=4.0)
        scaled = carleman_functionals(weight, op, f.scaled(factor), alpha=4.0)
        assert scaled.ratio == pytest.approx(reference.ratio, rel=1e-10)
        assert scaled.log_ratio == pytest.approx(reference.log_ratio, rel=1e-10)

    def test_thin_annulus_ratio_positive(self, unit_ball_setup):
        """A width-0.1 annulus still gives a positive ratio."""
        grid, op, weight = unit_ball_setup
        result = carleman_functionals(weight, op, annulus_bump(grid, 0.35, 0.45), alpha=4.0)
        assert 0 < result.ratio < np.inf

    def test_large_alpha_stays_finite(self, unit_ball_setup):
        """Log-space sums keep α = 50 from overflowing."""
        grid, op, weight = unit_ball_setup
        result = carleman_functionals(weight, op, annulus_bump(grid, 0.2, 0.6), alpha=50.0)
        assert np.isfinite(result.log_ratio)

    def test_support_near_boundary(self, unit_ball_setup):
        """f reaching |x| > 1 - ρ raises SupportError."""
        grid, op, weight = unit_ball_setup
        with pytest.raises(SupportError):
            carleman_functionals(weight, op, annulus_bump(grid, 0.5, 0.99), alpha=3.0)

    def test_support_near_origin(self, unit_ball_setup):
        """f reaching σ < ρ raises SupportError."""
        grid, op, weight = unit_ball_setup
        with pytest.raises(SupportError):
            carleman_functionals(weight, op, annulus_bump(grid, 0.0, 0.4), alpha=3.0)

    def test_zero_function(self, unit_ball_setup):
        """f ≡ 0 gives zero on both sides."""
        grid, op, weight = unit_ball_setup
        result = carleman_functionals(weight, op, ScalarField.zeros(grid), alpha=3.0)
        assert result.lhs == 0.0 and result.rhs == 0.0

    def test_estimate_takes_supremum(self, unit_ball_setup):
        """estimate_C2 reports the largest ratio over fields and α."""
        grid, op, weight = unit_ball_setup
        family = [annulus_bump(grid, r - 0.2, r + 0.2) for r in (0.3, 0.4, 0.5)]
        estimate = estimate_C2(weight, op, family, [3.0, 6.0, 12.0])
        assert len(estimate.per_alpha) == 9
        assert estimate.sup_ratio == max(row["ratio"] for row in estimate.per_alpha)
        assert len(estimate.ratios_for(6.0)) == 3

    def test_alpha_must_exceed_C1(self, unit_ball_setup):
        """Every α must exceed C₁."""
        grid, op, weight = unit_ball_setup
        with pytest.raises(ValidationError):
            estimate_C2(weight, op, [annulus_bump(grid, 0.2, 0.6)], [1.0, 5.0], C1=2.0)

    @pytest.mark.slow
    def test_ratio_converges_under_refinement(self):
        """Halving h changes the ratio by less than one percent."""
        ratios = []
        for n in (255, 511):
            grid = Grid(Domain(1, 2.0), n)
            op = build_schrodinger(grid.domain, grid.n)
            weight = CarlemanWeight.for_operator(op, 1.0)
            ratios.append(carleman_functionals(weight, op, annulus_bump(grid, 0.1, 0.5), alpha=4.0).ratio)
        assert ratios[1] == pytest.approx(ratios[0], rel=1e-2)

    @pytest.mark.slow
    def test_ratio_flat_in_alpha(self):
        """Log-radial bumps at 0.3, 0.4, 0.5 keep max/min of the ratio over α >= 8 within 2."""
        grid = Grid(Domain(2, 2.0), 127)
        op = build_schrodinger(grid.domain, grid.n)
        weight = CarlemanWeight.for_operator(op, 1.0)
        family = [log_radial_bump(grid, radius, 0.15) for radius in (0.3, 0.4, 0.5)]
        estimate = estimate_C2(weight, op, family, [float(a) for a in range(3, 21)])
        assert np.isfinite(estimate.sup_ratio) and estimate.sup_ratio > 0
        for index in range(len(family)):
            ratios = [
                row["ratio"] for row in estimate.per_alpha if row["field"] == index and row["alpha"] >= 8
            ]
            assert len(ratios) == 13
            assert max(ratios) / min(ratios) <= 2.0
