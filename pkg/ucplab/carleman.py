"""
Carleman weight w = ψ∘σ and empirical checks of the Carleman inequality

    ∫ α w^{1-2α} |∇f|² + α³ w^{-1-2α} f²  ≤  C₂ ∫ w^{2-2α} (L f)²

for test functions supported in B(0,1) away from the origin.
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicHermiteSpline
from scipy.special import logsumexp

from ucplab.errors import (
    DomainError,
    NonEllipticCoefficientError,
    SupportError,
    ValidationError,
)
from ucplab.grid import ScalarField
from ucplab.operators import DiscreteOperator

logger = logging.getLogger(__name__)

SERIES_CUTOFF = 1e-3
QUAD_TOLERANCE = 1e-13
BOUND_SLACK = 1e-12
TABLE_NODES = 1025
DEFAULT_RHO = 0.05
LOG_BUMP_CUTOFF = 6.0


def weight_constant(mu: float) -> float:
    """C₃ = e·μ in |x| / (C₃√θ₁) ≤ w(x) ≤ √θ₁ |x|."""
    return float(np.e * mu)


def _integrand(t, mu: float):
    """(1 - e^{-μt}) / t, with its Taylor series where μt is small."""
    t = np.asarray(t, dtype=float)
    x = mu * t
    small = np.abs(x) < SERIES_CUTOFF
    safe_t = np.where(small, 1.0, t)
    direct = -np.expm1(-mu * safe_t) / safe_t
    series = mu * (1.0 - x / 2.0 + x ** 2 / 6.0 - x ** 3 / 24.0)
    return np.where(small, series, direct)


@dataclass(frozen=True, eq=False)
class CarlemanWeight:
    """σ(x) = (Σ a_ij(0) x_i x_j)^{1/2} and ψ(s) = s·exp(-∫₀ˢ (1 - e^{-μt})/t dt).

    ``a_inv_at_origin`` holds the entries a_ij(0) of the inverse coefficient
    matrix at the origin and must be positive definite.
    """

    mu: float
    a_inv_at_origin: np.ndarray

    def __post_init__(self):
        if not self.mu > 0:
            raise ValidationError("mu must be positive", f"got {self.mu}")
        a_inv = np.array(self.a_inv_at_origin, dtype=float)
        if a_inv.ndim != 2 or a_inv.shape[0] != a_inv.shape[1]:
            raise ValidationError("a_inv_at_origin must be a square matrix")
        if not np.allclose(a_inv, a_inv.T, rtol=0.0, atol=1e-12):
            raise NonEllipticCoefficientError("a_inv_at_origin is not symmetric")
        try:
            np.linalg.cholesky(a_inv)
        except np.linalg.LinAlgError as exc:
            raise NonEllipticCoefficientError("a_inv_at_origin is not positive definite") from exc
        a_inv.setflags(write=False)
        object.__setattr__(self, "a_inv_at_origin", a_inv)

    @classmethod
    def for_operator(cls, op: DiscreteOperator, mu: float) -> "CarlemanWeight":
        if op.coefficients is None:
            return cls(mu, np.eye(op.grid.d))
        return cls(mu, op.coefficients.a_inv_at_origin)

    @property
    def d(self) -> int:
        return self.a_inv_at_origin.shape[0]

    @property
    def C3(self) -> float:
        return weight_constant(self.mu)

    @cached_property
    def s_max(self) -> float:
        """Largest σ on the closed unit ball."""
        return float(np.sqrt(np.max(np.linalg.eigvalsh(self.a_inv_at_origin))))

    def exponent(self, s: float) -> float:
        """∫₀ˢ (1 - e^{-μt})/t dt by adaptive quadrature."""
        if s == 0:
            return 0.0
        value, _ = quad(
            _integrand, 0.0, s, args=(self.mu,), epsabs=QUAD_TOLERANCE, epsrel=QUAD_TOLERANCE, limit=200
        )
        return float(value)

    @cached_property
    def psi_table(self) -> CubicHermiteSpline:
        """Hermite interpolant of ψ on [0, 1.05·s_max] with exact slopes ψ'(s) = e^{-μs}·ψ(s)/s."""
        nodes = np.linspace(0.0, 1.05 * self.s_max, TABLE_NODES)
        pieces = [
            quad(_integrand, lo, hi, args=(self.mu,), epsabs=QUAD_TOLERANCE, epsrel=QUAD_TOLERANCE)[0]
            for lo, hi in zip(nodes[:-1], nodes[1:])
        ]
        exponents = np.concatenate([[0.0], np.cumsum(pieces)])
        damping = np.exp(-exponents)
        values = nodes * damping
        slopes = np.exp(-self.mu * nodes) * damping
        return CubicHermiteSpline(nodes, values, slopes, extrapolate=False)

    def sigma(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, self.d)
        quadratic = np.einsum("ni,ij,nj->n", flat, self.a_inv_at_origin, flat)
        result = np.sqrt(np.maximum(quadratic, 0.0))
        return result.reshape(x.shape[:-1]) if x.ndim > 1 else result[0]

    def psi(self, s) -> np.ndarray:
        """ψ on an array of s ≥ 0; tabulated inside the unit ball, quadrature beyond."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        if np.any(s < 0):
            raise DomainError("psi_weight needs s >= 0", f"smallest s {float(np.min(s))}")
        table = self.psi_table
        inside = s <= table.x[-1]
        out = np.empty_like(s)
        out[inside] = table(s[inside])
        for idx in zip(*np.nonzero(~inside)):
            out[idx] = s[idx] * np.exp(-self.exponent(float(s[idx])))
        return out

    def w(self, points: np.ndarray) -> np.ndarray:
        return self.psi(self.sigma(points))


def sigma(weight: CarlemanWeight, x) -> float:
    return weight.sigma(x)


def psi_weight(weight: CarlemanWeight, s: float) -> float:
    """ψ(s) to 1e-12 absolute by direct quadrature."""
    if s < 0:
        raise DomainError("psi_weight needs s >= 0", f"got {s}")
    return float(s * np.exp(-weight.exponent(float(s))))


@dataclass
class WeightBoundsReport:
    violations: int
    margin: float
    points_checked: int


def check_weight_bounds(
    weight: CarlemanWeight, theta1: float, points: np.ndarray
) -> WeightBoundsReport:
    """Test |x| / (C₃√θ₁) ≤ w(x) ≤ √θ₁ |x| at every point of B(0,1)."""
    if not theta1 > 0:
        raise ValidationError("theta1 must be positive", f"got {theta1}")
    points = np.asarray(points, dtype=float).reshape(-1, weight.d)
    radius = np.linalg.norm(points, axis=1)
    if np.any(radius > 1 + BOUND_SLACK):
        raise ValidationError("weight bounds are checked inside B(0,1) only")
    w = weight.w(points)
    lower = radius / (weight.C3 * np.sqrt(theta1))
    upper = np.sqrt(theta1) * radius
    gap = np.minimum(w - lower, upper - w)
    violations = int(np.sum(gap < -BOUND_SLACK))
    margin = float(np.min(gap)) if gap.size else float("inf")
    if violations:
        logger.warning("%d of %d points violate the weight bounds", violations, points.shape[0])
    return WeightBoundsReport(violations, margin, points.shape[0])


@dataclass
class CarlemanFunctional:
    """Both sides of the Carleman inequality for one (f, α); terms in log space too."""

    alpha: float
    lhs_grad: float
    lhs_cube: float
    rhs: float
    ratio: float
    log_ratio: float
    anomaly: bool = False

    @property
    def lhs(self) -> float:
        return self.lhs_grad + self.lhs_cube

    @property
    def rhs_without_C2(self) -> float:
        return self.rhs


def _log_integral(log_weight: np.ndarray, density: np.ndarray, log_cell: float) -> float:
    keep = density > 0
    if not np.any(keep):
        return float("-inf")
    return float(logsumexp(log_weight[keep] + np.log(density[keep])) + log_cell)


def carleman_functionals(
    weight: CarlemanWeight,
    op: DiscreteOperator,
    f: ScalarField,
    alpha: float,
    *,
    rho_in: float = DEFAULT_RHO,
    rho_out: float = DEFAULT_RHO,
) -> CarlemanFunctional:
    """Grid quadrature of both sides; ratio = lhs / rhs is a lower bound for C₂.

    Sums are accumulated in log space, so large α cannot overflow the
    weights w^{-1-2α}.
    """
    grid = op.grid
    grid.check_same(f.grid, "test function")
    if grid.d != weight.d:
        raise ValidationError("weight and operator dimensions differ")
    if not alpha > 0:
        raise ValidationError("alpha must be positive", f"got {alpha}")

    points = grid.points
    s = weight.sigma(points)
    outside = (s < rho_in) | (np.linalg.norm(points, axis=1) > 1 - rho_out)
    offending = np.nonzero(outside & (f.values != 0))[0]
    if offending.size:
        raise SupportError(
            f"f must vanish where sigma < {rho_in} and |x| > {1 - rho_out}", offending
        )

    scale = f.sup_norm
    if scale == 0.0:
        return CarlemanFunctional(alpha, 0.0, 0.0, 0.0, 0.0, float("-inf"))
    # both sides are quadratic in f: work with f / sup|f| and add log(scale²) back
    unit = ScalarField(grid, f.values / scale)
    log_scale_sq = 2 * np.log(scale)
    values = unit.reshaped()
    gradient = np.gradient(values, grid.h) if grid.d > 1 else [np.gradient(values, grid.h)]
    grad_sq = sum(g ** 2 for g in gradient).reshape(-1)
    Lf_sq = (op.principal @ unit.values) ** 2
    f_sq = unit.values ** 2

    active = (grad_sq > 0) | (Lf_sq > 0) | (f_sq > 0)
    if not np.any(active):
        return CarlemanFunctional(alpha, 0.0, 0.0, 0.0, 0.0, float("-inf"))
    if np.any(s[active] == 0):
        raise SupportError("difference stencils of f reach the origin", np.nonzero(active & (s == 0))[0])

    log_w = np.zeros(grid.size)
    log_w[active] = np.log(weight.psi(s[active]))
    log_cell = grid.d * np.log(grid.h) + log_scale_sq
    log_grad = np.log(alpha) + _log_integral((1 - 2 * alpha) * log_w, grad_sq * active, log_cell)
    log_cube = 3 * np.log(alpha) + _log_integral((-1 - 2 * alpha) * log_w, f_sq * active, log_cell)
    log_rhs = _log_integral((2 - 2 * alpha) * log_w, Lf_sq * active, log_cell)

    log_lhs = float(np.logaddexp(log_grad, log_cube))
    if np.isneginf(log_rhs):
        logger.warning("Carleman rhs vanishes while lhs is positive (alpha=%g)", alpha)
        return CarlemanFunctional(
            alpha, float(np.exp(log_grad)), float(np.exp(log_cube)), 0.0, float("inf"), float("inf"), True
        )
    log_ratio = log_lhs - log_rhs
    with np.errstate(over="ignore"):
        return CarlemanFunctional(
            alpha,
            float(np.exp(log_grad)),
            float(np.exp(log_cube)),
            float(np.exp(log_rhs)),
            float(np.exp(log_ratio)),
            log_ratio,
        )


@dataclass
class C2Estimate:
    sup_ratio: float
    per_alpha: List[Dict[str, float]] = field(default_factory=list)

    def ratios_for(self, alpha: float) -> List[float]:
        return [row["ratio"] for row in self.per_alpha if row["alpha"] == alpha]


def estimate_C2(
    weight: CarlemanWeight,
    op: DiscreteOperator,
    family: Sequence[ScalarField],
    alpha_grid: Sequence[float],
    *,
    C1: float = 0.0,
    rho_in: float = DEFAULT_RHO,
    rho_out: float = DEFAULT_RHO,
) -> C2Estimate:
    """sup of the Carleman ratio over test functions and α > C₁."""
    if not family:
        raise ValidationError("estimate_C2 needs at least one test function")
    if not alpha_grid:
        raise ValidationError("estimate_C2 needs at least one alpha")
    if min(alpha_grid) <= C1:
        raise ValidationError(f"every alpha must exceed C1 = {C1:g}", f"got {min(alpha_grid)}")
    rows = []
    for index, f in enumerate(family):
        for alpha in alpha_grid:
            result = carleman_functionals(weight, op, f, alpha, rho_in=rho_in, rho_out=rho_out)
            rows.append(
                {
                    "alpha": float(alpha),
                    "field": index,
                    "lhs_grad": result.lhs_grad,
                    "lhs_cube": result.lhs_cube,
                    "rhs": result.rhs,
                    "ratio": result.ratio,
                }
            )
    sup_ratio = max(row["ratio"] for row in rows)
    return C2Estimate(sup_ratio, rows)


def annulus_bump(grid, inner: float, outer: float, amplitude: float = 1.0) -> ScalarField:
    """Smooth radial bump exp(-1/((r-inner)(outer-r))) supported in inner < |x| < outer.

    Scaled so the peak at the mid radius equals ``amplitude``.
    """
    if not 0 <= inner < outer:
        raise ValidationError("annulus needs 0 <= inner < outer", f"got ({inner}, {outer})")
    r = np.linalg.norm(grid.points, axis=1)
    inside = (r > inner) & (r < outer)
    values = np.zeros(grid.size)
    gap = (r[inside] - inner) * (outer - r[inside])
    peak_gap = (outer - inner) ** 2 / 4
    values[inside] = amplitude * np.exp(1.0 / peak_gap - 1.0 / gap)
    values[np.abs(values) < 1e-300 * abs(amplitude)] = 0.0
    return ScalarField(grid, values)


def log_radial_bump(
    grid,
    radius: float,
    width: float,
    *,
    cutoff: float = LOG_BUMP_CUTOFF,
    inner: float = DEFAULT_RHO,
    outer: float = 1 - DEFAULT_RHO,
    amplitude: float = 1.0,
) -> ScalarField:
    """Radial bump exp(-log(|x|/radius)² / (2 width²)), Gaussian in log |x|.

    The profile is cut to zero ``cutoff`` widths from ``radius`` in log |x|
    and outside ``inner < |x| < outer``. After conjugation with |x|^{-α} it
    stays a Gaussian of the same width in log |x|, only shifted by α width².
    """
    if not (radius > 0 and width > 0):
        raise ValidationError("log bump needs radius > 0 and width > 0", f"got ({radius}, {width})")
    if not 0 <= inner < radius < outer:
        raise ValidationError("log bump needs inner < radius < outer", f"got ({inner}, {radius}, {outer})")
    r = np.linalg.norm(grid.points, axis=1)
    lo = max(inner, radius * np.exp(-cutoff * width))
    hi = min(outer, radius * np.exp(cutoff * width))
    inside = (r > lo) & (r < hi)
    values = np.zeros(grid.size)
    values[inside] = amplitude * np.exp(-np.log(r[inside] / radius) ** 2 / (2 * width ** 2))
    return ScalarField(grid, values)


def sample_unit_ball(d: int, count: int, seed: int) -> np.ndarray:
    """Uniform points in B(0,1) ⊂ ℝ^d."""
    rng = np.random.default_rng(seed)
    directions = rng.standard_normal((count, d))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = rng.uniform(0.0, 1.0, count) ** (1.0 / d)
    return directions * radii[:, None]

