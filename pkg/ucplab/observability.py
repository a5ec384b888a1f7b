"""
Observability ratios, uncertainty constants and the explicit bound formulas.

The constants N = N(d) and M_d of the scale-free estimates are only known to
exist; they are inputs here (default 1) and can be compared with measured
constants through ``fit_exponent`` and ``smallest_consistent_exponent``.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg
from scipy import stats

from ucplab.errors import (
    CoverageError,
    DomainError,
    EmptyBasisError,
    UndefinedRatioError,
    ValidationError,
)
from ucplab.geometry import (
    BallArrangement,
    HypothesisReport,
    IndicatorField,
    QUCGeometry,
    QUCVariant,
    check_quc_hypotheses,
    covers,
    indicator,
    integrate,
    region_indicator,
)
from ucplab.grid import ScalarField
from ucplab.operators import (
    DiscreteOperator,
    EllipticityParams,
    InequalityReport,
    build_schrodinger,
    check_differential_inequality,
)
from ucplab.spectral import EnergyWindow, SpectralBasis, random_in_range, spectrum_below

logger = logging.getLogger(__name__)

COMPARISON_TOLERANCE = 1e-10
MIN_FIT_SAMPLES = 4

Weight = Union[BallArrangement, IndicatorField]


@dataclass(frozen=True)
class BoundParams:
    """Constants of the bound formulas; N and M_d are not explicit in the theory."""

    K: float = 0.0
    E: float = 0.0
    N: float = 1.0
    M_d: float = 1.0
    a: Optional[float] = None
    b: Optional[float] = None
    beta: Optional[float] = None
    R: Optional[float] = None
    D0: Optional[float] = None

    def __post_init__(self):
        if not self.K >= 0:
            raise ValidationError("K must be nonnegative", f"got {self.K}")
        if not self.N > 0:
            raise ValidationError("N must be positive", f"got {self.N}")
        if not self.M_d > 0:
            raise ValidationError("M_d must be positive", f"got {self.M_d}")
        if self.a is not None and self.b is not None and self.a > self.b:
            raise ValidationError("interval needs a <= b", f"got [{self.a}, {self.b}]")


def _as_weight(weight: Weight, psi_grid) -> IndicatorField:
    if isinstance(weight, IndicatorField):
        return weight
    return indicator(weight, psi_grid)


def ratio(psi: ScalarField, weight: Weight) -> float:
    """∫_{S_L} ψ² / ∫_{Λ_L} ψ², in [0, 1]."""
    total = integrate(psi)
    if total == 0.0:
        raise UndefinedRatioError("observability ratio of the zero field is undefined")
    return integrate(psi, _as_weight(weight, psi.grid)) / total


def projected_form(basis: SpectralBasis, weight: Weight) -> np.ndarray:
    """M_kl = ⟨ψ_k, W ψ_l⟩, the compression χ W χ in the eigenbasis."""
    w = _as_weight(weight, basis.grid)
    basis.grid.check_same(w.grid, "indicator")
    vectors = basis.vectors
    form = vectors.T @ (vectors * (w.weights * basis.grid.cell_volume)[:, None])
    return 0.5 * (form + form.T)


def uncertainty_constant(basis: SpectralBasis, weight: Weight) -> float:
    """Best C in χ W χ ≥ C χ on the range of the basis (λ_min of the projected form)."""
    if basis.is_empty:
        raise EmptyBasisError(
            f"window {basis.window} holds no spectrum of {basis.operator_id}; "
            "the uncertainty relation is vacuous"
        )
    form = projected_form(basis, weight)
    lowest = scipy.linalg.eigvalsh(form, subset_by_index=[0, 0])[0]
    return float(np.clip(lowest, 0.0, 1.0))


def sfuc_bound(delta: float, params: BoundParams) -> float:
    """δ^{N(1 + K^{2/3} + √E)}."""
    if not 0.0 < delta < 0.5:
        raise ValidationError("delta must be in (0, 1/2)", f"got {delta}")
    if params.E < 0:
        raise DomainError("E must be nonnegative", f"got {params.E}")
    exponent = params.N * (1.0 + params.K ** (2.0 / 3.0) + np.sqrt(params.E))
    return float(delta ** exponent)


def klein_gamma(delta: float, params: BoundParams) -> Tuple[float, float]:
    """(γ, γ²) with γ = ½ δ^{M_d(1 + (2K + E)^{2/3})}."""
    if not 0.0 < delta <= 0.5:
        raise ValidationError("delta must be in (0, 1/2]", f"got {delta}")
    # real cube root keeps 2K + E < 0 admissible
    growth = float(np.cbrt(2.0 * params.K + params.E)) ** 2
    gamma = 0.5 * delta ** (params.M_d * (1.0 + growth))
    return float(gamma), float(gamma * gamma)


def klein_applicable(interval_length: float, L: float, d: int, gamma: float) -> bool:
    """|I| ≤ 2γ and L ≥ 72√d."""
    return bool(interval_length <= 2.0 * gamma and L >= 72.0 * np.sqrt(d))


@dataclass
class ChainReport:
    C_interval: Optional[float]
    C_halfline: Optional[float]
    holds: Optional[bool]
    skipped: bool = False
    notice: str = ""


def compare_windows(
    op: DiscreteOperator,
    weight: Weight,
    inner: EnergyWindow,
    outer: EnergyWindow,
) -> ChainReport:
    """Check C(inner) ≥ C(outer) - 1e-10 for nested windows."""
    w = _as_weight(weight, op.grid)
    inner_basis = spectrum_below(op, inner)
    outer_basis = spectrum_below(op, outer)
    if inner_basis.is_empty or outer_basis.is_empty:
        empty = inner if inner_basis.is_empty else outer
        notice = f"window {empty} holds no spectrum of {op.label}; comparison skipped"
        logger.warning(notice)
        return ChainReport(None, None, None, skipped=True, notice=notice)
    c_inner = uncertainty_constant(inner_basis, w)
    c_outer = uncertainty_constant(outer_basis, w)
    return ChainReport(c_inner, c_outer, c_inner >= c_outer - COMPARISON_TOLERANCE)


def chain_check(op: DiscreteOperator, weight: Weight, a: float, b: float) -> ChainReport:
    """C̃_{[a,b]} ≥ C_{(-∞,b]}: restricting the window never loses observability."""
    return compare_windows(op, weight, EnergyWindow.interval(a, b), EnergyWindow.below(b))


@dataclass
class FitResult:
    slope: float
    intercept: float
    r2: float
    used: int
    rejected: List[Tuple[float, float]] = field(default_factory=list)


def fit_exponent(samples: Sequence[Tuple[float, float]]) -> FitResult:
    """Least-squares slope of log(constant) against log(δ)."""
    used, rejected = [], []
    for delta, constant in samples:
        if delta > 0 and constant > 0 and np.isfinite(constant):
            used.append((float(delta), float(constant)))
        else:
            rejected.append((delta, constant))
    if rejected:
        logger.warning("fit_exponent rejected %d nonpositive samples: %s", len(rejected), rejected)
    if len(used) < MIN_FIT_SAMPLES:
        raise ValidationError(
            f"fit_exponent needs at least {MIN_FIT_SAMPLES} positive samples", f"got {len(used)}"
        )
    x = np.log([d for d, _ in used])
    if np.ptp(x) == 0:
        raise ValidationError("fit_exponent needs at least two distinct delta values")
    y = np.log([c for _, c in used])
    fit = stats.linregress(x, y)
    return FitResult(float(fit.slope), float(fit.intercept), float(fit.rvalue ** 2), len(used), rejected)


def smallest_consistent_exponent(
    samples: Sequence[Tuple[float, float]], K: float, E: float
) -> float:
    """Least N with δ^{N(1 + K^{2/3} + √E)} ≤ constant for every (δ, constant)."""
    if K < 0 or E < 0:
        raise DomainError("K and E must be nonnegative", f"got K={K}, E={E}")
    scale = 1.0 + K ** (2.0 / 3.0) + np.sqrt(E)
    needed = 0.0
    for delta, constant in samples:
        if not 0.0 < delta < 1.0:
            raise ValidationError("delta must be in (0, 1)", f"got {delta}")
        if not constant > 0:
            raise ValidationError("measured constants must be positive", f"got {constant}")
        needed = max(needed, np.log(constant) / (scale * np.log(delta)))
    return float(needed)


@dataclass
class ObservabilityReport:
    ratio: float
    lambda_min: float
    bound_sfuc: float
    bound_klein: float
    window: EnergyWindow
    arrangement: str
    klein_regime: bool
    notes: List[str] = field(default_factory=list)

    def as_row(self) -> Dict[str, object]:
        return {
            "ratio": self.ratio,
            "lambda_min": self.lambda_min,
            "bound_sfuc": self.bound_sfuc,
            "bound_klein": self.bound_klein,
            "window": str(self.window),
            "arrangement": self.arrangement,
        }


def observe(
    basis: SpectralBasis,
    arr: BallArrangement,
    params: BoundParams,
    *,
    seed: Union[int, np.random.SeedSequence] = 0,
    subsamples: int = 8,
) -> ObservabilityReport:
    """Ratio of a random span element, λ_min and both bound formulas."""
    weight = indicator(arr, basis.grid, subsamples)
    lambda_min = uncertainty_constant(basis, weight)
    observed = ratio(random_in_range(basis, seed), weight)
    notes = []
    try:
        bound_sfuc = sfuc_bound(arr.delta, params)
    except DomainError as exc:
        bound_sfuc = float("nan")
        notes.append(str(exc))
    gamma, bound_klein = klein_gamma(arr.delta, params)
    width = 0.0 if basis.window.is_half_line else basis.window.upper - basis.window.lower
    regime = (not basis.window.is_half_line) and klein_applicable(
        width, arr.domain.L, arr.domain.d, gamma
    )
    if not regime:
        notes.append("Klein bound outside its regime (needs |I| <= 2 gamma and L >= 72 sqrt(d))")
    return ObservabilityReport(
        observed, lambda_min, bound_sfuc, bound_klein, basis.window, arr.summary(), regime, notes
    )


@dataclass
class QUCReport:
    ratio_delta_theta: float
    beta_observed: float
    hypotheses: HypothesisReport
    inequality: InequalityReport


def empirical_quc(
    psi: ScalarField,
    geo: QUCGeometry,
    V: ScalarField,
    *,
    beta: Optional[float] = None,
    op: Optional[DiscreteOperator] = None,
    variant: Union[QUCVariant, str] = QUCVariant.SCHRODINGER,
    params: Optional[EllipticityParams] = None,
    mu: float = 1.0,
    subsamples: int = 8,
) -> QUCReport:
    """Measure ∫_{B(x,δ)} ψ² / ∫_Θ ψ² and the observed β = ∫_G ψ² / ∫_Θ ψ².

    The geometric clauses come from ``check_quc_hypotheses``. The differential
    inequality on G is always added to the same report, against ``op`` or, when
    none is given, the Schrödinger operator on the grid of ψ; with ``beta``
    the β clause is added as well.
    """
    grid = psi.grid
    grid.check_same(V.grid, "potential")
    if not covers(grid, geo.G):
        raise CoverageError("the grid does not cover G")
    theta_mass = integrate(psi, region_indicator(grid, geo.theta, subsamples))
    if theta_mass == 0.0:
        raise UndefinedRatioError("∫_Θ ψ² vanishes")
    ball_mass = integrate(psi, region_indicator(grid, geo.observation_ball, subsamples))
    g_mass = integrate(psi, region_indicator(grid, geo.G, subsamples))
    beta_observed = g_mass / theta_mass

    if op is None:
        op = build_schrodinger(grid.domain, grid.n, V)
    hypotheses = check_quc_hypotheses(geo, variant, params, mu, op.coefficients)
    inequality = check_differential_inequality(op, psi, V, mask=geo.G.contains_points(grid.points))
    hypotheses.clauses["|L psi| <= |V psi| on G"] = inequality.holds
    if beta is not None:
        hypotheses.clauses["int_G psi^2 <= beta int_Theta psi^2"] = (
            beta_observed <= beta * (1 + COMPARISON_TOLERANCE)
        )
    hypotheses.failed_clauses = [name for name, ok in hypotheses.clauses.items() if not ok]
    hypotheses.holds = not hypotheses.failed_clauses
    return QUCReport(ball_mass / theta_mass, beta_observed, hypotheses, inequality)
