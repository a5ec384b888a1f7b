"""
Ball arrangements S_L, their indicators W_L, region descriptors and the
geometric hypotheses of the quantitative unique continuation estimates.
"""

import csv
import enum
import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import gamma

from ucplab.errors import (
    CoverageError,
    GridMismatchError,
    InfeasibleArrangementError,
    ValidationError,
)
from ucplab.grid import CoefficientField, Domain, Grid, ScalarField
from ucplab.operators import EllipticityParams, check_assumption_A

logger = logging.getLogger(__name__)

CONTAINMENT_SLACK = 1e-12
DEFAULT_SUBSAMPLES = 8
# sub-points processed per chunk in indicator quadrature
CHUNK_POINTS = 1_000_000


def _check_delta(delta: float) -> float:
    delta = float(delta)
    if not 0.0 < delta < 0.5:
        raise ValidationError("delta must be in (0, 1/2)", f"got {delta}")
    return delta


class ArrangementMode(str, enum.Enum):
    PERIODIC = "periodic"
    JITTER = "jitter"
    EXPLICIT = "explicit"


@dataclass(frozen=True, eq=False)
class BallArrangement:
    """One ball B(x_j, δ) per unit cell Λ_1 + j of the cube.

    Construction re-checks ``‖x_j - j‖_∞ ≤ 1/2 - δ`` for every center.
    """

    domain: Domain
    delta: float
    centers: Dict[Tuple[int, ...], np.ndarray]
    mode: ArrangementMode = ArrangementMode.EXPLICIT

    def __post_init__(self):
        delta = _check_delta(self.delta)
        object.__setattr__(self, "delta", delta)
        expected = set(self.domain.lattice_indices())
        if set(self.centers) != expected:
            missing = sorted(expected - set(self.centers))
            extra = sorted(set(self.centers) - expected)
            raise ValidationError(
                "an arrangement needs exactly one center per unit cell",
                f"missing {missing[:3]}, unexpected {extra[:3]}",
            )
        frozen = {}
        for j in sorted(self.centers):
            x = np.array(self.centers[j], dtype=float).reshape(self.domain.d)
            if np.max(np.abs(x - np.array(j))) > 0.5 - delta + CONTAINMENT_SLACK:
                raise InfeasibleArrangementError(j, x, delta)
            x.setflags(write=False)
            frozen[tuple(j)] = x
        object.__setattr__(self, "centers", frozen)

    def __len__(self) -> int:
        return len(self.centers)

    @cached_property
    def center_array(self) -> np.ndarray:
        """Centers indexed by j + m, shape (2m+1,)*d + (d,)."""
        m = max(self.domain.lattice_extent(), 0)
        d = self.domain.d
        table = np.zeros((2 * m + 1,) * d + (d,))
        for j, x in self.centers.items():
            table[tuple(np.array(j) + m)] = x
        table.setflags(write=False)
        return table

    def offsets(self) -> np.ndarray:
        """x_j - j for every cell, in lexicographic j order."""
        return np.array([self.centers[j] - np.array(j) for j in sorted(self.centers)])

    def with_offsets(self, offsets: np.ndarray) -> "BallArrangement":
        keys = sorted(self.centers)
        centers = {j: np.array(j, dtype=float) + np.asarray(o) for j, o in zip(keys, offsets)}
        return BallArrangement(self.domain, self.delta, centers, ArrangementMode.EXPLICIT)

    @property
    def measure(self) -> float:
        """|S_L| = number of balls times the volume of a δ-ball."""
        return len(self) * ball_volume(self.domain.d, self.delta)

    def summary(self) -> str:
        return f"{self.mode.value} delta={self.delta:g} balls={len(self)}"


def ball_volume(d: int, radius: float) -> float:
    return float(np.pi ** (d / 2) / gamma(d / 2 + 1) * radius ** d)


def make_arrangement(
    domain: Domain,
    delta: float,
    mode: Union[ArrangementMode, str] = ArrangementMode.PERIODIC,
    *,
    seed: int = 0,
    amplitude: float = 0.0,
    centers: Optional[Dict[Tuple[int, ...], Sequence[float]]] = None,
) -> BallArrangement:
    """Build S_L in periodic, jittered or explicit mode."""
    delta = _check_delta(delta)
    mode = ArrangementMode(mode)
    indices = domain.lattice_indices()
    if not indices:
        logger.warning("cube of side %g holds no complete unit cell; S_L is empty", domain.L)

    if mode is ArrangementMode.PERIODIC:
        chosen = {j: np.array(j, dtype=float) for j in indices}
    elif mode is ArrangementMode.JITTER:
        if amplitude < 0 or amplitude > 0.5 - delta + CONTAINMENT_SLACK:
            raise ValidationError(
                "jitter amplitude must be in [0, 1/2 - delta]",
                f"got {amplitude} with delta {delta}",
            )
        rng = np.random.default_rng(seed)
        shifts = rng.uniform(-amplitude, amplitude, size=(len(indices), domain.d))
        chosen = {j: np.array(j, dtype=float) + s for j, s in zip(indices, shifts)}
    else:
        if centers is None:
            raise ValidationError("explicit mode needs centers")
        chosen = {tuple(int(i) for i in j): np.asarray(x, dtype=float) for j, x in centers.items()}
    return BallArrangement(domain, delta, chosen, mode)


@dataclass(frozen=True, eq=False)
class IndicatorField:
    """Per-node volume fractions in [0, 1] of a set inside the node cells."""

    grid: Grid
    weights: np.ndarray

    def __post_init__(self):
        weights = np.array(self.weights, dtype=float).reshape(-1)
        if weights.size != self.grid.size:
            raise GridMismatchError(
                f"indicator has {weights.size} weights but the grid has {self.grid.size} nodes"
            )
        if np.any(weights < -1e-14) or np.any(weights > 1 + 1e-14):
            raise ValidationError("indicator weights must lie in [0, 1]")
        weights = np.clip(weights, 0.0, 1.0)
        weights.setflags(write=False)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def whole(cls, grid: Grid) -> "IndicatorField":
        return cls(grid, np.ones(grid.size))

    @property
    def mass(self) -> float:
        return float(np.sum(self.weights) * self.grid.cell_volume)


def _cell_offsets(grid: Grid, subsamples: int) -> np.ndarray:
    s = int(subsamples)
    if s < 1:
        raise ValidationError("subsamples must be at least 1", f"got {subsamples}")
    ticks = ((np.arange(s) + 0.5) / s - 0.5) * grid.h
    mesh = np.meshgrid(*([ticks] * grid.d), indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def _subsampled_fraction(grid: Grid, subsamples: int, inside) -> np.ndarray:
    """Fraction of each node cell where ``inside(points)`` holds."""
    offsets = _cell_offsets(grid, subsamples)
    per_node = offsets.shape[0]
    chunk = max(1, CHUNK_POINTS // per_node)
    weights = np.empty(grid.size)
    for start in range(0, grid.size, chunk):
        nodes = grid.points[start:start + chunk]
        sub = (nodes[:, None, :] + offsets[None, :, :]).reshape(-1, grid.d)
        hits = inside(sub).reshape(nodes.shape[0], per_node)
        weights[start:start + chunk] = hits.mean(axis=1)
    return weights


def indicator(
    arr: BallArrangement, grid: Grid, subsamples: int = DEFAULT_SUBSAMPLES
) -> IndicatorField:
    """W_L = χ_{S_L} as cell volume fractions estimated on s^d sub-points per cell."""
    if grid.domain != arr.domain:
        raise GridMismatchError("indicator grid and arrangement live on different cubes")
    m = arr.domain.lattice_extent()
    if m < 0:
        return IndicatorField(grid, np.zeros(grid.size))
    table = arr.center_array
    delta = arr.delta

    def inside(points):
        # a sub-point can only meet the ball of the cell it rounds to
        j = np.rint(points).astype(int)
        valid = np.all(np.abs(j) <= m, axis=1)
        hit = np.zeros(points.shape[0], dtype=bool)
        if np.any(valid):
            centers = table[tuple((j[valid] + m).T)]
            hit[valid] = np.sum((points[valid] - centers) ** 2, axis=1) < delta ** 2
        return hit

    return IndicatorField(grid, _subsampled_fraction(grid, subsamples, inside))


def integrate(field_: ScalarField, weight: Optional[IndicatorField] = None) -> float:
    """Σ ψ² · W · h^d; without a weight the whole cube."""
    if weight is None:
        return float(np.sum(field_.values ** 2) * field_.grid.cell_volume)
    field_.grid.check_same(weight.grid, "indicator")
    return float(np.sum(field_.values ** 2 * weight.weights) * field_.grid.cell_volume)


# ---------------------------------------------------------------------------
# Region descriptors
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Ball:
    """Euclidean ball B(center, radius)."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        center = np.array(self.center, dtype=float).reshape(-1)
        center.setflags(write=False)
        object.__setattr__(self, "center", center)
        if not self.radius > 0:
            raise ValidationError("ball radius must be positive", f"got {self.radius}")

    @property
    def d(self) -> int:
        return self.center.size

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    @property
    def volume(self) -> float:
        return ball_volume(self.d, self.radius)

    def distance(self, point) -> float:
        gap = np.linalg.norm(np.asarray(point, dtype=float) - self.center) - self.radius
        return float(max(gap, 0.0))

    def contains_points(self, points: np.ndarray) -> np.ndarray:
        return np.sum((np.asarray(points) - self.center) ** 2, axis=1) <= self.radius ** 2

    def contains_ball(self, center, radius: float) -> bool:
        gap = np.linalg.norm(np.asarray(center, dtype=float) - self.center)
        return bool(gap + radius <= self.radius * (1 + CONTAINMENT_SLACK))

    def contains_region(self, other: "Region") -> bool:
        if isinstance(other, Ball):
            return self.contains_ball(other.center, other.radius)
        corners = other.corners()
        return bool(np.all(np.linalg.norm(corners - self.center, axis=1) <= self.radius * (1 + CONTAINMENT_SLACK)))


@dataclass(frozen=True, eq=False)
class Box:
    """Axis-aligned box Π_i (lower_i, upper_i)."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.array(self.lower, dtype=float).reshape(-1)
        upper = np.array(self.upper, dtype=float).reshape(-1)
        if lower.shape != upper.shape or np.any(upper <= lower):
            raise ValidationError("box needs lower < upper on every axis")
        lower.setflags(write=False)
        upper.setflags(write=False)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def d(self) -> int:
        return self.lower.size

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))

    @property
    def volume(self) -> float:
        return float(np.prod(self.upper - self.lower))

    def corners(self) -> np.ndarray:
        choice = np.indices((2,) * self.d).reshape(self.d, -1).T
        return np.where(choice == 0, self.lower, self.upper)

    def distance(self, point) -> float:
        p = np.asarray(point, dtype=float)
        gap = np.maximum(np.maximum(self.lower - p, p - self.upper), 0.0)
        return float(np.linalg.norm(gap))

    def contains_points(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points)
        return np.all((points >= self.lower) & (points <= self.upper), axis=1)

    def contains_ball(self, center, radius: float) -> bool:
        c = np.asarray(center, dtype=float)
        slack = CONTAINMENT_SLACK * max(1.0, radius)
        return bool(np.all(c - radius >= self.lower - slack) and np.all(c + radius <= self.upper + slack))

    def contains_region(self, other: "Region") -> bool:
        if isinstance(other, Ball):
            return self.contains_ball(other.center, other.radius)
        return bool(np.all(other.lower >= self.lower) and np.all(other.upper <= self.upper))


Region = Union[Ball, Box]


def _box_fraction(grid: Grid, box: Box) -> np.ndarray:
    """Exact overlap of every node cell with the box, as a fraction of h^d."""
    h = grid.h
    lo = grid.points - h / 2
    hi = grid.points + h / 2
    overlap = np.clip(np.minimum(hi, box.upper) - np.maximum(lo, box.lower), 0.0, h) / h
    return np.prod(overlap, axis=1)


def region_indicator(
    grid: Grid, region: Region, subsamples: int = DEFAULT_SUBSAMPLES
) -> IndicatorField:
    if region.d != grid.d:
        raise GridMismatchError(f"region has dimension {region.d}, grid has {grid.d}")
    if isinstance(region, Box):
        return IndicatorField(grid, _box_fraction(grid, region))
    return IndicatorField(grid, _subsampled_fraction(grid, subsamples, region.contains_points))


def covers(grid: Grid, region: Region) -> bool:
    """True when the region lies inside the gridded cube."""
    half = grid.domain.half_width
    cube = Box(np.full(grid.d, -half), np.full(grid.d, half))
    return cube.contains_region(region)


# ---------------------------------------------------------------------------
# Hypotheses of the quantitative unique continuation estimates
# ---------------------------------------------------------------------------

class QUCVariant(str, enum.Enum):
    SCHRODINGER = "schrodinger"
    ELLIPTIC = "elliptic"


@dataclass(frozen=True, eq=False)
class QUCGeometry:
    """Constellation (x, R, δ, Θ, G) and the elliptic offset D₀."""

    x: np.ndarray
    R: float
    delta: float
    theta: Region
    G: Region
    D0: float = 0.0

    def __post_init__(self):
        x = np.array(self.x, dtype=float).reshape(-1)
        x.setflags(write=False)
        object.__setattr__(self, "x", x)
        if not self.R > 0:
            raise ValidationError("R must be positive", f"got {self.R}")
        if not self.delta > 0:
            raise ValidationError("delta must be positive", f"got {self.delta}")
        if not (self.theta.d == self.G.d == x.size):
            raise ValidationError("x, Theta and G must share one dimension")
        if not self.G.contains_region(self.theta):
            raise ValidationError("Theta must lie inside G")

    @property
    def d(self) -> int:
        return self.x.size

    @property
    def observation_ball(self) -> Ball:
        return Ball(self.x, self.delta)


@dataclass
class HypothesisReport:
    holds: bool
    failed_clauses: List[str]
    clauses: Dict[str, bool] = field(default_factory=dict)
    C3: Optional[float] = None
    notes: List[str] = field(default_factory=list)


def _le(lhs: float, rhs: float) -> bool:
    return lhs <= rhs + CONTAINMENT_SLACK * max(1.0, abs(rhs))


def check_quc_hypotheses(
    geo: QUCGeometry,
    variant: Union[QUCVariant, str] = QUCVariant.SCHRODINGER,
    params: Optional[EllipticityParams] = None,
    mu: float = 1.0,
    coefficients: Optional[CoefficientField] = None,
    *,
    seed: int = 0,
) -> HypothesisReport:
    """Evaluate every geometric clause; a failed clause is reported, not raised.

    The elliptic variant assumes A(12R + 2D₀, θ₁, θ₂) unless ``coefficients``
    are given, in which case the assumption is checked on their grid.
    """
    from ucplab.carleman import weight_constant

    variant = QUCVariant(variant)
    diam = geo.theta.diameter
    dist = geo.theta.distance(geo.x)
    R = geo.R
    clauses: Dict[str, bool] = {
        "diam(Theta) + dist(x, Theta) <= 2R": _le(diam + dist, 2 * R),
        "2R <= 2 dist(x, Theta)": _le(2 * R, 2 * dist),
    }
    report = HypothesisReport(holds=False, failed_clauses=[])

    if variant is QUCVariant.SCHRODINGER:
        clauses["delta <= 1"] = _le(geo.delta, 1.0)
        clauses["delta < 4R"] = geo.delta < 4 * R
        clauses["B(x, 14R) in G"] = geo.G.contains_ball(geo.x, 14 * R)
    else:
        if params is None:
            raise ValidationError("the elliptic variant needs ellipticity parameters")
        if not mu > 0:
            raise ValidationError("mu must be positive", f"got {mu}")
        C3 = weight_constant(mu)
        report.C3 = C3
        reach = 12 * R + 2 * geo.D0
        clauses["D0 < 6R"] = geo.D0 < 6 * R
        clauses["delta <= 4R"] = _le(geo.delta, 4 * R)
        clauses["B(x, 12R + 2D0) in G"] = geo.G.contains_ball(geo.x, reach)
        clauses["theta1 * C3 < 1/(4R)"] = params.theta1 * C3 < 1.0 / (4 * R)
        if coefficients is None:
            report.notes.append(f"assumption A({reach:g}, theta1, theta2) taken as given")
        else:
            try:
                ellipticity = check_assumption_A(
                    coefficients, EllipticityParams(reach, params.theta1, params.theta2), seed=seed
                )
                clauses[f"A({reach:g}, theta1, theta2)"] = ellipticity.holds
            except CoverageError as exc:
                clauses[f"A({reach:g}, theta1, theta2)"] = False
                report.notes.append(str(exc))

    report.clauses = clauses
    report.failed_clauses = [name for name, ok in clauses.items() if not ok]
    report.holds = not report.failed_clauses
    if report.failed_clauses:
        logger.info("hypotheses fail: %s", "; ".join(report.failed_clauses))
    return report


# ---------------------------------------------------------------------------
# CSV input / output
# ---------------------------------------------------------------------------

def write_arrangement_csv(arr: BallArrangement, path: Union[str, Path]) -> None:
    d = arr.domain.d
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(f"# d={d} L={arr.domain.L!r} bc={arr.domain.bc.value} mode={arr.mode.value}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow([f"j{i}" for i in range(d)] + [f"x{i}" for i in range(d)] + ["delta"])
        for j, x in arr.centers.items():
            writer.writerow(list(j) + [repr(float(v)) for v in x] + [repr(arr.delta)])


def read_arrangement_csv(path: Union[str, Path], domain: Domain) -> BallArrangement:
    """Load centers written by ``write_arrangement_csv``; re-validated in explicit mode."""
    with open(path, "r", encoding="utf-8", newline="") as f:
        rows = list(csv.DictReader(line for line in f if not line.startswith("#")))
    if not rows:
        raise ValidationError(f"{path} holds no ball centers")
    d = domain.d
    deltas = {float(row["delta"]) for row in rows}
    if len(deltas) != 1:
        raise ValidationError("all balls of an arrangement share one radius", f"found {sorted(deltas)}")
    centers = {
        tuple(int(row[f"j{i}"]) for i in range(d)): [float(row[f"x{i}"]) for i in range(d)]
        for row in rows
    }
    return make_arrangement(domain, deltas.pop(), ArrangementMode.EXPLICIT, centers=centers)
