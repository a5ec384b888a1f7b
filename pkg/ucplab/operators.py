"""
Finite-difference Schrödinger and elliptic operators on cubes.

Both operators are assembled in flux form, ``Σ_k D_kᵀ diag(a^{kk}) D_k`` with
forward differences ``D_k`` onto cell faces, so H_L = -Δ + V is literally the
elliptic operator with identity coefficients. Mixed terms a^{kl}, k ≠ l, use
central differences ``C_kᵀ diag(a^{kl}) C_l``, which keeps the matrix symmetric.
"""

import enum
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
from scipy import sparse

from ucplab.errors import (
    CoverageError,
    NonEllipticCoefficientError,
    NonSymmetricCoefficientError,
    ValidationError,
)
from ucplab.grid import CoefficientField, Domain, Grid, ScalarField

logger = logging.getLogger(__name__)

EXHAUSTIVE_PAIR_LIMIT = 10_000
SAMPLED_PAIRS = 100_000
DEFAULT_SLACK = 10.0


class OperatorKind(str, enum.Enum):
    SCHRODINGER = "schrodinger"
    ELLIPTIC = "elliptic"


@dataclass(frozen=True)
class EllipticityParams:
    """Parameters of Assumption A(r, θ₁, θ₂)."""

    r: float
    theta1: float
    theta2: float = 0.0

    def __post_init__(self):
        if not self.r > 0:
            raise ValidationError("r must be positive", f"got {self.r}")
        if not self.theta1 > 0:
            raise ValidationError("theta1 must be positive", f"got {self.theta1}")
        if not self.theta2 >= 0:
            raise ValidationError("theta2 must be nonnegative", f"got {self.theta2}")


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """Sparse symmetric matrix of -Δ + V or L + V on a grid.

    ``principal`` is the differential part alone (-Δ or L); ``matrix`` adds
    the diagonal potential.
    """

    grid: Grid
    kind: OperatorKind
    potential: ScalarField
    principal: sparse.csr_matrix = field(repr=False)
    coefficients: Optional[CoefficientField] = field(default=None, repr=False)

    @cached_property
    def matrix(self) -> sparse.csr_matrix:
        m = (self.principal + sparse.diags(self.potential.values)).tocsr()
        m.sort_indices()
        return m

    @property
    def label(self) -> str:
        return (
            f"{self.kind.value}-d{self.grid.d}-L{self.grid.domain.L:g}"
            f"-n{self.grid.n}-{self.grid.bc.value}"
        )

    def apply(self, psi: ScalarField) -> ScalarField:
        self.grid.check_same(psi.grid)
        return ScalarField(self.grid, self.matrix @ psi.values)

    def apply_principal(self, psi: ScalarField) -> ScalarField:
        self.grid.check_same(psi.grid)
        return ScalarField(self.grid, self.principal @ psi.values)

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def norm_estimate(self) -> float:
        """Max absolute row sum, an upper bound of the spectral norm."""
        return float(np.max(np.asarray(abs(self.matrix).sum(axis=1)).ravel()))

    def lower_bound(self) -> float:
        """Gershgorin lower bound of the spectrum."""
        m = self.matrix
        diag = m.diagonal()
        off = np.asarray(abs(m).sum(axis=1)).ravel() - np.abs(diag)
        return float(np.min(diag - off))

    def is_symmetric(self, rtol: float = 1e-12) -> bool:
        diff = abs(self.matrix - self.matrix.T)
        worst = diff.max() if diff.nnz else 0.0
        return worst <= rtol * max(self.norm_estimate(), 1.0)


# ---------------------------------------------------------------------------
# One-dimensional building blocks
# ---------------------------------------------------------------------------

def _forward_difference(n: int, h: float, periodic: bool) -> sparse.csr_matrix:
    """Differences onto faces: (Du)_e = (u_e - u_{e-1}) / h."""
    if periodic:
        rows = np.concatenate([np.arange(n), np.arange(n)])
        cols = np.concatenate([np.arange(n), (np.arange(n) - 1) % n])
        data = np.concatenate([np.ones(n), -np.ones(n)]) / h
        return sparse.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()
    # faces 0..n, nodes -1 and n are the eliminated boundary
    rows = np.concatenate([np.arange(n), np.arange(1, n + 1)])
    cols = np.concatenate([np.arange(n), np.arange(n)])
    data = np.concatenate([np.ones(n), -np.ones(n)]) / h
    return sparse.coo_matrix((data, (rows, cols)), shape=(n + 1, n)).tocsr()


def _face_average(n: int, periodic: bool) -> sparse.csr_matrix:
    """Average of the nodes adjacent to each face; boundary faces copy their node."""
    if periodic:
        rows = np.concatenate([np.arange(n), np.arange(n)])
        cols = np.concatenate([np.arange(n), (np.arange(n) - 1) % n])
        return sparse.coo_matrix((np.full(2 * n, 0.5), (rows, cols)), shape=(n, n)).tocsr()
    rows = np.concatenate([np.arange(n), np.arange(1, n + 1)])
    cols = np.concatenate([np.arange(n), np.arange(n)])
    weights = np.full(2 * n, 0.5)
    weights[0] = 1.0  # face 0 only touches node 0
    weights[-1] = 1.0  # face n only touches node n-1
    return sparse.coo_matrix((weights, (rows, cols)), shape=(n + 1, n)).tocsr()


def _central_difference(n: int, h: float, periodic: bool) -> sparse.csr_matrix:
    """(Cu)_k = (u_{k+1} - u_{k-1}) / 2h with zero or wrapped neighbours."""
    idx = np.arange(n)
    if periodic:
        rows = np.concatenate([idx, idx])
        cols = np.concatenate([(idx + 1) % n, (idx - 1) % n])
        data = np.concatenate([np.ones(n), -np.ones(n)]) / (2 * h)
    else:
        rows = np.concatenate([idx[:-1], idx[1:]])
        cols = np.concatenate([idx[1:], idx[:-1]])
        data = np.concatenate([np.ones(n - 1), -np.ones(n - 1)]) / (2 * h)
    return sparse.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()


def _face_axis(grid: Grid) -> np.ndarray:
    half = grid.domain.half_width
    if grid.periodic:
        return -half + grid.h * np.arange(grid.n)
    return -half + grid.h * (np.arange(grid.n + 1) + 0.5)


def _lift(op_1d: sparse.spmatrix, axis: int, grid: Grid) -> sparse.csr_matrix:
    """Embed a 1D operator acting along ``axis`` into the C-ordered tensor grid."""
    eye = sparse.identity(grid.n, format="csr")
    result = None
    for k in range(grid.d):
        factor = op_1d if k == axis else eye
        result = factor if result is None else sparse.kron(result, factor, format="csr")
    return result.tocsr()


def _face_points(grid: Grid, axis: int) -> np.ndarray:
    axes = [grid.axis] * grid.d
    axes[axis] = _face_axis(grid)
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def _face_coefficients(coeffs: CoefficientField, axis: int) -> np.ndarray:
    grid = coeffs.grid
    exact = coeffs.evaluate(_face_points(grid, axis))
    if exact is not None:
        return exact[:, axis, axis]
    avg = _lift(_face_average(grid.n, grid.periodic), axis, grid)
    return avg @ coeffs.a[:, axis, axis]


def _assemble_flux_form(grid: Grid, coeffs: Optional[CoefficientField]) -> sparse.csr_matrix:
    d1 = _forward_difference(grid.n, grid.h, grid.periodic)
    total = sparse.csr_matrix((grid.size, grid.size))
    for axis in range(grid.d):
        D = _lift(d1, axis, grid)
        if coeffs is None:
            face = np.ones(D.shape[0])
        else:
            face = _face_coefficients(coeffs, axis)
        total = total + D.T @ sparse.diags(face) @ D
    if coeffs is not None and grid.d > 1:
        c1 = _central_difference(grid.n, grid.h, grid.periodic)
        central = [_lift(c1, axis, grid) for axis in range(grid.d)]
        for k in range(grid.d):
            for l in range(grid.d):
                if k == l:
                    continue
                mixed = 0.5 * (coeffs.a[:, k, l] + coeffs.a[:, l, k])
                if not np.any(mixed):
                    continue
                total = total + central[k].T @ sparse.diags(mixed) @ central[l]
    total = total.tocsr()
    total.eliminate_zeros()
    total.sort_indices()
    return total


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def _grid_for(domain: Domain, n: int, V: Optional[ScalarField]) -> Grid:
    grid = Grid(domain, n)
    if V is not None:
        grid.check_same(V.grid, "potential")
    return grid


def build_schrodinger(domain: Domain, n: int, V: Optional[ScalarField] = None) -> DiscreteOperator:
    """H_L = -Δ + V with the (2d+1)-point Laplacian."""
    grid = _grid_for(domain, n, V)
    if V is None:
        V = ScalarField.zeros(grid)
    principal = _assemble_flux_form(grid, None)
    logger.debug("assembled Schrödinger operator on %d nodes", grid.size)
    return DiscreteOperator(grid, OperatorKind.SCHRODINGER, V, principal)


def build_elliptic(
    domain: Domain,
    n: int,
    a: CoefficientField,
    V: Optional[ScalarField] = None,
) -> DiscreteOperator:
    """L + V with L = -Σ ∂_i(a^{ij} ∂_j) in flux form."""
    grid = _grid_for(domain, n, V)
    grid.check_same(a.grid, "coefficient field")
    scale = max(float(np.max(np.abs(a.a))), 1.0)
    if not a.is_symmetric(tol=1e-12 * scale):
        raise NonSymmetricCoefficientError(
            f"a^{{ij}} differs from a^{{ji}} by up to {a.asymmetry():.3e}"
        )
    lowest = a.eigenvalue_range()[:, 0]
    if np.any(lowest <= 0):
        node = int(np.argmin(lowest))
        raise NonEllipticCoefficientError(
            f"quadratic form of a is not positive at node {node} "
            f"(smallest eigenvalue {lowest[node]:.3e})"
        )
    if V is None:
        V = ScalarField.zeros(grid)
    principal = _assemble_flux_form(grid, a)
    return DiscreteOperator(grid, OperatorKind.ELLIPTIC, V, principal, a)


@dataclass(frozen=True)
class AssumptionReport:
    holds: bool
    worst_ellipticity: float
    worst_lipschitz: float
    symmetric: bool
    nodes_checked: int
    pairs_checked: int


def _lipschitz_all_pairs(points: np.ndarray, entries: np.ndarray) -> tuple:
    m = points.shape[0]
    block = max(1, 2_000_000 // max(m * entries.shape[1], 1))
    worst = 0.0
    pairs = 0
    for start in range(0, m, block):
        stop = min(start + block, m)
        dist = np.linalg.norm(points[start:stop, None, :] - points[None, :, :], axis=2)
        var = np.sum(np.abs(entries[start:stop, None, :] - entries[None, :, :]), axis=2)
        mask = dist > 0
        if np.any(mask):
            worst = max(worst, float(np.max(var[mask] / dist[mask])))
        pairs += int(mask.sum())
    return worst, pairs // 2


def _lipschitz_sampled(points: np.ndarray, entries: np.ndarray, count: int, seed: int) -> tuple:
    rng = np.random.default_rng(seed)
    i = rng.integers(0, points.shape[0], size=count)
    j = rng.integers(0, points.shape[0], size=count)
    keep = i != j
    i, j = i[keep], j[keep]
    dist = np.linalg.norm(points[i] - points[j], axis=1)
    var = np.sum(np.abs(entries[i] - entries[j]), axis=1)
    mask = dist > 0
    if not np.any(mask):
        return 0.0, 0
    return float(np.max(var[mask] / dist[mask])), int(mask.sum())


def check_assumption_A(
    a: CoefficientField,
    params: EllipticityParams,
    *,
    seed: int = 0,
    exhaustive_limit: int = EXHAUSTIVE_PAIR_LIMIT,
    sampled_pairs: int = SAMPLED_PAIRS,
) -> AssumptionReport:
    """Check A(r, θ₁, θ₂) on the nodes of a inside the ball B(0, r)."""
    grid = a.grid
    if params.r > grid.domain.half_width * (1 + 1e-12):
        raise CoverageError(
            f"B(0, {params.r:g}) is not inside the gridded cube of side {grid.domain.L:g}"
        )
    inside = np.linalg.norm(grid.points, axis=1) < params.r
    if not np.any(inside):
        raise CoverageError(f"no grid node lies inside B(0, {params.r:g})")
    points = grid.points[inside]
    local = a.a[inside]
    scale = max(float(np.max(np.abs(local))), 1.0)
    symmetric = float(np.max(np.abs(local - np.swapaxes(local, 1, 2)))) <= 1e-12 * scale

    sym = 0.5 * (local + np.swapaxes(local, 1, 2))
    eig = np.linalg.eigvalsh(sym)
    lo, hi = float(np.min(eig[:, 0])), float(np.max(eig[:, -1]))
    worst_ellipticity = max(hi, 1.0 / lo) if lo > 0 else float("inf")
    elliptic = lo >= (1.0 / params.theta1) * (1 - 1e-12) and hi <= params.theta1 * (1 + 1e-12)

    entries = local.reshape(local.shape[0], -1)
    if points.shape[0] <= exhaustive_limit:
        worst_lipschitz, pairs = _lipschitz_all_pairs(points, entries)
    else:
        worst_lipschitz, pairs = _lipschitz_sampled(points, entries, sampled_pairs, seed)
    lipschitz = worst_lipschitz <= params.theta2 + 1e-12 * max(1.0, params.theta2)

    return AssumptionReport(
        holds=bool(symmetric and elliptic and lipschitz),
        worst_ellipticity=worst_ellipticity,
        worst_lipschitz=worst_lipschitz,
        symmetric=bool(symmetric),
        nodes_checked=int(points.shape[0]),
        pairs_checked=pairs,
    )


@dataclass(frozen=True)
class InequalityReport:
    holds: bool
    max_violation: float
    tolerance: float
    nodes_checked: int


def check_differential_inequality(
    op: DiscreteOperator,
    psi: ScalarField,
    V: ScalarField,
    *,
    slack: float = DEFAULT_SLACK,
    mask: Optional[np.ndarray] = None,
) -> InequalityReport:
    """Check |Δψ| ≤ |Vψ| (or |Lψ| ≤ |Vψ|) at interior nodes.

    The discretization slack is ``slack · h² · ‖ψ‖_∞``. ``mask`` restricts the
    check to a subset of nodes, e.g. an open region G.
    """
    op.grid.check_same(psi.grid, "psi")
    op.grid.check_same(V.grid, "potential")
    lhs = np.abs(op.principal @ psi.values)
    rhs = np.abs(V.values * psi.values)
    interior = ~op.grid.boundary_layer_mask()
    if mask is not None:
        interior = interior & np.asarray(mask, dtype=bool)
    tolerance = slack * op.grid.h ** 2 * psi.sup_norm
    checked = int(interior.sum())
    if checked == 0:
        return InequalityReport(True, 0.0, tolerance, 0)
    violation = float(max(np.max(lhs[interior] - rhs[interior]), 0.0))
    return InequalityReport(violation <= tolerance, violation, tolerance, checked)
