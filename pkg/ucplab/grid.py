"""
Cubes, grids and grid-sampled fields.

A ``Domain`` is the cube Λ_L = (-L/2, L/2)^d together with a boundary
condition. A ``Grid`` discretizes it with ``n`` nodes per axis: Dirichlet
grids drop the boundary nodes (h = L/(n+1)), periodic grids use cell centred
nodes (h = L/n) so that the node cells tile the cube exactly.
"""

import csv
import enum
import itertools
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Optional, Tuple, Union

import numpy as np

from ucplab.errors import (
    GridMismatchError,
    InvalidGridError,
    NonEllipticCoefficientError,
    ValidationError,
)

# Dense fallbacks in three dimensions grow as n^6.
MAX_NODES_PER_AXIS_3D = 40


class BoundaryCondition(str, enum.Enum):
    """Boundary condition of the cube operator."""

    DIRICHLET = "dirichlet"
    PERIODIC = "periodic"


@dataclass(frozen=True)
class Domain:
    """The cube Λ_L = (-L/2, L/2)^d with a boundary condition."""

    d: int
    L: float
    bc: BoundaryCondition = BoundaryCondition.DIRICHLET

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValidationError("d must be a positive integer", f"got {self.d}")
        if not np.isfinite(self.L) or self.L <= 0:
            raise ValidationError("L must be positive", f"got {self.L}")
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "L", float(self.L))
        object.__setattr__(self, "bc", BoundaryCondition(self.bc))

    @property
    def half_width(self) -> float:
        return self.L / 2.0

    def lattice_extent(self) -> int:
        """Largest |j_i| with Λ_1 + j inside the closed cube."""
        return int(np.floor((self.L - 1.0) / 2.0 + 1e-12))

    def lattice_indices(self) -> list:
        """All j ∈ ℤ^d with Λ_1 + j ⊂ closure(Λ_L), in lexicographic order."""
        m = self.lattice_extent()
        if m < 0:
            return []
        axis = range(-m, m + 1)
        return [tuple(j) for j in itertools.product(axis, repeat=self.d)]


@dataclass(frozen=True)
class Grid:
    """Tensor grid with ``n`` nodes per axis on a Domain."""

    domain: Domain
    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise InvalidGridError("n must be an integer of at least 2", f"got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        if self.domain.d == 3 and self.n > MAX_NODES_PER_AXIS_3D:
            raise InvalidGridError(
                f"n must not exceed {MAX_NODES_PER_AXIS_3D} in three dimensions",
                f"got {self.n}",
            )

    @classmethod
    def for_resolution(cls, domain: Domain, resolution: float) -> "Grid":
        """Grid with roughly ``resolution`` nodes per unit length."""
        cells = max(3, int(round(domain.L * resolution)))
        if domain.bc is BoundaryCondition.DIRICHLET:
            return cls(domain, cells - 1)
        return cls(domain, cells)

    @property
    def d(self) -> int:
        return self.domain.d

    @property
    def bc(self) -> BoundaryCondition:
        return self.domain.bc

    @property
    def periodic(self) -> bool:
        return self.domain.bc is BoundaryCondition.PERIODIC

    @cached_property
    def h(self) -> float:
        if self.periodic:
            return self.domain.L / self.n
        return self.domain.L / (self.n + 1)

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def size(self) -> int:
        return self.n ** self.d

    @property
    def cell_volume(self) -> float:
        return self.h ** self.d

    @cached_property
    def axis(self) -> np.ndarray:
        """Node coordinates along one axis."""
        offset = 0.5 if self.periodic else 1.0
        coords = -self.domain.half_width + self.h * (np.arange(self.n) + offset)
        coords.setflags(write=False)
        return coords

    @cached_property
    def points(self) -> np.ndarray:
        """Node coordinates as a (size, d) array in C order."""
        mesh = np.meshgrid(*([self.axis] * self.d), indexing="ij")
        pts = np.stack([m.reshape(-1) for m in mesh], axis=1)
        pts.setflags(write=False)
        return pts

    def refined(self) -> "Grid":
        """Grid on the same domain with exactly half the mesh width."""
        if self.periodic:
            return Grid(self.domain, 2 * self.n)
        return Grid(self.domain, 2 * self.n + 1)

    def check_same(self, other: "Grid", what: str = "field") -> None:
        if self != other:
            raise GridMismatchError(
                f"{what} lives on a grid with n={other.n}, d={other.d}, L={other.domain.L}, "
                f"bc={other.bc.value}; expected n={self.n}, d={self.d}, "
                f"L={self.domain.L}, bc={self.bc.value}"
            )

    def boundary_layer_mask(self) -> np.ndarray:
        """Nodes whose stencil reaches an eliminated Dirichlet boundary node."""
        if self.periodic:
            return np.zeros(self.size, dtype=bool)
        idx = np.indices(self.shape).reshape(self.d, -1)
        return np.any((idx == 0) | (idx == self.n - 1), axis=0)

    def nearest_node(self, point) -> int:
        point = np.asarray(point, dtype=float).reshape(1, self.d)
        return int(np.argmin(np.sum((self.points - point) ** 2, axis=1)))


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real values sampled on the nodes of a Grid (ψ, V or f)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(-1)
        if values.size != self.grid.size:
            raise GridMismatchError(
                f"field has {values.size} values but the grid has {self.grid.size} nodes"
            )
        if not np.all(np.isfinite(values)):
            raise ValidationError("field values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @cached_property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    @classmethod
    def zeros(cls, grid: Grid) -> "ScalarField":
        return cls(grid, np.zeros(grid.size))

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "ScalarField":
        return cls(grid, np.full(grid.size, float(value)))

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable[[np.ndarray], np.ndarray]) -> "ScalarField":
        """Sample ``fn`` on the (size, d) node array."""
        return cls(grid, np.asarray(fn(grid.points), dtype=float).reshape(-1))

    def inner(self, other: "ScalarField") -> float:
        """Discrete L² inner product with cell weight h^d."""
        self.grid.check_same(other.grid)
        return float(np.dot(self.values, other.values) * self.grid.cell_volume)

    def norm(self) -> float:
        return float(np.sqrt(self.inner(self)))

    def reshaped(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)

    def scaled(self, factor: float) -> "ScalarField":
        return ScalarField(self.grid, factor * self.values)

    def __add__(self, other: "ScalarField") -> "ScalarField":
        self.grid.check_same(other.grid)
        return ScalarField(self.grid, self.values + other.values)

    def __sub__(self, other: "ScalarField") -> "ScalarField":
        self.grid.check_same(other.grid)
        return ScalarField(self.grid, self.values - other.values)


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """Coefficient matrices a^{ij} per node plus their value at the origin.

    ``function`` keeps the generating callable when there is one, so flux
    coefficients can be evaluated exactly at cell faces.
    """

    grid: Grid
    a: np.ndarray
    a_origin: np.ndarray
    function: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, repr=False)

    def __post_init__(self):
        d = self.grid.d
        a = np.array(self.a, dtype=float).reshape(self.grid.size, d, d)
        a_origin = np.array(self.a_origin, dtype=float).reshape(d, d)
        if not np.all(np.isfinite(a)) or not np.all(np.isfinite(a_origin)):
            raise ValidationError("coefficient values must be finite")
        a.setflags(write=False)
        a_origin.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "a_origin", a_origin)

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable[[np.ndarray], np.ndarray]) -> "CoefficientField":
        """``fn`` maps an (m, d) point array to (m, d, d) matrices."""
        d = grid.d
        a = np.asarray(fn(grid.points), dtype=float).reshape(grid.size, d, d)
        a_origin = np.asarray(fn(np.zeros((1, d))), dtype=float).reshape(d, d)
        return cls(grid, a, a_origin, fn)

    @classmethod
    def identity(cls, grid: Grid) -> "CoefficientField":
        return cls.constant(grid, np.eye(grid.d))

    @classmethod
    def constant(cls, grid: Grid, matrix) -> "CoefficientField":
        matrix = np.asarray(matrix, dtype=float).reshape(grid.d, grid.d)

        def fn(points):
            return np.broadcast_to(matrix, (points.shape[0], grid.d, grid.d)).copy()

        return cls.from_function(grid, fn)

    @classmethod
    def scalar(cls, grid: Grid, fn: Callable[[np.ndarray], np.ndarray]) -> "CoefficientField":
        """Isotropic coefficients a^{ij}(x) = fn(x) δ_ij."""
        eye = np.eye(grid.d)

        def matrix_fn(points):
            return np.asarray(fn(points), dtype=float).reshape(-1, 1, 1) * eye

        return cls.from_function(grid, matrix_fn)

    @cached_property
    def a_inv_at_origin(self) -> np.ndarray:
        """Entries a_{ij}(0) of the inverse of (a^{ij}(0))."""
        try:
            inverse = np.linalg.inv(self.a_origin)
        except np.linalg.LinAlgError as exc:
            raise NonEllipticCoefficientError("a(0) is singular") from exc
        if not np.allclose(inverse @ self.a_origin, np.eye(self.grid.d), rtol=0.0, atol=1e-10):
            raise NonEllipticCoefficientError("a(0) is too ill-conditioned to invert")
        inverse.setflags(write=False)
        return inverse

    def asymmetry(self) -> float:
        """max |a^{ij} - a^{ji}| over nodes."""
        return float(np.max(np.abs(self.a - np.swapaxes(self.a, 1, 2))))

    def is_symmetric(self, tol: float = 1e-12) -> bool:
        return self.asymmetry() <= tol

    def eigenvalue_range(self) -> np.ndarray:
        """(size, 2) array of min / max eigenvalue of the symmetric part per node."""
        sym = 0.5 * (self.a + np.swapaxes(self.a, 1, 2))
        eig = np.linalg.eigvalsh(sym)
        return np.stack([eig[:, 0], eig[:, -1]], axis=1)

    def evaluate(self, points: np.ndarray) -> Optional[np.ndarray]:
        """Exact coefficients at arbitrary points, None without a callable."""
        if self.function is None:
            return None
        d = self.grid.d
        return np.asarray(self.function(points), dtype=float).reshape(-1, d, d)


# ---------------------------------------------------------------------------
# Potential generators
# ---------------------------------------------------------------------------

def zero_potential(grid: Grid) -> ScalarField:
    return ScalarField.zeros(grid)


def constant_potential(grid: Grid, value: float) -> ScalarField:
    return ScalarField.constant(grid, value)


def sinusoidal_potential(grid: Grid, amplitude: float, wavenumber: float = 2 * np.pi) -> ScalarField:
    """V(x) = amplitude · Π_i cos(wavenumber x_i), so ‖V‖_∞ ≤ |amplitude|."""
    return ScalarField.from_function(
        grid, lambda pts: amplitude * np.prod(np.cos(wavenumber * pts), axis=1)
    )


def random_potential(grid: Grid, K: float, seed: int) -> ScalarField:
    """Independent uniform values in [-K, K] at every node."""
    if K < 0:
        raise ValidationError("K must be nonnegative", f"got {K}")
    rng = np.random.default_rng(seed)
    return ScalarField(grid, rng.uniform(-K, K, size=grid.size))


def cell_indices(grid: Grid) -> np.ndarray:
    """Unit-cell lattice index j (offset to start at 0) of every node, shape (size, d)."""
    m = max(grid.domain.lattice_extent(), 0)
    j = np.rint(grid.points).astype(int)
    return np.clip(j, -m, m) + m


def alloy_potential(grid: Grid, K: float, seed: int) -> ScalarField:
    """Independent uniform constants in [-K, K] on each unit cell Λ_1 + j."""
    if K < 0:
        raise ValidationError("K must be nonnegative", f"got {K}")
    m = max(grid.domain.lattice_extent(), 0)
    rng = np.random.default_rng(seed)
    cell_values = rng.uniform(-K, K, size=(2 * m + 1,) * grid.d)
    idx = cell_indices(grid)
    return ScalarField(grid, cell_values[tuple(idx.T)])


def shifted_potential(V: ScalarField, E: float) -> ScalarField:
    """V - E, so that H ψ = E ψ becomes (-Δ + V - E) ψ = 0."""
    return ScalarField(V.grid, V.values - E)


# ---------------------------------------------------------------------------
# CSV input / output
# ---------------------------------------------------------------------------

def _index_columns(d: int) -> list:
    return [f"i{axis}" for axis in range(d)]


def _read_rows(path: Union[str, Path]) -> list:
    with open(path, "r", encoding="utf-8", newline="") as f:
        lines = [line for line in f if not line.startswith("#")]
    return list(csv.DictReader(lines))


def _flat_index(grid: Grid, row: dict) -> int:
    multi = tuple(int(row[c]) for c in _index_columns(grid.d))
    if any(i < 0 or i >= grid.n for i in multi):
        raise GridMismatchError(f"node index {multi} is outside the {grid.n}-point grid")
    return int(np.ravel_multi_index(multi, grid.shape))


def read_field_csv(path: Union[str, Path], grid: Grid) -> ScalarField:
    """Load a field from columns i0..i{d-1}, value. Missing nodes are zero."""
    values = np.zeros(grid.size)
    for row in _read_rows(path):
        values[_flat_index(grid, row)] = float(row["value"])
    return ScalarField(grid, values)


def write_field_csv(field_: ScalarField, path: Union[str, Path]) -> None:
    grid = field_.grid
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(_index_columns(grid.d) + ["value"])
        for flat, value in enumerate(field_.values):
            writer.writerow(list(np.unravel_index(flat, grid.shape)) + [repr(float(value))])


def read_coefficients_csv(path: Union[str, Path], grid: Grid) -> CoefficientField:
    """Load a^{ij} from columns i0..i{d-1}, a11, a12, ..., add (1-based, row major).

    a(0) is taken from the node nearest the origin.
    """
    d = grid.d
    entry_columns = [f"a{i + 1}{j + 1}" for i in range(d) for j in range(d)]
    a = np.zeros((grid.size, d, d))
    seen = np.zeros(grid.size, dtype=bool)
    for row in _read_rows(path):
        flat = _flat_index(grid, row)
        a[flat] = np.array([float(row[c]) for c in entry_columns]).reshape(d, d)
        seen[flat] = True
    if not np.all(seen):
        raise GridMismatchError(f"coefficient file covers {int(seen.sum())} of {grid.size} nodes")
    origin = grid.nearest_node(np.zeros(d))
    return CoefficientField(grid, a, a[origin])
