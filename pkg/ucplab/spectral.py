"""
Eigenpairs and spectral projectors χ_I(H_L) of discrete operators.

Eigenvectors are normalized in the discrete L² norm with cell weight h^d, so
``Σ_x ψ_k(x)² h^d = 1`` and norms are comparable across meshes.
"""

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from ucplab.errors import EmptyBasisError, SolverError, ValidationError
from ucplab.grid import Grid, ScalarField
from ucplab.operators import DiscreteOperator

logger = logging.getLogger(__name__)

DENSE_LIMIT = 2000
EDGE_TOLERANCE = 1e-10
RESIDUAL_TOLERANCE = 1e-8


@dataclass(frozen=True)
class EnergyWindow:
    """Energy window (-∞, E] or [a, b]; endpoints are included up to 1e-10."""

    upper: float
    lower: float = float("-inf")

    def __post_init__(self):
        if np.isnan(self.upper) or np.isnan(self.lower):
            raise ValidationError("window endpoints must be numbers")
        if self.lower > self.upper:
            raise ValidationError("interval window needs a <= b", f"got [{self.lower}, {self.upper}]")

    @classmethod
    def below(cls, E: float) -> "EnergyWindow":
        return cls(upper=float(E))

    @classmethod
    def interval(cls, a: float, b: float) -> "EnergyWindow":
        return cls(upper=float(b), lower=float(a))

    @property
    def is_half_line(self) -> bool:
        return np.isinf(self.lower)

    def contains(self, energies: np.ndarray) -> np.ndarray:
        energies = np.asarray(energies, dtype=float)
        return (energies >= self.lower - EDGE_TOLERANCE) & (energies <= self.upper + EDGE_TOLERANCE)

    def __str__(self) -> str:
        if self.is_half_line:
            return f"(-inf, {self.upper:g}]"
        return f"[{self.lower:g}, {self.upper:g}]"


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """Orthonormal eigenpairs (E_k, ψ_k) of one operator inside a window."""

    grid: Grid
    operator_id: str
    window: EnergyWindow
    eigenvalues: np.ndarray
    vectors: np.ndarray = field(repr=False)

    def __post_init__(self):
        eigenvalues = np.array(self.eigenvalues, dtype=float).reshape(-1)
        vectors = np.array(self.vectors, dtype=float).reshape(self.grid.size, eigenvalues.size)
        eigenvalues.setflags(write=False)
        vectors.setflags(write=False)
        object.__setattr__(self, "eigenvalues", eigenvalues)
        object.__setattr__(self, "vectors", vectors)

    def __len__(self) -> int:
        return int(self.eigenvalues.size)

    @property
    def is_empty(self) -> bool:
        return len(self) == 0

    def field(self, k: int) -> ScalarField:
        return ScalarField(self.grid, self.vectors[:, k])

    @property
    def pairs(self) -> List[Tuple[float, ScalarField]]:
        return [(float(e), self.field(k)) for k, e in enumerate(self.eigenvalues)]

    def gram(self) -> np.ndarray:
        """⟨ψ_k, ψ_l⟩ with cell weight; the identity up to round-off."""
        return self.vectors.T @ self.vectors * self.grid.cell_volume

    def rotated(self, rotation: np.ndarray) -> "SpectralBasis":
        """Basis ψ'_l = Σ_k ψ_k Q_{kl} for an orthogonal Q (same span).

        Rotations mix eigenvalues, so the result keeps the original list only
        as a label of the span.
        """
        rotation = np.asarray(rotation, dtype=float)
        return SpectralBasis(
            self.grid, self.operator_id, self.window, self.eigenvalues, self.vectors @ rotation
        )


def _residuals(op: DiscreteOperator, eigenvalues: np.ndarray, unit_vectors: np.ndarray) -> np.ndarray:
    if eigenvalues.size == 0:
        return np.zeros(0)
    r = op.matrix @ unit_vectors - unit_vectors * eigenvalues
    return np.linalg.norm(r, axis=0)


def _dense_solve(op: DiscreteOperator, window: EnergyWindow) -> Tuple[np.ndarray, np.ndarray]:
    eigenvalues, vectors = scipy.linalg.eigh(op.to_dense())
    keep = window.contains(eigenvalues)
    return eigenvalues[keep], vectors[:, keep]


def _shift_invert_solve(
    op: DiscreteOperator, window: EnergyWindow, initial_k: int = 16
) -> Tuple[np.ndarray, np.ndarray]:
    """Grow the shift-invert Lanczos subspace until it spans past the window."""
    size = op.grid.size
    bottom = op.lower_bound()
    lower = max(window.lower, bottom - 1.0)
    if window.upper < bottom - EDGE_TOLERANCE:
        return np.zeros(0), np.zeros((size, 0))
    centre = 0.5 * (lower + window.upper)
    radius = 0.5 * (window.upper - lower) + EDGE_TOLERANCE
    # keep the shift off an eigenvalue
    sigma = centre + 1e-7 * max(radius, 1.0)
    k = min(initial_k, size - 2)
    rng = np.random.default_rng(0)
    v0 = rng.standard_normal(size)
    while True:
        try:
            eigenvalues, vectors = eigsh(op.matrix.tocsc(), k=k, sigma=sigma, which="LM", v0=v0, tol=0.0)
        except ArpackNoConvergence as exc:
            residuals = _residuals(op, exc.eigenvalues, exc.eigenvectors)
            raise SolverError(
                f"shift-invert Lanczos did not converge for {op.label} with k={k}",
                residuals,
            ) from exc
        order = np.argsort(eigenvalues)
        eigenvalues, vectors = eigenvalues[order], vectors[:, order]
        reach = float(np.max(np.abs(eigenvalues - centre)))
        if reach > radius or k >= size - 2:
            break
        k = min(2 * k, size - 2)
        logger.debug("window %s not yet covered, growing Lanczos subspace to k=%d", window, k)
    if reach <= radius and k >= size - 2:
        logger.info("sparse solve exhausted; falling back to the dense eigensolver for %s", op.label)
        return _dense_solve(op, window)
    # degenerate clusters: re-orthonormalize
    keep = window.contains(eigenvalues)
    eigenvalues, vectors = eigenvalues[keep], vectors[:, keep]
    if vectors.shape[1]:
        q, _ = np.linalg.qr(vectors)
        vectors = q * np.sign(np.sum(q * vectors, axis=0))
    return eigenvalues, vectors


def spectrum_below(
    op: DiscreteOperator,
    window: EnergyWindow,
    *,
    dense_limit: int = DENSE_LIMIT,
    residual_tolerance: float = RESIDUAL_TOLERANCE,
) -> SpectralBasis:
    """All eigenpairs of ``op`` inside ``window`` with orthonormal eigenvectors."""
    if op.grid.size <= dense_limit:
        eigenvalues, vectors = _dense_solve(op, window)
    else:
        eigenvalues, vectors = _shift_invert_solve(op, window)

    residuals = _residuals(op, eigenvalues, vectors)
    bound = residual_tolerance * op.norm_estimate()
    if residuals.size and np.max(residuals) > bound:
        raise SolverError(
            f"eigenpair residual {np.max(residuals):.3e} exceeds {bound:.3e} for {op.label}",
            residuals,
        )
    if eigenvalues.size == 0:
        logger.info("window %s holds no spectrum of %s", window, op.label)
    weighted = vectors / np.sqrt(op.grid.cell_volume)
    return SpectralBasis(op.grid, op.label, window, eigenvalues, weighted)


def expand(basis: SpectralBasis, psi: ScalarField) -> np.ndarray:
    """Coefficients α_k = ⟨ψ_k, ψ⟩ (cell-weighted)."""
    basis.grid.check_same(psi.grid, "psi")
    return basis.vectors.T @ psi.values * basis.grid.cell_volume


def project(basis: SpectralBasis, psi: ScalarField) -> ScalarField:
    """Orthogonal projection Σ α_k ψ_k of ψ onto span(basis)."""
    return ScalarField(basis.grid, basis.vectors @ expand(basis, psi))


def combine(basis: SpectralBasis, coefficients: np.ndarray) -> ScalarField:
    return ScalarField(basis.grid, basis.vectors @ np.asarray(coefficients, dtype=float))


def random_in_range(basis: SpectralBasis, seed: Union[int, np.random.SeedSequence]) -> ScalarField:
    """Unit-norm element of span(basis) with standard normal coefficient direction."""
    if basis.is_empty:
        raise EmptyBasisError(f"cannot draw from an empty basis of {basis.operator_id}")
    rng = np.random.default_rng(seed)
    coefficients = rng.standard_normal(len(basis))
    coefficients /= np.linalg.norm(coefficients)
    return combine(basis, coefficients)


def write_basis_csv(basis: SpectralBasis, path: Union[str, Path]) -> None:
    """One row per eigenpair: eigenvalue followed by node values."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(f"# operator={basis.operator_id} window={basis.window}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["eigenvalue"] + [f"node{i}" for i in range(basis.grid.size)])
        for k, energy in enumerate(basis.eigenvalues):
            writer.writerow([repr(float(energy))] + [repr(float(v)) for v in basis.vectors[:, k]])


def read_basis_csv(
    path: Union[str, Path], grid: Grid, window: Optional[EnergyWindow] = None
) -> SpectralBasis:
    operator_id = Path(path).stem
    eigenvalues, columns = [], []
    with open(path, "r", encoding="utf-8", newline="") as f:
        lines = [line for line in f if not line.startswith("#")]
    for row in list(csv.reader(lines))[1:]:
        eigenvalues.append(float(row[0]))
        columns.append([float(v) for v in row[1:]])
    vectors = np.array(columns, dtype=float).T if columns else np.zeros((grid.size, 0))
    if window is None:
        top = max(eigenvalues) if eigenvalues else 0.0
        window = EnergyWindow.below(top)
    return SpectralBasis(grid, operator_id, window, np.array(eigenvalues), vectors)
