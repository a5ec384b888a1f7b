"""
Ghost-dimension extension F(x', y) = Σ α_k ψ_k(x') s_k(y) of a spectral
combination ψ to Λ_L × ℝ, with ΔF = VF and ∂_y F(x', 0) = ψ(x').
"""

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy import sparse

from ucplab.errors import EmptyBasisError, UndefinedRatioError, ValidationError
from ucplab.grid import ScalarField
from ucplab.operators import DiscreteOperator, build_schrodinger
from ucplab.spectral import SpectralBasis, expand

logger = logging.getLogger(__name__)

LINEAR_BRANCH = 1e-12
SINH_SCALE_LIMIT = 50.0


def s_case(E, y):
    """sinh(√E y)/√E for E > 0, y for E = 0, sin(√|E| y)/√|E| for E < 0."""
    E = np.asarray(E, dtype=float)
    y = np.asarray(y, dtype=float)
    E, y = np.broadcast_arrays(E, y)
    root = np.sqrt(np.abs(E))
    linear = np.abs(E) < LINEAR_BRANCH
    safe = np.where(linear, 1.0, root)
    result = np.where(
        linear,
        y,
        np.where(E > 0, np.sinh(safe * y), np.sin(safe * y)) / safe,
    )
    return result if result.ndim else float(result)


@dataclass(frozen=True, eq=False)
class ExtensionField:
    """F sampled on base nodes × y nodes; ``values`` has shape (ny, N)."""

    basis: SpectralBasis
    psi: ScalarField
    alphas: np.ndarray
    y_grid: np.ndarray
    values: np.ndarray = field(repr=False)

    @property
    def hy(self) -> float:
        return float(self.y_grid[1] - self.y_grid[0])

    @property
    def zero_index(self) -> int:
        return int(np.argmin(np.abs(self.y_grid)))

    def slice_at(self, iy: int) -> ScalarField:
        return ScalarField(self.basis.grid, self.values[iy])


def build_extension(
    basis: SpectralBasis,
    psi: ScalarField,
    Y: float = 1.0,
    ny: Optional[int] = None,
) -> ExtensionField:
    """Assemble F on [-Y, Y] with ``ny`` (odd) y nodes; by default hy matches h."""
    if basis.is_empty:
        raise EmptyBasisError(f"cannot extend with an empty basis of {basis.operator_id}")
    if not Y > 0:
        raise ValidationError("Y must be positive", f"got {Y}")
    if ny is None:
        half = max(2, int(round(Y / basis.grid.h)))
        ny = 2 * half + 1
    if ny < 5 or ny % 2 == 0:
        raise ValidationError("ny must be odd and at least 5 so that y = 0 is a node", f"got {ny}")

    top = float(np.max(basis.eigenvalues))
    if top * Y ** 2 > SINH_SCALE_LIMIT:
        logger.warning(
            "E*Y^2 = %.3g exceeds %g; sinh(sqrt(E) Y) grows to %.3g, consider a smaller Y",
            top * Y ** 2,
            SINH_SCALE_LIMIT,
            np.sinh(np.sqrt(top) * Y),
        )

    alphas = expand(basis, psi)
    y_grid = np.linspace(-Y, Y, ny)
    y_grid[ny // 2] = 0.0
    # S[k, iy] = s_k(y_iy)
    S = s_case(basis.eigenvalues[:, None], y_grid[None, :])
    values = (basis.vectors @ (alphas[:, None] * S)).T
    for array in (alphas, y_grid, values):
        array.setflags(write=False)
    return ExtensionField(basis, psi, alphas, y_grid, values)


@dataclass
class ExtensionResidual:
    l2_residual: float
    boundary_error: float


def _second_difference(ny: int, hy: float) -> sparse.csr_matrix:
    """Interior rows of the y second difference, shape (ny-2, ny)."""
    rows = np.repeat(np.arange(ny - 2), 3)
    cols = (np.arange(ny - 2)[:, None] + np.arange(3)[None, :]).reshape(-1)
    data = np.tile([1.0, -2.0, 1.0], ny - 2) / hy ** 2
    return sparse.coo_matrix((data, (rows, cols)), shape=(ny - 2, ny)).tocsr()


def residual(
    ext: ExtensionField, V: ScalarField, op: Optional[DiscreteOperator] = None
) -> ExtensionResidual:
    """Relative residual of ΔF = VF on interior y nodes and of ∂_y F(·, 0) = ψ.

    The base stencil is the discrete -Δ of the basis grid, or ``op.principal``
    when an operator is given.
    """
    grid = ext.basis.grid
    grid.check_same(V.grid, "potential")
    F = ext.values
    norm_F = np.linalg.norm(F)
    if norm_F == 0.0:
        raise UndefinedRatioError("extension vanishes identically; residual is undefined")

    if op is None:
        principal = build_schrodinger(grid.domain, grid.n).principal
    else:
        grid.check_same(op.grid, "operator")
        principal = op.principal
    hy = ext.hy
    interior = F[1:-1]
    base = -(principal @ interior.T).T
    lift = _second_difference(F.shape[0], hy) @ F
    R = base + lift - V.values[None, :] * interior
    l2_residual = float(np.linalg.norm(R) / norm_F)

    i0 = ext.zero_index
    if i0 + 2 >= F.shape[0]:
        raise ValidationError("the y grid needs two nodes above y = 0")
    derivative = (-3 * F[i0] + 4 * F[i0 + 1] - F[i0 + 2]) / (2 * hy)
    norm_psi = np.linalg.norm(ext.psi.values)
    if norm_psi == 0.0:
        raise UndefinedRatioError("boundary error relative to a zero field is undefined")
    boundary_error = float(np.linalg.norm(derivative - ext.psi.values) / norm_psi)
    return ExtensionResidual(l2_residual, boundary_error)


def write_extension_csv(ext: ExtensionField, path: Union[str, Path], every: int = 1) -> None:
    """Export y slices as rows (iy, y, node index columns, value)."""
    grid = ext.basis.grid
    index = np.indices(grid.shape).reshape(grid.d, -1).T
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(f"# operator={ext.basis.operator_id} modes={len(ext.basis)}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["iy", "y"] + [f"i{axis}" for axis in range(grid.d)] + ["value"])
        for iy in range(0, len(ext.y_grid), every):
            y = repr(float(ext.y_grid[iy]))
            for node, value in enumerate(ext.values[iy]):
                writer.writerow([iy, y] + list(index[node]) + [repr(float(value))])
