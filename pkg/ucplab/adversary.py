"""
Worst-case search over ball positions and potentials.

Projected random-direction descent with geometric step decay and multiple
restarts. The objective is the uncertainty constant λ_min, which is not
smooth at eigenvalue crossings, so no gradients are used.
"""

import csv
import enum
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Tuple, Union

import numpy as np

from ucplab.errors import ValidationError
from ucplab.geometry import BallArrangement, indicator
from ucplab.grid import Grid, ScalarField, cell_indices
from ucplab.observability import uncertainty_constant
from ucplab.operators import DiscreteOperator
from ucplab.spectral import EnergyWindow, spectrum_below

logger = logging.getLogger(__name__)

OperatorBuilder = Callable[[ScalarField], DiscreteOperator]


class SearchTarget(str, enum.Enum):
    CENTERS = "centers"
    POTENTIAL = "potential"
    BOTH = "both"


@dataclass(frozen=True)
class SearchConfig:
    target: SearchTarget = SearchTarget.CENTERS
    restarts: int = 5
    iterations: int = 50
    initial_step: float = 0.5
    decay: float = 0.7
    seed: int = 0
    K: float = 0.0
    workers: int = 1
    subsamples: int = 8

    def __post_init__(self):
        try:
            object.__setattr__(self, "target", SearchTarget(self.target))
        except ValueError:
            raise ValidationError("target must be centers, potential or both", f"got {self.target!r}") from None
        if self.restarts < 1:
            raise ValidationError("restarts must be at least 1", f"got {self.restarts}")
        if self.iterations < 0:
            raise ValidationError("iterations must be nonnegative", f"got {self.iterations}")
        if not self.initial_step > 0:
            raise ValidationError("initial step must be positive", f"got {self.initial_step}")
        if not 0 < self.decay < 1:
            raise ValidationError("step decay must be in (0, 1)", f"got {self.decay}")
        if not self.K >= 0:
            raise ValidationError("K must be nonnegative", f"got {self.K}")
        if self.workers < 1:
            raise ValidationError("workers must be at least 1", f"got {self.workers}")


@dataclass(frozen=True)
class TraceEntry:
    restart: int
    iteration: int
    value: float
    step: float


@dataclass
class SearchResult:
    best_value: float
    best_arrangement: BallArrangement
    best_potential: ScalarField
    trace: List[TraceEntry] = field(default_factory=list)
    restart_values: List[float] = field(default_factory=list)


class _Objective:
    """λ_min as a function of (center offsets, per-cell potential values)."""

    def __init__(
        self,
        build_operator: OperatorBuilder,
        grid: Grid,
        window: EnergyWindow,
        start: BallArrangement,
        subsamples: int,
    ):
        self.build_operator = build_operator
        self.grid = grid
        self.window = window
        self.start = start
        self.subsamples = subsamples
        m = max(grid.domain.lattice_extent(), 0)
        self.cell_shape = (2 * m + 1,) * grid.d
        self.cell_of_node = tuple(cell_indices(grid).T)

    def potential(self, cell_values: np.ndarray) -> ScalarField:
        return ScalarField(self.grid, cell_values.reshape(self.cell_shape)[self.cell_of_node])

    def arrangement(self, offsets: np.ndarray) -> BallArrangement:
        return self.start.with_offsets(offsets)

    def __call__(self, offsets: np.ndarray, cell_values: np.ndarray) -> float:
        op = self.build_operator(self.potential(cell_values))
        basis = spectrum_below(op, self.window)
        weight = indicator(self.arrangement(offsets), self.grid, self.subsamples)
        return uncertainty_constant(basis, weight)


def _run_restart(
    objective: _Objective,
    config: SearchConfig,
    restart: int,
) -> Tuple[float, np.ndarray, np.ndarray, List[TraceEntry]]:
    rng = np.random.default_rng([config.seed, restart])
    n_cells = len(objective.start)
    d = objective.grid.d
    margin = 0.5 - objective.start.delta
    move_centers = config.target in (SearchTarget.CENTERS, SearchTarget.BOTH)
    move_potential = config.target in (SearchTarget.POTENTIAL, SearchTarget.BOTH) and config.K > 0

    # box half-widths per coordinate, zero for frozen coordinates
    scale = np.concatenate(
        [np.full(n_cells * d, margin if move_centers else 0.0), np.full(n_cells, config.K if move_potential else 0.0)]
    )
    if restart == 0:
        x = np.concatenate([objective.start.offsets().reshape(-1), np.zeros(n_cells)])
    else:
        x = rng.uniform(-1.0, 1.0, scale.size) * scale

    def split(vector):
        return vector[: n_cells * d].reshape(n_cells, d), vector[n_cells * d:]

    def project(vector):
        return np.clip(vector, -scale, scale)

    value = objective(*split(x))
    step = config.initial_step
    trace = [TraceEntry(restart, 0, value, step)]
    if not np.any(scale > 0):
        logger.info("restart %d: feasible set is a single point", restart)
        return value, *split(x), trace

    for iteration in range(1, config.iterations + 1):
        direction = rng.standard_normal(scale.size) * scale
        direction /= max(np.linalg.norm(direction), 1e-300)
        improved = False
        for sign in (1.0, -1.0):
            candidate = project(x + sign * step * direction)
            candidate_value = objective(*split(candidate))
            if candidate_value < value:
                x, value, improved = candidate, candidate_value, True
                break
        if not improved:
            step *= config.decay
        trace.append(TraceEntry(restart, iteration, value, step))
    logger.debug("restart %d finished at %.6g", restart, value)
    return value, *split(x), trace


def minimize_ratio(
    build_operator: OperatorBuilder,
    grid: Grid,
    window: EnergyWindow,
    start: BallArrangement,
    config: SearchConfig,
) -> SearchResult:
    """Smallest λ_min found over feasible centers and/or potentials.

    Restart 0 starts from ``start`` with V ≡ 0; later restarts start from
    uniform feasible points. Restarts run concurrently and are merged by
    minimum with ties going to the lower restart index.
    """
    if grid.domain != start.domain:
        raise ValidationError("search grid and start arrangement live on different cubes")
    objective = _Objective(build_operator, grid, window, start, config.subsamples)

    with ThreadPoolExecutor(max_workers=min(config.workers, config.restarts)) as executor:
        outcomes = list(executor.map(lambda r: _run_restart(objective, config, r), range(config.restarts)))

    best = min(range(config.restarts), key=lambda r: (outcomes[r][0], r))
    best_value, offsets, cell_values, _ = outcomes[best]

    trace, running = [], float("inf")
    for _, _, _, entries in outcomes:
        for entry in entries:
            running = min(running, entry.value)
            trace.append(TraceEntry(entry.restart, entry.iteration, running, entry.step))

    return SearchResult(
        best_value=float(best_value),
        best_arrangement=objective.arrangement(offsets),
        best_potential=objective.potential(cell_values),
        trace=trace,
        restart_values=[float(o[0]) for o in outcomes],
    )


def write_trace_csv(result: SearchResult, path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["restart", "iteration", "value", "step"])
        for entry in result.trace:
            writer.writerow([entry.restart, entry.iteration, repr(entry.value), repr(entry.step)])

