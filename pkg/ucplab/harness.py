"""
Experiment configuration, deterministic seeding, sweep orchestration and CSV emission.
"""

import csv
import dataclasses
import json
import logging
import os
import typing
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ucplab.adversary import SearchConfig, SearchTarget, minimize_ratio
from ucplab.carleman import (
    CarlemanWeight,
    check_weight_bounds,
    estimate_C2,
    log_radial_bump,
    sample_unit_ball,
)
from ucplab.errors import SchemaMismatchError, UCPLabError, ValidationError
from ucplab.extension import build_extension, residual, write_extension_csv
from ucplab.geometry import (
    ArrangementMode,
    Ball,
    QUCGeometry,
    QUCVariant,
    check_quc_hypotheses,
    covers,
    make_arrangement,
    write_arrangement_csv,
)
from ucplab.grid import (
    BoundaryCondition,
    CoefficientField,
    Domain,
    Grid,
    ScalarField,
    alloy_potential,
    constant_potential,
    random_potential,
    read_coefficients_csv,
    sinusoidal_potential,
    write_field_csv,
    zero_potential,
)
from ucplab.observability import BoundParams, chain_check, empirical_quc, fit_exponent, observe
from ucplab.operators import DiscreteOperator, EllipticityParams, build_elliptic, build_schrodinger
from ucplab.shannon import SamplingProblem, gaussian, reconstruct, sinc_span, verify_aliasing
from ucplab.spectral import EnergyWindow, random_in_range, spectrum_below, write_basis_csv

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SEED_SCHEME = (
    "numpy SeedSequence(root_seed, spawn_key=(seed, stream)); "
    "streams 0=potential 1=arrangement 2=draw"
)
POTENTIAL_STREAM, ARRANGEMENT_STREAM, DRAW_STREAM = 0, 1, 2

EXPERIMENTS = (
    "spectrum",
    "observability",
    "sweep",
    "adversarial",
    "shannon",
    "carleman",
    "extend",
    "quc-check",
)
POTENTIALS = ("zero", "constant", "sinusoidal", "random", "alloy")
SUMMARY_COLUMNS = ("L", "delta", "lambda_min")


def default_workers() -> int:
    """UCPLAB_WORKERS, else 1."""
    raw = os.environ.get("UCPLAB_WORKERS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        logger.warning("ignoring UCPLAB_WORKERS=%r, expected a positive integer", raw)
        return 1


@dataclass
class ExperimentConfig:
    """Every parameter an experiment can read; validated before any compute."""

    experiment: str = "observability"
    output: Optional[str] = None
    # geometry and operator
    d: int = 1
    bc: str = "dirichlet"
    L: List[float] = field(default_factory=lambda: [3.0])
    delta: List[float] = field(default_factory=lambda: [0.2])
    n: Optional[int] = None
    resolution: float = 16.0
    subsamples: int = 8
    operator: str = "schrodinger"
    coefficients: Optional[str] = None
    potential: str = "zero"
    arrangement: str = "periodic"
    jitter_seed: Optional[int] = None
    jitter_amp: float = 0.0
    # energies and bound constants
    E: float = 10.0
    a: Optional[float] = None
    K: float = 0.0
    N: float = 1.0
    M_d: float = 1.0
    mu: float = 1.0
    theta1: float = 1.0
    theta2: float = 0.0
    # seeding and concurrency
    seeds: List[int] = field(default_factory=lambda: [0])
    root_seed: int = 0
    workers: int = field(default_factory=default_workers)
    # adversarial search
    target: str = "centers"
    restarts: int = 5
    iterations: int = 50
    initial_step: float = 0.5
    decay: float = 0.7
    # shannon
    fixture: str = "gaussian"
    bandwidth: List[float] = field(default_factory=lambda: [1.0])
    truncation: int = 200
    jitter: float = 0.0
    noise: float = 0.0
    x_min: float = -2.0
    x_max: float = 2.0
    points: int = 401
    # carleman
    alphas: List[float] = field(default_factory=lambda: [float(a) for a in range(3, 21)])
    bump_radii: List[float] = field(default_factory=lambda: [0.3, 0.4, 0.5])
    bump_width: float = 0.15
    weight_points: int = 10_000
    # extension
    Y: float = 1.0
    ny: Optional[int] = None
    basis_output: Optional[str] = None
    slices_output: Optional[str] = None
    # quantitative unique continuation
    variant: str = "schrodinger"
    quc_x: List[float] = field(default_factory=lambda: [0.0])
    quc_delta: float = 0.5
    R: float = 1.0
    D0: float = 0.0
    theta_center: List[float] = field(default_factory=lambda: [1.2])
    theta_radius: float = 0.1
    G_radius: float = 14.5

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any]) -> "ExperimentConfig":
        hints = typing.get_type_hints(cls)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ValidationError("unknown configuration keys", ", ".join(unknown))
        coerced = {key: _coerce(key, raw, hints[key]) for key, raw in values.items()}
        return cls(**coerced)

    @property
    def output_path(self) -> Path:
        return Path(self.output) if self.output else Path(f"{self.experiment}.csv")

    @property
    def window(self) -> EnergyWindow:
        if self.a is None:
            return EnergyWindow.below(self.E)
        return EnergyWindow.interval(self.a, self.E)

    def bound_params(self) -> BoundParams:
        return BoundParams(K=self.K, E=self.E, N=self.N, M_d=self.M_d, a=self.a, b=self.E, R=self.R, D0=self.D0)

    def grid_for(self, L: float) -> Grid:
        domain = Domain(self.d, L, BoundaryCondition(self.bc))
        if self.n is not None:
            return Grid(domain, self.n)
        return Grid.for_resolution(domain, self.resolution)

    def validate(self) -> None:
        """Raise ValidationError naming the first violated precondition."""
        if self.experiment not in EXPERIMENTS:
            raise ValidationError(f"experiment must be one of {', '.join(EXPERIMENTS)}", f"got {self.experiment!r}")
        _require(self.d >= 1, "d must be a positive integer", self.d)
        _require(self.bc in {b.value for b in BoundaryCondition}, "bc must be dirichlet or periodic", self.bc)
        _require(len(self.L) > 0 and all(L > 0 for L in self.L), "L must be positive", self.L)
        _require(len(self.delta) > 0, "at least one delta is needed", self.delta)
        for delta in self.delta:
            _require(0 < delta < 0.5, "delta must be in (0, 1/2)", delta)
        _require(self.resolution > 0, "resolution must be positive", self.resolution)
        _require(self.subsamples >= 1, "subsamples must be at least 1", self.subsamples)
        _require(self.operator in ("schrodinger", "elliptic"), "operator must be schrodinger or elliptic", self.operator)
        _require(self.potential in POTENTIALS, f"potential must be one of {', '.join(POTENTIALS)}", self.potential)
        _require(self.K >= 0, "K must be nonnegative", self.K)
        _require(self.N > 0, "N must be positive", self.N)
        _require(self.M_d > 0, "M_d must be positive", self.M_d)
        _require(self.mu > 0, "mu must be positive", self.mu)
        _require(self.theta1 > 0, "theta1 must be positive", self.theta1)
        _require(self.theta2 >= 0, "theta2 must be nonnegative", self.theta2)
        _require(self.a is None or self.a <= self.E, "interval needs a <= E", self.a)
        _require(len(self.seeds) > 0, "at least one seed is needed", self.seeds)
        _require(self.workers >= 1, "workers must be at least 1", self.workers)
        _require(self.arrangement in ("periodic", "jitter"), "arrangement must be periodic or jitter", self.arrangement)
        if self.arrangement == "jitter":
            for delta in self.delta:
                _require(0 <= self.jitter_amp <= 0.5 - delta, "jitter amplitude must be in [0, 1/2 - delta]", self.jitter_amp)
        if self.experiment in ("observability", "sweep"):
            _require(self.E >= 0, "E must be nonnegative", self.E)
        if self.experiment == "adversarial":
            _require(self.target in {t.value for t in SearchTarget}, "target must be centers, potential or both", self.target)
            _require(self.restarts >= 1, "restarts must be at least 1", self.restarts)
            _require(self.iterations >= 0, "iterations must be nonnegative", self.iterations)
            _require(self.initial_step > 0, "initial step must be positive", self.initial_step)
            _require(0 < self.decay < 1, "step decay must be in (0, 1)", self.decay)
        if self.experiment == "shannon":
            _require(self.fixture in ("gaussian", "sinc-span"), "fixture must be gaussian or sinc-span", self.fixture)
            _require(all(b > 0 for b in self.bandwidth), "bandwidth must be positive", self.bandwidth)
            _require(self.truncation >= 1, "truncation J must be at least 1", self.truncation)
            _require(self.jitter >= 0 and self.noise >= 0, "jitter and noise must be nonnegative", (self.jitter, self.noise))
            _require(self.x_min < self.x_max and self.points >= 2, "evaluation grid needs x_min < x_max and 2 points", self.points)
        if self.experiment == "carleman":
            _require(all(a > 0 for a in self.alphas), "alpha must be positive", self.alphas)
            for radius in self.bump_radii:
                _require(
                    self.bump_width > 0
                    and 0.05 <= radius * np.exp(-4 * self.bump_width)
                    and radius * np.exp(4 * self.bump_width) <= 0.95,
                    "bumps must keep four log-widths inside 0.05 <= |x| <= 0.95",
                    radius,
                )
        if self.experiment == "extend":
            _require(self.Y > 0, "Y must be positive", self.Y)
            _require(self.ny is None or (self.ny >= 5 and self.ny % 2 == 1), "ny must be odd and at least 5", self.ny)
        if self.experiment == "quc-check":
            _require(self.variant in {v.value for v in QUCVariant}, "variant must be schrodinger or elliptic", self.variant)
            _require(self.R > 0, "R must be positive", self.R)
            _require(self.quc_delta > 0, "delta must be positive", self.quc_delta)
            _require(len(self.quc_x) == self.d and len(self.theta_center) == self.d, "x and Theta center need d coordinates", self.quc_x)
        # constructing the grids checks n and the three-dimensional limit
        for L in self.L:
            self.grid_for(L)


def _require(condition: bool, precondition: str, value: Any) -> None:
    if not condition:
        raise ValidationError(precondition, f"got {value!r}")


def _split_list(raw: Any) -> list:
    if isinstance(raw, (list, tuple)):
        return list(raw)
    text = str(raw).strip().strip("[]")
    return [part.strip() for part in text.split(",") if part.strip()]


def _coerce(key: str, raw: Any, annotation: Any) -> Any:
    origin = typing.get_origin(annotation)
    args = typing.get_args(annotation)
    if origin is typing.Union and type(None) in args:
        if raw is None or (isinstance(raw, str) and raw.strip().lower() in ("", "none", "null")):
            return None
        annotation = next(a for a in args if a is not type(None))
        origin = typing.get_origin(annotation)
        args = typing.get_args(annotation)
    try:
        if origin in (list, List):
            return [_coerce(key, item, args[0]) for item in _split_list(raw)]
        if annotation is bool:
            return raw if isinstance(raw, bool) else str(raw).strip().lower() in ("1", "true", "yes", "on")
        if annotation is int:
            value = float(raw)
            if value != int(value):
                raise ValueError
            return int(value)
        if annotation is float:
            return float(raw)
        return str(raw).strip()
    except (TypeError, ValueError):
        raise ValidationError(f"{key} has the wrong type", f"could not read {raw!r}") from None


def parse_key_value(text: str) -> Dict[str, str]:
    """Flat ``key = value`` text; '#' starts a comment, lists are comma separated."""
    values = {}
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError("config lines must read key = value", f"line {number}: {line!r}")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def load_config(config_file: str) -> Dict[str, Any]:
    """Load a JSON or key=value configuration file by suffix."""
    text = Path(config_file).read_text(encoding="utf-8")
    if Path(config_file).suffix.lower() == ".json":
        values = json.loads(text)
        if not isinstance(values, dict):
            raise ValidationError("a JSON config must hold one object", f"found {type(values).__name__}")
        return values
    return parse_key_value(text)


# ---------------------------------------------------------------------------
# Seeding and per-task construction
# ---------------------------------------------------------------------------

def task_seed(root_seed: int, seed: int, stream: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(root_seed, spawn_key=(int(seed), int(stream)))


def make_potential(config: ExperimentConfig, grid: Grid, seed: int) -> ScalarField:
    rng_seed = task_seed(config.root_seed, seed, POTENTIAL_STREAM)
    if config.potential == "zero":
        return zero_potential(grid)
    if config.potential == "constant":
        return constant_potential(grid, config.K)
    if config.potential == "sinusoidal":
        return sinusoidal_potential(grid, config.K)
    if config.potential == "random":
        return random_potential(grid, config.K, rng_seed)
    return alloy_potential(grid, config.K, rng_seed)


def _coefficients(config: ExperimentConfig, grid: Grid) -> CoefficientField:
    if config.coefficients:
        return read_coefficients_csv(config.coefficients, grid)
    return CoefficientField.identity(grid)


def make_operator(config: ExperimentConfig, grid: Grid, V: ScalarField) -> DiscreteOperator:
    if config.operator == "elliptic":
        return build_elliptic(grid.domain, grid.n, _coefficients(config, grid), V)
    return build_schrodinger(grid.domain, grid.n, V)


def _arrangement(config: ExperimentConfig, domain: Domain, delta: float, seed: int):
    if config.arrangement == "jitter":
        jitter_seed = config.jitter_seed
        if jitter_seed is None:
            jitter_seed = task_seed(config.root_seed, seed, ARRANGEMENT_STREAM)
        return make_arrangement(domain, delta, ArrangementMode.JITTER, seed=jitter_seed, amplitude=config.jitter_amp)
    return make_arrangement(domain, delta, ArrangementMode.PERIODIC)


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------

@dataclass
class ResultTable:
    columns: List[str]
    rows: List[Dict[str, Any]] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)
    extra_paths: List[Path] = field(default_factory=list)

    @property
    def errors(self) -> int:
        return sum(1 for row in self.rows if row.get("error"))


@dataclass
class RunResult:
    status: int
    path: Path
    rows: int
    errors: int
    extra_paths: List[Path] = field(default_factory=list)


def format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_results(path: Path, config: ExperimentConfig, table: ResultTable) -> None:
    """CSV with '#' header comments: schema version, root seed, seed scheme, notes."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(f"# ucplab schema={SCHEMA_VERSION} experiment={config.experiment}\n")
        f.write(f"# root_seed={config.root_seed} seed_scheme={SEED_SCHEME}\n")
        for note in table.notes:
            f.write(f"# {note}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(table.columns)
        for row in table.rows:
            writer.writerow([format_value(row.get(column)) for column in table.columns])


def _guarded(task: Dict[str, Any], fn: Callable[[], List[Dict[str, Any]]]) -> List[Dict[str, Any]]:
    """Run one task; a failure becomes a row carrying the error text."""
    try:
        rows = fn()
    except Exception as exc:
        logger.warning("task %s failed: %s", task, exc)
        return [dict(task, error=f"{type(exc).__name__}: {exc}")]
    return [dict(task, **row) for row in rows]


def _map_tasks(config: ExperimentConfig, tasks: List[Dict[str, Any]], work) -> List[Dict[str, Any]]:
    """Run tasks concurrently; rows come back in task (sorted-parameter) order."""
    with ThreadPoolExecutor(max_workers=min(config.workers, max(len(tasks), 1))) as executor:
        batches = list(executor.map(lambda t: _guarded(t, lambda: work(t)), tasks))
    return [row for batch in batches for row in batch]


def _product_tasks(config: ExperimentConfig) -> List[Dict[str, Any]]:
    return [
        {"L": L, "delta": delta, "seed": seed}
        for L in sorted(config.L)
        for delta in sorted(config.delta)
        for seed in sorted(config.seeds)
    ]


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------

def _run_spectrum(config: ExperimentConfig) -> ResultTable:
    columns = ["L", "seed", "n", "h", "k", "eigenvalue", "error"]
    tasks = [{"L": L, "seed": seed} for L in sorted(config.L) for seed in sorted(config.seeds)]
    bases = {}

    def work(task):
        grid = config.grid_for(task["L"])
        op = make_operator(config, grid, make_potential(config, grid, task["seed"]))
        basis = spectrum_below(op, config.window)
        bases[(task["L"], task["seed"])] = basis
        return [
            {"n": grid.n, "h": grid.h, "k": k + 1, "eigenvalue": float(e)}
            for k, e in enumerate(basis.eigenvalues)
        ]

    table = ResultTable(columns, _map_tasks(config, tasks, work), [f"window={config.window}"])
    if config.basis_output and tasks:
        first = (tasks[0]["L"], tasks[0]["seed"])
        if first in bases:
            write_basis_csv(bases[first], config.basis_output)
            table.extra_paths.append(Path(config.basis_output))
    return table


def _observe_task(config: ExperimentConfig, task: Dict[str, Any]) -> Dict[str, Any]:
    grid = config.grid_for(task["L"])
    op = make_operator(config, grid, make_potential(config, grid, task["seed"]))
    basis = spectrum_below(op, config.window)
    arr = _arrangement(config, grid.domain, task["delta"], task["seed"])
    report = observe(
        basis,
        arr,
        config.bound_params(),
        seed=task_seed(config.root_seed, task["seed"], DRAW_STREAM),
        subsamples=config.subsamples,
    )
    row = {
        "E": config.E,
        "K": config.K,
        "n": grid.n,
        "modes": len(basis),
        "ratio": report.ratio,
        "lambda_min": report.lambda_min,
        "bound_sfuc": report.bound_sfuc,
        "bound_klein": report.bound_klein,
        "klein_regime": report.klein_regime,
    }
    if config.experiment == "sweep" and config.a is not None:
        chain = chain_check(op, arr, config.a, config.E)
        row["C_interval"] = chain.C_interval
        row["C_halfline"] = chain.C_halfline
        row["chain_holds"] = chain.holds
    return row


def _run_observability(config: ExperimentConfig) -> ResultTable:
    columns = ["L", "delta", "E", "K", "seed", "n", "modes", "ratio", "lambda_min", "bound_sfuc", "bound_klein", "klein_regime"]
    if config.experiment == "sweep" and config.a is not None:
        columns += ["C_interval", "C_halfline", "chain_holds"]
    columns.append("error")
    rows = _map_tasks(config, _product_tasks(config), lambda t: [_observe_task(config, t)])
    notes = [f"window={config.window}", "N and M_d are not explicit in the theory; values used are inputs"]
    if config.d > 1:
        notes.append("Klein regime needs L >= 72 sqrt(d); d > 1 rows report the formula only")
    return ResultTable(columns, rows, notes)


def _run_adversarial(config: ExperimentConfig) -> ResultTable:
    columns = ["L", "delta", "restart", "iteration", "value", "step", "error"]
    tasks = [{"L": L, "delta": delta} for L in sorted(config.L) for delta in sorted(config.delta)]
    seed = sorted(config.seeds)[0]
    notes, extra = [], []
    stem = config.output_path.with_suffix("")

    def work(task):
        grid = config.grid_for(task["L"])
        start = make_arrangement(grid.domain, task["delta"], ArrangementMode.PERIODIC)
        search = SearchConfig(
            target=config.target,
            restarts=config.restarts,
            iterations=config.iterations,
            initial_step=config.initial_step,
            decay=config.decay,
            seed=int(task_seed(config.root_seed, seed, ARRANGEMENT_STREAM).generate_state(1)[0]),
            K=config.K,
            workers=config.workers,
            subsamples=config.subsamples,
        )

        def build(V):
            return make_operator(config, grid, V)

        result = minimize_ratio(build, grid, config.window, start, search)
        label = f"L{task['L']:g}_delta{task['delta']:g}"
        arrangement_path = Path(f"{stem}_{label}_arrangement.csv")
        potential_path = Path(f"{stem}_{label}_potential.csv")
        write_arrangement_csv(result.best_arrangement, arrangement_path)
        write_field_csv(result.best_potential, potential_path)
        extra.extend([arrangement_path, potential_path])
        notes.append(
            f"{label}: best_value={result.best_value!r} periodic_value={result.trace[0].value!r}"
        )
        return [
            {"restart": e.restart, "iteration": e.iteration, "value": e.value, "step": e.step}
            for e in result.trace
        ]

    rows = _map_tasks(config, tasks, work)
    table = ResultTable(columns, rows, sorted(notes))
    table.extra_paths.extend(sorted(extra))
    return table


def _shannon_fixture(config: ExperimentConfig, bandwidth: float):
    if config.fixture == "gaussian":
        return gaussian()
    rng = np.random.default_rng(task_seed(config.root_seed, sorted(config.seeds)[0], DRAW_STREAM))
    shifts = np.arange(-5, 6)
    return sinc_span(rng.standard_normal(shifts.size), shifts, bandwidth)


def _run_shannon(config: ExperimentConfig) -> ResultTable:
    xs = np.linspace(config.x_min, config.x_max, config.points)
    rows, notes = [], []
    for bandwidth in sorted(config.bandwidth):
        f, fhat = _shannon_fixture(config, bandwidth)
        try:
            report = verify_aliasing(f, fhat, bandwidth, xs, config.truncation)
        except UCPLabError as exc:
            rows.append({"bandwidth": bandwidth, "error": str(exc)})
            continue
        notes.append(
            f"bandwidth={bandwidth:g} verdict={report.verdict.value} J={report.truncation} "
            f"sup_error={report.sup_error!r} bound={report.bound!r} allowance={report.allowance!r}"
        )
        problem = SamplingProblem.from_function(
            f,
            bandwidth,
            report.truncation,
            jitter_amplitude=config.jitter,
            jitter_seed=config.jitter_seed if config.jitter_seed is not None else config.root_seed,
            noise_amplitude=config.noise,
        )
        exact = f(xs)
        approx = reconstruct(problem, xs)
        for x, fx, sx in zip(xs, exact, approx):
            rows.append({"bandwidth": bandwidth, "x": float(x), "f": float(fx), "S_K_f": float(sx), "error": ""})
    if config.jitter or config.noise:
        notes.append(f"samples perturbed: jitter={config.jitter:g} noise={config.noise:g} (no bound claimed)")
    for row in rows:
        if "S_K_f" in row:
            row["abs_error"] = abs(row["f"] - row["S_K_f"])
    columns = ["bandwidth", "x", "f", "S_K_f", "abs_error", "error"]
    return ResultTable(columns, rows, notes)


def _run_carleman(config: ExperimentConfig) -> ResultTable:
    columns = ["alpha", "radius", "lhs_grad", "lhs_cube", "rhs", "ratio"]
    domain = Domain(config.d, 2.0, BoundaryCondition.DIRICHLET)
    grid = Grid(domain, config.n) if config.n is not None else Grid.for_resolution(domain, config.resolution)
    op = make_operator(config, grid, zero_potential(grid))
    weight = CarlemanWeight.for_operator(op, config.mu)
    radii = sorted(config.bump_radii)
    family = [log_radial_bump(grid, r, config.bump_width) for r in radii]
    estimate = estimate_C2(weight, op, family, sorted(config.alphas))
    rows = [
        {
            "alpha": row["alpha"],
            "radius": radii[row["field"]],
            "lhs_grad": row["lhs_grad"],
            "lhs_cube": row["lhs_cube"],
            "rhs": row["rhs"],
            "ratio": row["ratio"],
        }
        for row in estimate.per_alpha
    ]
    points = sample_unit_ball(config.d, config.weight_points, config.root_seed)
    bounds = check_weight_bounds(weight, config.theta1, points)
    notes = [
        f"sup_ratio={estimate.sup_ratio!r} C3={weight.C3!r} mu={config.mu!r}",
        f"weight_bounds violations={bounds.violations} margin={bounds.margin!r} points={bounds.points_checked}",
    ]
    return ResultTable(columns, rows, notes)


def _run_extend(config: ExperimentConfig) -> ResultTable:
    columns = ["L", "seed", "n", "modes", "ny", "l2_residual", "boundary_error", "error"]
    tasks = [{"L": L, "seed": seed} for L in sorted(config.L) for seed in sorted(config.seeds)]
    extensions = {}

    def work(task):
        grid = config.grid_for(task["L"])
        V = make_potential(config, grid, task["seed"])
        op = make_operator(config, grid, V)
        basis = spectrum_below(op, config.window)
        psi = random_in_range(basis, task_seed(config.root_seed, task["seed"], DRAW_STREAM))
        ext = build_extension(basis, psi, config.Y, config.ny)
        extensions[(task["L"], task["seed"])] = ext
        result = residual(ext, V, op)
        return [
            {
                "n": grid.n,
                "modes": len(basis),
                "ny": len(ext.y_grid),
                "l2_residual": result.l2_residual,
                "boundary_error": result.boundary_error,
            }
        ]

    table = ResultTable(columns, _map_tasks(config, tasks, work), [f"window={config.window} Y={config.Y:g}"])
    if config.slices_output and tasks:
        first = (tasks[0]["L"], tasks[0]["seed"])
        if first in extensions:
            write_extension_csv(extensions[first], config.slices_output)
            table.extra_paths.append(Path(config.slices_output))
    return table


def _run_quc_check(config: ExperimentConfig) -> ResultTable:
    columns = ["item", "value"]
    geo = QUCGeometry(
        x=config.quc_x,
        R=config.R,
        delta=config.quc_delta,
        theta=Ball(config.theta_center, config.theta_radius),
        G=Ball(np.zeros(config.d), config.G_radius),
        D0=config.D0,
    )
    params = EllipticityParams(12 * config.R + 2 * config.D0, config.theta1, config.theta2)
    grid = config.grid_for(sorted(config.L)[-1])
    coefficients = _coefficients(config, grid) if config.coefficients else None
    report = check_quc_hypotheses(geo, config.variant, params, config.mu, coefficients)
    rows = [{"item": name, "value": ok} for name, ok in report.clauses.items()]
    rows.append({"item": "holds", "value": report.holds})
    if report.C3 is not None:
        rows.append({"item": "C3", "value": report.C3})
    notes = list(report.notes)

    if covers(grid, geo.G):
        V = make_potential(config, grid, sorted(config.seeds)[0])
        op = make_operator(config, grid, V)
        basis = spectrum_below(op, config.window)
        if basis.is_empty:
            notes.append(f"window {config.window} holds no spectrum; no field to measure")
        else:
            measured = empirical_quc(
                basis.field(0), geo, V, op=op, variant=config.variant, params=params, mu=config.mu
            )
            rows.append({"item": "ratio_delta_theta", "value": measured.ratio_delta_theta})
            rows.append({"item": "beta_observed", "value": measured.beta_observed})
    else:
        notes.append(f"G is not inside the cube of side {grid.domain.L:g}; only geometric clauses evaluated")
    return ResultTable(columns, rows, notes)


RUNNERS: Dict[str, Callable[[ExperimentConfig], ResultTable]] = {
    "spectrum": _run_spectrum,
    "observability": _run_observability,
    "sweep": _run_observability,
    "adversarial": _run_adversarial,
    "shannon": _run_shannon,
    "carleman": _run_carleman,
    "extend": _run_extend,
    "quc-check": _run_quc_check,
}


def run(config: ExperimentConfig) -> RunResult:
    """Validate, run one experiment and write its CSV.

    A failing sweep row is recorded in its ``error`` column and the run goes on.
    """
    config.validate()
    logger.info("running %s with %d worker(s)", config.experiment, config.workers)
    table = RUNNERS[config.experiment](config)
    path = config.output_path
    write_results(path, config, table)
    if table.errors:
        logger.warning("%d of %d rows failed; see the error column of %s", table.errors, len(table.rows), path)
    return RunResult(0, path, len(table.rows), table.errors, table.extra_paths)


# ---------------------------------------------------------------------------
# Summaries
# ---------------------------------------------------------------------------

@dataclass
class SummaryTable:
    columns: List[str]
    rows: List[Dict[str, Any]]
    overall_min: Optional[float]
    sources: List[str] = field(default_factory=list)


def read_results(path: str) -> Tuple[List[str], List[Dict[str, str]]]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(line for line in f if not line.startswith("#"))
        rows = list(reader)
        columns = list(reader.fieldnames or [])
    return columns, rows


def report_summary(paths: Sequence[str]) -> SummaryTable:
    """Per-L min/max λ_min and, where δ varies, the fitted exponent of λ_min in δ."""
    if not paths:
        raise ValidationError("report_summary needs at least one CSV file")
    samples: Dict[float, List[Tuple[float, float]]] = {}
    for path in paths:
        columns, rows = read_results(path)
        missing = [c for c in SUMMARY_COLUMNS if c not in columns]
        if missing:
            raise SchemaMismatchError(str(path), missing)
        for row in rows:
            if row.get("error") or not row["lambda_min"]:
                continue
            samples.setdefault(float(row["L"]), []).append((float(row["delta"]), float(row["lambda_min"])))

    columns = ["L", "rows", "min_lambda_min", "max_lambda_min", "slope", "r2"]
    table_rows = []
    for L in sorted(samples):
        values = [c for _, c in samples[L]]
        row = {
            "L": L,
            "rows": len(values),
            "min_lambda_min": min(values),
            "max_lambda_min": max(values),
            "slope": None,
            "r2": None,
        }
        if len({d for d, _ in samples[L]}) > 1:
            try:
                fit = fit_exponent(samples[L])
                row["slope"], row["r2"] = fit.slope, fit.r2
            except ValidationError as exc:
                logger.info("no exponent fit for L=%g: %s", L, exc)
        table_rows.append(row)
    overall = min((r["min_lambda_min"] for r in table_rows), default=None)
    return SummaryTable(columns, table_rows, overall, [str(p) for p in paths])
