"""
Error types and error message rendering for the unique continuation lab
"""

from typing import TYPE_CHECKING, Any, Iterable, Optional, Sequence

# Import optional dependencies
try:
    from rich.console import Console
    from rich.panel import Panel
    from rich.text import Text
    RICH_AVAILABLE = True
    console = Console(stderr=True)
except ImportError:
    RICH_AVAILABLE = False
    console = None
    # For type hints when Rich is not available
    if TYPE_CHECKING:
        from rich.text import Text
    else:
        Text = Any  # type: ignore

USAGE_HINT = "ucplab <experiment> -c config.cfg -o results.csv"


class UCPLabError(Exception):
    """Base class for every error raised by ucplab."""

    title = "Error"


class ValidationError(UCPLabError, ValueError):
    """A precondition of an operation or experiment is violated."""

    title = "Invalid Parameters"

    def __init__(self, precondition: str, detail: Optional[str] = None):
        self.precondition = precondition
        self.detail = detail
        message = precondition if detail is None else f"{precondition} ({detail})"
        super().__init__(message)


class InvalidGridError(ValidationError):
    """Grid parameters cannot describe a discretization."""

    title = "Invalid Grid"


class GridMismatchError(UCPLabError):
    """Two objects live on different grids."""

    title = "Dimension Error"


class CoverageError(UCPLabError):
    """A requested region is not covered by the gridded domain."""

    title = "Coverage Error"


class NonSymmetricCoefficientError(UCPLabError):
    """Coefficient matrix a^{ij} is not symmetric at some node."""

    title = "Non-symmetric Coefficients"


class NonEllipticCoefficientError(UCPLabError):
    """Quadratic form of a^{ij} is not positive at some node."""

    title = "Non-elliptic Coefficients"


class SolverError(UCPLabError):
    """The eigensolver did not converge or produced inaccurate pairs."""

    title = "Eigensolver Failure"

    def __init__(self, message: str, residuals: Optional[Sequence[float]] = None):
        self.residuals = list(residuals) if residuals is not None else []
        super().__init__(message)


class EmptyBasisError(UCPLabError):
    """An operation needs at least one eigenpair but the basis is empty."""

    title = "Empty Spectral Basis"


class UndefinedRatioError(UCPLabError):
    """A ratio of integrals has a vanishing denominator."""

    title = "Undefined Ratio"


class InfeasibleArrangementError(ValidationError):
    """A ball center violates B(x_j, delta) ⊂ Λ_1 + j."""

    title = "Infeasible Arrangement"

    def __init__(self, index: tuple, center: Iterable[float], delta: float):
        self.index = tuple(int(i) for i in index)
        self.center = tuple(float(c) for c in center)
        self.delta = delta
        super().__init__(
            f"ball {self.index} violates containment",
            f"center {self.center} with delta {delta} leaves the unit cell",
        )


class DomainError(ValidationError):
    """An argument lies outside the domain of a formula."""

    title = "Domain Error"


class DivergentTailError(UCPLabError):
    """Quadrature of a Fourier tail did not converge."""

    title = "Divergent Tail"


class SupportError(UCPLabError):
    """A test function is not supported where the Carleman estimate needs it."""

    title = "Support Violation"

    def __init__(self, message: str, offending_nodes: Sequence[int]):
        self.offending_nodes = list(offending_nodes)
        super().__init__(f"{message}: {len(self.offending_nodes)} offending nodes")


class SchemaMismatchError(UCPLabError):
    """A CSV file does not carry the columns an aggregation needs."""

    title = "Schema Mismatch"

    def __init__(self, path: str, missing: Sequence[str]):
        self.path = path
        self.missing = list(missing)
        super().__init__(f"{path} is missing columns: {', '.join(self.missing)}")


def _add_usage_hint(error_text: "Text") -> None:
    """Add usage hint to error message."""
    if RICH_AVAILABLE:
        error_text.append("\n", style="")
        error_text.append("Usage: ", style="dim")
        error_text.append(USAGE_HINT, style="bold cyan")


def _print_error(title: str, error_text: "Text") -> None:
    """Print error message with Rich formatting or plain text fallback."""
    if RICH_AVAILABLE:
        console.print(
            Panel(
                error_text,
                title=f"[bold red]{title}[/bold red]",
                border_style="red",
            )
        )
    else:
        print(f"Error: {title}")
        print(str(error_text))


def error_validation(error: ValidationError) -> None:
    """Error: an experiment parameter violates a precondition."""
    if RICH_AVAILABLE:
        error_text = Text()
        error_text.append("Precondition violated: ", style="bold")
        error_text.append(f"{error.precondition}\n", style="red")
        if error.detail:
            error_text.append("Detail: ", style="bold")
            error_text.append(f"{error.detail}\n", style="yellow")
        _add_usage_hint(error_text)
        _print_error(error.title, error_text)
    else:
        print(f"Error: {error.precondition}")
        if error.detail:
            print(f"Detail: {error.detail}")


def error_schema_mismatch(error: SchemaMismatchError) -> None:
    """Error: a results CSV cannot be summarised."""
    if RICH_AVAILABLE:
        error_text = Text()
        error_text.append("Cannot summarise ", style="red")
        error_text.append(error.path, style="bold")
        error_text.append("\n\nMissing columns: ", style="bold")
        error_text.append(", ".join(f"'{c}'" for c in error.missing), style="bold yellow")
        error_text.append("\n\nSummaries need CSV files written by ", style="")
        error_text.append("ucplab observability", style="cyan")
        error_text.append(" or ", style="")
        error_text.append("ucplab sweep", style="cyan")
        error_text.append(".\n", style="")
        _print_error(error.title, error_text)
    else:
        print(f"Error: {error}")


def error_config_file(path: str, error: Exception) -> None:
    """Error: the configuration file could not be read."""
    if RICH_AVAILABLE:
        error_text = Text()
        error_text.append("Failed to load config file: ", style="red")
        error_text.append(path, style="bold")
        error_text.append(f"\n\nError: {error}\n", style="red")
        _add_usage_hint(error_text)
        _print_error("Config Error", error_text)
    else:
        print(f"Error: Failed to load config file: {path}")
        print(f"Error: {error}")


def error_generic(error: UCPLabError) -> None:
    """Error: any other ucplab failure."""
    if isinstance(error, ValidationError):
        error_validation(error)
        return
    if isinstance(error, SchemaMismatchError):
        error_schema_mismatch(error)
        return
    if RICH_AVAILABLE:
        error_text = Text()
        error_text.append(f"{error}\n", style="red")
        residuals = getattr(error, "residuals", None)
        if residuals:
            worst = max(residuals)
            error_text.append("Worst residual: ", style="bold")
            error_text.append(f"{worst:.3e}\n", style="yellow")
        _print_error(error.title, error_text)
    else:
        print(f"Error: {error.title}: {error}")
