"""
Shannon sampling benchmark.

Fourier convention: f̂(p) = (2π)^{-1/2} ∫ e^{-ixp} f(x) dx, so the aliasing
estimate reads sup |f - S_K f| ≤ √(2/π) ∫_{|p|>πK} |f̂(p)| dp.
"""

import enum
import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import IntegrationWarning, quad, trapezoid

from ucplab.errors import DivergentTailError, ValidationError

logger = logging.getLogger(__name__)

MAX_TRUNCATION = 100_000
ALLOWANCE_SHARE = 0.1
ALLOWANCE_FLOOR = 1e-12
ROUNDOFF = 1e-12
# sample magnitudes below this share of the largest one count as zero
NEGLIGIBLE = 1e-15
CHUNK = 4_000_000

Function = Callable[[np.ndarray], np.ndarray]
Table = Tuple[np.ndarray, np.ndarray]


@dataclass(frozen=True, eq=False)
class SamplingProblem:
    """Samples f((j + t_j)/K) + noise_j for |j| ≤ J, reconstructed on the nodes j/K.

    ``jitter`` holds the node offsets t_j (zero for exact sampling) and
    ``noise`` additive measurement errors; both default to zero.
    """

    bandwidth: float
    truncation: int
    samples: np.ndarray
    jitter: Optional[np.ndarray] = field(default=None, repr=False)
    noise: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValidationError("bandwidth must be positive", f"got {self.bandwidth}")
        if int(self.truncation) != self.truncation or self.truncation < 1:
            raise ValidationError("truncation J must be an integer of at least 1", f"got {self.truncation}")
        samples = np.array(self.samples, dtype=float).reshape(-1)
        if samples.size != 2 * self.truncation + 1:
            raise ValidationError(
                "samples must cover |j| <= J", f"expected {2 * self.truncation + 1}, got {samples.size}"
            )
        if not np.all(np.isfinite(samples)):
            raise ValidationError("samples must be finite")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "truncation", int(self.truncation))

    @classmethod
    def from_function(
        cls,
        f: Function,
        bandwidth: float,
        truncation: int,
        *,
        jitter_amplitude: float = 0.0,
        jitter_seed: int = 0,
        noise_amplitude: float = 0.0,
        noise_seed: int = 1,
    ) -> "SamplingProblem":
        if jitter_amplitude < 0 or noise_amplitude < 0:
            raise ValidationError("jitter and noise amplitudes must be nonnegative")
        j = np.arange(-truncation, truncation + 1)
        offsets = jitter_amplitude * np.random.default_rng(jitter_seed).uniform(-1.0, 1.0, j.size)
        noise = noise_amplitude * np.random.default_rng(noise_seed).uniform(-1.0, 1.0, j.size)
        samples = np.asarray(f((j + offsets) / bandwidth), dtype=float) + noise
        return cls(
            bandwidth,
            truncation,
            samples,
            offsets if jitter_amplitude else None,
            noise if noise_amplitude else None,
        )

    @property
    def indices(self) -> np.ndarray:
        return np.arange(-self.truncation, self.truncation + 1)


def reconstruct(problem: SamplingProblem, x: Union[float, Sequence[float], np.ndarray]):
    """(S_K f)(x) = Σ_{|j|≤J} f(j/K) sinc(Kx - j), np.sinc(0) = 1 at the nodes."""
    scalar = np.ndim(x) == 0
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    j = problem.indices
    out = np.empty(xs.size)
    chunk = max(1, CHUNK // j.size)
    for start in range(0, xs.size, chunk):
        block = xs[start:start + chunk]
        out[start:start + chunk] = np.sinc(problem.bandwidth * block[:, None] - j[None, :]) @ problem.samples
    return float(out[0]) if scalar else out


def aliasing_bound(fhat: Union[Function, Table], bandwidth: float) -> float:
    """√(2/π) ∫_{|p|>πK} |f̂(p)| dp by adaptive quadrature (or trapezoid on a table)."""
    if not bandwidth > 0:
        raise ValidationError("bandwidth must be positive", f"got {bandwidth}")
    edge = np.pi * bandwidth
    if isinstance(fhat, tuple):
        p, values = (np.asarray(a, dtype=float) for a in fhat)
        order = np.argsort(p)
        p, values = p[order], np.abs(values[order])
        tail = np.abs(p) > edge
        total = 0.0
        for side in (p < -edge, p > edge):
            if np.count_nonzero(side & tail) >= 2:
                total += trapezoid(values[side], p[side])
        return float(np.sqrt(2.0 / np.pi) * total)

    def magnitude(p):
        return float(abs(fhat(p)))

    total = 0.0
    for lo, hi in ((edge, np.inf), (-np.inf, -edge)):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", IntegrationWarning)
            result = quad(magnitude, lo, hi, epsabs=0.0, epsrel=1e-10, limit=500, full_output=1)
        value, error = result[0], result[1]
        # a message is only returned when QUADPACK flags a problem
        if len(result) == 4 and error > 1e-10 * abs(value):
            raise DivergentTailError(
                f"Fourier tail beyond |p| = {edge:g} did not converge: {result[3].splitlines()[0]}"
            )
        total += value
    if not np.isfinite(total):
        raise DivergentTailError(f"Fourier tail beyond |p| = {edge:g} is not finite")
    return float(np.sqrt(2.0 / np.pi) * total)


def truncation_allowance(samples: np.ndarray, truncation: int) -> float:
    """Geometric majorant of Σ_{|j|>J} |f(j/K)| fitted to the last decade of samples."""
    mags = np.abs(np.asarray(samples, dtype=float))
    scale = float(np.max(mags)) if mags.size else 0.0
    if scale == 0.0:
        return 0.0
    width = min(max(10, truncation // 10), truncation + 1)
    total = 0.0
    for side in (mags[-width:], mags[:width][::-1]):
        if np.max(side) <= NEGLIGIBLE * scale:
            continue
        first, last = max(side[0], NEGLIGIBLE * scale), max(side[-1], NEGLIGIBLE * scale)
        q = (last / first) ** (1.0 / max(width - 1, 1))
        if q >= 1.0:
            return float("inf")
        total += float(np.max(side[-min(3, width):])) * q / (1.0 - q)
    return total


class Verdict(str, enum.Enum):
    HOLDS = "holds"
    FAILS = "fails"
    INCONCLUSIVE = "inconclusive"


@dataclass
class AliasingReport:
    sup_error: float
    bound: float
    allowance: float
    truncation: int
    verdict: Verdict

    @property
    def holds(self) -> bool:
        return self.verdict is Verdict.HOLDS


def verify_aliasing(
    f: Function,
    fhat: Union[Function, Table],
    bandwidth: float,
    xs: np.ndarray,
    truncation: int,
    *,
    max_truncation: int = MAX_TRUNCATION,
    auto_increase: bool = True,
) -> AliasingReport:
    """Compare sup |f - S_K f| on ``xs`` with the aliasing bound plus a truncation allowance.

    J doubles until the allowance is at most 10% of the bound; a verdict that
    cannot get there is INCONCLUSIVE, never HOLDS.
    """
    bound = aliasing_bound(fhat, bandwidth)
    xs = np.asarray(xs, dtype=float)
    J = int(truncation)
    while True:
        problem = SamplingProblem.from_function(f, bandwidth, J)
        allowance = truncation_allowance(problem.samples, J)
        if allowance <= max(ALLOWANCE_SHARE * bound, ALLOWANCE_FLOOR):
            conclusive = True
            break
        if auto_increase and 2 * J <= max_truncation:
            J *= 2
            logger.debug("truncation allowance %.3e too large, doubling J to %d", allowance, J)
            continue
        conclusive = False
        break

    sup_error = float(np.max(np.abs(np.asarray(f(xs), dtype=float) - reconstruct(problem, xs))))
    if not conclusive:
        logger.warning(
            "aliasing check inconclusive at J=%d: truncation allowance %.3e exceeds 10%% of bound %.3e",
            J,
            allowance,
            bound,
        )
        verdict = Verdict.INCONCLUSIVE
    elif sup_error <= bound + allowance + ROUNDOFF:
        verdict = Verdict.HOLDS
    else:
        verdict = Verdict.FAILS
    return AliasingReport(sup_error, bound, allowance, J, verdict)


# ---------------------------------------------------------------------------
# Fixtures
# ---------------------------------------------------------------------------

def sinc_span(coefficients: Sequence[float], shifts: Sequence[int], bandwidth: float = 1.0):
    """f(x) = Σ c_m sinc(Kx - m) and its transform, band-limited to [-πK, πK]."""
    c = np.asarray(coefficients, dtype=float)
    m = np.asarray(shifts, dtype=float)
    K = float(bandwidth)

    def f(x):
        x = np.asarray(x, dtype=float)
        return np.sinc(K * x[..., None] - m) @ c

    def fhat(p):
        p = np.asarray(p, dtype=float)
        phase = np.exp(-1j * np.multiply.outer(p, m) / K) @ c
        inside = np.abs(p) <= np.pi * K
        return np.where(inside, (2 * np.pi) ** -0.5 / K * phase, 0.0)

    return f, fhat


def gaussian():
    """f(x) = e^{-x²/2}, which is its own transform."""

    def f(x):
        return np.exp(-np.asarray(x, dtype=float) ** 2 / 2)

    return f, f
