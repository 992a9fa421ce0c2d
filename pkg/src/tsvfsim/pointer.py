"""Von Neumann pointer measurements on a pre- and post-selected photon.

The pointer starts as a Gaussian with position variance sigma^2,

    G(x) = (2 pi sigma^2)^(-1/4) exp(-x^2 / (4 sigma^2)),

and the coupling shifts it by ``g`` on the range of the projector ``P``.
After post-selection the (unnormalized) pointer wavefunction is

    c0 G(x) + c1 G(x - g),   c0 = <phi|(I-P)|psi>,  c1 = <phi|P|psi>.

All moments follow in closed form from the overlap factor
``kappa = exp(-g^2 / (8 sigma^2))``. Imaginary parts of the weak value
shift the pointer momentum and are not sampled here.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import IO, Optional

import numpy as np

from .circuit import EvolutionTrace
from .state import Operator, StateVector, apply, inner
from .tsvf import EPS, ImpossibleHistory, NullPostSelection, TwoState, weak_value

CHUNK = 4096
CSV_HEADER = ("trial", "reading", "postselected")


@dataclass(frozen=True)
class Grid:
    x_min: float
    x_max: float
    n_points: int

    def points(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_points)


@dataclass(frozen=True)
class PointerConfig:
    g: float
    sigma: float
    grid: Optional[Grid] = None

    def __post_init__(self):
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ValueError(f"pointer spread must be positive, got {self.sigma!r}")
        if not math.isfinite(self.g):
            raise ValueError("coupling g must be finite")
        if self.grid is not None:
            lo, hi = min(0.0, self.g), max(0.0, self.g)
            if self.grid.x_min > lo - 6 * self.sigma or self.grid.x_max < hi + 6 * self.sigma:
                raise ValueError("grid must span at least [-6 sigma, 6 sigma + g]")
            if self.grid.n_points < 2:
                raise ValueError("grid needs at least two points")

    def resolved_grid(self) -> Grid:
        if self.grid is not None:
            return self.grid
        lo, hi = min(0.0, self.g), max(0.0, self.g)
        return Grid(lo - 8 * self.sigma, hi + 8 * self.sigma, 2**14)


@dataclass(frozen=True)
class PointerOutcome:
    c0: complex
    c1: complex
    g: float
    sigma: float
    mean: float
    variance: float
    success_probability: float

    def density(self, x) -> np.ndarray:
        """Joint density |c0 G(x) + c1 G(x-g)|^2; integrates to ``success_probability``."""
        x = np.asarray(x, dtype=float)
        return np.abs(self.c0 * _gauss(x, self.sigma) + self.c1 * _gauss(x - self.g, self.sigma)) ** 2


def _gauss(x, sigma):
    return (2 * math.pi * sigma**2) ** -0.25 * np.exp(-(x**2) / (4 * sigma**2))


def _coefficients(ts: TwoState, p: Operator) -> tuple[complex, complex]:
    if abs(ts.overlap) <= EPS:
        raise NullPostSelection(f"<phi|psi> = {ts.overlap:.3g}")
    if not p.projector:
        raise ValueError("pointer coupling needs a flagged projector")
    c1 = inner(ts.bra, apply(p, ts.ket))
    c0 = inner(ts.bra, apply(p.complement(), ts.ket))
    return c0, c1


def weak_pointer_state(ts: TwoState, p: Operator, cfg: PointerConfig) -> PointerOutcome:
    c0, c1 = _coefficients(ts, p)
    g, s = cfg.g, cfg.sigma
    kappa = math.exp(-(g**2) / (8 * s**2))
    a0, a1 = abs(c0) ** 2, abs(c1) ** 2
    cross = (c0.conjugate() * c1).real
    norm = a0 + a1 + 2 * cross * kappa
    if norm <= EPS:
        raise ImpossibleHistory("post-selected pointer state has zero norm")
    first = a1 * g + cross * kappa * g
    second = a0 * s**2 + a1 * (s**2 + g**2) + 2 * cross * kappa * (s**2 + g**2 / 4)
    mean = first / norm
    variance = second / norm - mean**2
    return PointerOutcome(c0, c1, g, s, mean, variance, norm)


def analytic_weak_limit(ts: TwoState, p: Operator) -> float:
    """Re of the weak value of ``p``: the limit of mean/g as g -> 0."""
    return weak_value(ts, p).real


def numeric_moments(outcome: PointerOutcome, grid: Grid) -> tuple[float, float, float]:
    """(norm, mean, variance) of the pointer density by trapezoid quadrature."""
    x = grid.points()
    d = outcome.density(x)
    norm = np.trapezoid(d, x)
    mean = np.trapezoid(x * d, x) / norm
    var = np.trapezoid((x - mean) ** 2 * d, x) / norm
    return float(norm), float(mean), float(var)


def _inverse_cdf(outcome: PointerOutcome, grid: Grid):
    x = grid.points()
    d = outcome.density(x)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (d[1:] + d[:-1]) * np.diff(x))])
    cdf /= cdf[-1]
    return lambda u: np.interp(u, cdf, x)


def _uniforms(seed: int, start: int, count: int) -> np.ndarray:
    """Two uniforms per trial from the Philox block keyed by (seed, trial index)."""
    raw = np.random.Philox(key=seed, counter=start).random_raw(4 * count).reshape(count, 4)
    return (raw[:, :2] >> np.uint64(11)).astype(np.float64) * 2.0**-53


@dataclass(frozen=True)
class MonteCarloReport:
    n_attempted: int
    n_postselected: int
    sample_mean: float
    std_error: float
    readings: np.ndarray = field(repr=False, compare=False)

    @property
    def acceptance_rate(self) -> float:
        return self.n_postselected / self.n_attempted


def sample_trials(
    ts: TwoState,
    p: Operator,
    cfg: PointerConfig,
    n: int,
    seed: int,
    workers: int = 1,
) -> MonteCarloReport:
    """Simulate ``n`` runs of the weak measurement.

    Each trial passes post-selection with probability ``success_probability``
    and, if it does, reads the pointer from the exact post-selected density
    by inverse CDF on the configured grid. Trial ``i`` only consumes the
    random block at counter ``i``, so the result does not depend on
    ``workers``. Readings of rejected trials are NaN.
    """
    if n < 1:
        raise ValueError("need at least one trial")
    outcome = weak_pointer_state(ts, p, cfg)
    sample = _inverse_cdf(outcome, cfg.resolved_grid())
    p_ok = outcome.success_probability

    def run(start):
        count = min(CHUNK, n - start)
        u = _uniforms(seed, start, count)
        return np.where(u[:, 0] < p_ok, sample(u[:, 1]), np.nan)

    starts = range(0, n, CHUNK)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(run, starts))
    else:
        parts = [run(s) for s in starts]
    readings = np.concatenate(parts)
    readings.setflags(write=False)
    kept = readings[~np.isnan(readings)]
    m = len(kept)
    mean = float(kept.mean()) if m else math.nan
    se = float(kept.std(ddof=1) / math.sqrt(m)) if m > 1 else math.nan
    return MonteCarloReport(n, m, mean, se, readings)


def write_samples_csv(report: MonteCarloReport, out: IO[str]) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for i, x in enumerate(report.readings):
        ok = not math.isnan(x)
        w.writerow((i, format(float(x), ".17g") if ok else "", int(ok)))


@dataclass(frozen=True)
class StrongOutcome:
    p_found: float
    p_found_given_post: float
    p_post_given_found: float
    p_post_given_not_found: float
    found: tuple[StateVector, ...]
    not_found: tuple[StateVector, ...]


def strong_measure(trace: EvolutionTrace, k: int, p: Operator) -> StrongOutcome:
    """Projective test of ``p`` at slice ``k``, by explicit branch evolution.

    Both branches are propagated forward to slice S and post-selected there;
    the backward states of the trace are not used.
    """
    if not p.projector:
        raise ValueError("strong measurement needs a flagged projector")
    psi = trace.forward[k]
    n2 = psi.norm() ** 2
    post = trace.circuit.postselect
    result = {}
    for key, proj in (("found", p), ("not_found", p.complement())):
        branch = apply(proj, psi)
        w = branch.norm() ** 2 / n2 if n2 > 0 else 0.0
        path = trace.propagate(branch, k)
        joint = abs(inner(post, path[-1])) ** 2 / n2 if n2 > 0 else 0.0
        result[key] = (w, joint, tuple(path))
    (w1, j1, path1), (w0, j0, path0) = result["found"], result["not_found"]
    if j1 + j0 <= EPS:
        raise ImpossibleHistory(f"both outcomes of {p.name or 'P'} at slice {k} are excluded by the post-selection")
    return StrongOutcome(
        p_found=w1,
        p_found_given_post=j1 / (j1 + j0),
        p_post_given_found=j1 / w1 if w1 > 0 else math.nan,
        p_post_given_not_found=j0 / w0 if w0 > 0 else math.nan,
        found=path1,
        not_found=path0,
    )
