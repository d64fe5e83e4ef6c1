"""The level-set recursion ``beta_{k+1} = C 2**(k(1+p)) beta_k**(1+p/n)`` and fits of it to data.

The recursion is run with equality, the extremal case of the inequality.
Its smallness threshold is located by bisection on the verdict, and
measured sequences ``beta_k = R**(-n/p) |A_k|`` from lattice fields are
used to fit the smallest constant for which the inequality holds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .competitors import IterationSchedule
from .energy import EnergySpec
from .lattice import ScalarField, ball_mask, measure, superlevel_mask

VANISH_CUTOFF = 1e-300
PERSIST_CUTOFF = 1e6


@dataclass
class IterationTrace:
    beta: list[float]
    C: float
    p: float
    n: int
    verdict: str  # vanishes | persists | undetermined


def _step(beta: float, k: int, C: float, p: float, n: int) -> float:
    if beta == 0.0:
        return 0.0
    # plain Python floats: power overflow raises, multiplication saturates to inf
    C, beta = float(C), float(beta)
    try:
        return C * 2.0 ** (k * (1 + p)) * beta ** (1 + p / n)
    except OverflowError:
        return math.inf


def iterate_beta(beta0: float, C: float, p: float, n: int, k_max: int = 50,
                 vanish: float = VANISH_CUTOFF, persist: float = PERSIST_CUTOFF) -> IterationTrace:
    """Run the recursion for ``k_max`` steps and classify the outcome.

    ``persists`` as soon as a term exceeds ``persist`` (overflow saturates to
    inf); ``vanishes`` if the last term is below ``vanish`` and the sequence
    is decreasing from some index on; otherwise ``undetermined``.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    if beta0 < 0:
        raise ValueError("beta0 must be nonnegative")
    beta = [float(beta0)]
    verdict = "undetermined"
    for k in range(k_max):
        nxt = _step(beta[-1], k, C, p, n)
        beta.append(nxt)
        if nxt > persist:
            verdict = "persists"
    if verdict != "persists" and beta[-1] < vanish:
        # decreasing tail: find the last increase
        b = np.asarray(beta)
        rises = np.flatnonzero(np.diff(b) > 0)
        start = rises[-1] + 1 if len(rises) else 0
        if start < len(b) - 1 or b[-1] == 0.0:
            verdict = "vanishes"
    if verdict == "persists":
        # once past the cutoff the recursion only grows; keep saturation explicit
        first = next(i for i, v in enumerate(beta) if v > persist)
        beta = beta[: first + 1] + [
            v if v > beta[first] else math.inf for v in beta[first + 1:]
        ]
    return IterationTrace(beta, C, p, n, verdict)


def fixed_point_threshold(C: float, p: float, n: int) -> float:
    """Starting value of the exactly geometric solution ``beta_k = A 2**(-(1+p)(n/p) k)``."""
    return C ** (-n / p) * 2.0 ** (-(1 + p) * (n / p) ** 2)


def threshold_beta0(C: float, p: float, n: int, rel_width: float = 1e-6,
                    k_max: int = 400) -> float:
    """Bisect on ``beta0`` between vanishing and persisting runs of :func:`iterate_beta`."""
    if C <= 0:
        raise ValueError("C must be positive")

    def verdict(b0: float) -> str:
        km = k_max
        while True:
            v = iterate_beta(b0, C, p, n, km).verdict
            if v != "undetermined" or km > 16 * k_max:
                return v
            km *= 2

    guess = fixed_point_threshold(C, p, n)
    hi = guess
    while verdict(hi) != "persists":
        hi *= 2.0
    lo = hi / 2.0
    while verdict(lo) != "vanishes":
        hi, lo = lo, lo / 2.0
    while (hi - lo) > rel_width * lo:
        mid = 0.5 * (lo + hi)
        v = verdict(mid)
        if v == "vanishes":
            lo = mid
        elif v == "persists":
            hi = mid
        else:
            raise RuntimeError(f"undetermined verdict at beta0={mid!r}")
    return 0.5 * (lo + hi)


@dataclass
class FitReport:
    L: int
    R: float
    levels: list[float]
    radii: list[float]
    measures: list[float]
    beta: list[float]
    ratios: list[tuple[int, float]] = field(default_factory=list)
    C_hat: float = 0.0
    truncated_at: int | None = None
    threshold: float | None = None

    @property
    def consistent(self) -> bool:
        return math.isfinite(self.C_hat)

    @property
    def below_threshold(self) -> bool | None:
        if self.threshold is None:
            return None
        return self.beta[0] < self.threshold


def fit_iteration(field: ScalarField, spec: EnergySpec, schedule: IterationSchedule,
                  center: Sequence[float] | None = None, with_threshold: bool = True) -> FitReport:
    """Measure ``A_k = B_{r_k} & {u >= t_k}`` for ``k < L`` and fit the recursion constant.

    ``C_hat`` is the largest ratio ``beta_{k+1} / (2**(k(1+p)) beta_k**(1+p/n))``
    over consecutive pairs; a zero ``beta_k`` ends the table (all later sets
    are empty too, since the ``A_k`` are nested).
    """
    grid = field.grid
    n, p = spec.params.n, spec.params.p
    center = tuple(center) if center is not None else (0.0,) * n
    R = schedule.R
    if not grid.contains_ball(center, R):
        raise ValueError("field does not cover B_R(center)")
    levels, radii, measures = [], [], []
    for k in range(schedule.L):
        t, r = schedule.t(k), schedule.r(k)
        A = ball_mask(grid, center, r) & superlevel_mask(field, t)
        levels.append(t)
        radii.append(r)
        measures.append(measure(A))
    norm = R ** (-n / p)
    beta = [norm * mu for mu in measures]
    report = FitReport(schedule.L, R, levels, radii, measures, beta)
    C_hat = 0.0
    for k in range(len(beta) - 1):
        if beta[k] == 0.0:
            report.truncated_at = k
            break
        ratio = beta[k + 1] / (2.0 ** (k * (1 + p)) * beta[k] ** (1 + p / n))
        report.ratios.append((k, ratio))
        C_hat = max(C_hat, ratio)
    report.C_hat = C_hat
    if with_threshold and C_hat > 0:
        report.threshold = threshold_beta0(C_hat, p, n)
    return report
