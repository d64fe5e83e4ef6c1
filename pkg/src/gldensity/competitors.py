"""Radial competitors and the level/radius schedule used in the comparison arguments.

Every competitor is stored analytically (kind plus parameters) and only
rasterized on request, so plateau and support identities can be checked
without lattice error.  Plateaus are evaluated branch-wise: where the linear
ramp has left ``[low, 1]`` the stored plateau value itself is returned, which
is what the median of three numbers gives in exact arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .energy import EnergyParams, EnergySpec, _raw_W
from .lattice import Grid, RegionMask, ScalarField, shell_mask


def med(a, b, c):
    """Median of three numbers (elementwise)."""
    return np.maximum(np.minimum(a, b), np.minimum(np.maximum(a, b), c))


def _ramp(low: float, z: np.ndarray) -> np.ndarray:
    """``low + (1 - low) z`` for ``z`` in (0, 1), exactly ``low`` / ``1`` outside."""
    return np.where(z <= 0, low, np.where(z >= 1, 1.0, low + (1.0 - low) * z))


@dataclass(frozen=True)
class IterationSchedule:
    """Levels ``t_k`` increasing to ``t_infty`` and radii ``r_k`` decreasing to ``R/2``."""

    t_infty: float
    L: int

    def __post_init__(self):
        if not -1 < self.t_infty < 0:
            raise ValueError("t_infty must lie in (-1, 0)")
        if int(self.L) != self.L or self.L < 2:
            raise ValueError("L must be an integer >= 2")

    @property
    def R(self) -> float:
        return float(2**self.L)

    def t(self, k: int) -> float:
        q = 2.0 ** (-k - 1)
        return (1 - q) * self.t_infty - q

    def r(self, k: int) -> float:
        return (1 + 2.0**-k) / 2 * self.R

    def admissible_N(self, k: int) -> list[int]:
        """Integers in ``(r_{k+1}, r_k]``."""
        lo, hi = self.r(k + 1), self.r(k)
        return list(range(math.floor(lo) + 1, math.floor(hi) + 1))


@dataclass(frozen=True)
class Competitor:
    kind: str  # shell | phi_k_outer | phi_k_inner | phi_a
    params: dict = field(default_factory=dict)
    center: tuple[float, ...] = (0.0, 0.0)

    def radius(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        c = np.asarray(self.center, dtype=float)
        return np.linalg.norm(x - c, axis=-1)

    def profile(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        P = self.params
        if self.kind == "shell":
            z = (r - P["R"]) / 2.0
            return _ramp(-1.0, z)
        if self.kind in ("phi_k_outer", "phi_k_inner"):
            t = P["t"]
            z = 1.0 + P["slope"] * (r - P["r_out"])
            return _ramp(t, z)
        if self.kind == "phi_a":
            a, h, R = P["a"], P["h"], P["R"]
            return np.minimum((1 - a) + 4 * h * h * r * r / (a * R * R), 1.0)
        raise ValueError(f"unknown competitor kind {self.kind!r}")

    def formula(self, r) -> np.ndarray:
        """Direct median/min formula, used to cross-check :meth:`profile`."""
        r = np.asarray(r, dtype=float)
        P = self.params
        if self.kind == "shell":
            return med(-1.0, 1.0, r - P["R"] - 1.0)
        if self.kind in ("phi_k_outer", "phi_k_inner"):
            t = P["t"]
            return med(t, 1.0, 1.0 + P["slope"] * (1 - t) * (r - P["r_out"]))
        return self.profile(r)

    def radial_slope(self, r) -> np.ndarray:
        """``|d profile / dr|`` (one-sided value at kinks is the interior one)."""
        r = np.asarray(r, dtype=float)
        P = self.params
        if self.kind == "shell":
            return np.where((r > P["R"]) & (r < P["R"] + 2), 1.0, 0.0)
        if self.kind in ("phi_k_outer", "phi_k_inner"):
            t, s = P["t"], P["slope"]
            band = (r < P["r_out"]) & (r > P["r_out"] - 1.0 / s)
            return np.where(band, s * (1 - t), 0.0)
        a, h, R = P["a"], P["h"], P["R"]
        return np.where(r < a * R / (2 * h), 8 * h * h * r / (a * R * R), 0.0)

    def __call__(self, x) -> np.ndarray:
        return self.profile(self.radius(x))

    def gradient_norm(self, x) -> np.ndarray:
        return self.radial_slope(self.radius(x))

    def rasterize(self, grid: Grid) -> ScalarField:
        return ScalarField(grid, self.profile(grid.distance_from(self.center)))


def radial_shell(R: float, center: Sequence[float] = (0.0, 0.0)) -> Competitor:
    """``med(-1, 1, |x| - R - 1)``: -1 on ``B_R``, 1 outside ``B_{R+2}``."""
    if R < 0:
        raise ValueError("R must be nonnegative")
    return Competitor("shell", {"R": float(R)}, tuple(map(float, center)))


def phi_k(schedule: IterationSchedule, k: int, N_k: Optional[int] = None,
          center: Sequence[float] = (0.0, 0.0)) -> Competitor:
    """Outer branch for ``k >= L - 1``, inner branch (needs ``N_k``) for ``k <= L - 2``."""
    if k < 0:
        raise ValueError("k must be >= 0")
    t = schedule.t(k)
    c = tuple(map(float, center))
    if k >= schedule.L - 1:
        slope = 2.0 ** (k + 2) / schedule.R
        return Competitor("phi_k_outer", {"t": t, "slope": slope, "r_out": schedule.r(k), "k": k},
                          c)
    if N_k is None:
        raise ValueError(f"k={k} <= L-2 needs an integer radius N_k")
    if N_k not in schedule.admissible_N(k):
        raise ValueError(f"N_k={N_k} outside the admissible window (r_{k+1}, r_k]")
    return Competitor("phi_k_inner", {"t": t, "slope": 1.0, "r_out": float(N_k), "k": k}, c)


@dataclass
class ShellChoice:
    N: int
    shell_measure: float
    bound: float
    measures: dict[int, float]
    counts: dict[int, int]
    total_count: int

    @property
    def within_bound(self) -> bool:
        # integer form of  min shell <= (2^(k+2)/R) |A_k|  with  #shells = R/2^(k+2)
        return self.counts[self.N] * len(self.counts) <= self.total_count


def choose_Nk(A_k: RegionMask, schedule: IterationSchedule, k: int,
              center: Sequence[float] = (0.0, 0.0)) -> ShellChoice:
    """Admissible ``N`` minimizing the measure of ``(B_N minus B_{N-1}) & A_k``.

    The ``R / 2**(k+2)`` admissible shells are disjoint, so the smallest one
    carries at most ``2**(k+2)/R`` of the measure of ``A_k``.
    """
    if not 0 <= k <= schedule.L - 2:
        raise ValueError("choose_Nk applies to 0 <= k <= L-2")
    window = schedule.admissible_N(k)
    assert window, "empty admissible window"
    vol = A_k.grid.cell_volume
    counts = {}
    for N in window:
        counts[N] = (shell_mask(A_k.grid, center, N - 1, N) & A_k).count
    best = min(window, key=lambda N: (counts[N], N))
    total = A_k.count
    return ShellChoice(best, counts[best] * vol, 2.0 ** (k + 2) / schedule.R * total * vol,
                       {N: c * vol for N, c in counts.items()}, counts, total)


class NoAdmissibleLevel(ValueError):
    pass


def t_infty_choice(spec: EnergySpec, h: float, x_samples: Optional[np.ndarray] = None,
                   candidates: int = 2000) -> float:
    """Level in (-1, 0) whose potential does not exceed ``W(1 - h)`` at any sampled x."""
    if not 0 < h < 1:
        raise ValueError("h must lie in (0, 1)")
    if spec.multiplicative:
        return -(1.0 - h)
    spec.require_usable()
    if x_samples is None:
        x_samples = spec.coeffs.sample_centers()
    x_samples = np.asarray(x_samples, dtype=float)
    ref = _raw_W(spec, np.full(len(x_samples), 1.0 - h), x_samples)
    # largest admissible level, scanning down from 0
    for t in np.linspace(0.0, -1.0, candidates + 1)[1:-1]:
        vals = _raw_W(spec, np.full(len(x_samples), t), x_samples)
        if np.all(vals - ref <= 0):
            return float(t)
    raise NoAdmissibleLevel(f"no level in (-1, 0) satisfies W(t, x) <= W(1-h, x) for h={h}")


def h_of_R(params: EnergyParams, R: float) -> float:
    """``min((2**m lam R**p)**(-1/(m-p)), 1/2)``."""
    if R < 1:
        raise ValueError("R must be >= 1")
    lam, p, m = params.lam, params.p, params.m
    return min((2.0**m * lam * R**p) ** (-1.0 / (m - p)), 0.5)


def phi_a(a: float, h: float, R: float, center: Sequence[float] = (0.0, 0.0)) -> Competitor:
    """Capped paraboloid ``min((1 - a) + 4 h**2 |x|**2 / (a R**2), 1)``."""
    if not 0 < h <= 0.5:
        raise ValueError("h must lie in (0, 1/2]")
    if not h <= a <= 2 * h:
        raise ValueError(f"a={a} outside [h, 2h] = [{h}, {2 * h}]")
    return Competitor("phi_a", {"a": float(a), "h": float(h), "R": float(R)},
                      tuple(map(float, center)))


def phi_a_cap_radius(a: float, h: float, R: float) -> float:
    """Radius of ``{phi_a < 1}``."""
    return a * R / (2 * h)
