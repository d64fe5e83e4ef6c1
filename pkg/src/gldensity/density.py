"""Level-set densities, energy growth, and the constants of the density estimate.

All measures are cell counts times ``h**n``.  Both signs use closed
inequalities, so the zero set is counted on each side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .competitors import h_of_R, phi_a_cap_radius
from .energy import DiscreteEnergy, EnergyParams, EnergySpec
from .lattice import Grid, ScalarField, ball_mask, measure, unit_ball_volume
from .minimizer import (SolveOptions, SolveTrace, heteroclinic_interface,
                        solve_with_continuation)


@dataclass
class DensityCurve:
    center: tuple[float, ...]
    radii: list[float]
    pos_measure: list[float]
    neg_measure: list[float]
    zero_measure: list[float]
    ball_measure: list[float]
    energy: Optional[list[float]] = None
    clipped: list[bool] = field(default_factory=list)

    def rows(self):
        for i, R in enumerate(self.radii):
            yield {
                "R": R,
                "pos_measure": self.pos_measure[i],
                "neg_measure": self.neg_measure[i],
                "zero_measure": self.zero_measure[i],
                "ball_measure": self.ball_measure[i],
                "energy": None if self.energy is None else self.energy[i],
                "clipped": self.clipped[i],
            }


def density_curve(field: ScalarField, center: Sequence[float], radii: Sequence[float],
                  spec: Optional[EnergySpec] = None) -> DensityCurve:
    """Per-radius ``|B_R & {u >= 0}|``, ``|B_R & {u <= 0}|`` and, with a spec, ``J(u, B_R)``."""
    radii = sorted(float(r) for r in radii)
    center = tuple(float(c) for c in center)
    pos = field.values >= 0
    neg = field.values <= 0
    dens = None
    if spec is not None:
        model = DiscreteEnergy(spec, field.grid)
        dens = model.density(field.values)
    curve = DensityCurve(center, radii, [], [], [], [], [] if spec is not None else None)
    vol = field.grid.cell_volume
    for R in radii:
        ball = ball_mask(field.grid, center, R)
        b = ball.membership
        curve.pos_measure.append(int(np.count_nonzero(b & pos)) * vol)
        curve.neg_measure.append(int(np.count_nonzero(b & neg)) * vol)
        curve.zero_measure.append(int(np.count_nonzero(b & pos & neg)) * vol)
        curve.ball_measure.append(measure(ball))
        curve.clipped.append(ball.clipped)
        if dens is not None:
            curve.energy.append(float(np.sum(dens[b])) * vol)
    return curve


@dataclass
class GrowthReport:
    radii: list[float]
    normalized: list[float]
    max_normalized: float
    slope: Optional[float]
    variation: Optional[float]
    C_cap: float
    slope_cap: float
    passed: bool


def energy_growth(curve: DensityCurve, n: int, C_cap: float = math.inf,
                  slope_slack: float = 0.15) -> GrowthReport:
    """``J(u, B_R) / R**(n-1)`` per radius, its log-log slope and its spread."""
    if curve.energy is None:
        raise ValueError("density curve carries no energy column")
    if len(curve.radii) < 3:
        raise ValueError("energy growth needs at least 3 radii")
    R = np.asarray(curve.radii)
    J = np.asarray(curve.energy)
    norm = J / R ** (n - 1)
    positive = J > 0
    slope = variation = None
    if positive.sum() >= 2:
        slope = float(np.polyfit(np.log(R[positive]), np.log(J[positive]), 1)[0])
    if positive.all():
        variation = float(norm.max() / norm.min())
    cap = n - 1 + slope_slack
    ok = float(norm.max()) <= C_cap and (slope is None or slope <= cap)
    return GrowthReport([float(r) for r in R], [float(v) for v in norm], float(norm.max()), slope,
                        variation, C_cap, cap, bool(ok))


def seed_ball_check(field: ScalarField, center: Sequence[float], r: float, eps: float) -> bool:
    """``|B_r(center) & {u >= 0}| >= eps r**n``."""
    ball = ball_mask(field.grid, center, r)
    count = int(np.count_nonzero(ball.membership & (field.values >= 0)))
    return count * field.grid.cell_volume >= eps * r**field.grid.n


@dataclass
class Lemma2Report:
    R: float
    h: float
    center: tuple[float, ...]
    a_values: list[float]
    V: list[float]
    omega_measure: list[float]
    dV_fd: list[float]
    dV_exact: list[float]
    fd_tolerance: float
    V_2h: float
    omega_2h: float
    pos_measure: float
    sigma_hat: float
    density_ratio: float
    inclusion_ok: bool
    traces: list[SolveTrace] = field(default_factory=list)
    pinned_value: Optional[float] = None

    @property
    def monotone(self) -> bool:
        return bool(np.all(np.diff(self.V) >= 0))

    @property
    def derivative_ok(self) -> list[bool]:
        return [fd >= (1 - self.fd_tolerance) * om for fd, om in zip(self.dV_fd, self.omega_measure)]

    @property
    def implied_density_ok(self) -> bool:
        """``|B_R & {u >= 0}| >= |Omega_2h| >= V_2h / (2h)``."""
        return self.inclusion_ok and self.pos_measure >= self.omega_2h >= self.V_2h / (2 * self.h)

    @property
    def converged(self) -> bool:
        return all(t.converged for t in self.traces)


def paraboloid_sweep(field: ScalarField, center: Sequence[float], h: float, R: float,
                     a_values: Sequence[float]):
    """``V_a = sum over {u > phi_a} of (u - phi_a) h^n``, ``|Omega_a|`` and ``dV/da`` per ``a``.

    ``dV/da`` is evaluated exactly as ``sum over Omega_a of (-d phi_a / da)``.
    """
    grid = field.grid
    vol = grid.cell_volume
    r = grid.distance_from(center)
    quad = 4.0 * h * h * r * r
    u = field.values
    V, om, dexact = [], [], []
    for a in a_values:
        phi = np.minimum((1 - a) + quad / (a * R * R), 1.0)
        diff = u - phi
        omega = diff > 0
        V.append(float(np.sum(diff[omega])) * vol)
        om.append(int(np.count_nonzero(omega)) * vol)
        dexact.append(float(np.sum(1.0 + quad[omega] / (a * a * R * R))) * vol)
    return V, om, dexact


def key_lemma2_experiment(spec: EnergySpec, R: float, opts: Optional[SolveOptions] = None, *,
                          spacing: float = 0.25, margin: float = 8.0, a_steps: int = 41,
                          levels: int = 3, fd_tolerance: float = 0.1,
                          field: Optional[ScalarField] = None,
                          center: Optional[Sequence[float]] = None) -> Lemma2Report:
    """Pin ``u = 1 - h(R)`` at the center, minimize, and sweep the paraboloids ``phi_a``.

    Without ``field`` the minimizer starts from a planar 1D-profile front
    shifted so that it already takes the pinned value at the center; pass a
    ``field`` to skip the solver.
    """
    if R < 1:
        raise ValueError("R must be >= 1")
    prm = spec.params
    n = prm.n
    h = h_of_R(prm, R)
    traces: list[SolveTrace] = []
    pinned = None
    if field is None:
        opts = opts or SolveOptions()
        grid = Grid.cube(n, R + margin, spacing)
        target = tuple(0.0 for _ in range(n))
        pin_cell = grid.center_of(grid.index_of(target))
        from .heteroclinic import quadrature_profile

        prof = quadrature_profile(prm.p, prm.m, 1 - 1e-6, 1e-4)
        xp, up = prof.positive
        offset = float(np.interp(1 - h, up, xp)) - pin_cell[0]
        pinned = 1.0 - h
        run = SolveOptions(**{**opts.__dict__, "pin_origin": (tuple(pin_cell), pinned)})
        field, traces = solve_with_continuation(
            spec, grid, lambda g: heteroclinic_interface(g, prm.p, prm.m, offset), run, levels)
        center = tuple(pin_cell)
    elif center is None:
        center = tuple(0.0 for _ in range(n))
    center = tuple(float(c) for c in center)

    a_values = [float(a) for a in np.linspace(h, 2 * h, a_steps)]
    V, om, dexact = paraboloid_sweep(field, center, h, R, a_values)
    dV_fd = [float(d) for d in np.gradient(np.asarray(V), np.asarray(a_values))]

    vol = field.grid.cell_volume
    phi2 = np.minimum((1 - 2 * h) + 4 * h * h * field.grid.distance_from(center) ** 2
                      / (2 * h * R * R), 1.0)
    omega2 = field.values > phi2
    ball = ball_mask(field.grid, center, R).membership
    pos_ball = ball & (field.values >= 0)
    inclusion = bool(not np.any(omega2 & ~pos_ball))
    pos_measure = int(np.count_nonzero(pos_ball)) * vol
    V2h = V[-1]
    return Lemma2Report(
        R=float(R), h=h, center=center, a_values=a_values, V=V, omega_measure=om, dV_fd=dV_fd,
        dV_exact=dexact, fd_tolerance=fd_tolerance, V_2h=V2h, omega_2h=om[-1],
        pos_measure=pos_measure, sigma_hat=V2h / (2 * h * R**n),
        density_ratio=pos_measure / R**n, inclusion_ok=inclusion, traces=traces,
        pinned_value=pinned,
    )


def capped_paraboloid_volume(a: float, h: float, R: float) -> float:
    """Closed form of ``V_a`` in two dimensions for the field ``u == 1``."""
    return math.pi * a**3 * R**2 / (8 * h * h)


class WitnessNotFound(RuntimeError):
    pass


@dataclass
class ConstantsLedger:
    sigma: float
    h_tilde: float
    rho_tilde: float
    r_tilde: float
    delta_tilde: Optional[float]
    R0: float
    delta: float
    n: int
    x_star: Optional[tuple[float, ...]] = None
    u_x_star: Optional[float] = None
    notes: list[str] = field(default_factory=list)

    @classmethod
    def from_parts(cls, sigma: float, rho_tilde: float, r_tilde: float, n: int,
                   h_tilde: float = math.nan, delta_tilde: Optional[float] = None,
                   **extra) -> "ConstantsLedger":
        return cls(sigma=sigma, h_tilde=h_tilde, rho_tilde=rho_tilde, r_tilde=r_tilde,
                   delta_tilde=delta_tilde, R0=2 * (rho_tilde + r_tilde), delta=sigma / 2**n,
                   n=n, **extra)

    def identities_hold(self) -> bool:
        return self.R0 == 2 * (self.rho_tilde + self.r_tilde) and self.delta == self.sigma / 2**self.n

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def find_witness(field: ScalarField, center: Sequence[float], level: float):
    """Nearest cell to ``center`` with ``u >= level``; its distance is the smallest such radius."""
    hits = field.values >= level
    if not np.any(hits):
        raise WitnessNotFound(f"no cell with u >= {level!r} in the box")
    r = field.grid.distance_from(center)
    masked = np.where(hits, r, np.inf)
    idx = np.unravel_index(int(np.argmin(masked)), masked.shape)
    return tuple(float(c) for c in field.grid.center_of(idx)), float(masked[idx]), float(field.values[idx])


def assemble_constants(spec: EnergySpec, field: ScalarField, lemma2: Lemma2Report,
                       center: Optional[Sequence[float]] = None,
                       seed_radii: int = 8) -> ConstantsLedger:
    """Chain the measured constants: seed radius, witness radius, ``R0`` and ``delta``.

    The seed radius is the radius the paraboloid experiment was run at;
    ``rho_tilde`` is the radius of the smallest ball around ``center`` on
    which ``max u >= 1 - h(r_tilde)``.  ``delta_tilde`` is the smallest
    measured density ``|B_r(x*) & {u >= 0}| / r**n`` for ``r >= r_tilde``
    inside the box, or None when no such ball fits.
    """
    n = spec.params.n
    center = tuple(center) if center is not None else (0.0,) * n
    r_tilde = max(lemma2.R, 1.0)
    h_tilde = h_of_R(spec.params, r_tilde)
    x_star, rho, u_star = find_witness(field, center, 1 - h_tilde)

    grid = field.grid
    r_max = min(min(xs - (-e), (-e + d * grid.spacing) - xs)
                for xs, e, d in zip(x_star, grid.extent, grid.dims))
    delta_tilde = None
    if r_max >= r_tilde:
        vals = []
        for r in np.linspace(r_tilde, r_max, seed_radii):
            ball = ball_mask(grid, x_star, r).membership
            vals.append(int(np.count_nonzero(ball & (field.values >= 0))) * grid.cell_volume / r**n)
        delta_tilde = float(min(vals))
    ledger = ConstantsLedger.from_parts(lemma2.sigma_hat, rho, r_tilde, n, h_tilde=h_tilde,
                                        delta_tilde=delta_tilde, x_star=x_star, u_x_star=u_star)
    if u_star != 1 - h_tilde:
        ledger.notes.append("witness satisfies u(x*) >= 1 - h_tilde (not equality)")
    return ledger


@dataclass
class RadiusCheck:
    R: float
    pos_measure: float
    neg_measure: float
    bound: float
    status: str  # checked | below R0 | clipped

    @property
    def passed(self) -> bool:
        return self.status == "checked" and self.pos_measure >= self.bound and self.neg_measure >= self.bound


@dataclass
class TheoremReport:
    center: tuple[float, ...]
    delta: float
    R0: float
    checks: list[RadiusCheck]
    hypothesis_met: bool
    inner_ball_contained: bool

    @property
    def checked(self) -> list[RadiusCheck]:
        return [c for c in self.checks if c.status == "checked"]

    @property
    def skipped(self) -> list[float]:
        return [c.R for c in self.checks if c.status != "checked"]

    @property
    def passed(self) -> bool:
        return bool(self.checked) and all(c.passed for c in self.checked)

    @property
    def verdict(self) -> str:
        if not self.hypothesis_met:
            return "hypothesis-violated"
        return "pass" if self.passed else "fail"


def _zero_at(field: ScalarField, center: Sequence[float], zero_tol: float) -> bool:
    """Discrete ``u(center) = 0``: the value is zero, or ``u`` changes sign next to ``center``.

    "Next to" means cells whose centers lie within one cell diagonal of the
    point, which is where a continuous interpolant would need its zero.
    """
    if abs(field.at(center)) <= zero_tol:
        return True
    grid = field.grid
    near = grid.distance_from(center) <= grid.spacing * math.sqrt(grid.n)
    vals = field.values[near]
    return bool(vals.min() <= 0 <= vals.max())


def verify_main_theorem(field: ScalarField, ledger: ConstantsLedger, radii: Sequence[float],
                        center: Optional[Sequence[float]] = None,
                        zero_tol: float = 1e-12) -> TheoremReport:
    """Both-sided density ``>= delta R**n`` at every checkable ``R >= R0``.

    Radii below ``R0`` or whose ball leaves the box are reported, not checked.
    """
    n = field.grid.n
    center = tuple(center) if center is not None else (0.0,) * n
    curve = density_curve(field, center, radii)
    checks = []
    contained = True
    for R, pos, neg, clipped in zip(curve.radii, curve.pos_measure, curve.neg_measure,
                                    curve.clipped):
        status = "checked"
        if R < ledger.R0:
            status = "below R0"
        elif clipped:
            status = "clipped"
        if status == "checked" and ledger.x_star is not None:
            dist = float(np.linalg.norm(np.subtract(ledger.x_star, center)))
            contained &= dist + R / 2 <= R
        checks.append(RadiusCheck(R, pos, neg, ledger.delta * R**n, status))
    hyp = _zero_at(field, center, zero_tol)
    return TheoremReport(center, ledger.delta, ledger.R0, checks, hyp, contained)


def half_space_density(n: int) -> float:
    return unit_ball_volume(n) / 2
