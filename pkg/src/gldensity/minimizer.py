"""Projected-gradient minimization of the lattice energy with values in [-1, 1].

The descent direction comes from the regularized density
``a (|grad u|**2 + eps**2)**(p/2) + W``; the reported energy is always the
unregularized one.  A step is accepted only when it passes the Armijo test
on the regularized energy *and* does not increase the true energy, so the
recorded energy trace is nonincreasing by construction.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .energy import DiscreteEnergy, EnergySpec, discrete_energy
from .lattice import Grid, RegionMask, ScalarField, check_range

log = logging.getLogger(__name__)


@dataclass
class SolveOptions:
    epsilon_reg: float = 1e-6
    step0: float = 1.0
    backtrack: float = 0.5
    tol_energy: float = 1e-8
    max_iters: int = 5000
    deterministic: bool = True
    pin_origin: Optional[tuple[Sequence[float], float]] = None
    window: int = 10
    armijo: float = 1e-4
    min_step: float = 1e-30
    max_step: float = 1e12
    precondition: bool = True

    def __post_init__(self):
        if not self.tol_energy > 0:
            raise ValueError("tol_energy must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtrack must lie in (0, 1)")
        if self.epsilon_reg < 0:
            raise ValueError("epsilon_reg must be >= 0")
        if not self.step0 > 0:
            raise ValueError("step0 must be positive")


@dataclass
class SolveTrace:
    iterations: list[int] = field(default_factory=list)
    energies: list[float] = field(default_factory=list)
    steps: list[float] = field(default_factory=list)
    max_updates: list[float] = field(default_factory=list)
    converged: bool = False
    reason: str = ""
    pinned_index: Optional[tuple[int, ...]] = None

    def append(self, it, energy, step, max_update):
        self.iterations.append(it)
        self.energies.append(energy)
        self.steps.append(step)
        self.max_updates.append(max_update)

    @property
    def final_energy(self) -> float:
        return self.energies[-1]

    def is_monotone(self) -> bool:
        e = np.asarray(self.energies)
        return bool(np.all(np.diff(e) <= 0))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "energy", "step", "max_update"])
        for row in zip(self.iterations, self.energies, self.steps, self.max_updates):
            w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
        return buf.getvalue()


StepCallback = Callable[[int, np.ndarray, np.ndarray, np.ndarray, float], None]


def minimize(spec: EnergySpec, init: ScalarField, free_region: RegionMask,
             opts: Optional[SolveOptions] = None,
             callback: Optional[StepCallback] = None) -> tuple[ScalarField, SolveTrace]:
    """Descend the energy over ``free_region`` keeping every other cell fixed.

    ``callback(it, u, grad, direction, step)`` is called after each accepted
    step with the pre-step iterate, the regularized gradient (zero off the
    free set) and the accepted update ``u_new - u``.
    """
    opts = opts or SolveOptions()
    grid = init.grid
    if free_region.grid != grid:
        raise ValueError("free region and initial field live on different grids")
    if free_region.touches_boundary():
        raise ValueError("free region must lie strictly inside the grid")
    check_range(init.values)

    model = DiscreteEnergy(spec, grid)
    eps = opts.epsilon_reg
    u = np.clip(init.values, -1.0, 1.0)
    u[~free_region.membership] = init.values[~free_region.membership]
    free = free_region.membership.copy()
    trace = SolveTrace()
    if opts.pin_origin is not None:
        point, value = opts.pin_origin
        if abs(value) > 1:
            raise ValueError("pinned value must lie in [-1, 1]")
        idx = grid.index_of(point)
        free[idx] = False
        u[idx] = value
        trace.pinned_index = idx
    fixed = ~free
    frozen = u[fixed].copy()

    def descent_data(v):
        g, D = model.gradient_and_scale(v, eps, scale=opts.precondition)
        g[fixed] = 0.0
        return g, (D if opts.precondition else np.ones_like(v))

    J, Je = model.totals(u, eps)
    g, D = descent_data(u)
    trace.append(0, J, 0.0, 0.0)
    step = opts.step0
    prev_u = prev_g = None

    for it in range(1, opts.max_iters + 1):
        if prev_u is not None:
            du, dg = u - prev_u, g - prev_g
            curv = float(np.vdot(du, dg))
            if curv > 0:
                step = float(np.vdot(du, D * du)) / curv
            else:
                step = min(step * 4.0, opts.max_step)
        step = min(max(step, opts.min_step), opts.max_step)

        accepted = False
        while step >= opts.min_step:
            trial = np.clip(u - step * (g / D), -1.0, 1.0)
            trial[fixed] = frozen
            d = trial - u
            if not np.any(d):
                break
            J_new, Je_new = model.totals(trial, eps)
            if not (np.isfinite(Je_new) and np.isfinite(J_new)):
                raise FloatingPointError(
                    f"non-finite energy at iteration {it} (step {step:g}); "
                    f"field range [{trial.min():g}, {trial.max():g}]"
                )
            if Je_new <= Je + opts.armijo * float(np.vdot(g, d)) and J_new <= J:
                accepted = True
                break
            step *= opts.backtrack

        if not accepted:
            trace.converged = True
            trace.reason = "stationary" if step >= opts.min_step else "line search stalled"
            break

        if callback is not None:
            callback(it, u, g, d, step)
        prev_u, prev_g = u, g
        u = trial
        J, Je = J_new, Je_new
        g, D = descent_data(u)
        trace.append(it, J, step, float(np.max(np.abs(d))))

        w = opts.window
        if len(trace.energies) > w:
            drop = trace.energies[-w - 1] - J
            if drop <= opts.tol_energy * abs(J):
                trace.converged = True
                trace.reason = "relative energy decrease below tolerance"
                break
    else:
        trace.reason = "max_iters reached"
        log.warning("minimize: no convergence within %d iterations", opts.max_iters)

    u[fixed] = frozen
    return ScalarField(grid, u), trace


@dataclass
class MarginReport:
    margin: float
    passed: bool
    region_cells: int
    energy_u: float
    energy_v: float


def minimality_check(spec: EnergySpec, u: ScalarField, v: ScalarField, tol: float = 0.0) -> MarginReport:
    """``J(u, O) - J(v, O)`` over ``O = {u != v}``; passes when the margin is ``<= tol``.

    The energy on ``O`` includes the cells whose forward differences read a
    changed value, i.e. the set is closed up by one cell backwards along each
    axis so that the comparison captures every term that differs.
    """
    if u.grid != v.grid:
        raise ValueError("fields live on different grids")
    diff = u.values != v.values
    region = RegionMask(u.grid, diff)
    if region.touches_boundary():
        raise ValueError("competitor differs from u on the grid boundary")
    support = diff.copy()
    for ax in range(diff.ndim):
        shifted = np.zeros_like(diff)
        src = [slice(None)] * diff.ndim
        dst = [slice(None)] * diff.ndim
        src[ax] = slice(1, None)
        dst[ax] = slice(None, -1)
        shifted[tuple(dst)] = diff[tuple(src)]
        support |= shifted
    mask = RegionMask(u.grid, support)
    Ju = discrete_energy(spec, u, mask, deterministic=True)
    Jv = discrete_energy(spec, v, mask, deterministic=True)
    margin = Ju - Jv
    return MarginReport(margin, margin <= tol, int(diff.sum()), Ju, Jv)


def planar_interface(grid: Grid, width: float, offset: float = 0.0) -> ScalarField:
    """``clamp((x_1 + offset) / width, -1, 1)``."""
    x1 = grid.centers()[..., 0]
    return ScalarField(grid, np.clip((x1 + offset) / width, -1.0, 1.0))


def interior_region(grid: Grid, width: int = 1) -> RegionMask:
    return ~grid.boundary_mask(width)


def heteroclinic_interface(grid: Grid, p: float, m: float, offset: float = 0.0,
                           du: float = 1e-4) -> ScalarField:
    """Planar front following the 1D profile, ``u0(x) = U(x_1 + offset)``."""
    from .heteroclinic import quadrature_profile

    prof = quadrature_profile(p, m, 1 - 1e-6, du)
    s = grid.centers()[..., 0] + offset
    vals = np.interp(s, prof.xs, prof.us, left=-1.0, right=1.0)
    return ScalarField(grid, vals)


def prolong(coarse: ScalarField, fine_grid: Grid) -> np.ndarray:
    """Multilinear interpolation of a coarse field onto the centers of a finer grid."""
    from scipy.interpolate import RegularGridInterpolator

    interp = RegularGridInterpolator(coarse.grid.axes(), coarse.values, bounds_error=False,
                                     fill_value=None)
    pts = fine_grid.centers().reshape(-1, fine_grid.n)
    return np.clip(interp(pts).reshape(fine_grid.dims), -1.0, 1.0)


def solve_with_continuation(spec: EnergySpec, grid: Grid,
                            initializer: Callable[[Grid], ScalarField],
                            opts: Optional[SolveOptions] = None, levels: int = 3,
                            boundary_width: int = 1) -> tuple[ScalarField, list[SolveTrace]]:
    """Minimize on successively finer grids, each started from the previous result.

    Grid ``j`` levels below the target has spacing ``h * 2**j`` over the same
    box; boundary cells always carry the initializer's values.  Long-range
    relaxation (e.g. the slowly decaying tails of degenerate profiles) is
    cheap on the coarse grids.  Returns the finest field and one trace per level.
    """
    opts = opts or SolveOptions()
    chain = [grid]
    for _ in range(levels - 1):
        g = Grid(grid.n, grid.extent, chain[-1].spacing * 2)
        if any(d < 8 for d in g.dims) or g.dims != tuple(d // 2 for d in chain[-1].dims):
            break
        chain.append(g)
    chain.reverse()

    traces = []
    field = None
    for g in chain:
        init = initializer(g)
        if field is not None:
            vals = prolong(field, g)
            fixed = g.boundary_mask(boundary_width).membership
            vals[fixed] = init.values[fixed]
            init = ScalarField(g, vals)
        field, trace = minimize(spec, init, interior_region(g, boundary_width), opts)
        traces.append(trace)
    return field, traces
