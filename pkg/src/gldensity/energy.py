"""Ginzburg-Landau energies with rough, piecewise-constant coefficients.

The Dirichlet term is ``F(xi, tau, x) = a(x) |xi|**p`` and the potential is
``W(tau, x) = b(x) (1 - tau**2)**m``.  The coefficients ``a`` and ``b`` are
sampled on a coarse lattice, extended periodically and read back with a
nearest-cell rule, so every value they produce is one of the stored samples.
That keeps the two-sided bounds and the monotonicity in ``tau`` exact under
evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .lattice import FIELD_TOL, Grid, RegionMask, ScalarField, check_range


class AssumptionError(ValueError):
    """Raised when parameters or coefficients fall outside the admissible class."""


@dataclass(frozen=True)
class EnergyParams:
    lam: float
    p: float
    m: float
    n: int
    strict: bool = True

    def __post_init__(self):
        problems = self.violations()
        if problems and self.strict:
            raise AssumptionError("; ".join(problems))

    def violations(self) -> list[str]:
        out = []
        if not self.lam >= 1:
            out.append(f"lambda >= 1 violated (lambda={self.lam!r})")
        if self.n < 1:
            out.append(f"dimension n={self.n} must be positive")
        elif self.strict and self.n < 2:
            out.append(f"n >= 2 violated (n={self.n})")
        if not self.p > 1:
            out.append(f"p > 1 violated (p={self.p!r})")
        if self.n >= 2 and not self.p < self.n / (self.n - 1):
            out.append(f"p < n/(n-1) = {self.n / (self.n - 1):g} violated (p={self.p!r})")
        if not self.m > self.p:
            out.append(f"m > p violated (m={self.m!r}, p={self.p!r})")
        return out

    @property
    def p_star(self) -> float:
        return math.inf if self.n == 1 else self.n / (self.n - 1)


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator so a single 64-bit seed fixes every stream."""
    return np.random.Generator(np.random.Philox(int(seed) & (2**64 - 1)))


@dataclass
class CoefficientField:
    """Periodic nearest-cell coefficient lattice for ``a`` (Dirichlet) and ``b`` (potential)."""

    a_samples: np.ndarray
    b_samples: np.ndarray
    cell: float = 1.0
    seed: Optional[int] = None

    def __post_init__(self):
        self.a_samples = np.asarray(self.a_samples, dtype=float)
        self.b_samples = np.asarray(self.b_samples, dtype=float)
        if self.a_samples.shape != self.b_samples.shape:
            raise ValueError("a and b lattices must have the same shape")
        if not self.cell > 0:
            raise ValueError("coefficient cell length must be positive")

    @property
    def n(self) -> int:
        return self.a_samples.ndim

    @classmethod
    def constant(cls, n: int, a: float = 1.0, b: float = 1.0, resolution: int = 1,
                 cell: float = 1.0) -> "CoefficientField":
        shape = (resolution,) * n
        return cls(np.full(shape, float(a)), np.full(shape, float(b)), cell)

    @classmethod
    def random(cls, n: int, lam: float, resolution: int, seed: int, *, cell: float = 1.0,
               a_mode: str = "random", b_mode: str = "random", a_value: float = 1.0,
               b_value: float = 1.0) -> "CoefficientField":
        rng = make_rng(seed)
        shape = (resolution,) * n
        lo, hi = 1.0 / lam, float(lam)

        def draw(mode, value):
            if mode == "constant":
                return np.full(shape, float(value))
            if mode == "random":
                return np.clip(rng.uniform(lo, hi, size=shape), lo, hi)
            raise ValueError(f"unknown coefficient mode {mode!r}")

        a = draw(a_mode, a_value)
        b = draw(b_mode, b_value)
        return cls(a, b, cell, seed)

    def index(self, x: np.ndarray) -> tuple[np.ndarray, ...]:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise ValueError(f"points must have {self.n} coordinates")
        if not np.all(np.isfinite(x)):
            raise ValueError("non-finite evaluation point")
        res = self.a_samples.shape
        cells = np.floor(x / self.cell).astype(np.int64)
        return tuple(np.mod(cells[..., d], res[d]) for d in range(self.n))

    def a(self, x) -> np.ndarray:
        return self.a_samples[self.index(x)]

    def b(self, x) -> np.ndarray:
        return self.b_samples[self.index(x)]

    def sample_centers(self) -> np.ndarray:
        """Centers of the stored lattice cells, shape ``(count, n)``."""
        axes = [(np.arange(r) + 0.5) * self.cell for r in self.a_samples.shape]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def scaled(self, kappa: float) -> "CoefficientField":
        return CoefficientField(self.a_samples * kappa, self.b_samples * kappa, self.cell,
                                self.seed)


FHook = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
WHook = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass
class EnergySpec:
    """Energy ``J(v) = sum F(grad v, v, x) + W(v, x)``.

    ``F_hook(xi, tau, x)`` and ``W_hook(tau, x)`` replace the product forms;
    a hooked spec must pass :func:`validate_assumptions` before use.
    """

    params: EnergyParams
    coeffs: CoefficientField
    F_hook: Optional[FHook] = None
    W_hook: Optional[WHook] = None
    _hooks_validated: bool = field(default=False, repr=False, compare=False)

    def __post_init__(self):
        if self.coeffs.n != self.params.n:
            raise ValueError("coefficient lattice dimension differs from params.n")

    @classmethod
    def canonical(cls, n: int = 2, p: float = 1.4, m: float = 3.0, lam: float = 1.0,
                  strict: bool = True) -> "EnergySpec":
        return cls(EnergyParams(lam, p, m, n, strict), CoefficientField.constant(n))

    @property
    def has_hooks(self) -> bool:
        return self.F_hook is not None or self.W_hook is not None

    @property
    def multiplicative(self) -> bool:
        return not self.has_hooks

    def require_usable(self) -> None:
        if self.has_hooks and not self._hooks_validated:
            raise AssumptionError("hooked energy must pass validate_assumptions before use")

    def with_coeffs(self, coeffs: CoefficientField) -> "EnergySpec":
        return EnergySpec(self.params, coeffs, self.F_hook, self.W_hook, self._hooks_validated)


def _check_tau(tau) -> np.ndarray:
    tau = np.asarray(tau, dtype=float)
    if np.any(np.abs(tau) > 1.0 + FIELD_TOL):
        raise ValueError("tau must lie in [-1, 1]")
    return np.clip(tau, -1.0, 1.0)


def _raw_F(spec: EnergySpec, xi, tau, x) -> np.ndarray:
    if spec.F_hook is not None:
        return np.asarray(spec.F_hook(xi, tau, x), dtype=float)
    norm = np.linalg.norm(np.asarray(xi, dtype=float), axis=-1)
    return spec.coeffs.a(x) * norm**spec.params.p


def _raw_W(spec: EnergySpec, tau, x) -> np.ndarray:
    if spec.W_hook is not None:
        return np.asarray(spec.W_hook(tau, x), dtype=float)
    return spec.coeffs.b(x) * well(tau, spec.params.m)


def well(tau, m: float) -> np.ndarray:
    """``(1 - tau**2)**m`` with the base clamped at zero outside [-1, 1]."""
    return np.maximum(1.0 - np.square(tau), 0.0) ** m


def eval_F(spec: EnergySpec, xi, tau, x) -> np.ndarray:
    spec.require_usable()
    return _raw_F(spec, np.asarray(xi, dtype=float), _check_tau(tau), np.asarray(x, float))


def eval_W(spec: EnergySpec, tau, x) -> np.ndarray:
    spec.require_usable()
    return _raw_W(spec, _check_tau(tau), np.asarray(x, dtype=float))


@dataclass
class Violation:
    kind: str  # "A", "B" or "C"
    witness: dict
    value: float
    bound: float


@dataclass
class ValidationReport:
    samples: int
    violations: list[Violation]

    @property
    def ok(self) -> bool:
        return not self.violations

    def count(self, kind: str) -> int:
        return sum(v.kind == kind for v in self.violations)


def validate_assumptions(spec: EnergySpec, samples: int = 10_000, seed: int = 0,
                         max_witnesses: int = 50) -> ValidationReport:
    """Check the two-sided bounds on F and W and the monotonicity of W in tau.

    Random triples are drawn over a window of two coefficient periods; the
    stored coefficient cells are additionally scanned one by one so a single
    bad sample cannot hide between random draws.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    prm = spec.params
    lam, p, m, n = prm.lam, prm.p, prm.m, prm.n
    rng = make_rng(seed)
    period = np.array(spec.coeffs.a_samples.shape, dtype=float) * spec.coeffs.cell

    x = rng.uniform(-2.0, 2.0, size=(samples, n)) * period
    x = np.concatenate([x, spec.coeffs.sample_centers()])
    total = x.shape[0]
    direction = rng.normal(size=(total, n))
    direction /= np.maximum(np.linalg.norm(direction, axis=-1, keepdims=True), 1e-300)
    xi = direction * rng.uniform(0.0, 10.0, size=(total, 1))
    tau = rng.uniform(-1.0, 1.0, size=total)
    tau[-spec.coeffs.sample_centers().shape[0]:] = 0.0

    violations: list[Violation] = []

    def record(kind, mask, value, bound, **cols):
        for i in np.flatnonzero(mask)[: max_witnesses]:
            wit = {k: (v[i].tolist() if np.ndim(v) > 1 else float(v[i])) for k, v in cols.items()}
            violations.append(Violation(kind, wit, float(value[i]), float(bound[i])))

    Fv = _raw_F(spec, xi, tau, x)
    base_F = np.linalg.norm(xi, axis=-1) ** p
    lo, hi = (1.0 / lam) * base_F, lam * base_F
    record("A", (Fv < lo), Fv, lo, xi=xi, tau=tau, x=x)
    record("A", (Fv > hi), Fv, hi, xi=xi, tau=tau, x=x)

    Wv = _raw_W(spec, tau, x)
    base_W = well(tau, m)
    lo, hi = (1.0 / lam) * base_W, lam * base_W
    record("B", (Wv < lo), Wv, lo, tau=tau, x=x)
    record("B", (Wv > hi), Wv, hi, tau=tau, x=x)

    # monotonicity: ordered pairs on each half-interval, per sampled x
    t1 = -rng.uniform(0.0, 1.0, size=total)
    t2 = -rng.uniform(0.0, 1.0, size=total)
    lo_t, hi_t = np.minimum(t1, t2), np.maximum(t1, t2)
    w_lo, w_hi = _raw_W(spec, lo_t, x), _raw_W(spec, hi_t, x)
    record("C", w_lo > w_hi, w_lo, w_hi, tau1=lo_t, tau2=hi_t, x=x)
    w_lo, w_hi = _raw_W(spec, -hi_t, x), _raw_W(spec, -lo_t, x)
    record("C", w_lo < w_hi, w_hi, w_lo, tau1=-hi_t, tau2=-lo_t, x=x)

    report = ValidationReport(samples, violations)
    if spec.has_hooks and report.ok:
        spec._hooks_validated = True
    return report


def elementary_vector_bound(xi: np.ndarray, eta: np.ndarray, p: float) -> tuple[np.ndarray, np.ndarray]:
    """Both sides of ``2**(1-p) |xi - eta|**p <= |xi|**p + |eta|**p``."""
    lhs = 2.0 ** (1 - p) * np.linalg.norm(xi - eta, axis=-1) ** p
    rhs = np.linalg.norm(xi, axis=-1) ** p + np.linalg.norm(eta, axis=-1) ** p
    return lhs, rhs


def forward_gradient(values: np.ndarray, h: float) -> list[np.ndarray]:
    """Per-axis forward differences; the last cell on each axis reuses the one-sided difference."""
    comps = []
    for ax in range(values.ndim):
        d = np.diff(values, axis=ax) / h
        last = np.take(d, [-1], axis=ax)
        comps.append(np.concatenate([d, last], axis=ax))
    return comps


class DiscreteEnergy:
    """Lattice energy for one spec on one grid, with coefficients cached per cell."""

    def __init__(self, spec: EnergySpec, grid: Grid):
        if grid.n != spec.params.n:
            raise ValueError("grid dimension differs from spec dimension")
        spec.require_usable()
        self.spec = spec
        self.grid = grid
        self.h = grid.spacing
        self.vol = grid.cell_volume
        self.p = spec.params.p
        self.m = spec.params.m
        self._x = grid.centers()
        self.a = spec.coeffs.a(self._x) if spec.F_hook is None else None
        self.b = spec.coeffs.b(self._x) if spec.W_hook is None else None

    def density(self, values: np.ndarray, eps: float = 0.0) -> np.ndarray:
        comps = forward_gradient(values, self.h)
        if self.a is not None:
            s = sum(c * c for c in comps)
            if eps:
                s = s + eps * eps
            dirichlet = self.a * s ** (self.p / 2)
        else:
            dirichlet = _raw_F(self.spec, np.stack(comps, axis=-1), values, self._x)
        if self.b is not None:
            potential = self.b * well(values, self.m)
        else:
            potential = _raw_W(self.spec, np.clip(values, -1, 1), self._x)
        return dirichlet + potential

    def total(self, values: np.ndarray, region: Optional[np.ndarray] = None,
              eps: float = 0.0, deterministic: bool = False) -> float:
        dens = self.density(values, eps)
        if region is not None:
            dens = dens[region]
        if deterministic:
            return math.fsum(dens.ravel().tolist()) * self.vol
        return float(np.sum(dens)) * self.vol

    def totals(self, values: np.ndarray, eps: float) -> tuple[float, float]:
        """Unregularized and regularized totals from one gradient pass."""
        if self.a is None or self.b is None:
            return self.total(values), self.total(values, eps=eps)
        comps = forward_gradient(values, self.h)
        s = sum(c * c for c in comps)
        k = self.p / 2
        pot = self.b * well(values, self.m)
        true = np.sum(self.a * s**k + pot)
        reg = np.sum(self.a * (s + eps * eps) ** k + pot) if eps else true
        return float(true) * self.vol, float(reg) * self.vol

    def gradient(self, values: np.ndarray, eps: float = 0.0) -> np.ndarray:
        """Gradient of ``total`` (regularized by ``eps``) with respect to cell values."""
        return self.gradient_and_scale(values, eps, scale=False)[0]

    def diagonal_scale(self, values: np.ndarray, eps: float = 0.0) -> np.ndarray:
        """Positive per-cell curvature estimate used to scale descent steps."""
        return self.gradient_and_scale(values, eps)[1]

    def gradient_and_scale(self, values: np.ndarray, eps: float = 0.0, scale: bool = True):
        """Regularized gradient and, optionally, a diagonal curvature estimate.

        The estimate is the frozen-coefficient (Kacanov) diagonal of the
        Dirichlet term plus ``|W''|``; it is only used to scale steps.
        """
        if self.a is None:
            raise NotImplementedError("gradients need the product form of F")
        h = self.h
        nd = values.ndim
        comps = forward_gradient(values, h)
        s = sum(c * c for c in comps)
        floor = max(eps, 1e-12) ** 2
        coef = self.a * self.p * np.maximum(s + eps * eps, floor) ** (self.p / 2 - 1)
        if not eps:
            coef = np.where(s > 0, coef, 0.0)
        grad = np.zeros_like(values)
        diag = np.zeros_like(values) if scale else None
        for ax, g in enumerate(comps):
            q = coef * g
            head = [slice(None)] * nd
            head[ax] = slice(None, -1)
            head = tuple(head)
            shift = [slice(None)] * nd
            shift[ax] = slice(1, None)
            shift = tuple(shift)
            last = [slice(None)] * nd
            last[ax] = slice(-1, None)
            last = tuple(last)
            before = [slice(None)] * nd
            before[ax] = slice(-2, -1)
            before = tuple(before)
            # d/du of sum_k q_k (u_{k+1} - u_k)/h, last cell reusing the final difference
            v = q[head].copy()
            v[last] += q[last]
            grad[head] -= v
            grad[shift] += v
            if scale:
                diag[head] += coef[head]
                diag[shift] += coef[head]
                diag[before] += coef[last]
                diag[last] += coef[last]
        grad /= h
        grad += self._potential_derivative(values)
        grad *= self.vol
        if scale:
            diag /= h * h
            if self.b is not None and self.m >= 2:
                base = np.maximum(1.0 - values * values, 0.0)
                m = self.m
                w2 = 2 * m * base ** (m - 2) * ((2 * m - 1) * values * values - 1)
                diag += self.b * np.abs(w2)
            diag = np.maximum(diag, 1e-300) * self.vol
        return grad, diag

    def _potential_derivative(self, values: np.ndarray) -> np.ndarray:
        m = self.m
        if self.b is not None:
            base = np.maximum(1.0 - values * values, 0.0)
            return self.b * m * base ** (m - 1) * (-2.0 * values)
        eta = 1e-7
        up = np.clip(values + eta, -1, 1)
        dn = np.clip(values - eta, -1, 1)
        return (_raw_W(self.spec, up, self._x) - _raw_W(self.spec, dn, self._x)) / (up - dn)


def discrete_energy(spec: EnergySpec, field: ScalarField, region: Optional[RegionMask] = None,
                    deterministic: bool = False) -> float:
    """Sum over ``region`` of ``[F(forward gradient, u, center) + W(u, center)] * h**n``."""
    check_range(field.values)
    mask = None
    if region is not None:
        if region.grid != field.grid:
            raise ValueError("region and field live on different grids")
        mask = region.membership
    return DiscreteEnergy(spec, field.grid).total(field.values, mask, deterministic=deterministic)
