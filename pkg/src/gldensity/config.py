"""Plain-text ``key = value`` experiment configuration.

Keys live in a flat namespace with dotted sections (``grid.spacing``,
``solver.max_iters``).  Parsing is strict: unknown keys, duplicates and
malformed values are all collected and reported together with line numbers.
``#`` starts a comment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Any, Callable, Mapping, Optional

from .energy import CoefficientField, EnergyParams, EnergySpec
from .lattice import MAX_DIM, Grid
from .minimizer import SolveOptions

FORMAT_VERSION = "gldensity-1"


@dataclass
class ConfigIssue:
    line: Optional[int]  # None for flag overrides and cross-key checks
    key: str
    message: str

    def __str__(self) -> str:
        where = f"line {self.line}" if self.line is not None else "config"
        return f"{where}: {self.key}: {self.message}"


class ConfigError(ValueError):
    def __init__(self, issues: list[ConfigIssue]):
        self.issues = issues
        super().__init__("\n".join(str(i) for i in issues))


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _int(text: str) -> int:
    return int(text.strip())


def _float(text: str) -> float:
    val = float(text.strip())
    if math.isnan(val):
        raise ValueError("NaN is not allowed")
    return val


def _floats(text: str) -> tuple[float, ...]:
    parts = [t for t in text.replace(" ", "").split(",") if t]
    if not parts:
        return ()
    return tuple(_float(t) for t in parts)


def _mode(text: str) -> str:
    val = text.strip()
    if val not in ("constant", "random"):
        raise ValueError(f"expected 'constant' or 'random', got {val!r}")
    return val


def _str(text: str) -> str:
    return text.strip()


def _fmt(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    return str(value)


# key -> (attribute, parser)
_KEYS: dict[str, tuple[str, Callable[[str], Any]]] = {
    "lambda": ("lam", _float),
    "p": ("p", _float),
    "m": ("m", _float),
    "n": ("n", _int),
    "seed": ("seed", _int),
    "coeff.resolution": ("coeff_resolution", _int),
    "coeff.cell": ("coeff_cell", _float),
    "coeff.a_mode": ("a_mode", _mode),
    "coeff.b_mode": ("b_mode", _mode),
    "grid.dims": ("grid_dims", _int),
    "grid.extent": ("grid_extent", _float),
    "grid.spacing": ("grid_spacing", _float),
    "solver.epsilon_reg": ("epsilon_reg", _float),
    "solver.tol_energy": ("tol_energy", _float),
    "solver.max_iters": ("max_iters", _int),
    "solver.step0": ("step0", _float),
    "solver.backtrack": ("backtrack", _float),
    "solver.precondition": ("precondition", _bool),
    "solver.deterministic": ("deterministic", _bool),
    "solver.levels": ("levels", _int),
    "experiment.width": ("width", _float),
    "experiment.radii": ("radii", _floats),
    "experiment.L": ("L", _int),
    "experiment.t_infty": ("t_infty", _float),
    "experiment.a_steps": ("a_steps", _int),
    "experiment.R": ("lemma_R", _float),
    "experiment.margin": ("lemma_margin", _float),
    "experiment.spacing": ("lemma_spacing", _float),
    "experiment.validate_samples": ("validate_samples", _int),
    "output.dir": ("output_dir", _str),
}


@dataclass
class ExperimentConfig:
    lam: float = 1.0
    p: float = 1.4
    m: float = 3.0
    n: int = 2
    seed: int = 0
    coeff_resolution: int = 1
    coeff_cell: float = 1.0
    a_mode: str = "constant"
    b_mode: str = "constant"
    grid_dims: int = 0  # 0: derived from extent and spacing
    grid_extent: float = 72.0
    grid_spacing: float = 0.28125
    epsilon_reg: float = 1e-6
    tol_energy: float = 1e-8
    max_iters: int = 5000
    step0: float = 1.0
    backtrack: float = 0.5
    precondition: bool = True
    deterministic: bool = True
    levels: int = 3
    width: float = 2.0
    radii: tuple[float, ...] = (8.0, 16.0, 32.0, 64.0)
    L: int = 4
    t_infty: float = -0.5
    a_steps: int = 41
    lemma_R: float = 16.0
    lemma_margin: float = 8.0
    lemma_spacing: float = 0.25
    validate_samples: int = 10_000
    output_dir: str = "runs"

    # -- derived objects -------------------------------------------------
    def params(self) -> EnergyParams:
        return EnergyParams(self.lam, self.p, self.m, self.n)

    def spec(self) -> EnergySpec:
        if self.a_mode == "constant" and self.b_mode == "constant":
            coeffs = CoefficientField.constant(self.n, resolution=self.coeff_resolution,
                                               cell=self.coeff_cell)
        else:
            coeffs = CoefficientField.random(self.n, self.lam, self.coeff_resolution, self.seed,
                                             cell=self.coeff_cell, a_mode=self.a_mode,
                                             b_mode=self.b_mode)
        return EnergySpec(self.params(), coeffs)

    def grid(self) -> Grid:
        return Grid.cube(self.n, self.grid_extent, self.grid_spacing)

    def solve_options(self, **extra) -> SolveOptions:
        return SolveOptions(epsilon_reg=self.epsilon_reg, tol_energy=self.tol_energy,
                            max_iters=self.max_iters, step0=self.step0, backtrack=self.backtrack,
                            precondition=self.precondition, deterministic=self.deterministic,
                            **extra)

    def as_dict(self) -> dict[str, Any]:
        return {key: getattr(self, attr) for key, (attr, _) in _KEYS.items()}


def _cross_checks(cfg: ExperimentConfig, lines: Mapping[str, Optional[int]],
                  relaxed: bool) -> list[ConfigIssue]:
    issues = []

    def bad(key, msg):
        issues.append(ConfigIssue(lines.get(key), key, msg))

    if not 1 <= cfg.n <= MAX_DIM:
        bad("n", f"dimension must satisfy 1 <= n <= {MAX_DIM}")
        return issues
    if relaxed:
        # one-dimensional work only needs a convex gradient term and a positive well exponent
        if not cfg.p > 1:
            bad("p", f"p > 1 violated (p={cfg.p!r})")
        if not cfg.m > 0:
            bad("m", f"m > 0 violated (m={cfg.m!r})")
    else:
        params = EnergyParams(cfg.lam, cfg.p, cfg.m, cfg.n, strict=False)
        for text in params.violations() if cfg.n >= 2 else []:
            key = "lambda" if "lambda" in text else ("m" if text.startswith("m") else "p")
            bad(key, text)
        if cfg.n == 1:
            bad("n", "n = 1 has no admissible p (needs 1 < p < n/(n-1))")
    positive = {"coeff.cell": cfg.coeff_cell, "grid.extent": cfg.grid_extent,
                "grid.spacing": cfg.grid_spacing, "solver.tol_energy": cfg.tol_energy,
                "solver.step0": cfg.step0, "experiment.width": cfg.width,
                "experiment.margin": cfg.lemma_margin, "experiment.spacing": cfg.lemma_spacing}
    for key, val in positive.items():
        if not val > 0:
            bad(key, "must be > 0")
    for key, val, low in (("coeff.resolution", cfg.coeff_resolution, 1),
                          ("solver.max_iters", cfg.max_iters, 1),
                          ("solver.levels", cfg.levels, 1), ("experiment.L", cfg.L, 2),
                          ("experiment.a_steps", cfg.a_steps, 3),
                          ("experiment.validate_samples", cfg.validate_samples, 1),
                          ("grid.dims", cfg.grid_dims, 0)):
        if val < low:
            bad(key, f"must be >= {low}")
    if cfg.seed < 0 or cfg.seed >= 2**64:
        bad("seed", "must be a 64-bit unsigned integer")
    if not 0 < cfg.backtrack < 1:
        bad("solver.backtrack", "must satisfy 0 < backtrack < 1")
    if cfg.epsilon_reg < 0:
        bad("solver.epsilon_reg", "must be >= 0")
    if not -1 < cfg.t_infty < 0:
        bad("experiment.t_infty", "must satisfy -1 < t_infty < 0")
    if cfg.lemma_R < 1:
        bad("experiment.R", "must be >= 1")
    if any(r <= 0 for r in cfg.radii) or list(cfg.radii) != sorted(set(cfg.radii)):
        bad("experiment.radii", "must be positive and strictly increasing")
    if cfg.grid_extent > 0 and cfg.grid_spacing > 0:
        derived = int(round(2 * cfg.grid_extent / cfg.grid_spacing))
        if derived < 2:
            bad("grid.spacing", "grid needs at least 2 cells per axis")
        if cfg.grid_dims and cfg.grid_dims != derived:
            bad("grid.dims", f"{cfg.grid_dims} disagrees with 2*extent/spacing = {derived}")
    return issues


def parse_config(text: str, overrides: Optional[Mapping[str, str]] = None,
                 relaxed: bool = False) -> ExperimentConfig:
    """Parse ``text``; ``overrides`` (e.g. from command-line flags) win over file values.

    ``relaxed`` replaces the full admissibility check on ``(lambda, p, m, n)``
    by ``p > 1, m > 0``, which is all the one-dimensional profile needs.
    """
    issues: list[ConfigIssue] = []
    raw: dict[str, tuple[int, str]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            issues.append(ConfigIssue(lineno, body, "expected 'key = value'"))
            continue
        key, value = (s.strip() for s in body.split("=", 1))
        if key not in _KEYS:
            issues.append(ConfigIssue(lineno, key, "unknown key"))
            continue
        if key in raw:
            first = raw[key][0]
            issues.append(ConfigIssue(lineno, key, f"duplicate key (first set on line {first})"))
            continue
        raw[key] = (lineno, value)

    values: dict[str, tuple[Optional[int], str]] = dict(raw)
    for key, value in (overrides or {}).items():
        if key not in _KEYS:
            issues.append(ConfigIssue(None, key, "unknown key (flag)"))
            continue
        values[key] = (None, value)

    cfg = ExperimentConfig()
    for key, (lineno, value) in values.items():
        attr, parser = _KEYS[key]
        try:
            setattr(cfg, attr, parser(value))
        except ValueError as exc:
            issues.append(ConfigIssue(lineno, key, f"bad value {value!r}: {exc}"))
    if not issues:
        issues.extend(_cross_checks(cfg, {k: v[0] for k, v in values.items()}, relaxed))
    if issues:
        raise ConfigError(issues)
    return cfg


def serialize(cfg: ExperimentConfig) -> str:
    """Every key, in table order; ``parse_config(serialize(c)) == c``."""
    lines = [f"# {FORMAT_VERSION}"]
    for key, (attr, _) in _KEYS.items():
        lines.append(f"{key} = {_fmt(getattr(cfg, attr))}")
    return "\n".join(lines) + "\n"


def config_keys() -> list[str]:
    return list(_KEYS)


def default_config() -> ExperimentConfig:
    return ExperimentConfig()


assert {a for a, _ in _KEYS.values()} == {f.name for f in fields(ExperimentConfig)}
