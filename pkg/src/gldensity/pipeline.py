"""Experiment orchestration: one subcommand per run, one directory per run.

Layout of a run::

    <outdir>/<run-id>/
        config.resolved      every key, resolved
        fields/*.dat         field dumps
        tables/*.csv
        plots/*.svg
        report.json          results, the resolved config and the format version
        MANIFEST             file list with sha256; written last

The run id is a hash of the resolved config, the subcommand and its extra
arguments, so the same inputs always land in the same place.  Nothing
time-dependent is written anywhere.
"""

from __future__ import annotations

import hashlib
import json
import logging
import traceback
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np

from . import plotting
from .competitors import IterationSchedule, h_of_R, phi_a, phi_k, radial_shell
from .config import FORMAT_VERSION, ExperimentConfig, serialize
from .degiorgi import fit_iteration, iterate_beta, threshold_beta0
from .density import (ConstantsLedger, assemble_constants, density_curve, energy_growth,
                      key_lemma2_experiment, verify_main_theorem)
from .energy import discrete_energy, validate_assumptions
from .heteroclinic import decay_classify, quadrature_profile
from .io import dump_json, read_field, rows_to_csv, to_jsonable, write_field
from .lattice import ScalarField
from .minimizer import planar_interface, solve_with_continuation

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CHECK_FAILED, EXIT_ERROR = 0, 1, 2


@dataclass
class Run:
    cfg: ExperimentConfig
    subcommand: str
    extra: dict
    root: Path
    results: dict = field(default_factory=dict)
    files: list[Path] = field(default_factory=list)
    failed_checks: list[str] = field(default_factory=list)

    def write(self, rel: str, text: str) -> Path:
        path = self.root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        self.files.append(path)
        return path

    def save_field(self, name: str, f: ScalarField) -> Path:
        path = self.root / "fields" / f"{name}.dat"
        path.parent.mkdir(parents=True, exist_ok=True)
        write_field(path, f)
        self.files.append(path)
        return path

    def plot(self, name: str, fn: Callable, *args, **kw) -> Path:
        path = self.root / "plots" / f"{name}.svg"
        path.parent.mkdir(parents=True, exist_ok=True)
        fn(path, *args, **kw)
        self.files.append(path)
        return path

    def check(self, name: str, ok: bool) -> None:
        if not ok:
            self.failed_checks.append(name)


def run_id(cfg: ExperimentConfig, subcommand: str, extra: Optional[dict] = None) -> str:
    """Hash of everything that determines the results (the output location does not)."""
    what = serialize(replace(cfg, output_dir=""))
    blob = what + "\n" + subcommand + "\n" + json.dumps(extra or {}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# -- building blocks ---------------------------------------------------------

def _center(run: Run) -> tuple[float, ...]:
    c = run.extra.get("center")
    return tuple(float(v) for v in c) if c is not None else (0.0,) * run.cfg.n


def solve_planar(cfg: ExperimentConfig, pin: Optional[float] = 0.0):
    """Planar-front minimizer on the configured grid, pinned at the origin."""
    spec = cfg.spec()
    grid = cfg.grid()
    pin_origin = None if pin is None else ((0.0,) * cfg.n, pin)
    opts = cfg.solve_options(pin_origin=pin_origin)
    return solve_with_continuation(spec, grid, lambda g: planar_interface(g, cfg.width), opts,
                                   cfg.levels)


def _field_or_solve(run: Run) -> ScalarField:
    path = run.extra.get("field")
    if path:
        return read_field(path)
    u, traces = solve_planar(run.cfg)
    _record_solve(run, u, traces)
    return u


def _record_solve(run: Run, u: ScalarField, traces) -> None:
    run.save_field("u", u)
    for i, tr in enumerate(traces):
        run.write(f"tables/trace_level{i}.csv", tr.to_csv())
    run.plot("trace", plotting.trace_plot, [tr.energies for tr in traces])
    if u.grid.n == 2:
        run.plot("field", plotting.field_plot, u.values, u.grid.extent)
    run.results["solve"] = {
        "levels": [{"dims": list(t_grid), "iterations": len(tr.energies) - 1,
                    "final_energy": tr.final_energy, "converged": tr.converged,
                    "reason": tr.reason, "monotone": tr.is_monotone()}
                   for t_grid, tr in zip(_level_dims(u, len(traces)), traces)],
        "energy": discrete_energy(run.cfg.spec(), u, deterministic=True),
    }
    run.check("solver converged", all(tr.converged for tr in traces))
    run.check("energy trace monotone", all(tr.is_monotone() for tr in traces))


def _level_dims(u: ScalarField, count: int):
    return [tuple(d >> (count - 1 - i) for d in u.grid.dims) for i in range(count)]


def _density(run: Run, u: ScalarField) -> dict:
    cfg = run.cfg
    curve = density_curve(u, _center(run), cfg.radii, cfg.spec())
    run.write("tables/density.csv", rows_to_csv(
        ["R", "pos_measure", "neg_measure", "zero_measure", "ball_measure", "energy", "clipped"],
        ([r[k] for k in ("R", "pos_measure", "neg_measure", "zero_measure", "ball_measure",
                         "energy", "clipped")] for r in curve.rows())))
    run.plot("density", plotting.loglog, curve.radii,
             {"|B_R & {u>=0}|": curve.pos_measure, "|B_R & {u<=0}|": curve.neg_measure},
             "measure")
    out = {"curve": curve}
    if len(curve.radii) >= 3:
        growth = energy_growth(curve, cfg.n)
        run.plot("energy", plotting.loglog, curve.radii,
                 {"J(u, B_R)": curve.energy, "J / R^(n-1)": growth.normalized}, "energy")
        out["growth"] = growth
        run.check("energy growth", growth.passed)
    return out


def _lemma2(run: Run):
    cfg = run.cfg
    rep = key_lemma2_experiment(cfg.spec(), cfg.lemma_R, cfg.solve_options(),
                                spacing=cfg.lemma_spacing, margin=cfg.lemma_margin,
                                a_steps=cfg.a_steps, levels=cfg.levels)
    run.write("tables/lemma2_sweep.csv", rows_to_csv(
        ["a", "V", "omega_measure", "dV_fd", "dV_exact"],
        zip(rep.a_values, rep.V, rep.omega_measure, rep.dV_fd, rep.dV_exact)))
    run.plot("lemma2_sweep", plotting.sweep_plot, rep.a_values, rep.V, rep.omega_measure,
             rep.dV_fd)
    run.results["lemma2"] = {
        "R": rep.R, "h": rep.h, "center": rep.center, "pinned_value": rep.pinned_value,
        "V_2h": rep.V_2h, "omega_2h": rep.omega_2h, "pos_measure": rep.pos_measure,
        "sigma_hat": rep.sigma_hat, "V_2h_over_R_n_h": rep.V_2h / (rep.R**cfg.n * rep.h),
        "monotone": rep.monotone, "derivative_ok": all(rep.derivative_ok),
        "implied_density_ok": rep.implied_density_ok, "converged": rep.converged,
        "solver_iterations": [len(t.energies) - 1 for t in rep.traces],
    }
    run.check("lemma2 V monotone", rep.monotone)
    run.check("lemma2 dV/da >= |Omega_a| within tolerance", all(rep.derivative_ok))
    run.check("lemma2 implied density", rep.implied_density_ok)
    run.check("lemma2 solver converged", rep.converged)
    return rep


def ledger_from_dict(d: dict) -> ConstantsLedger:
    known = {"sigma", "h_tilde", "rho_tilde", "r_tilde", "delta_tilde", "R0", "delta", "n",
             "x_star", "u_x_star", "notes"}
    args = {k: v for k, v in d.items() if k in known}
    if args.get("x_star") is not None:
        args["x_star"] = tuple(args["x_star"])
    return ConstantsLedger(**args)


def _theorem(run: Run, u: ScalarField, ledger: ConstantsLedger):
    radii = run.extra.get("theorem_radii") or run.cfg.radii
    rep = verify_main_theorem(u, ledger, radii, _center(run))
    run.write("tables/theorem.csv", rows_to_csv(
        ["R", "pos_measure", "neg_measure", "bound", "status", "passed"],
        ((c.R, c.pos_measure, c.neg_measure, c.bound, c.status, c.passed) for c in rep.checks)))
    run.results["theorem"] = {"verdict": rep.verdict, "delta": rep.delta, "R0": rep.R0,
                              "checked": [c.R for c in rep.checked], "skipped": rep.skipped,
                              "inner_ball_contained": rep.inner_ball_contained}
    run.check("main theorem", rep.verdict == "pass")
    return rep


# -- subcommands -------------------------------------------------------------

def cmd_validate(run: Run) -> None:
    spec = run.cfg.spec()
    rep = validate_assumptions(spec, run.cfg.validate_samples, run.cfg.seed)
    run.write("tables/violations.csv", rows_to_csv(
        ["kind", "value", "bound", "witness"],
        ((v.kind, v.value, v.bound, json.dumps(to_jsonable(v.witness), sort_keys=True))
         for v in rep.violations)))
    run.results["validate"] = {"samples": rep.samples, "violations": len(rep.violations),
                               "by_kind": {k: rep.count(k) for k in "ABC"}}
    run.check("assumptions", rep.ok)


def cmd_solve(run: Run) -> None:
    u, traces = solve_planar(run.cfg)
    _record_solve(run, u, traces)


def cmd_profile1d(run: Run) -> None:
    cfg = run.cfg
    u_max = float(run.extra.get("u_max", 0.999))
    du = float(run.extra.get("du", 1e-4))
    prof = quadrature_profile(cfg.p, cfg.m, u_max, du)
    run.write("tables/profile.csv", prof.to_csv())
    run.plot("profile", plotting.profile_plot, prof.xs, prof.us, f"p={cfg.p}, m={cfg.m}")
    decay = decay_classify(prof)
    res = {"samples": len(prof.xs), "x_max": float(prof.xs[-1]), "decay": decay,
           "max_residual": float(np.nanmax(prof.residual()))}
    if cfg.p == 2 and cfg.m == 2:
        res["max_error_vs_tanh"] = float(np.max(np.abs(prof.us - np.tanh(prof.xs))))
    run.results["profile1d"] = res


def cmd_density(run: Run) -> None:
    u = _field_or_solve(run)
    run.results["density"] = _density(run, u)


def cmd_lemma2(run: Run) -> None:
    _lemma2(run)


def cmd_iterate(run: Run) -> None:
    cfg = run.cfg
    C = float(run.extra.get("C", 1.0))
    beta0 = float(run.extra.get("beta0", 0.01))
    k_max = int(run.extra.get("k_max", 50))
    tr = iterate_beta(beta0, C, cfg.p, cfg.n, k_max)
    run.write("tables/beta.csv", rows_to_csv(["k", "beta"], enumerate(tr.beta)))
    thr = threshold_beta0(C, cfg.p, cfg.n)
    run.results["iterate"] = {"C": C, "beta0": beta0, "verdict": tr.verdict, "threshold": thr}


def cmd_fit(run: Run) -> None:
    cfg = run.cfg
    u = _field_or_solve(run)
    rep = fit_iteration(u, cfg.spec(), IterationSchedule(cfg.t_infty, cfg.L), _center(run))
    run.write("tables/levels.csv", rows_to_csv(
        ["k", "t_k", "r_k", "measure", "beta"],
        ((k, t, r, mu, b) for k, (t, r, mu, b) in
         enumerate(zip(rep.levels, rep.radii, rep.measures, rep.beta)))))
    run.results["fit"] = rep


def cmd_competitor(run: Run) -> None:
    cfg = run.cfg
    kind = {"phik": "phi_k", "phia": "phi_a"}.get(run.extra.get("kind", "shell"),
                                                   run.extra.get("kind", "shell"))
    center = _center(run)
    R = float(run.extra.get("R", cfg.lemma_R))
    if kind == "shell":
        comp = radial_shell(R, center)
    elif kind == "phi_k":
        comp = phi_k(IterationSchedule(cfg.t_infty, cfg.L), int(run.extra.get("k", 0)),
                     run.extra.get("N"), center)
    elif kind == "phi_a":
        h = h_of_R(cfg.params(), R)
        comp = phi_a(float(run.extra.get("a", 2 * h)), h, R, center)
    else:
        raise ValueError(f"unknown competitor kind {kind!r}")
    u = comp.rasterize(cfg.grid())
    run.save_field(f"competitor_{kind}", u)
    if cfg.n == 2:
        run.plot(f"competitor_{kind}", plotting.field_plot, u.values, u.grid.extent)
    grad = comp.gradient_norm(u.grid.centers())
    run.results["competitor"] = {"kind": comp.kind, "params": comp.params,
                                 "energy": discrete_energy(cfg.spec(), u, deterministic=True),
                                 "max_gradient": float(grad.max())}


def cmd_theorem(run: Run) -> None:
    u = _field_or_solve(run)
    path = run.extra.get("ledger")
    if path:
        ledger = ledger_from_dict(json.loads(Path(path).read_text()))
    else:
        ledger = assemble_constants(run.cfg.spec(), u, _lemma2(run), _center(run))
    run.results["ledger"] = ledger
    run.check("ledger identities", ledger.identities_hold())
    _theorem(run, u, ledger)


def cmd_report(run: Run) -> None:
    u = _field_or_solve(run)
    run.results["density"] = _density(run, u)
    lem = _lemma2(run)
    ledger = assemble_constants(run.cfg.spec(), u, lem, _center(run))
    run.write("tables/ledger.json", dump_json(ledger))
    run.results["ledger"] = ledger
    run.check("ledger identities", ledger.identities_hold())
    _theorem(run, u, ledger)
    cfg = run.cfg
    if u.grid.contains_ball(_center(run), 2.0**cfg.L):
        run.results["fit"] = fit_iteration(u, cfg.spec(), IterationSchedule(cfg.t_infty, cfg.L),
                                           _center(run))


SUBCOMMANDS: dict[str, Callable[[Run], None]] = {
    "validate": cmd_validate,
    "solve": cmd_solve,
    "profile1d": cmd_profile1d,
    "density": cmd_density,
    "lemma2": cmd_lemma2,
    "iterate": cmd_iterate,
    "fit": cmd_fit,
    "competitor": cmd_competitor,
    "theorem": cmd_theorem,
    "report": cmd_report,
}

# subcommands that only need p > 1, m > 0
RELAXED = {"profile1d", "iterate"}


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_pipeline(cfg: ExperimentConfig, subcommand: str, extra: Optional[dict] = None,
                 outdir: Optional[str] = None) -> tuple[int, Path]:
    """Run one subcommand; returns the exit status and the run directory.

    0: all checks passed, 1: a check failed, 2: hard error.  Partial results
    are flushed either way and the MANIFEST records whether the run completed.
    """
    if subcommand not in SUBCOMMANDS:
        raise ValueError(f"unknown subcommand {subcommand!r}")
    extra = dict(extra or {})
    root = Path(outdir or cfg.output_dir) / run_id(cfg, subcommand, extra)
    for sub in ("fields", "tables", "plots"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    run = Run(cfg, subcommand, extra, root)
    run.write("config.resolved", serialize(cfg))

    error = None
    try:
        SUBCOMMANDS[subcommand](run)
    except Exception as exc:  # flushed into the report, then signalled by the exit code
        error = f"{type(exc).__name__}: {exc}"
        log.debug("run failed\n%s", traceback.format_exc())
    status = EXIT_ERROR if error else (EXIT_CHECK_FAILED if run.failed_checks else EXIT_OK)

    report = {
        "format_version": FORMAT_VERSION,
        "subcommand": subcommand,
        "arguments": extra,
        "config": cfg.as_dict(),
        "results": run.results,
        "failed_checks": run.failed_checks,
        "status": status,
        "error": error,
    }
    run.write("report.json", dump_json(report))

    lines = [f"format_version {FORMAT_VERSION}", f"run_id {root.name}",
             f"complete {'false' if error else 'true'}"]
    if error:
        lines.append(f"incomplete: {error}")
    for path in sorted(set(run.files)):
        lines.append(f"{_sha256(path)}  {path.relative_to(root).as_posix()}")
    (root / "MANIFEST").write_text("\n".join(lines) + "\n")
    return status, root


def summarize(root: Path) -> str:
    rep = json.loads((root / "report.json").read_text())
    out = [f"run {root}", f"status {rep['status']}"]
    if rep["error"]:
        out.append(f"error {rep['error']}")
    for name in rep["failed_checks"]:
        out.append(f"failed check: {name}")
    return "\n".join(out)

