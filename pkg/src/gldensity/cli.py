"""``gldensity`` command line.

Every config key is also a flag (``--p 1.4``, ``--grid.spacing 0.25``);
flags override values read from ``--config``.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .config import ConfigError, config_keys, parse_config
from .pipeline import EXIT_ERROR, RELAXED, SUBCOMMANDS, run_pipeline, summarize

# subcommand-specific arguments: flag -> (dest, type, help)
_EXTRA = {
    "profile1d": [(("--u-max", "--umax"), "u_max", float, "largest sampled u (default 0.999)"),
                  ("--du", "du", float, "u step (default 1e-4)")],
    "density": [("--field", "field", str, "field dump to read instead of solving"),
                ("--center", "center", str, "comma-separated center point")],
    "iterate": [("--C", "C", float, "recursion constant (default 1)"),
                ("--beta0", "beta0", float, "starting value (default 0.01)"),
                (("--k-max", "--kmax"), "k_max", int, "number of steps (default 50)")],
    "fit": [("--field", "field", str, "field dump to read instead of solving"),
            ("--center", "center", str, "comma-separated center point")],
    "competitor": [("--kind", "kind", str, "shell | phik | phia"),
                   ("--center", "center", str, "comma-separated center point"),
                   ("--comp-R", "R", float, "radius parameter (default experiment.R)"),
                   ("--k", "k", int, "level index for phi_k"),
                   ("--N", "N", int, "integer radius for inner phi_k"),
                   ("--a", "a", float, "paraboloid depth for phi_a (default 2h)")],
    "theorem": [("--field", "field", str, "field dump to read instead of solving"),
                ("--ledger", "ledger", str, "ledger JSON (default: assemble from a lemma2 run)"),
                ("--center", "center", str, "comma-separated center point"),
                ("--theorem-radii", "theorem_radii", str, "radii to check (default experiment.radii)")],
    "report": [("--field", "field", str, "field dump to read instead of solving"),
               ("--center", "center", str, "comma-separated center point")],
}

# short aliases for frequently used config keys
_ALIASES = {"radii": "experiment.radii", "R": "experiment.R", "L": "experiment.L",
            "tinfty": "experiment.t_infty", "out": "output.dir"}


def _key_dest(key: str) -> str:
    return "cfg__" + key.replace(".", "__")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gldensity",
                                     description="Density estimates for phase-transition minimizers.")
    parser.add_argument("-v", "--verbose", action="store_true")
    subs = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        sp = subs.add_parser(name)
        sp.add_argument("--config", help="key = value config file")
        for key in config_keys():
            sp.add_argument(f"--{key}", dest=_key_dest(key), metavar="VALUE")
        for alias, key in _ALIASES.items():
            sp.add_argument(f"--{alias}", dest=_key_dest(key), metavar="VALUE",
                            help=f"alias for --{key}")
        for flags, dest, typ, help_ in _EXTRA.get(name, []):
            flags = (flags,) if isinstance(flags, str) else flags
            sp.add_argument(*flags, dest="x__" + dest, type=typ, help=help_,
                            metavar=dest.upper())
    return parser


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    text = ""
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            print(f"error: cannot read config: {exc}", file=sys.stderr)
            return EXIT_ERROR
    overrides = {}
    extra = {}
    for dest, value in vars(args).items():
        if value is None:
            continue
        if dest.startswith("cfg__"):
            overrides[dest[5:].replace("__", ".")] = value
        elif dest.startswith("x__"):
            extra[dest[3:]] = value
    for key in ("center", "theorem_radii"):
        if key in extra:
            extra[key] = _floats(extra[key])
    try:
        cfg = parse_config(text, overrides, relaxed=args.subcommand in RELAXED)
    except ConfigError as exc:
        print(f"error: invalid configuration\n{exc}", file=sys.stderr)
        return EXIT_ERROR
    status, root = run_pipeline(cfg, args.subcommand, extra)
    print(summarize(root))
    return status


if __name__ == "__main__":
    sys.exit(main())
