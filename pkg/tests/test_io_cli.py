import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gldensity.cli import main
from gldensity.config import (FORMAT_VERSION, ConfigError, ExperimentConfig, parse_config,
                              serialize)
from gldensity.io import (format_field, format_mask, parse_field, parse_mask, read_field,
                          write_field)
from gldensity.lattice import Grid, RegionMask, ScalarField

SMALL = ["--grid.extent", "6", "--grid.spacing", "0.25", "--radii", "1,2,4",
         "--R", "2", "--experiment.margin", "4", "--experiment.a_steps", "11"]


def test_minimal_config_fills_defaults():
    cfg = parse_config("n = 2\np = 1.4\nm = 3\nlambda = 1\n")
    assert cfg == ExperimentConfig()
    assert cfg.solve_options().tol_energy == 1e-8


def test_constraint_violation_names_inequality():
    with pytest.raises(ConfigError) as exc:
        parse_config("n = 3\np = 1.9\n")
    (issue,) = exc.value.issues
    assert issue.key == "p" and issue.line == 2
    assert "p < n/(n-1) = 1.5" in issue.message


def test_duplicate_key_reports_both_lines():
    with pytest.raises(ConfigError) as exc:
        parse_config("p = 1.4\n# comment\nm = 3\np = 1.3\n")
    (issue,) = exc.value.issues
    assert issue.line == 4 and "line 1" in issue.message


def test_unknown_and_malformed_entries_collected():
    with pytest.raises(ConfigError) as exc:
        parse_config("foo = 1\njust text\nsolver.max_iters = many\ngrid.spacing = -1\n")
    kinds = {(i.line, i.key) for i in exc.value.issues}
    assert (1, "foo") in kinds and (2, "just text") in kinds and (3, "solver.max_iters") in kinds


def test_cross_key_checks():
    for text in ("grid.spacing = 0\n", "experiment.t_infty = 0.2\n", "solver.backtrack = 1\n",
                 "experiment.radii = 4, 2\n", "grid.dims = 7\n", "lambda = 0.5\n", "m = 1.2\n"):
        with pytest.raises(ConfigError):
            parse_config(text)
    assert parse_config("grid.dims = 512\n").grid().dims == (512, 512)


def test_overrides_win_and_relaxed_mode():
    cfg = parse_config("p = 1.3\n", {"p": "1.45", "solver.deterministic": "false"})
    assert cfg.p == 1.45 and cfg.deterministic is False
    with pytest.raises(ConfigError):
        parse_config("", {"p": "2", "m": "2"})
    assert parse_config("", {"p": "2", "m": "2"}, relaxed=True).p == 2.0
    with pytest.raises(ConfigError):
        parse_config("", {"bogus": "1"})


configs = st.builds(
    ExperimentConfig,
    lam=st.floats(1.0, 10.0), p=st.floats(1.01, 1.99), m=st.floats(2.0, 9.0),
    seed=st.integers(0, 2**64 - 1), coeff_resolution=st.integers(1, 9),
    a_mode=st.sampled_from(["constant", "random"]), grid_spacing=st.floats(0.01, 1.0),
    tol_energy=st.floats(1e-14, 1e-2), precondition=st.booleans(),
    radii=st.lists(st.floats(0.1, 100.0), min_size=1, max_size=6, unique=True).map(
        lambda r: tuple(sorted(r))),
    t_infty=st.floats(-0.99, -0.01), output_dir=st.sampled_from(["runs", "out/x"]))


@settings(max_examples=100, deadline=None)
@given(configs)
def test_config_round_trip(cfg):
    text = serialize(cfg)
    assert text.startswith(f"# {FORMAT_VERSION}")
    assert parse_config(text) == cfg
    assert serialize(parse_config(text)) == text


finite = st.floats(-1.0, 1.0, allow_nan=False, allow_subnormal=True)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 3), st.data())
def test_field_dump_round_trip_bit_exact(n, data):
    g = Grid.cube(n, 1.0, 0.5)
    vals = np.array(data.draw(st.lists(finite, min_size=g.size, max_size=g.size)))
    f = ScalarField(g, vals.reshape(g.dims))
    back = parse_field(format_field(f))
    assert back.grid == g
    assert back.values.tobytes() == f.values.tobytes()


def test_field_file_round_trip_and_layout(tmp_path):
    g = Grid((2), (1.0, 0.5), 0.5)
    vals = np.arange(g.size, dtype=float).reshape(g.dims) / 10
    path = write_field(tmp_path / "f.dat", ScalarField(g, vals))
    lines = path.read_text().splitlines()
    assert lines[0] == "# dim=2 dims=4,2 extent=1.0,0.5 spacing=0.5"
    assert lines[1:4] == ["0.0", "0.1", "0.2"]  # last axis fastest
    assert np.array_equal(read_field(path).values, vals)


def test_field_dump_errors():
    with pytest.raises(ValueError):
        parse_field("0.1\n0.2\n")
    with pytest.raises(ValueError):
        parse_field("# dim=1 dims=4 extent=1.0 spacing=0.5\n0.0\n")
    with pytest.raises(ValueError):
        parse_field("# dim=1 dims=5 extent=1.0 spacing=0.5\n" + "0.0\n" * 5)


def test_mask_csv_round_trip():
    g = Grid.cube(2, 1.0, 0.5)
    m = RegionMask(g, np.random.default_rng(0).random(g.dims) < 0.5)
    text = format_mask(m)
    rows = text.splitlines()
    assert rows[1] == "x0,x1,member" and len(rows) == 2 + g.size
    assert np.array_equal(parse_mask(text).membership, m.membership)


def _report(root):
    return json.loads((root / "report.json").read_text())


def _run(capsys, *argv):
    status = main(list(argv))
    out = capsys.readouterr().out
    root = None
    for line in out.splitlines():
        if line.startswith("run "):
            from pathlib import Path
            root = Path(line[4:])
    return status, root


def test_cli_validate(tmp_path, capsys):
    status, root = _run(capsys, "validate", "--out", str(tmp_path))
    assert status == 0
    rep = _report(root)
    assert rep["results"]["validate"]["violations"] == 0
    assert rep["format_version"] == FORMAT_VERSION
    assert rep["config"]["p"] == 1.4
    assert (root / "tables" / "violations.csv").read_text() == "kind,value,bound,witness\n"


def test_cli_profile1d_matches_tanh(tmp_path, capsys):
    status, root = _run(capsys, "profile1d", "--p", "2", "--m", "2", "--out", str(tmp_path))
    assert status == 0
    with open(root / "tables" / "profile.csv") as fh:
        rows = list(csv.DictReader(fh))
    x = np.array([float(r["x"]) for r in rows])
    u = np.array([float(r["u"]) for r in rows])
    assert np.max(np.abs(u - np.tanh(x))) <= 1e-6
    assert (root / "plots" / "profile.svg").exists()


def test_cli_bad_config(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("n = 3\np = 1.9\n")
    assert main(["validate", "--config", str(bad), "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "line 2" in err and "p < n/(n-1)" in err
    assert main(["validate", "--config", str(tmp_path / "missing.cfg")]) == 2


def test_cli_config_file_and_flag_override(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("p = 1.3\nexperiment.validate_samples = 100\n")
    status, root = _run(capsys, "validate", "--config", str(cfg), "--p", "1.45",
                        "--out", str(tmp_path))
    assert status == 0
    resolved = parse_config((root / "config.resolved").read_text())
    assert resolved.p == 1.45 and resolved.validate_samples == 100


def test_deterministic_runs_are_byte_identical(tmp_path, capsys):
    args = ["solve", *SMALL, "--seed", "5", "--coeff.a_mode", "random", "--coeff.b_mode",
            "random", "--coeff.resolution", "3", "--lambda", "1.5"]
    status, first = _run(capsys, *args, "--out", str(tmp_path / "out"))
    assert status == 0
    kept = first.rename(tmp_path / "first")
    status, second = _run(capsys, *args, "--out", str(tmp_path / "out"))
    assert status == 0 and second.name == first.name
    files = sorted(p.relative_to(kept) for p in kept.rglob("*") if p.is_file())
    assert sorted(p.relative_to(second) for p in second.rglob("*") if p.is_file()) == files
    assert any(str(p).endswith(".csv") for p in files)
    for rel in files:
        assert (kept / rel).read_bytes() == (second / rel).read_bytes(), rel
    # the output location does not enter the run id
    status, elsewhere = _run(capsys, *args, "--out", str(tmp_path / "elsewhere"))
    assert elsewhere.name == first.name
    assert (elsewhere / "tables" / "trace_level0.csv").read_bytes() == (
        kept / "tables" / "trace_level0.csv").read_bytes()


def test_manifest_lists_every_file(tmp_path, capsys):
    status, root = _run(capsys, "report", *SMALL, "--out", str(tmp_path))
    assert status in (0, 1)
    lines = (root / "MANIFEST").read_text().splitlines()
    assert lines[0] == f"format_version {FORMAT_VERSION}" and "complete true" in lines
    listed = {ln.split("  ", 1)[1] for ln in lines[3:]}
    on_disk = {p.relative_to(root).as_posix() for p in root.rglob("*")
               if p.is_file() and p.name != "MANIFEST"}
    assert listed == on_disk
    assert {"plots/density.svg", "plots/energy.svg", "tables/theorem.csv",
            "fields/u.dat"} <= listed
    rep = _report(root)
    assert rep["results"]["theorem"]["verdict"] in ("pass", "fail")


def test_hard_error_flushes_incomplete_manifest(tmp_path, capsys):
    g = Grid.cube(2, 6.0, 0.25)
    field = write_field(tmp_path / "zero.dat", ScalarField.constant(g, 0.0))
    status, root = _run(capsys, "theorem", *SMALL, "--field", str(field),
                        "--out", str(tmp_path))
    assert status == 2
    manifest = (root / "MANIFEST").read_text()
    assert "complete false" in manifest and "WitnessNotFound" in manifest
    assert _report(root)["error"].startswith("WitnessNotFound")


def test_cli_other_subcommands(tmp_path, capsys):
    out = ["--out", str(tmp_path)]
    status, root = _run(capsys, "iterate", "--C", "1", "--p", "1.5", "--beta0", "1e-6", *out)
    assert status == 0 and _report(root)["results"]["iterate"]["verdict"] == "vanishes"
    status, root = _run(capsys, "competitor", "--kind", "phia", "--comp-R", "4", *SMALL[:4], *out)
    assert status == 0 and (root / "fields" / "competitor_phi_a.dat").exists()
    assert _report(root)["results"]["competitor"]["max_gradient"] <= 8 * 0.5 / 4
    status, root = _run(capsys, "fit", "--L", "2", *SMALL[:4], *out)
    assert status == 0 and _report(root)["results"]["fit"]["L"] == 2
    field = root / "fields" / "u.dat"
    status, root = _run(capsys, "density", "--field", str(field), *SMALL, *out)
    assert status == 0
    assert (root / "tables" / "density.csv").read_text().startswith("R,pos_measure")
    status, root = _run(capsys, "lemma2", *SMALL, *out)
    assert _report(root)["results"]["lemma2"]["sigma_hat"] > 0
