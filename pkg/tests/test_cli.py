import csv
import hashlib
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from doorway import cli


def _run(tmp_path, command, config=None, *flags, name="out"):
    out = tmp_path / name
    argv = [command, "--out-dir", str(out), *flags]
    if config is not None:
        path = tmp_path / f"{name}.json"
        path.write_text(json.dumps(config))
        argv += ["--config", str(path)]
    return cli.main(argv), out


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def _manifest(out):
    return json.loads((out / "manifest.json").read_text())


SMALL_MC = {"background": "gue", "N": 40, "lam": 0.5, "n_samples": 8, "tau": {"start": 0, "stop": 2, "step": 0.5}}


def test_mc_grid_gives_201_rows(tmp_path):
    config = {"background": "poisson", "beta": 2, "lam": 0.5, "N": 400, "n_samples": 2000, "ipr": False}
    code, out = _run(tmp_path, "mc", config)
    assert code == cli.EXIT_OK
    rows = _rows(out / "survival.csv")
    assert rows[0] == ["tau", "mean", "stderr"]
    assert len(rows) == 202
    assert rows[1] == ["0.0", "1.0", "0.0"]
    assert rows[4][0] == "0.15"


def test_mc_zero_coupling_is_identically_one(tmp_path):
    code, out = _run(tmp_path, "mc", {**SMALL_MC, "lam": 0.0})
    assert code == 0
    for row in _rows(out / "survival.csv")[1:]:
        assert float(row[1]) == 1.0 and float(row[2]) == 0.0
    assert _rows(out / "ipr.csv")[1][:2] == ["1.0", "0.0"]


def test_rerun_from_manifest_reproduces_digest(tmp_path):
    code, first = _run(tmp_path, "mc", SMALL_MC, "--seed", "17", name="first")
    assert code == 0
    manifest = _manifest(first)
    assert manifest["master_seed"] == 17 and manifest["config"]["seed"] == 17
    code = cli.main(["mc", "--config", str(first / "manifest.json"), "--out-dir", str(tmp_path / "again")])
    assert code == 0
    again = _manifest(tmp_path / "again")
    assert again["digest"] == manifest["digest"]
    assert [f["sha256"] for f in again["files"]] == [f["sha256"] for f in manifest["files"]]


def test_manifest_lists_and_digests_files(tmp_path):
    code, out = _run(tmp_path, "mc", SMALL_MC)
    manifest = _manifest(out)
    for key in ("command", "config", "master_seed", "version", "started", "finished", "tolerances", "warnings", "files", "digest"):
        assert key in manifest
    for entry in manifest["files"]:
        assert hashlib.sha256((out / entry["path"]).read_bytes()).hexdigest() == entry["sha256"]
    assert {f["path"] for f in manifest["files"]} == {"survival.csv", "ipr.csv"}


def test_flags_override_config(tmp_path):
    code, out = _run(tmp_path, "mc", {**SMALL_MC, "seed": 1}, "--seed", "2", "--threads", "2")
    assert code == 0
    assert _manifest(out)["config"]["seed"] == 2
    assert _manifest(out)["config"]["threads"] == 2


def test_threads_flag_keeps_output_identical(tmp_path):
    _, a = _run(tmp_path, "mc", SMALL_MC, "--threads", "1", name="a")
    _, b = _run(tmp_path, "mc", SMALL_MC, "--threads", "3", name="b")
    assert (a / "survival.csv").read_bytes() == (b / "survival.csv").read_bytes()


def test_ldos_output_and_fit_summary(tmp_path):
    config = {**SMALL_MC, "N": 200, "n_samples": 20, "ipr": False, "ldos": {"start": -20, "stop": 20, "step": 1}}
    code, out = _run(tmp_path, "mc", config)
    assert code == 0
    rows = _rows(out / "ldos.csv")
    assert rows[0] == ["e_lo", "e_hi", "density", "stderr"]
    assert len(rows) == 41
    assert "lorentzian_fit" in _manifest(out)["summary"]


# --- exit codes --------------------------------------------------------------------


@pytest.mark.parametrize(
    "config, flags",
    [
        ({"bogus": 1}, ()),
        ({**SMALL_MC, "N": 1}, ()),
        ({**SMALL_MC, "background": "gse"}, ()),
        ({**SMALL_MC, "tau": {"start": 0, "stop": 1}}, ()),
        ({**SMALL_MC, "ldos": {"start": -1, "stop": 1, "step": 0.5}}, ()),
        (SMALL_MC, ("--seed", "-1")),
        (SMALL_MC, ("--threads", "0")),
        (SMALL_MC, ("--tol", "2")),
    ],
)
def test_invalid_configuration_exit_code(tmp_path, config, flags, capsys):
    code, _ = _run(tmp_path, "mc", config, *flags)
    assert code == cli.EXIT_CONFIG
    assert "invalid configuration" in capsys.readouterr().err


def test_unreadable_config_exit_code(tmp_path):
    assert cli.main(["mc", "--config", str(tmp_path / "missing.json")]) == cli.EXIT_CONFIG
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2]")
    assert cli.main(["mc", "--config", str(bad)]) == cli.EXIT_CONFIG


def test_numerical_failure_exit_code(tmp_path, monkeypatch, capsys):
    from doorway import montecarlo
    from doorway.errors import NumericalFailureError

    def broken(*args, **kwargs):
        raise NumericalFailureError("synthetic failure", master_seed=0, realization=5)

    monkeypatch.setattr(montecarlo, "estimate_survival_curve", broken)
    code, _ = _run(tmp_path, "mc", SMALL_MC)
    assert code == cli.EXIT_NUMERICAL
    assert "realization=5" in capsys.readouterr().err


def test_config_from_stdin(tmp_path):
    argv = [sys.executable, "-m", "doorway", "ipr-sweep", "--config", "-", "--out-dir", str(tmp_path)]
    config = json.dumps({"lam": [0.0, 1.0]})
    done = subprocess.run(argv, input=config, capture_output=True, text=True)
    assert done.returncode == 0, done.stderr
    rows = _rows(tmp_path / "ipr_sweep.csv")
    assert len(rows) == 3


# --- analytic, compare, ipr-sweep, kernel-check ------------------------------------------


def test_analytic_files_and_fgr_column(tmp_path):
    config = {"ensembles": ["poisson", "gue"], "lam": [0.5], "tau": [0.0, 0.5, 1.0, 2.0]}
    code, out = _run(tmp_path, "analytic", config)
    assert code == 0
    for name in ("analytic_poisson_lam0.5.csv", "analytic_gue_lam0.5.csv", "fgr_lam0.5.csv"):
        rows = _rows(out / name)
        assert rows[0] == ["tau", "value", "err_est"]
        assert abs(float(rows[1][1]) - 1.0) <= 1e-9
    for tau, value, _ in _rows(out / "fgr_lam0.5.csv")[1:]:
        assert float(value) == math.exp(-2 * math.pi * 0.25 * float(tau))
    warnings = {w["id"] for w in _manifest(out)["warnings"]}
    assert "poisson_hyperbolic_argument" in warnings


def test_analytic_poisson_saturates_at_ipr(tmp_path):
    code, out = _run(tmp_path, "analytic", {"ensembles": ["poisson"], "lam": 1.0, "tau": [50.0], "fgr": False})
    assert code == 0
    from doorway import analytic

    assert abs(float(_rows(out / "analytic_poisson_lam1.csv")[1][1]) - analytic.ipr_poisson(1.0)) < 1e-4


def test_compare_analytic_curves(tmp_path):
    config = {
        "a": {"kind": "analytic", "ensemble": "poisson", "lam": 0.5},
        "b": {"kind": "analytic", "ensemble": "gue", "lam": 0.5},
        "tau": [0.0, 5.0, 10.0],
        "z_threshold": 1e300,
    }
    code, out = _run(tmp_path, "compare", config)
    assert code == 0
    rows = _rows(out / "compare.csv")
    assert rows[0] == cli.CSV_SCHEMAS["compare"]
    # a regular background keeps more probability than a chaotic one at late times
    assert float(rows[-1][5]) > 0
    summary = _rows(out / "compare_summary.csv")
    assert summary[0] == cli.CSV_SCHEMAS["compare_summary"]
    assert summary[1][-1] == "true"


def test_compare_mc_against_analytic(tmp_path):
    config = {
        "a": {"kind": "analytic", "ensemble": "gue", "lam": 0.5},
        "b": {"kind": "mc", "background": "gue", "N": 200, "lam": 0.5, "n_samples": 200},
        "tau": {"start": 0, "stop": 10, "step": 1},
        "allowance": 0.01,
    }
    code, out = _run(tmp_path, "compare", config)
    assert code == 0
    assert _manifest(out)["summary"]["max_abs_z"] <= 3


def test_compare_grid_mismatch_is_config_error(tmp_path):
    config = {
        "a": {"kind": "analytic", "ensemble": "gue", "lam": 0.5, "tau": [0.0, 1.0]},
        "b": {"kind": "analytic", "ensemble": "gue", "lam": 0.5, "tau": [0.0, 2.0]},
    }
    code, _ = _run(tmp_path, "compare", config)
    assert code == cli.EXIT_CONFIG


def test_ipr_sweep_rows(tmp_path):
    code, out = _run(tmp_path, "ipr-sweep", {"lam": {"start": 0, "stop": 5, "count": 51}})
    assert code == 0
    rows = _rows(out / "ipr_sweep.csv")
    assert rows[0] == ["lambda", "ipr_poisson", "ipr_gue", "ipr_goe_add", "db", "asym_poisson", "asym_gue"]
    data = np.array(rows[1:], dtype=float)
    assert data[0, 1] == 1.0 and data[0, 2] == 1.0
    peak = data[1:, 0][np.argmax(data[1:, 3])]
    assert 0.3 <= peak <= 0.7
    last = data[-1]
    assert abs(last[1] / last[5] - 1) < 0.03 and abs(last[2] / last[6] - 1) < 0.03


def test_kernel_check_rows(tmp_path):
    config = {
        "N": 200,
        "n_samples": 400,
        "points": [
            {"k": 0.0, "s": 1.0, "lam": 0.5},
            {"k": 1.0, "s": 1.0, "lam": 0.5},
            {"k": -1.0, "s": 1.0, "lam": 0.5},
        ],
    }
    code, out = _run(tmp_path, "kernel-check", config)
    assert code == 0
    rows = _rows(out / "kernel_check.csv")
    assert rows[0] == ["k", "s", "lambda", "re_mc", "im_mc", "stderr", "re_exact", "im_exact", "z"]
    zero, plus, minus = (np.array(r, dtype=float) for r in rows[1:])
    assert zero[3] == 1.0 and zero[4] == 0.0 and zero[6] == 1.0 and zero[7] == 0.0 and zero[8] == 0.0
    assert plus[3] == minus[3] and plus[4] == -minus[4]
    assert abs(plus[6] - minus[6]) <= 1e-12 and abs(plus[7] + minus[7]) <= 1e-12


def test_kernel_check_rejects_poisson(tmp_path):
    code, _ = _run(tmp_path, "kernel-check", {"background": "poisson"})
    assert code == cli.EXIT_CONFIG


def test_grid_helper():
    np.testing.assert_array_equal(cli._grid({"start": 0, "stop": 1, "count": 3}, "x"), [0.0, 0.5, 1.0])
    assert cli._grid({"start": 0, "stop": 10, "step": 0.05}, "x").size == 201
    with pytest.raises(cli.ConfigError):
        cli._grid({"start": 0, "stop": 1, "step": 0.1, "count": 3}, "x")
    with pytest.raises(cli.ConfigError):
        cli._grid("0:1", "x")
