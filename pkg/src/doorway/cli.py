"""Command-line front end.

Each subcommand reads one JSON config (``--config PATH``, ``-`` for stdin,
or built-in defaults), applies the shared flags on top, writes CSV files to
``--out-dir`` and finishes with ``manifest.json``. Precedence, lowest first:
built-in defaults, config file, command-line flags.

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import datetime as dt
import hashlib
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, analytic, kernels, montecarlo
from .ensembles import Background, EnsembleSpec
from .errors import InvalidArgumentError, NumericalFailureError

__all__ = ["main", "build_parser", "ConfigError", "CSV_SCHEMAS", "DEFAULTS"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

CSV_SCHEMAS = {
    "survival": ["tau", "mean", "stderr"],
    "ipr": ["mean", "stderr", "n_samples"],
    "ldos": ["e_lo", "e_hi", "density", "stderr"],
    "analytic": ["tau", "value", "err_est"],
    "compare": ["tau", "a", "a_err", "b", "b_err", "diff", "z"],
    "compare_summary": ["max_abs_z", "tau_at_max", "allowance", "z_threshold", "passed"],
    "ipr-sweep": ["lambda", "ipr_poisson", "ipr_gue", "ipr_goe_add", "db", "asym_poisson", "asym_gue"],
    "kernel-check": ["k", "s", "lambda", "re_mc", "im_mc", "stderr", "re_exact", "im_exact", "z"],
}

_TAU = {"start": 0.0, "stop": 10.0, "step": 0.05}

# shared keys every subcommand accepts; flags override them
_SHARED = {"seed": 0, "threads": 1, "tol": 1e-8}

DEFAULTS = {
    "mc": {
        "background": "poisson",
        "beta": 2,
        "N": 400,
        "lam": 0.5,
        "n_samples": 2000,
        "tau": _TAU,
        "ipr": True,
        "ldos": None,
        "method": montecarlo.DEFAULT_SAMPLER,
    },
    "analytic": {
        "ensembles": ["poisson", "gue"],
        "lam": [0.1, 0.5, 1.0],
        "tau": _TAU,
        "fgr": True,
    },
    "compare": {
        "a": {"kind": "analytic", "ensemble": "gue", "lam": 0.5},
        "b": {"kind": "mc", "background": "gue", "beta": 2, "N": 400, "lam": 0.5, "n_samples": 2000},
        "tau": {"start": 0.0, "stop": 10.0, "step": 0.1},
        "allowance": 0.0,
        "z_threshold": 3.0,
    },
    "ipr-sweep": {"lam": {"start": 0.0, "stop": 3.0, "count": 31}},
    "kernel-check": {
        "background": "gue",
        "beta": 2,
        "N": 500,
        "n_samples": 10000,
        "points": [
            {"k": 0.0, "s": 1.0, "lam": 0.5},
            {"k": 1.0, "s": 1.0, "lam": 0.5},
            {"k": -1.0, "s": 1.0, "lam": 0.5},
            {"k": 2.0, "s": 0.5, "lam": 0.5},
            {"k": 0.5, "s": 2.0, "lam": 0.5},
        ],
        "method": montecarlo.DEFAULT_SAMPLER,
    },
}

_SOURCE_KEYS = {
    "analytic": {"kind", "ensemble", "lam", "tau"},
    "mc": {"kind", "background", "beta", "N", "lam", "n_samples", "method", "tau"},
}


class ConfigError(Exception):
    """Invalid configuration; maps to exit code 2."""


# --- config handling ----------------------------------------------------------


def load_config(path):
    """Read a JSON config; a run manifest is accepted and its config reused."""
    if path is None:
        return {}
    try:
        text = sys.stdin.read() if str(path) == "-" else Path(path).read_text()
        data = json.loads(text)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    if "config" in data and "files" in data:
        data = data["config"]
    return data


def resolve_config(command, file_config, args):
    """Merge defaults, the config file and command-line flags."""
    config = copy.deepcopy({**_SHARED, **DEFAULTS[command]})
    unknown = set(file_config) - set(config)
    if unknown:
        raise ConfigError(f"unknown config keys for {command}: {sorted(unknown)}")
    config.update(copy.deepcopy(file_config))
    for key in ("seed", "threads", "tol"):
        value = getattr(args, key, None)
        if value is not None:
            config[key] = value
    seed = config["seed"]
    if not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if not isinstance(config["threads"], int) or config["threads"] < 1:
        raise ConfigError("threads must be a positive integer")
    if not (isinstance(config["tol"], (int, float)) and 0 < config["tol"] < 1):
        raise ConfigError("tol must lie in (0, 1)")
    return config


def _grid(spec, name):
    """Grid from a list or from ``{start, stop, step}`` / ``{start, stop, count}``."""
    if isinstance(spec, list):
        values = np.asarray(spec, dtype=float)
    elif isinstance(spec, dict):
        extra = set(spec) - {"start", "stop", "step", "count"}
        if extra or "start" not in spec or "stop" not in spec:
            raise ConfigError(f"{name} grid needs start, stop and step or count")
        start, stop = float(spec["start"]), float(spec["stop"])
        if ("step" in spec) == ("count" in spec):
            raise ConfigError(f"{name} grid needs exactly one of step and count")
        if "step" in spec:
            step = float(spec["step"])
            if not step > 0 or stop < start:
                raise ConfigError(f"{name} grid needs step > 0 and stop >= start")
            count = int(math.floor((stop - start) / step + 1e-9)) + 1
        else:
            count = int(spec["count"])
            if count < 1:
                raise ConfigError(f"{name} grid needs count >= 1")
            step = (stop - start) / (count - 1) if count > 1 else 0.0
        # rounding keeps 0.05 * 3 from printing as 0.15000000000000002
        values = np.array([round(start + i * step, 12) for i in range(count)])
    else:
        raise ConfigError(f"{name} must be a list or a grid object")
    if values.ndim != 1 or values.size == 0 or not np.all(np.isfinite(values)):
        raise ConfigError(f"{name} grid must be a non-empty list of finite numbers")
    return values


def _spec(config, lam=None):
    try:
        return EnsembleSpec(
            config["background"],
            config["beta"],
            config["N"],
            config["lam"] if lam is None else lam,
            config["seed"],
        )
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"incomplete ensemble description: {exc}") from None


# --- output -----------------------------------------------------------------------


def _fmt(value):
    """Shortest round-trip text for numbers; other values unchanged."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


class _Run:
    """Collects output files and warnings for one subcommand invocation."""

    def __init__(self, command, config, out_dir):
        self.command = command
        self.config = config
        self.out_dir = Path(out_dir)
        self.files = []
        self.warnings = {}
        self.summary = {}
        self.started = dt.datetime.now(dt.timezone.utc)
        self.clock = time.perf_counter()

    def warn(self, key):
        self.warnings[key] = analytic.FORMULA_NOTES[key]

    def write_csv(self, name, schema, rows):
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / name
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_SCHEMAS[schema])
            count = 0
            for row in rows:
                writer.writerow([_fmt(v) for v in row])
                count += 1
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        self.files.append({"path": name, "schema": schema, "rows": count, "sha256": digest})

    def finish(self):
        finished = dt.datetime.now(dt.timezone.utc)
        combined = hashlib.sha256()
        for entry in self.files:
            combined.update(f"{entry['path']}:{entry['sha256']}\n".encode())
        manifest = {
            "command": self.command,
            "config": self.config,
            "master_seed": self.config["seed"],
            "version": __version__,
            "started": self.started.isoformat(),
            "finished": finished.isoformat(),
            "wall_time_s": time.perf_counter() - self.clock,
            "tolerances": {
                "quadrature_rel_tol": self.config["tol"],
                "secular_bracket_rel": 1e-13,
                "weights_sum_abs": 1e-10,
            },
            "warnings": [{"id": k, "message": v} for k, v in sorted(self.warnings.items())],
            "summary": self.summary,
            "files": self.files,
            "digest": combined.hexdigest(),
        }
        self.out_dir.mkdir(parents=True, exist_ok=True)
        (self.out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
        return manifest


def _lam_tag(lam):
    return f"lam{float(lam):g}"


def _analytic_curve(run, ensemble, lam, tau, tol):
    """Analytic survival values and error estimates on ``tau``."""
    kind = Background(ensemble)
    if kind is Background.POISSON:
        run.warn("poisson_hyperbolic_argument")
    if kind is Background.GOE:
        run.warn("goe_cooperon_normalisation")
    results = [analytic.survival(kind, lam, t, rel_tol=tol, full_output=True) for t in tau]
    return (
        np.array([r.value for r in results]),
        np.array([r.error_estimate for r in results]),
    )


# --- subcommands ----------------------------------------------------------------


def cmd_mc(run):
    """Monte Carlo survival curve, optional IPR and LDOS histogram."""
    config = run.config
    spec = _spec(config)
    tau = _grid(config["tau"], "tau")
    n, threads, method = config["n_samples"], config["threads"], config["method"]
    curve = montecarlo.estimate_survival_curve(spec, tau, n, threads=threads, method=method)
    run.write_csv("survival.csv", "survival", zip(curve.tau_grid, curve.mean, curve.stderr))
    if config["ipr"]:
        est = montecarlo.estimate_ipr(spec, n, threads=threads, method=method)
        run.write_csv("ipr.csv", "ipr", [(est.mean, est.stderr, n)])
        run.summary["ipr"] = {"mean": est.mean, "stderr": est.stderr}
    if config["ldos"] is not None:
        edges = _grid(config["ldos"], "ldos")
        hist = montecarlo.estimate_ldos(spec, edges, n, threads=threads, method=method)
        run.write_csv(
            "ldos.csv",
            "ldos",
            zip(edges[:-1], edges[1:], hist.density, hist.stderr),
        )
        if spec.lam > 0:
            fit = montecarlo.fit_lorentzian(hist, initial_hwhm=math.pi * spec.lam**2)
            run.summary["lorentzian_fit"] = {
                "hwhm": fit.hwhm,
                "hwhm_stderr": fit.hwhm_stderr,
                "expected_hwhm": math.pi * spec.lam**2,
                "reduced_chi2": fit.reduced_chi2,
            }


def cmd_analytic(run):
    """Analytic survival curves for each ensemble and coupling strength."""
    config = run.config
    tau = _grid(config["tau"], "tau")
    lams = config["lam"] if isinstance(config["lam"], list) else [config["lam"]]
    for lam in lams:
        for ensemble in config["ensembles"]:
            values, errors = _analytic_curve(run, ensemble, lam, tau, config["tol"])
            name = f"analytic_{Background(ensemble).value}_{_lam_tag(lam)}.csv"
            run.write_csv(name, "analytic", zip(tau, values, errors))
        if config["fgr"]:
            fgr = [analytic.fgr(lam, t) for t in tau]
            run.write_csv(f"fgr_{_lam_tag(lam)}.csv", "analytic", ((t, v, 0.0) for t, v in zip(tau, fgr)))


def _source_curve(run, source, tau_default, label):
    if not isinstance(source, dict) or source.get("kind") not in _SOURCE_KEYS:
        raise ConfigError(f"compare source {label} needs kind 'analytic' or 'mc'")
    extra = set(source) - _SOURCE_KEYS[source["kind"]]
    if extra:
        raise ConfigError(f"unknown keys in compare source {label}: {sorted(extra)}")
    tau = _grid(source["tau"], f"{label}.tau") if "tau" in source else tau_default
    if source["kind"] == "analytic":
        values, errors = _analytic_curve(run, source["ensemble"], source["lam"], tau, run.config["tol"])
        return tau, values, errors
    spec_config = {"beta": 2, **source, "seed": run.config["seed"]}
    curve = montecarlo.estimate_survival_curve(
        _spec(spec_config),
        tau,
        source.get("n_samples", 2000),
        threads=run.config["threads"],
        method=source.get("method", montecarlo.DEFAULT_SAMPLER),
    )
    return tau, curve.mean, curve.stderr


def cmd_compare(run):
    """Pointwise z-scores between two survival curves.

    ``z = sign(a - b) * max(|a - b| - allowance, 0) / sqrt(a_err^2 + b_err^2)``.
    """
    config = run.config
    tau = _grid(config["tau"], "tau")
    tau_a, a, a_err = _source_curve(run, config["a"], tau, "a")
    tau_b, b, b_err = _source_curve(run, config["b"], tau, "b")
    if tau_a.shape != tau_b.shape or np.any(tau_a != tau_b):
        raise ConfigError("compare sources use different tau grids")
    diff = a - b
    sigma = np.hypot(a_err, b_err)
    excess = np.maximum(np.abs(diff) - config["allowance"], 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(excess == 0, 0.0, np.sign(diff) * excess / sigma)
    worst = int(np.argmax(np.abs(z)))
    max_z = float(abs(z[worst]))
    passed = max_z <= config["z_threshold"]
    run.write_csv("compare.csv", "compare", zip(tau_a, a, a_err, b, b_err, diff, z))
    run.write_csv(
        "compare_summary.csv",
        "compare_summary",
        [(max_z, tau_a[worst], float(config["allowance"]), float(config["z_threshold"]), passed)],
    )
    run.summary.update({"max_abs_z": max_z, "tau_at_max": float(tau_a[worst]), "passed": passed})


def cmd_ipr_sweep(run):
    """Mean IPRs, Drude-Boltzmann saturation and large-coupling asymptotes over lambda."""
    config = run.config
    lams = _grid(config["lam"], "lam")
    if np.any(lams < 0):
        raise ConfigError("lam values must be >= 0")
    run.warn("small_lambda_asymptote")
    run.warn("goe_cooperon_normalisation")
    rows = []
    for lam in lams:
        if lam == 0:
            rows.append((lam, 1.0, 1.0, 0.0, math.inf, math.inf, math.inf))
            continue
        rows.append(
            (
                lam,
                analytic.ipr_poisson(lam),
                analytic.ipr_gue(lam),
                analytic.ipr_goe_add(lam, rel_tol=config["tol"]),
                analytic.db_saturation(lam),
                analytic.asymptotic_ipr("poisson", lam),
                analytic.asymptotic_ipr("gue", lam),
            )
        )
    run.write_csv("ipr_sweep.csv", "ipr-sweep", rows)


def cmd_kernel_check(run):
    """Monte Carlo R(k, s) against the closed forms, as z-scores."""
    config = run.config
    background = Background(config["background"])
    if background is Background.POISSON:
        raise ConfigError("kernel-check needs a GOE or GUE background")
    exact_fn = kernels.r_gue if background is Background.GUE else kernels.r_goe
    points = config["points"]
    try:
        points = [(float(p["k"]), float(p["s"]), float(p["lam"])) for p in points]
    except (KeyError, TypeError, ValueError):
        raise ConfigError("each kernel-check point needs numeric k, s and lam") from None
    by_lam = {}
    for k, s, lam in points:
        by_lam.setdefault(lam, []).append((k, s))
    estimates = {}
    for lam, ks in by_lam.items():
        found = montecarlo.estimate_R_points(
            ks,
            lam,
            config["N"],
            background.beta,
            config["beta"],
            config["n_samples"],
            master_seed=config["seed"],
            threads=config["threads"],
            method=config["method"],
        )
        estimates.update({(k, s, lam): est for (k, s), est in zip(ks, found)})
    rows = []
    max_z = 0.0
    for k, s, lam in points:
        est = estimates[(k, s, lam)]
        exact = exact_fn(k, s, lam)
        gap = abs(est.value - exact)
        z = 0.0 if gap == 0 else (gap / est.stderr if est.stderr > 0 else math.inf)
        max_z = max(max_z, z)
        rows.append((k, s, lam, est.value.real, est.value.imag, est.stderr, exact.real, exact.imag, z))
    run.write_csv("kernel_check.csv", "kernel-check", rows)
    run.summary["max_abs_z"] = max_z


COMMANDS = {
    "mc": cmd_mc,
    "analytic": cmd_analytic,
    "compare": cmd_compare,
    "ipr-sweep": cmd_ipr_sweep,
    "kernel-check": cmd_kernel_check,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="doorway",
        description="Doorway-state survival probability: Monte Carlo, closed forms and checks.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="JSON config file, or - for stdin")
    shared.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    shared.add_argument("--threads", type=int, help="worker threads for Monte Carlo")
    shared.add_argument("--out-dir", default=".", help="output directory (default: .)")
    shared.add_argument("--tol", type=float, help="relative quadrature tolerance")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func in COMMANDS.items():
        sub.add_parser(name, parents=[shared], help=func.__doc__.splitlines()[0])
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        config = resolve_config(args.command, load_config(args.config), args)
        run = _Run(args.command, config, args.out_dir)
        COMMANDS[args.command](run)
        run.finish()
    except (ConfigError, InvalidArgumentError, KeyError, TypeError, ValueError) as exc:
        print(f"doorway {args.command}: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailureError as exc:
        print(f"doorway {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
