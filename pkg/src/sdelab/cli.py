"""Command-line front end.

Subcommands: run-convergence, run-contraction, run-moments, compute-constants,
check-assumptions. Configs are single JSON documents, schema-validated
fail-closed (unknown keys rejected). Each run writes report.json,
config_echo.json, and per-delta CSVs into the output directory; reports are
byte-deterministic for a given (config, seed), timing goes to a separate
timing.txt sidecar.

Exit codes: 0 success, 1 validation error, 2 assertion failure (with --assert).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

from .model import ConfigError, check_assumptions, default_grid
from .schemes import SchemeParams
from .constants import (NondegenerateAssumptions, degenerate_constants,
                        nondegenerate_constants)
from .harness import (ExperimentConfig, ExperimentReport, build_model,
                      contraction_study, convergence_study, kinetic_d_probe,
                      moment_study)

__all__ = ["RunConfig", "parse_config", "main"]

# Assertion window for convergence runs (--assert): fitted slope and fit quality
SLOPE_WINDOW = (0.35, 0.9)
R2_MIN = 0.95


@dataclass(frozen=True)
class RunConfig:
    experiment: ExperimentConfig
    output_dir: str = "sdelab_out"


_EXPERIMENT_KEYS = {
    "model": dict,
    "variant": str,
    "theta": (int, float),
    "deltas": list,
    "horizon": (int, float),
    "n_paths": int,
    "epsilon": (int, float),
    "substeps": int,
    "lyapunov": dict,
    "metric": str,
    "n_projections": int,
    "seed": int,
    "workers": int,
    "x0": dict,
    "x0_alt": dict,
    "trace_points": int,
    "p_moments": list,
    "noise_scale": (int, float),
}
_TOP_KEYS = set(_EXPERIMENT_KEYS) | {"output_dir"}


def _load_json(path) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    return doc


def parse_config(path) -> RunConfig:
    doc = _load_json(path)
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    kw = {}
    for key, val in doc.items():
        if key == "output_dir":
            continue
        want = _EXPERIMENT_KEYS[key]
        if not isinstance(val, want):
            raise ConfigError(f"config key {key!r} must have type {want}")
        if key in ("deltas", "p_moments"):
            val = tuple(float(v) for v in val)
        kw[key] = val
    cfg = ExperimentConfig(**kw)
    _validate(cfg)
    return RunConfig(experiment=cfg, output_dir=str(doc.get("output_dir", "sdelab_out")))


def _validate(cfg: ExperimentConfig):
    if not cfg.deltas:
        raise ConfigError("deltas must be a nonempty decreasing list in (0,1)")
    for d in cfg.deltas:
        if not 0 < d < 1:
            raise ConfigError(f"delta {d} outside (0,1)")
        # variant/theta range checks (e.g. tamed needs theta in [1/4,1/2))
        if cfg.variant != "plain":
            SchemeParams(delta=d, theta=cfg.theta, variant=cfg.variant)
        else:
            SchemeParams(delta=d, variant="plain")
    if any(b >= a for a, b in zip(cfg.deltas, cfg.deltas[1:])):
        raise ConfigError("deltas must be strictly decreasing")
    if cfg.n_paths < 1:
        raise ConfigError("n_paths must be >= 1")
    if cfg.horizon < 0:
        raise ConfigError("horizon must be nonnegative")
    if cfg.epsilon <= 0:
        raise ConfigError("epsilon must be positive")
    if cfg.substeps < 1:
        raise ConfigError("substeps must be >= 1")
    if cfg.metric not in ("w1",):
        raise ConfigError("metric must be 'w1' (sliced automatically for d>1)")
    build_model(cfg)  # validates the model block eagerly


def _resolve_workers(args, cfg: ExperimentConfig) -> ExperimentConfig:
    if args.workers is not None:
        return cfg.with_(workers=args.workers)
    env = os.environ.get("SDE_LAB_WORKERS")
    if env is not None:
        try:
            return cfg.with_(workers=max(1, int(env)))
        except ValueError:
            raise ConfigError(f"SDE_LAB_WORKERS={env!r} is not an integer") from None
    return cfg


def _write_report(out_dir: Path, report: ExperimentReport, elapsed: float):
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(report.to_json() + "\n")
    (out_dir / "config_echo.json").write_text(
        json.dumps(report.config, sort_keys=True, indent=2) + "\n")
    (out_dir / "timing.txt").write_text(f"elapsed_seconds {elapsed:.3f}\n")
    if report.kind == "convergence":
        _write_csv(out_dir / "convergence.csv",
                   ["delta", "w1", "w1_se", "rho_bound", "rho_bound_se",
                    "n_pairs", "n_diverged"], report.table)
    elif report.kind == "contraction":
        _write_csv(out_dir / "contraction.csv",
                   ["delta", "rate", "ci_low", "ci_high", "r_squared", "plateau",
                    "t_star", "n_diverged"], report.table)
        for key, tr in report.extra.get("traces", {}).items():
            rows = [{"t": t, "rho_mean": m, "rho_se": s}
                    for t, m, s in zip(tr["t"], tr["rho_mean"], tr["rho_se"])]
            _write_csv(out_dir / f"trace_delta_{key}.csv", ["t", "rho_mean", "rho_se"], rows)
    elif report.kind == "moments":
        for key, tr in report.extra.get("traces", {}).items():
            cols = list(tr.keys())
            rows = [dict(zip(cols, vals)) for vals in zip(*(tr[c] for c in cols))]
            _write_csv(out_dir / f"moments_delta_{key}.csv", cols, rows)


def _write_csv(path: Path, columns, rows):
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=columns, extrasaction="ignore")
        w.writeheader()
        for row in rows:
            w.writerow({c: row.get(c, "") for c in columns})


def _log_table(report: ExperimentReport):
    for row in report.table:
        if report.kind == "convergence":
            print(f"delta={row['delta']:g} w1={row['w1']} diverged={row['n_diverged']}")
        elif report.kind == "contraction":
            print(f"delta={row['delta']:g} rate={row['rate']:.4g} plateau={row['plateau']:.4g}")
        else:
            print(f"delta={row['delta']:g} diverged={row['n_diverged']}")


def _finish(report: ExperimentReport, args, extra_assert=()) -> int:
    for a in extra_assert:
        report.assertions.append(a)
    elapsed = time.monotonic() - args._t0
    out_dir = Path(args.out or parse_config(args.config).output_dir)
    _write_report(out_dir, report, elapsed)
    _log_table(report)
    failed = [a for a in report.assertions if not a["passed"]]
    for a in report.assertions:
        status = "PASS" if a["passed"] else "FAIL"
        print(f"[{status}] {a['name']}: {a['detail']}")
    if args.assert_ and failed:
        return 2
    return 0


def _cmd_run_convergence(args) -> int:
    rc = parse_config(args.config)
    cfg = _resolve_workers(args, rc.experiment)
    if args.seed is not None:
        cfg = cfg.with_(seed=args.seed)
    report = convergence_study(cfg)
    extra = []
    if args.assert_:
        s, r2 = report.fit["slope"], report.fit["r_squared"]
        extra.append({"name": "slope_in_window",
                      "passed": bool(SLOPE_WINDOW[0] <= s <= SLOPE_WINDOW[1]),
                      "detail": f"slope={s:.4f} window={SLOPE_WINDOW}"})
        extra.append({"name": "fit_quality",
                      "passed": bool(r2 >= R2_MIN),
                      "detail": f"R^2={r2:.4f} >= {R2_MIN}"})
    return _finish(report, args, extra)


def _cmd_run_contraction(args) -> int:
    rc = parse_config(args.config)
    cfg = _resolve_workers(args, rc.experiment)
    if args.seed is not None:
        cfg = cfg.with_(seed=args.seed)
    report = contraction_study(cfg)
    return _finish(report, args)


def _cmd_run_moments(args) -> int:
    rc = parse_config(args.config)
    cfg = _resolve_workers(args, rc.experiment)
    if args.seed is not None:
        cfg = cfg.with_(seed=args.seed)
    report = moment_study(cfg)
    return _finish(report, args)


def _cmd_compute_constants(args) -> int:
    doc = _load_json(args.config)
    family = doc.pop("family", None)
    if family == "nondegenerate":
        allowed = {"K1", "K2", "alpha", "lambda_V", "C_V", "L_V", "eta", "l0",
                   "V0", "gradV0"}
        unknown = set(doc) - allowed
        if unknown:
            raise ConfigError(f"unknown key(s): {', '.join(sorted(unknown))}")
        v0 = float(doc.pop("V0", 1.0))
        g0 = float(doc.pop("gradV0", 0.0))
        assume = NondegenerateAssumptions(**{k: float(v) for k, v in doc.items()})
        out = dataclasses.asdict(nondegenerate_constants(assume, V0=v0, gradV0=g0))
    elif family == "degenerate":
        allowed = {"a", "b", "L", "lambda_V_star", "C_V_star", "L_V_star",
                   "L_V_diamond", "eta", "ell0"}
        unknown = set(doc) - allowed
        if unknown:
            raise ConfigError(f"unknown key(s): {', '.join(sorted(unknown))}")
        out = dataclasses.asdict(degenerate_constants(**{k: float(v) for k, v in doc.items()}))
    else:
        raise ConfigError("config must set family to 'nondegenerate' or 'degenerate'")
    print(json.dumps(out, sort_keys=True, indent=2))
    return 0


def _cmd_check_assumptions(args) -> int:
    doc = _load_json(args.config)
    allowed = {"model", "K1", "grid_seed", "grid_radius"}
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(sorted(unknown))}")
    if "model" not in doc:
        raise ConfigError("config must contain a 'model' block")
    cfg = ExperimentConfig(model=doc["model"])
    model = build_model(cfg)
    grid = default_grid(model.dim, seed=int(doc.get("grid_seed", 0)),
                        radius=float(doc.get("grid_radius", 5.0)))
    report = check_assumptions(model, grid, K1=doc.get("K1"))
    print(json.dumps(report, sort_keys=True, indent=2))
    if args.assert_ and not report["satisfied"]:
        return 2
    return 0


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="sdelab",
        description="Modified EM schemes, couplings, and convergence experiments.")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="path to the JSON config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--workers", type=int, default=None,
                       help="worker threads (fallback: env SDE_LAB_WORKERS)")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--assert", dest="assert_", action="store_true",
                       help="exit 2 if any experiment assertion fails")
        p.set_defaults(fn=fn)
        return p

    add("run-convergence", _cmd_run_convergence, "step-size convergence order study")
    add("run-contraction", _cmd_run_contraction, "coupled contraction-rate study")
    add("run-moments", _cmd_run_moments, "long-horizon moment boundedness study")
    add("compute-constants", _cmd_compute_constants, "print the explicit constant tuple")
    add("check-assumptions", _cmd_check_assumptions, "grid falsification of drift assumptions")
    return ap


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    args._t0 = time.monotonic()
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
