"""Experiment families: convergence-order, contraction, and moment studies.

Convergence studies couple the scheme with a fine EM reference started at the
same point, so the initial-condition term vanishes and the terminal error
isolates the step-size remainder. All studies run in fixed path chunks with
per-path noise streams, making reports byte-identical for any worker count.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import constants as constants_mod
from . import metrics, simkit
from .coupling import CutoffParams, _record_ks, simulate_coupled_pair
from .model import (ConfigError, DriftModel, KineticModel, LyapunovSpec,
                    double_well_model, kinetic_double_well, kinetic_quadratic,
                    polynomial_model, quadratic_model)
from .schemes import SchemeParams, delta0_threshold, simulate_path

__all__ = [
    "ExperimentConfig",
    "ExperimentReport",
    "ExperimentError",
    "build_model",
    "build_lyapunov",
    "convergence_study",
    "contraction_study",
    "moment_study",
    "kinetic_d_probe",
]


class ExperimentError(RuntimeError):
    """An experiment could not produce a meaningful result."""


@dataclass(frozen=True)
class ExperimentConfig:
    model: dict = field(default_factory=lambda: {"kind": "double_well", "dim": 1})
    variant: str = "tamed"
    theta: float = 0.25
    deltas: tuple = (2 ** -4, 2 ** -5, 2 ** -6, 2 ** -7, 2 ** -8)
    horizon: float = 10.0
    n_paths: int = 1000
    epsilon: float = 1e-3
    substeps: int = 16
    lyapunov: Optional[dict] = None       # default: vp p=2, or vlambda 0.2 for kinetic
    metric: str = "w1"                    # terminal-error metric; sliced automatically in d>1
    n_projections: int = 64
    seed: int = 0
    workers: int = 1
    x0: Optional[dict] = None             # {"point": [...]} or {"gaussian": {"mean":.., "sd":..}}
    x0_alt: Optional[dict] = None         # second start for contraction studies
    trace_points: int = 200
    p_moments: tuple = (2.0,)
    noise_scale: float = 1.0              # 0 turns the run into an ODE cross-check

    def with_(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)


def build_model(cfg: ExperimentConfig):
    spec = dict(cfg.model)
    kind = spec.pop("kind", None)
    dim = int(spec.pop("dim", 1))
    if kind == "double_well":
        m = double_well_model(dim)
    elif kind == "quadratic":
        m = quadratic_model(dim, float(spec.pop("rate", 1.0)))
    elif kind == "polynomial":
        holder = spec.pop("holder", None)
        if holder is not None:
            holder = (float(holder["scale"]), float(holder["alpha"]))
        m = polynomial_model(dim, spec.pop("coeffs"),
                             lambda_star=float(spec.pop("lambda_star")),
                             C_star=float(spec.pop("C_star")),
                             L0=float(spec.pop("L0")),
                             ell0=float(spec.pop("ell0")),
                             holder=holder)
    elif kind == "kinetic_double_well":
        m = kinetic_double_well(dim, float(spec.pop("a", 0.0)), float(spec.pop("b", 1.0)))
    elif kind == "kinetic_quadratic":
        m = kinetic_quadratic(dim, float(spec.pop("a", 0.0)), float(spec.pop("b", 1.0)))
    else:
        raise ConfigError(f"unknown model kind {kind!r}")
    if spec:
        raise ConfigError(f"unknown model keys {sorted(spec)}")
    return m


def build_lyapunov(cfg: ExperimentConfig, model) -> LyapunovSpec:
    kinetic = isinstance(model, KineticModel)
    spec = cfg.lyapunov
    if spec is None:
        spec = {"kind": "vlambda", "lam": 0.2} if kinetic else {"kind": "vp", "p": 2.0}
    if spec["kind"] == "vp":
        return LyapunovSpec(kind="vp", p=float(spec["p"]))
    if spec["kind"] == "vlambda":
        if not kinetic:
            raise ConfigError("vlambda Lyapunov needs a kinetic model")
        return LyapunovSpec(kind="vlambda", lam=float(spec["lam"]), kinetic=model)
    raise ConfigError(f"unknown lyapunov kind {spec['kind']!r}")


_INIT_SALT = 0x1217B9


def initial_states(cfg: ExperimentConfig, which: str, n: int, state_dim: int) -> np.ndarray:
    spec = cfg.x0_alt if which == "alt" else cfg.x0
    if spec is None:
        spec = {"point": [1.0] * state_dim}
    if "point" in spec:
        pt = np.asarray(spec["point"], dtype=float)
        if pt.size == 1 and state_dim > 1:
            pt = np.full(state_dim, pt.item())
        if pt.size != state_dim:
            raise ConfigError(f"initial point has width {pt.size}, expected {state_dim}")
        return np.tile(pt, (n, 1))
    if "gaussian" in spec:
        g = spec["gaussian"]
        mean = float(g.get("mean", 0.0))
        sd = float(g.get("sd", 1.0))
        salt = _INIT_SALT + (1 if which == "alt" else 0)
        rng = np.random.Generator(np.random.Philox(key=np.array([cfg.seed ^ salt, 0], dtype=np.uint64)))
        return mean + sd * rng.standard_normal((n, state_dim))
    raise ConfigError("x0 must specify 'point' or 'gaussian'")


@dataclass
class ExperimentReport:
    kind: str
    config: dict
    seed: int
    table: list
    fit: Optional[dict] = None
    predicted_exponent: Optional[float] = None
    constants: Optional[dict] = None
    assertions: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def all_assertions_pass(self) -> bool:
        return all(a["passed"] for a in self.assertions)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _config_echo(cfg: ExperimentConfig) -> dict:
    return dataclasses.asdict(cfg)


def _scheme_params(cfg: ExperimentConfig, delta: float) -> SchemeParams:
    return SchemeParams(delta=delta, theta=cfg.theta, variant=cfg.variant)


def _check_deltas(cfg: ExperimentConfig):
    ds = list(cfg.deltas)
    if len(ds) != len(set(ds)) or any(b >= a for a, b in zip(ds, ds[1:])):
        raise ConfigError("delta grid must be strictly decreasing")


def _terminal_error(cfg, state_dim, ref, app, mask, delta_index):
    ref_m, app_m = ref[mask], app[mask]
    if state_dim == 1:
        w1 = metrics.w1_empirical_1d(ref_m[:, 0], app_m[:, 0])
    else:
        stream = simkit.NoiseStream(cfg.seed, delta_index, "Slicing")
        w1 = metrics.w1_sliced(ref_m, app_m, n_proj=cfg.n_projections, rng=stream)
    pair_dist = np.linalg.norm(ref_m - app_m, axis=-1)
    se = float(np.std(pair_dist, ddof=1) / math.sqrt(len(pair_dist))) if len(pair_dist) > 1 else 0.0
    return w1, se


def convergence_study(cfg: ExperimentConfig) -> ExperimentReport:
    _check_deltas(cfg)
    if cfg.variant not in ("truncated", "tamed", "kinetic"):
        raise ConfigError("convergence study supports truncated/tamed/kinetic variants")
    model = build_model(cfg)
    lyap = build_lyapunov(cfg, model)
    kinetic = isinstance(model, KineticModel)
    d = model.dim
    state_dim = 2 * d if kinetic else d
    x0 = initial_states(cfg, "main", cfg.n_paths, state_dim)
    cutoff = CutoffParams(cfg.epsilon)

    table = []
    for i, delta in enumerate(cfg.deltas):
        params = _scheme_params(cfg, delta)

        def task(lo, hi, params=params):
            rng = simkit.PairStreams.create(cfg.seed, lo, hi, d)
            tr = simulate_coupled_pair(x0[lo:hi], x0[lo:hi], model, params, cutoff,
                                       cfg.horizon, rng, substeps=cfg.substeps,
                                       noise_scale=cfg.noise_scale)
            return {
                "ref": tr.final_ref,
                "app": tr.final_approx,
                "rho_T": tr.rho[-1],
                "diverged": tr.diverged,
            }

        out = simkit.run_ensemble(task, cfg.n_paths, cfg.workers)
        mask = ~out["diverged"]
        n_div = int(np.sum(out["diverged"]))
        if np.sum(mask) < 3:
            table.append({"delta": delta, "w1": None, "w1_se": None, "rho_bound": None,
                          "rho_bound_se": None, "n_pairs": cfg.n_paths, "n_diverged": n_div})
            continue
        w1, w1_se = _terminal_error(cfg, state_dim, out["ref"], out["app"], mask, i)
        rho_T = out["rho_T"][mask]
        rho_mean = float(np.mean(rho_T))
        rho_se = float(np.std(rho_T, ddof=1) / math.sqrt(len(rho_T))) if len(rho_T) > 1 else 0.0
        table.append({"delta": delta, "w1": w1, "w1_se": w1_se,
                      "rho_bound": rho_mean, "rho_bound_se": rho_se,
                      "n_pairs": cfg.n_paths, "n_diverged": n_div})

    usable = [(r["delta"], r["w1"]) for r in table if r["w1"] is not None and r["w1"] > 0]
    if len(usable) < 3:
        raise ExperimentError(f"only {len(usable)} usable delta points; need >= 3")
    fit = metrics.fit_loglog_slope(usable)
    if kinetic:
        predicted = 0.5
    else:
        predicted = 0.5 * model.alpha if model.K2 > 0 else 0.5
    return ExperimentReport(
        kind="convergence",
        config=_config_echo(cfg),
        seed=cfg.seed,
        table=table,
        fit=dataclasses.asdict(fit),
        predicted_exponent=predicted,
        extra={"metric_label": "terminal W1 (coupling upper bound alongside)"},
    )


def _theoretical_constants(model, lyap) -> Optional[dict]:
    if not isinstance(model, DriftModel) or lyap.kind != "vp" or lyap.p <= 0:
        return None
    try:
        assume = constants_mod.assumptions_for_model(model, lyap.p)
        cc = constants_mod.nondegenerate_constants(assume)
        return {"assumptions": dataclasses.asdict(assume), "contraction": dataclasses.asdict(cc)}
    except (ArithmeticError, ConfigError):
        return None


def contraction_study(cfg: ExperimentConfig, init_mu: Optional[dict] = None,
                      init_nu: Optional[dict] = None) -> ExperimentReport:
    _check_deltas(cfg)
    model = build_model(cfg)
    lyap = build_lyapunov(cfg, model)
    kinetic = isinstance(model, KineticModel)
    d = model.dim
    state_dim = 2 * d if kinetic else d
    cfg_mu = cfg if init_mu is None else cfg.with_(x0=init_mu)
    cfg_nu = cfg if init_nu is None else cfg.with_(x0_alt=init_nu)
    if cfg_nu.x0_alt is None:
        cfg_nu = cfg_nu.with_(x0_alt={"point": [-2.0] * state_dim})
    if cfg_mu.x0 is None:
        cfg_mu = cfg_mu.with_(x0={"point": [2.0] * state_dim})
    x_mu = initial_states(cfg_mu, "main", cfg.n_paths, state_dim)
    x_nu = initial_states(cfg_nu, "alt", cfg.n_paths, state_dim)
    cutoff = CutoffParams(cfg.epsilon)

    table = []
    trace_tables = {}
    for delta in cfg.deltas:
        params = _scheme_params(cfg, delta)

        def task(lo, hi, params=params):
            rng = simkit.PairStreams.create(cfg.seed, lo, hi, d)
            tr = simulate_coupled_pair(x_nu[lo:hi], x_mu[lo:hi], model, params, cutoff,
                                       cfg.horizon, rng, substeps=cfg.substeps,
                                       n_record=cfg.trace_points,
                                       noise_scale=cfg.noise_scale)
            return {"rho": tr.rho.T, "diverged": tr.diverged}

        out = simkit.run_ensemble(task, cfg.n_paths, cfg.workers)
        n_steps = int(round(cfg.horizon / delta))
        times = _record_ks(n_steps, cfg.trace_points) * delta
        rho = out["rho"].T  # (m, n)
        mean, se = metrics.coupled_rho_mean(rho)
        plateau = float(np.mean(mean[-max(1, len(mean) // 5):]))
        below = np.nonzero(mean < 3.0 * plateau)[0]
        t_star_idx = int(below[0]) if below.size else len(mean) - 1
        t_star_idx = max(t_star_idx, 3)
        fit = metrics.fit_exp_rate(times[:t_star_idx + 1], mean[:t_star_idx + 1])
        table.append({
            "delta": delta,
            "rate": fit["rate"], "ci_low": fit["ci_low"], "ci_high": fit["ci_high"],
            "r_squared": fit["r_squared"], "plateau": plateau,
            "t_star": float(times[t_star_idx]),
            "n_diverged": int(np.sum(out["diverged"])),
        })
        trace_tables[repr(delta)] = {"t": times.tolist(), "rho_mean": mean.tolist(),
                                     "rho_se": se.tolist()}

    assertions = []
    for row in table:
        assertions.append({
            "name": f"positive_rate_delta_{row['delta']:g}",
            "passed": bool(row["rate"] > 0 and row["ci_low"] > 0),
            "detail": f"rate={row['rate']:.4g} CI [{row['ci_low']:.4g}, {row['ci_high']:.4g}]",
        })
    if len(table) >= 2:
        hi_d = max(table, key=lambda r: r["delta"])
        lo_d = min(table, key=lambda r: r["delta"])
        assertions.append({
            "name": "plateau_decreasing_in_delta",
            "passed": bool(lo_d["plateau"] < hi_d["plateau"]),
            "detail": f"plateau({lo_d['delta']:g})={lo_d['plateau']:.4g} vs "
                      f"plateau({hi_d['delta']:g})={hi_d['plateau']:.4g}",
        })
    return ExperimentReport(
        kind="contraction",
        config=_config_echo(cfg),
        seed=cfg.seed,
        table=table,
        constants=_theoretical_constants(model, lyap),
        assertions=assertions,
        extra={"traces": trace_tables,
               "note": "empirical rate may exceed the theoretical lower-bound rate"},
    )


def moment_study(cfg: ExperimentConfig, p_list=None) -> ExperimentReport:
    p_list = [float(p) for p in (p_list or cfg.p_moments)]
    if not p_list:
        raise ConfigError("p_list must be nonempty")
    model = build_model(cfg)
    kinetic = isinstance(model, KineticModel)
    d = model.dim
    state_dim = 2 * d if kinetic else d
    x0 = initial_states(cfg, "main", cfg.n_paths, state_dim)

    table = []
    traces = {}
    assertions = []
    for delta in cfg.deltas:
        params = _scheme_params(cfg, delta)

        def task(lo, hi, params=params):
            pool = simkit.StreamPool(cfg.seed, "Single", lo, hi, d)
            summ = simulate_path(x0[lo:hi], model, params, cfg.horizon, pool,
                                 n_record=cfg.trace_points)
            return {"abs": summ.abs_trace.T, "diverged": summ.diverged}

        out = simkit.run_ensemble(task, cfg.n_paths, cfg.workers)
        n_steps = int(round(cfg.horizon / delta))
        times = _record_ks(n_steps, cfg.trace_points) * delta
        abs_tr = out["abs"].T  # (m, n)
        n_div = int(np.sum(out["diverged"]))
        row = {"delta": delta, "n_paths": cfg.n_paths, "n_diverged": n_div, "moments": {}}
        dtraces = {"t": times.tolist()}
        T = float(times[-1]) if len(times) else 0.0
        for p in p_list:
            with np.errstate(over="ignore", invalid="ignore"):
                mom = np.nanmean(abs_tr ** p, axis=1)
            dtraces[f"p{p:g}"] = mom.tolist()
            late = mom[(times >= T / 2)]
            mid = mom[(times >= T / 4) & (times < T / 2)]
            plateau_ok = bool(len(mid) and len(late)
                              and np.max(late) <= 1.5 * max(np.max(mid), 1e-300))
            row["moments"][f"p{p:g}"] = {"final": float(mom[-1]), "plateau_ok": plateau_ok}
            assertions.append({
                "name": f"plateau_p{p:g}_delta_{delta:g}",
                "passed": plateau_ok,
                "detail": f"max[T/2,T]={np.max(late) if len(late) else float('nan'):.4g} "
                          f"vs 1.5*max[T/4,T/2]",
            })
        if cfg.variant in ("tamed", "truncated", "kinetic"):
            if cfg.variant in ("tamed", "truncated"):
                thr = delta0_threshold(model, params)
                admissible = delta <= thr
            else:
                admissible = True
            assertions.append({
                "name": f"no_divergence_delta_{delta:g}",
                "passed": bool(n_div == 0),
                "detail": f"{n_div} diverged paths"
                          + ("" if admissible else " (delta above admissibility threshold)"),
            })
        table.append(row)
        traces[repr(delta)] = dtraces

    return ExperimentReport(
        kind="moments",
        config=_config_echo(cfg),
        seed=cfg.seed,
        table=table,
        assertions=assertions,
        extra={"traces": traces, "p_list": p_list},
    )


def kinetic_d_probe(cfg: ExperimentConfig, dims=(1, 2, 4), delta: float = 2 ** -6) -> dict:
    """Terminal coupling error of the kinetic scheme across dimensions at fixed
    step size; returns {d: error} for the d-scaling check."""
    errors = {}
    for dd in dims:
        sub = cfg.with_(model={**cfg.model, "dim": int(dd)}, deltas=(delta,),
                        x0={"point": [1.0]})
        model = build_model(sub)
        state_dim = 2 * model.dim
        x0 = initial_states(sub, "main", sub.n_paths, state_dim)
        cutoff = CutoffParams(sub.epsilon)
        params = _scheme_params(sub, delta)

        def task(lo, hi):
            rng = simkit.PairStreams.create(sub.seed, lo, hi, model.dim)
            tr = simulate_coupled_pair(x0[lo:hi], x0[lo:hi], model, params, cutoff,
                                       sub.horizon, rng, substeps=sub.substeps)
            return {"ref": tr.final_ref, "app": tr.final_approx, "diverged": tr.diverged}

        out = simkit.run_ensemble(task, sub.n_paths, sub.workers)
        mask = ~out["diverged"]
        if state_dim == 1:
            err = metrics.w1_empirical_1d(out["ref"][mask][:, 0], out["app"][mask][:, 0])
        else:
            stream = simkit.NoiseStream(sub.seed, 10_000 + int(dd), "Slicing")
            err = metrics.w1_sliced(out["ref"][mask], out["app"][mask],
                                    n_proj=sub.n_projections, rng=stream)
        errors[int(dd)] = float(err)
    return errors
