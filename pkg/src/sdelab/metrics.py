"""Distance-like costs, empirical Wasserstein estimators, moment statistics,
rate fitting, and remainder diagnostics.

The quasi-Wasserstein cost induced by rho_V is never computed as an infimum;
reports carry the mean rho_V over the constructed coupling, which upper-bounds
it ("coupling upper bound").
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from .model import ConfigError, LyapunovSpec, eval_lyapunov
from . import simkit

__all__ = [
    "DistanceSpec",
    "RateFit",
    "rho_V",
    "rho_V_kinetic",
    "concave_g",
    "rho_g_gamma_V",
    "w1_empirical_1d",
    "w1_exact_matching",
    "w1_sliced",
    "coupled_rho_mean",
    "remainder_sample",
    "moment_estimate",
    "fit_loglog_slope",
    "fit_exp_rate",
]


@dataclass(frozen=True)
class DistanceSpec:
    lyapunov: LyapunovSpec
    # optional concave-transformed cost g(|x-y|)(1 + gamma V(x) + gamma V(y))
    c1: Optional[float] = None
    c2: Optional[float] = None
    l0: Optional[float] = None
    gamma_weight: Optional[float] = None

    def __post_init__(self):
        vals = (self.c1, self.c2, self.l0, self.gamma_weight)
        if any(v is not None for v in vals):
            if any(v is None or v <= 0 for v in vals):
                raise ConfigError("transform needs all of c1, c2, l0, gamma_weight > 0")

    @property
    def has_transform(self) -> bool:
        return self.c1 is not None


@dataclass(frozen=True)
class RateFit:
    points: tuple          # ((log delta, log error), ...)
    slope: float
    intercept: float
    r_squared: float


# ---- Distance-like costs ----

def rho_V(x, y, lyapunov: LyapunovSpec):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    dist = np.minimum(1.0, np.linalg.norm(x - y, axis=-1))
    return dist * (1.0 + eval_lyapunov(lyapunov, x) + eval_lyapunov(lyapunov, y))


def rho_V_kinetic(s, s2, lyapunov: LyapunovSpec):
    """Pair distance on stacked (position, velocity) states: component norms add."""
    s = np.asarray(s, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    d = s.shape[-1] // 2
    dist = (np.linalg.norm(s[..., :d] - s2[..., :d], axis=-1)
            + np.linalg.norm(s[..., d:] - s2[..., d:], axis=-1))
    return np.minimum(1.0, dist) * (1.0 + eval_lyapunov(lyapunov, s)
                                    + eval_lyapunov(lyapunov, s2))


def concave_g(r, c1: float, c2: float, l0: float):
    """g(r) = f(min(r, l0)) with f(r) = c1 r + 1 - exp(-c2 r); concave,
    nondecreasing, constant past l0, g(0) = 0."""
    r = np.asarray(r, dtype=float)
    rc = np.minimum(r, l0)
    out = c1 * rc + 1.0 - np.exp(-c2 * rc)
    return out if out.ndim else float(out)


def rho_g_gamma_V(x, y, spec: DistanceSpec):
    if not spec.has_transform:
        raise ConfigError("rho_g_gamma_V needs the (c1, c2, l0, gamma_weight) transform")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    g = concave_g(np.linalg.norm(x - y, axis=-1), spec.c1, spec.c2, spec.l0)
    w = spec.gamma_weight
    return g * (1.0 + w * eval_lyapunov(spec.lyapunov, x) + w * eval_lyapunov(spec.lyapunov, y))


# ---- Empirical Wasserstein ----

def w1_empirical_1d(samples_a, samples_b) -> float:
    """Exact empirical W1 between equal-size scalar samples (sorted matching)."""
    a = np.sort(np.asarray(samples_a, dtype=float).ravel())
    b = np.sort(np.asarray(samples_b, dtype=float).ravel())
    if a.size != b.size:
        raise ConfigError(f"sample counts differ ({a.size} vs {b.size}); not resampling silently")
    if a.size == 0:
        raise ConfigError("empty samples")
    return float(np.mean(np.abs(a - b)))


def w1_exact_matching(samples_a, samples_b, max_n: int = 512) -> float:
    """Exact W1 between equal-size point clouds by optimal assignment; cross-check
    oracle, capped at max_n points."""
    a = np.atleast_2d(np.asarray(samples_a, dtype=float))
    b = np.atleast_2d(np.asarray(samples_b, dtype=float))
    if a.shape[0] != b.shape[0]:
        raise ConfigError("sample counts differ")
    if a.shape[0] > max_n:
        raise ConfigError(f"exact matching capped at {max_n} points")
    cost = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=-1)
    ri, ci = linear_sum_assignment(cost)
    return float(cost[ri, ci].mean())


def w1_sliced(samples_a, samples_b, n_proj: int = 64, rng=None) -> float:
    """Sliced W1: average 1-D W1 over random unit directions; in d=1 this is
    exactly w1_empirical_1d."""
    a = np.atleast_2d(np.asarray(samples_a, dtype=float))
    b = np.atleast_2d(np.asarray(samples_b, dtype=float))
    if a.shape[0] == 0:
        raise ConfigError("empty samples")
    if a.shape[0] != b.shape[0]:
        raise ConfigError("sample counts differ")
    if n_proj < 1:
        raise ConfigError("n_proj must be >= 1")
    d = a.shape[1]
    if d == 1:
        return w1_empirical_1d(a[:, 0], b[:, 0])
    if rng is None:
        raise ConfigError("sliced W1 in d>1 needs an rng stream")
    total = 0.0
    for _ in range(n_proj):
        if isinstance(rng, simkit.NoiseStream):
            direction = rng.normals(d)
        else:
            direction = rng.standard_normal(d)
        direction = direction / np.linalg.norm(direction)
        total += w1_empirical_1d(a @ direction, b @ direction)
    return total / n_proj


# ---- Trace statistics ----

def coupled_rho_mean(traces) -> tuple:
    """Pointwise mean and standard error over pairs; traces is (m, n) with nan
    marking diverged pairs (excluded per time point)."""
    arr = np.asarray(traces, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.size == 0:
        raise ConfigError("empty trace set")
    n_alive = np.sum(~np.isnan(arr), axis=1)
    if np.any(n_alive == 0):
        raise ConfigError("no surviving pairs at some time point")
    mean = np.nanmean(arr, axis=1)
    with np.errstate(invalid="ignore"):
        sd = np.nanstd(arr, axis=1, ddof=1) if arr.shape[1] > 1 else np.zeros_like(mean)
    se = np.where(n_alive > 1, sd / np.sqrt(n_alive), 0.0)
    return mean, se


def remainder_sample(cs, model, params, lyapunov: LyapunovSpec):
    """Lyapunov-weighted drift mismatch of the scheme component at its anchor."""
    from .schemes import modified_drift  # local import avoids a cycle
    weight_ref = eval_lyapunov(lyapunov, cs.ref)
    weight_app = eval_lyapunov(lyapunov, cs.approx)
    if cs.kind == "degenerate":
        d = cs.dim
        dx = np.linalg.norm(cs.approx[..., :d] - cs.approx_anchor[..., :d], axis=-1)
        dy = np.linalg.norm(cs.approx[..., d:] - cs.approx_anchor[..., d:], axis=-1)
        return (weight_ref + weight_app) * (dx + dy)
    full = model.b0(cs.approx) + model.b1(cs.approx)
    sched = modified_drift(model, params)(cs.approx_anchor)
    return np.linalg.norm(full - sched, axis=-1) * (1.0 + weight_ref + weight_app)


def moment_estimate(samples, p: float) -> float:
    if p <= 0:
        raise ConfigError("p must be positive")
    arr = np.asarray(samples, dtype=float)
    if arr.size == 0:
        raise ConfigError("empty samples")
    norms = np.abs(arr) if arr.ndim == 1 else np.linalg.norm(arr, axis=-1)
    return float(np.mean(norms ** p))


# ---- Rate fitting ----

def fit_loglog_slope(points) -> RateFit:
    """OLS on (log delta, log error)."""
    pts = [(float(d), float(e)) for d, e in points]
    if len(pts) < 3:
        raise ConfigError("need at least 3 (delta, error) points")
    if any(e <= 0 for _, e in pts):
        raise ConfigError("non-positive error value; estimator breakdown, refusing to fit")
    lx = np.log([d for d, _ in pts])
    ly = np.log([e for _, e in pts])
    slope, intercept = np.polyfit(lx, ly, 1)
    pred = slope * lx + intercept
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return RateFit(points=tuple(zip(lx.tolist(), ly.tolist())),
                   slope=float(slope), intercept=float(intercept), r_squared=float(r2))


def fit_exp_rate(times, values) -> dict:
    """OLS fit of log(values) ~ -rate * t; returns the decay rate with a 95%
    normal-theory confidence interval and R^2."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    keep = v > 0
    t, v = t[keep], v[keep]
    if t.size < 3:
        raise ConfigError("need at least 3 positive trace values for the rate fit")
    ly = np.log(v)
    slope, intercept = np.polyfit(t, ly, 1)
    pred = slope * t + intercept
    resid = ly - pred
    dof = t.size - 2
    s2 = float(resid @ resid) / dof if dof > 0 else 0.0
    sxx = float(np.sum((t - t.mean()) ** 2))
    se = math.sqrt(s2 / sxx) if sxx > 0 else float("inf")
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(resid @ resid) / ss_tot
    rate = -float(slope)
    return {
        "rate": rate,
        "ci_low": rate - 1.96 * se,
        "ci_high": rate + 1.96 * se,
        "r_squared": r2,
        "n_points": int(t.size),
    }
