"""One-step kernels and path simulators for the modified EM family.

Variants:
  plain      - unmodified drift (diverges on super-linear drifts, kept as control)
  truncated  - drift argument radially clipped to norm (delta^-theta - 1)^(1/ell0)
  tamed      - shifted part divided by (1 + delta^(2 theta) |x|^(2 ell0))^(1/2)
  ratio_tamed- whole drift divided by (1 + delta^theta |x|^ell0); extra variant
               flag only, no convergence claims attached
  kinetic    - explicit EM for the underdamped (position, velocity) dynamics

The drift is always evaluated at the last coarse grid point; one Gaussian per
step. Batch simulation carries an alive-mask so diverged paths are counted and
frozen, never silently dropped.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .model import ConfigError, DriftModel, KineticModel, eval_drift
from . import simkit

__all__ = [
    "VARIANTS",
    "SchemeParams",
    "PathState",
    "PathOverflowError",
    "PathSummary",
    "truncation_map",
    "truncated_modified_drift",
    "tamed_modified_drift",
    "ratio_tamed_drift",
    "modified_drift",
    "em_step",
    "kinetic_em_step",
    "simulate_path",
    "delta0_threshold",
    "growth_bound_constants",
]

VARIANTS = ("plain", "truncated", "tamed", "ratio_tamed", "kinetic")

# |x| beyond this counts as diverged; avoids inf*0 artifacts before float overflow
BLOWUP = 1e12


class PathOverflowError(OverflowError):
    def __init__(self, step: int, t: float):
        self.step, self.t = step, t
        super().__init__(f"path diverged (non-finite state) at step {step}, t={t:g}")


@dataclass(frozen=True)
class SchemeParams:
    delta: float
    theta: float = 0.25
    variant: str = "tamed"

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ConfigError("delta must lie in (0, 1)")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.variant == "tamed" and not 0.25 <= self.theta < 0.5:
            raise ConfigError("tamed variant needs theta in [1/4, 1/2)")
        if self.variant in ("truncated", "ratio_tamed") and not 0 < self.theta < 0.5:
            raise ConfigError(f"{self.variant} variant needs theta in (0, 1/2)")


@dataclass(frozen=True)
class PathState:
    """State on the delta-grid; t is recomputed as k*delta, never accumulated."""

    k: int
    x: np.ndarray
    delta: float
    v: Optional[np.ndarray] = None

    @property
    def t(self) -> float:
        return self.k * self.delta


# ---- Modified drifts ----

def truncation_map(x: np.ndarray, delta: float, theta: float, ell0: float) -> np.ndarray:
    # the bare map is defined up to theta = 1/2; the scheme-level range for
    # truncated runs is the open interval enforced by SchemeParams
    if not 0 < delta < 1 or not 0 < theta <= 0.5 or ell0 <= 0:
        raise ConfigError("truncation needs delta in (0,1), theta in (0,1/2], ell0 > 0")
    x = np.asarray(x, dtype=float)
    cap = (delta ** (-theta) - 1.0) ** (1.0 / ell0)
    r = np.linalg.norm(x, axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(r > cap, cap / np.where(r > 0, r, 1.0), 1.0)
    return scale * x


def truncated_modified_drift(model: DriftModel, x: np.ndarray, params: SchemeParams) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    pi_x = truncation_map(x, params.delta, params.theta, model.ell0)
    return -model.lambda_star * x + model.b0(x) + model.bbar1(pi_x)


def tamed_modified_drift(model: DriftModel, x: np.ndarray, params: SchemeParams) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    sq = np.sum(np.square(x), axis=-1, keepdims=True)
    denom = np.sqrt(1.0 + params.delta ** (2.0 * params.theta) * sq ** model.ell0)
    return model.b0(x) - model.lambda_star * x + model.bbar1(x) / denom


def ratio_tamed_drift(model: DriftModel, x: np.ndarray, params: SchemeParams) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1, keepdims=True)
    return (model.b0(x) + model.b1(x)) / (1.0 + params.delta ** params.theta * r ** model.ell0)


def modified_drift(model: DriftModel, params: SchemeParams) -> Callable[[np.ndarray], np.ndarray]:
    """The scheme's drift b_delta as a function of the state."""
    if params.variant == "plain":
        return lambda x: model.b0(x) + model.b1(x)
    if params.variant == "truncated":
        return lambda x: truncated_modified_drift(model, x, params)
    if params.variant == "tamed":
        return lambda x: tamed_modified_drift(model, x, params)
    if params.variant == "ratio_tamed":
        return lambda x: ratio_tamed_drift(model, x, params)
    raise ConfigError(f"variant {params.variant!r} has no plain-state drift")


# ---- Admissibility diagnostics ----

def delta0_threshold(model: DriftModel, params: SchemeParams) -> float:
    """Largest step size for which the scheme's one-step dissipativity bound is
    guaranteed; experiments may sweep past it (warned, not enforced)."""
    lam, L0, K2, a, th = model.lambda_star, model.L0, model.K2, model.alpha, params.theta
    if params.variant == "truncated":
        return min(2.0 ** (-1.0 / th),
                   (lam / (8.0 * (2.0 * lam + a + L0) ** 2)) ** (1.0 / (1.0 - 2.0 * th)))
    if params.variant == "tamed":
        return min(1.0,
                   (lam / (6.0 * (4.0 * lam ** 2 + 2.0 * L0 ** 2 + (K2 * a) ** 2)))
                   ** (1.0 / (1.0 - 2.0 * th)))
    raise ConfigError("admissibility threshold defined for truncated/tamed only")


def growth_bound_constants(model: DriftModel, params: SchemeParams) -> tuple:
    """(offset, slope) with |b_delta(x)| <= offset + slope * |x| on all of R^d."""
    zero = np.zeros((model.dim,))
    b0_0 = float(np.linalg.norm(model.b0(zero)))
    b1_0 = float(np.linalg.norm(model.b1(zero)))
    lam, L0, K2, a, th = model.lambda_star, model.L0, model.K2, model.alpha, params.theta
    holder_off = (1.0 - a) * K2 ** (1.0 / (1.0 - a)) if (K2 > 0 and a < 1) else 0.0
    if params.variant == "truncated":
        return (holder_off + b0_0 + b1_0,
                2.0 * lam + a + L0 * params.delta ** (-th))
    if params.variant == "tamed":
        return (b0_0 + b1_0 + K2 * (1.0 - a),
                K2 * a + 2.0 * lam + math.sqrt(2.0) * L0 * params.delta ** (-th))
    raise ConfigError("growth bound defined for truncated/tamed only")


# ---- Step kernels ----

def _check_finite(x: np.ndarray, k: int, delta: float):
    if not np.all(np.isfinite(x)) or np.any(np.abs(x) > BLOWUP):
        raise PathOverflowError(k, k * delta)


def em_step(state: PathState, drift_fn, params: SchemeParams, dW: np.ndarray) -> PathState:
    x = state.x + drift_fn(state.x) * params.delta + dW
    k = state.k + 1
    _check_finite(x, k, params.delta)
    return replace(state, k=k, x=x)


def kinetic_em_step(state: PathState, model: KineticModel, params: SchemeParams,
                    dW: np.ndarray) -> PathState:
    x, v = state.x, state.v
    x_new = x + v * params.delta
    v_new = v - (model.gradU(x) + v) * params.delta + dW
    k = state.k + 1
    _check_finite(x_new, k, params.delta)
    _check_finite(v_new, k, params.delta)
    return replace(state, k=k, x=x_new, v=v_new)


# ---- Batch path simulation ----

@dataclass
class PathSummary:
    terminal: np.ndarray          # (n, state_dim); frozen at last finite value if diverged
    diverged: np.ndarray          # (n,) bool
    diverge_step: np.ndarray      # (n,) int, -1 if finite throughout
    record_times: np.ndarray      # (m,)
    abs_trace: np.ndarray         # (m, n) full-state norm; nan after divergence
    n_steps: int


def _record_grid(n_steps: int, n_record: int) -> np.ndarray:
    if n_record <= 0:
        return np.array([0, n_steps], dtype=int) if n_steps else np.array([0], dtype=int)
    ks = np.unique(np.round(np.linspace(0, n_steps, min(n_record, n_steps) + 1)).astype(int))
    return ks


def simulate_path(x0, model, params: SchemeParams, T: float, rng,
                  n_record: int = 0) -> PathSummary:
    """Iterate the step kernel to horizon T.

    x0 may be a single state (d,) or a batch (n, d); kinetic states are stacked
    (position, velocity) of width 2d. rng is a simkit.NoiseStream (single path)
    or simkit.StreamPool covering the batch.
    """
    kinetic = params.variant == "kinetic"
    if kinetic and not isinstance(model, KineticModel):
        raise ConfigError("kinetic variant needs a KineticModel")
    d = model.dim
    state_dim = 2 * d if kinetic else d
    x = np.atleast_2d(np.asarray(x0, dtype=float)).copy()
    if x.shape[-1] != state_dim:
        raise ConfigError(f"initial state width {x.shape[-1]}, expected {state_dim}")
    n = x.shape[0]

    n_steps = int(round(T / params.delta))
    if abs(n_steps * params.delta - T) > 1e-9 * max(1.0, T):
        n_steps = int(T / params.delta)
        warnings.warn(f"horizon {T} not a multiple of delta; truncated to {n_steps} steps")

    if isinstance(rng, simkit.NoiseStream):
        pool = simkit.StreamPool(rng.master_seed, rng.channel, rng.path_index,
                                 rng.path_index + 1, d)
        if rng.counter:
            pool.values(rng.counter)
    else:
        pool = rng
        if pool.n_paths != n or pool.dim != d:
            raise ConfigError("stream pool does not match batch shape")

    drift = None if kinetic else modified_drift(model, params)
    sqrt_d = math.sqrt(params.delta)
    rec_ks = _record_grid(n_steps, n_record)
    abs_trace = np.full((len(rec_ks), n), np.nan)
    rec_i = 0

    alive = np.ones(n, dtype=bool)
    diverge_step = np.full(n, -1, dtype=int)
    norms = np.linalg.norm(x, axis=-1)
    if rec_ks[rec_i] == 0:
        abs_trace[0] = norms
        rec_i += 1

    block = max(1, 2048 // max(1, d))
    k = 0
    with np.errstate(over="ignore", invalid="ignore"):
        while k < n_steps:
            nb = min(block, n_steps - k)
            noise = pool.block(nb) * sqrt_d
            for j in range(nb):
                k += 1
                if kinetic:
                    xp, vp = x[:, :d], x[:, d:]
                    x_new = np.concatenate(
                        [xp + vp * params.delta,
                         vp - (model.gradU(xp) + vp) * params.delta + noise[:, j]], axis=-1)
                else:
                    x_new = x + drift(x) * params.delta + noise[:, j]
                bad = ~np.all(np.isfinite(x_new), axis=-1) | \
                    (np.max(np.abs(np.where(np.isfinite(x_new), x_new, 0.0)), axis=-1) > BLOWUP)
                newly = alive & bad
                diverge_step[newly] = k
                alive = alive & ~bad
                x = np.where(alive[:, None], x_new, x)
                if rec_i < len(rec_ks) and k == rec_ks[rec_i]:
                    abs_trace[rec_i] = np.where(alive, np.linalg.norm(x, axis=-1), np.nan)
                    rec_i += 1

    return PathSummary(
        terminal=x,
        diverged=~alive,
        diverge_step=diverge_step,
        record_times=rec_ks * params.delta,
        abs_trace=abs_trace,
        n_steps=n_steps,
    )
