"""Explicit contraction constants for reporting theoretical rates next to fits.

All formulas are closed-form; the mutually referencing displays are evaluated
in the order c2 -> c1 -> lambda_low -> beta. For the (1+|x|^2)^(p/2) Lyapunov
family, V(0)=1 and |grad V(0)|=0 are baked in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ConfigError, DriftModel, LyapunovSpec, eval_drift, eval_lyapunov

__all__ = [
    "NondegenerateAssumptions",
    "ContractionConstants",
    "DegenerateConstants",
    "nondegenerate_constants",
    "sublevel_l0_for_Vp",
    "degenerate_constants",
    "vp_hessian_bound",
    "vp_lyapunov_pair",
    "assumptions_for_model",
]


@dataclass(frozen=True)
class NondegenerateAssumptions:
    K1: float          # one-sided Lipschitz constant of the locally Lipschitz part
    K2: float          # Hölder constant of the bounded part (0 if absent)
    alpha: float       # Hölder exponent, in (0, 1)
    lambda_V: float    # Lyapunov drift rate
    C_V: float         # Lyapunov drift offset
    L_V: float         # Hessian growth constant
    eta: float         # Hessian growth exponent, in [0, 1)
    l0: float          # sublevel-set diameter bound + 1

    def __post_init__(self):
        if self.K2 < 0 or not 0 < self.alpha < 1:
            raise ConfigError("need K2 >= 0 and alpha in (0, 1)")
        if self.lambda_V <= 0 or self.C_V <= 0 or self.L_V <= 0:
            raise ConfigError("lambda_V, C_V, L_V must be positive")
        if not 0 <= self.eta < 1:
            raise ConfigError("eta must lie in [0, 1)")
        if self.l0 <= 0:
            raise ConfigError("l0 must be positive")


@dataclass(frozen=True)
class ContractionConstants:
    c1: float
    c2: float
    c3: float
    gamma: float
    l0: float
    lambda0: float
    C0: float
    C0_star: float


@dataclass(frozen=True)
class DegenerateConstants:
    gamma: float
    alpha0: float
    kappa0: float
    c1: float
    c2: float
    beta: float
    lambda_low: float
    C_star: float
    rate: float  # final contraction rate


def nondegenerate_constants(assume: NondegenerateAssumptions,
                            V0: float = 1.0, gradV0: float = 0.0) -> ContractionConstants:
    a = assume
    c2 = 2.0 * (a.K1 * a.l0 + a.K2 * a.l0 ** a.alpha)
    c1 = c2 * math.exp(-c2 * a.l0)
    c3 = c2 ** 2 * math.exp(-c2 * a.l0) / a.l0
    gamma = min(
        1.0,
        c3 / (4.0 * a.C_V * (c1 + c2)),
        (c3 / (24.0 * a.L_V * (1.0 + a.L_V ** a.eta) * (c1 + c2) * (1.0 + c2 / c1)))
        ** (1.0 / (1.0 - a.eta)),
    )
    lambda0 = min(c3 / (4.0 * (c1 + c2)), gamma * a.lambda_V / (1.0 + 2.0 * gamma))
    C0 = 1.0 + a.l0 * (1.0 + c2 / c1) / gamma
    c_diamond = gamma * (1.0 + c1 * a.l0) * max(
        a.L_V * (1.0 + a.L_V ** a.eta) * (1.0 + 2.0 * a.L_V) * (1.0 + V0 ** a.eta),
        gradV0,
    )
    C0_star = 2.0 * max(2.0 * c2, c_diamond) / (c1 * gamma)
    out = ContractionConstants(c1=c1, c2=c2, c3=c3, gamma=gamma, l0=a.l0,
                               lambda0=lambda0, C0=C0, C0_star=C0_star)
    for name, val in vars(out).items():
        if not val > 0:
            raise ArithmeticError(f"nonpositive constant {name}={val}; formula misuse")
    return out


def sublevel_l0_for_Vp(p: float, C_V: float, lambda_V: float) -> float:
    """1 + diameter bound of the sublevel set {V(x)+V(y) <= 4 C_V / lambda_V}
    for V(x) = (1+|x|^2)^(p/2)."""
    level = 4.0 * C_V / lambda_V
    if level < 2.0 or p <= 0:
        return 1.0
    radius = max(level - 1.0, 1.0) ** (2.0 / p) - 1.0
    return 1.0 + 2.0 * math.sqrt(max(radius, 0.0))


def degenerate_constants(a: float, b: float, L: float,
                         lambda_V_star: float, C_V_star: float,
                         L_V_star: float, L_V_diamond: float,
                         eta: float, ell0: float) -> DegenerateConstants:
    """Degenerate (position-velocity) counterpart; L is the gradient-Lipschitz
    constant of the potential. L_V_diamond enters only the proofs, accepted for
    interface completeness."""
    if a < 0 or b <= 0 or L <= 0:
        raise ConfigError("need a >= 0, b > 0, L > 0")
    if ell0 <= 0 or not 0 <= eta < 1:
        raise ConfigError("need ell0 > 0 and eta in [0, 1)")
    gamma = b / (a + b)
    alpha0 = 2.0 + (1.0 / b + 1.0 / (a + b)) * L
    kappa0 = 2.0 * ((1.0 + alpha0) / gamma + L / b)
    c2 = (2.0 / gamma ** 2) * ell0 * ((alpha0 + 1.0) * b / gamma + L)
    c1 = c2 * math.exp(-c2 * ell0)
    lambda_low = min(
        c1 * c2 * gamma ** 2 / (2.0 * ell0 * (alpha0 * kappa0 + 1.0) * (c1 + c2)),
        b / (4.0 * (alpha0 + 1.0 / kappa0)),
    )
    beta = min(
        1.0,
        b / (8.0 * C_V_star * (alpha0 + 1.0 / kappa0)),
        c1 * c2 * gamma ** 2 / (4.0 * C_V_star * ell0 * (1.0 + alpha0 * kappa0) * (c1 + c2)),
        (lambda_low / (4.0 * L_V_star * (1.0 + c2 / c1) * max(1.0, (1.0 + gamma) / alpha0)))
        ** (1.0 / (1.0 - eta)),
    )
    C_star = 4.0 * ((c1 + c2) * ((alpha0 + 1.0) * b / gamma + L)
                    + c1 * c2 * gamma ** 2 / ell0)
    rate = min(0.5 * lambda_low,
               2.0 * beta * C_V_star / (1.0 + 4.0 * beta * C_V_star / lambda_V_star))
    out = DegenerateConstants(gamma=gamma, alpha0=alpha0, kappa0=kappa0, c1=c1, c2=c2,
                              beta=beta, lambda_low=lambda_low, C_star=C_star, rate=rate)
    for name, val in vars(out).items():
        if not val > 0:
            raise ArithmeticError(f"nonpositive constant {name}={val}; formula misuse")
    return out


# ---- Lyapunov data for the (1+|x|^2)^(p/2) family ----

def vp_hessian_bound(p: float) -> tuple:
    """(L_V, eta) with operator norm of the Hessian <= L_V (1 + V^eta)."""
    if p <= 0:
        raise ConfigError("p must be positive")
    if p <= 2:
        return p, 0.0
    return 0.5 * p * max(1.0, p - 1.0), (p - 2.0) / p


def vp_lyapunov_pair(model: DriftModel, p: float, radius: float = 8.0,
                     n_grid: int = 4001, seed: int = 0) -> tuple:
    """(lambda_V, C_V) with generator(V_p) <= -lambda_V V_p + C_V, checked on a
    grid. lambda_V = p lambda*/2; C_V is the grid maximum of the residual with
    a 10% safety margin."""
    lam_V = 0.5 * p * model.lambda_star
    d = model.dim
    rng = np.random.Generator(np.random.Philox(key=np.array([seed, 0xC0117], dtype=np.uint64)))
    pts = [rng.uniform(-radius, radius, size=(n_grid, d))]
    ray = np.zeros((n_grid, d))
    ray[:, 0] = np.linspace(-radius, radius, n_grid)
    pts.append(ray)
    x = np.concatenate(pts, axis=0)
    sq = np.sum(x * x, axis=-1)
    base = 1.0 + sq
    V = base ** (0.5 * p)
    gradV_coef = p * base ** (0.5 * p - 1.0)          # gradV = coef * x
    lapV = p * base ** (0.5 * p - 1.0) * d + p * (p - 2.0) * base ** (0.5 * p - 2.0) * sq
    drift = eval_drift(model, x)
    gen = gradV_coef * np.sum(x * drift, axis=-1) + 0.5 * lapV
    resid = gen + lam_V * V
    C_V = 1.1 * float(np.max(resid))
    if C_V <= 0:
        C_V = 1.0
    return lam_V, C_V


def assumptions_for_model(model: DriftModel, p: float,
                          K1: float = None) -> NondegenerateAssumptions:
    """Bundle the contraction inputs for a built-in drift with the V_p Lyapunov
    function. K1 defaults to known values for built-ins, else a grid estimate."""
    if K1 is None:
        if model.name == "double_well":
            K1 = 1.0
        elif model.name == "quadratic":
            K1 = -model.lambda_star
        else:
            K1 = _grid_one_sided(model)
    lam_V, C_V = vp_lyapunov_pair(model, p)
    L_V, eta = vp_hessian_bound(p)
    l0 = sublevel_l0_for_Vp(p, C_V, lam_V)
    alpha = model.alpha if 0 < model.alpha < 1 else 0.5
    return NondegenerateAssumptions(K1=K1, K2=model.K2, alpha=alpha,
                                    lambda_V=lam_V, C_V=C_V, L_V=L_V, eta=eta, l0=l0)


def _grid_one_sided(model: DriftModel, radius: float = 8.0, n: int = 4000,
                    seed: int = 1) -> float:
    rng = np.random.Generator(np.random.Philox(key=np.array([seed, 0x05D], dtype=np.uint64)))
    xs = rng.uniform(-radius, radius, size=(n, model.dim))
    ys = rng.uniform(-radius, radius, size=(n, model.dim))
    diff = xs - ys
    num = np.sum(diff * (model.b1(xs) - model.b1(ys)), axis=-1)
    den = np.sum(diff * diff, axis=-1)
    keep = den > 1e-12
    return float(np.max(num[keep] / den[keep]))
