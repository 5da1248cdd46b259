"""Drift models, potentials, Lyapunov functions, and numerical assumption checks.

A drift is stored decomposed, b = b0 + b1: b0 a bounded Hölder part, b1 the
locally Lipschitz part satisfying a one-sided linear bound
<x, b1(x)> <= -lambda_star |x|^2 + C_star. The shifted part
bbar1(x) = b1(x) + lambda_star * x is what the modified schemes truncate or tame.

All evaluation functions are pure and broadcast over a leading batch axis:
states are arrays of shape (d,) or (n, d).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "ConfigError",
    "DomainError",
    "DriftModel",
    "KineticModel",
    "LyapunovSpec",
    "eval_drift",
    "double_well_grad",
    "eval_lyapunov",
    "check_assumptions",
    "default_grid",
    "double_well_model",
    "quadratic_model",
    "polynomial_model",
    "radial_holder",
    "kinetic_double_well",
    "kinetic_quadratic",
]


class ConfigError(ValueError):
    """Invalid configuration or parameter range."""


class DomainError(ValueError):
    """Evaluation requested outside the function's domain (e.g. non-finite input)."""


def _sqnorm(x: np.ndarray) -> np.ndarray:
    return np.sum(np.square(x), axis=-1, keepdims=True)


def _zero_drift(x: np.ndarray) -> np.ndarray:
    return np.zeros_like(x)


@dataclass(frozen=True)
class DriftModel:
    dim: int
    b0: Callable[[np.ndarray], np.ndarray]
    b1: Callable[[np.ndarray], np.ndarray]
    lambda_star: float
    C_star: float
    L0: float
    ell0: float
    K2: float
    alpha: float
    name: str = "custom"

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigError("dim must be >= 1")
        if self.lambda_star <= 0:
            raise ConfigError("lambda_star must be positive")
        if self.C_star < 0:
            raise ConfigError("C_star must be nonnegative")
        if self.L0 <= 0 or self.ell0 < 0:
            raise ConfigError("need L0 > 0 and ell0 >= 0")
        if self.K2 < 0:
            raise ConfigError("K2 must be nonnegative")
        if not 0 < self.alpha <= 1:
            raise ConfigError("alpha must lie in (0, 1]")

    def bbar1(self, x: np.ndarray) -> np.ndarray:
        return self.b1(x) + self.lambda_star * x


@dataclass(frozen=True)
class KineticModel:
    dim: int
    a: float
    b: float
    gradU: Callable[[np.ndarray], np.ndarray]
    U: Callable[[np.ndarray], np.ndarray]
    U_min: float
    L_U: float
    lambda1: float
    lambda2: float
    C_star_kin: float
    name: str = "custom"

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigError("dim must be >= 1")
        if self.b <= 0 or self.a < 0:
            raise ConfigError("need b > 0 and a >= 0")
        if self.L_U <= 0:
            raise ConfigError("L_U must be positive")


def eval_drift(model: DriftModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.dim:
        raise DomainError(f"state has dimension {x.shape[-1]}, model expects {model.dim}")
    if not np.all(np.isfinite(x)):
        raise DomainError("drift evaluated at non-finite state")
    return model.b0(x) + model.b1(x)


def double_well_grad(x: np.ndarray) -> np.ndarray:
    """Gradient of the double-well potential U(x) = |x|^4/4 - |x|^2/2."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("non-finite input")
    return (_sqnorm(x) - 1.0) * x


# ---- Built-in drift models ----

def double_well_model(dim: int = 1) -> DriftModel:
    # b1(x) = x - |x|^2 x = -grad U; <x,b1(x)> = |x|^2 - |x|^4 <= -|x|^2 + 1
    return DriftModel(
        dim=dim,
        b0=_zero_drift,
        b1=lambda x: x - _sqnorm(x) * x,
        lambda_star=1.0,
        C_star=1.0,
        L0=4.0,
        ell0=2.0,
        K2=0.0,
        alpha=1.0,
        name="double_well",
    )


def quadratic_model(dim: int = 1, rate: float = 1.0) -> DriftModel:
    if rate <= 0:
        raise ConfigError("rate must be positive")
    return DriftModel(
        dim=dim,
        b0=_zero_drift,
        b1=lambda x: -rate * x,
        lambda_star=rate,
        C_star=0.0,
        L0=rate,
        ell0=0.0,
        K2=0.0,
        alpha=1.0,
        name="quadratic",
    )


def radial_holder(scale: float, alpha: float) -> Callable[[np.ndarray], np.ndarray]:
    """Bounded-exponent radial map scale * |x|^(alpha-1) x (value 0 at the origin).

    Hölder with constant <= scale * 2^(1-alpha); callers should record that
    constant as K2.
    """
    if not 0 < alpha < 1:
        raise ConfigError("holder exponent must lie in (0, 1)")

    def b0(x):
        r = np.sqrt(_sqnorm(x))
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(r > 0, scale * r ** (alpha - 1.0), 0.0) * x
        return out

    return b0


def polynomial_model(dim: int, coeffs, lambda_star: float, C_star: float,
                     L0: float, ell0: float,
                     holder: Optional[tuple] = None) -> DriftModel:
    """Radial polynomial drift b1(x) = p(|x|^2) x with p given by coeffs (low order first).

    lambda_star/C_star/L0/ell0 are supplied by the caller and checked only by
    check_assumptions (grid falsification).
    """
    c = np.asarray(coeffs, dtype=float)
    if c.ndim != 1 or c.size == 0:
        raise ConfigError("coeffs must be a nonempty 1-D array")

    def b1(x):
        s = _sqnorm(x)
        return np.polynomial.polynomial.polyval(s[..., 0], c)[..., None] * x

    if holder is None:
        b0, K2, alpha = _zero_drift, 0.0, 1.0
    else:
        scale, alpha = holder
        b0 = radial_holder(scale, alpha)
        K2 = scale * 2.0 ** (1.0 - alpha)
    return DriftModel(dim=dim, b0=b0, b1=b1, lambda_star=lambda_star, C_star=C_star,
                      L0=L0, ell0=ell0, K2=K2, alpha=alpha, name="polynomial")


# ---- Built-in kinetic models ----

def kinetic_double_well(dim: int = 1, a: float = 0.0, b: float = 1.0) -> KineticModel:
    # <x, gradU(x)> = |x|^4 - |x|^2 >= |x|^2 + 2 U(x) - 1/2 since (|x|^2-1)^2 >= 0
    # L_U is nominal: valid on |x| <= 2 (gradU is not globally Lipschitz)
    return KineticModel(
        dim=dim, a=a, b=b,
        gradU=double_well_grad,
        U=lambda x: 0.25 * _sqnorm(x)[..., 0] ** 2 - 0.5 * _sqnorm(x)[..., 0],
        U_min=-0.25,
        L_U=11.0,
        lambda1=1.0,
        lambda2=2.0,
        C_star_kin=0.5,
        name="kinetic_double_well",
    )


def kinetic_quadratic(dim: int = 1, a: float = 0.0, b: float = 1.0) -> KineticModel:
    return KineticModel(
        dim=dim, a=a, b=b,
        gradU=lambda x: np.asarray(x, dtype=float),
        U=lambda x: 0.5 * _sqnorm(x)[..., 0],
        U_min=0.0,
        L_U=1.0,
        lambda1=0.5,
        lambda2=1.0,
        C_star_kin=0.0,
        name="kinetic_quadratic",
    )


# ---- Lyapunov functions ----

@dataclass(frozen=True)
class LyapunovSpec:
    """Either V_p(x) = (1+|x|^2)^(p/2) on plain states, or the kinetic
    V_lambda(x, y) = 1 + U(x) - U_min + (|x+y|^2 + |y|^2 - lambda |x|^2)/4
    on stacked (position, velocity) states of shape (..., 2d)."""

    kind: str  # "vp" | "vlambda"
    p: float = 0.0
    lam: float = 0.0
    kinetic: Optional[KineticModel] = None

    def __post_init__(self):
        if self.kind == "vp":
            if self.p < 0:
                raise ConfigError("p must be nonnegative")
        elif self.kind == "vlambda":
            if self.kinetic is None:
                raise ConfigError("vlambda needs the kinetic model (for U and U_min)")
            hi = min(2.0 * math.sqrt(self.kinetic.lambda1), 0.25)
            if not 0 < self.lam < hi:
                raise ConfigError(
                    f"lambda={self.lam} outside admissible range (0, {hi:.6g})")
        else:
            raise ConfigError(f"unknown Lyapunov kind {self.kind!r}")


def eval_lyapunov(spec: LyapunovSpec, state: np.ndarray) -> np.ndarray:
    state = np.asarray(state, dtype=float)
    if spec.kind == "vp":
        return (1.0 + _sqnorm(state)[..., 0]) ** (0.5 * spec.p)
    km = spec.kinetic
    if state.shape[-1] != 2 * km.dim:
        raise DomainError("vlambda expects stacked (position, velocity) states")
    x, y = state[..., :km.dim], state[..., km.dim:]
    quad = _sqnorm(x + y)[..., 0] + _sqnorm(y)[..., 0] - spec.lam * _sqnorm(x)[..., 0]
    return 1.0 + km.U(x) - km.U_min + 0.25 * quad


# ---- Assumption checking (grid falsification, never a proof) ----

def default_grid(dim: int, seed: int = 0, n_points: int = 10_000, n_pairs: int = 1000,
                 radius: float = 5.0):
    """Uniform points on [-R, R]^d plus random pairs, as (points, (xs, ys))."""
    rng = np.random.Generator(np.random.Philox(key=np.array([seed, 0xA55E55], dtype=np.uint64)))
    points = rng.uniform(-radius, radius, size=(n_points, dim))
    xs = rng.uniform(-radius, radius, size=(n_pairs, dim))
    ys = rng.uniform(-radius, radius, size=(n_pairs, dim))
    return points, (xs, ys)


def check_assumptions(model: DriftModel, sample_grid, K1: Optional[float] = None) -> dict:
    """Max observed violation margins over the grid; margin <= 0 means the
    inequality held at every sampled point/pair."""
    points, (xs, ys) = sample_grid
    points = np.asarray(points, dtype=float)
    xs, ys = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
    if points.size == 0 or xs.size == 0:
        raise ConfigError("empty sample grid")

    report = {}
    b1x, b1y = model.b1(xs), model.b1(ys)
    dxy = np.linalg.norm(xs - ys, axis=-1)

    # one-sided linear bound: <x, b1(x)> <= -lambda* |x|^2 + C*
    b1p = model.b1(points)
    inner = np.sum(points * b1p, axis=-1)
    sq = np.sum(points * points, axis=-1)
    report["one_sided_linear"] = float(np.max(inner + model.lambda_star * sq - model.C_star))

    # polynomial Lipschitz: |b1(x)-b1(y)| <= L0 (1+|x|^l0+|y|^l0)|x-y|
    rx = np.linalg.norm(xs, axis=-1)
    ry = np.linalg.norm(ys, axis=-1)
    bound = model.L0 * (1.0 + rx ** model.ell0 + ry ** model.ell0) * dxy
    report["polynomial_lipschitz"] = float(np.max(np.linalg.norm(b1x - b1y, axis=-1) - bound))

    # Hölder part: |b0(x)-b0(y)| <= K2 |x-y|^alpha
    b0x, b0y = model.b0(xs), model.b0(ys)
    report["holder"] = float(np.max(
        np.linalg.norm(b0x - b0y, axis=-1) - model.K2 * dxy ** model.alpha))

    if K1 is not None:
        inner_pair = np.sum((xs - ys) * (b1x - b1y), axis=-1)
        report["one_sided_lipschitz"] = float(np.max(inner_pair - K1 * dxy ** 2))

    report["satisfied"] = all(v <= 1e-9 for k, v in report.items() if k != "satisfied")
    return report
