import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from sdelab.metrics import (DistanceSpec, concave_g, coupled_rho_mean, fit_exp_rate,
                            fit_loglog_slope, moment_estimate, rho_g_gamma_V, rho_V,
                            rho_V_kinetic, w1_empirical_1d, w1_exact_matching,
                            w1_sliced)
from sdelab.model import ConfigError, LyapunovSpec, kinetic_double_well
from sdelab import simkit

VP1 = LyapunovSpec(kind="vp", p=1.0)
VP0 = LyapunovSpec(kind="vp", p=0.0)


def test_rho_V_oracles():
    assert rho_V(np.array([1.0]), np.array([1.0]), VP1) == 0.0
    # x=0, y=2, p=1: min(1,2)=1, 1 + 1 + sqrt(5)
    assert rho_V(np.array([0.0]), np.array([2.0]), VP1) == pytest.approx(2.0 + np.sqrt(5.0))
    assert rho_V(np.array([0.0]), np.array([0.5]), VP0) == pytest.approx(1.5)


def test_rho_V_kinetic_oracles():
    km = kinetic_double_well(1)
    lam = LyapunovSpec(kind="vlambda", lam=0.2, kinetic=km)
    a = np.array([0.0, 0.0])
    b = np.array([0.3, 0.4])
    from sdelab.model import eval_lyapunov
    expect = 0.7 * (1.0 + eval_lyapunov(lam, a) + eval_lyapunov(lam, b))
    assert rho_V_kinetic(a, b, lam) == pytest.approx(expect)
    # components 5 apart: the 1 ^ r factor saturates at 1
    far = np.array([5.0, 0.0])
    v = rho_V_kinetic(a, far, lam)
    from sdelab.model import eval_lyapunov as ev
    assert v == pytest.approx(1.0 + ev(lam, a) + ev(lam, far))


def test_concave_g_values():
    assert concave_g(0.0, 1.0, 2.0, 1.0) == 0.0
    assert concave_g(1.0, 1.0, 2.0, 1.0) == pytest.approx(2.0 - np.exp(-2.0))
    assert concave_g(10.0, 1.0, 2.0, 1.0) == pytest.approx(2.0 - np.exp(-2.0))  # plateau


@given(st.floats(0, 50), st.floats(0, 50), st.floats(0.01, 3.0),
       st.floats(0.01, 3.0), st.floats(0.5, 5.0))
@settings(max_examples=300, deadline=None)
def test_concave_g_midpoint_concavity(r, s, c1, c2, l0):
    mid = concave_g(0.5 * (r + s), c1, c2, l0)
    assert mid >= 0.5 * (concave_g(r, c1, c2, l0) + concave_g(s, c1, c2, l0)) - 1e-12


@given(hnp.arrays(np.float64, (2, 2), elements=st.floats(-20, 20)))
@settings(max_examples=300, deadline=None)
def test_rho_g_sandwich(xy):
    # c1 gamma rho_V <= rho_{g,gamma,V} <= l0 (c1+c2) rho_V, for l0 >= 1
    c1, c2, l0, gamma = 0.3, 1.7, 2.5, 0.4
    spec = DistanceSpec(lyapunov=LyapunovSpec(kind="vp", p=2.0),
                        c1=c1, c2=c2, l0=l0, gamma_weight=gamma)
    x, y = xy
    mid = rho_g_gamma_V(x, y, spec)
    base = rho_V(x, y, spec.lyapunov)
    assert c1 * gamma * base <= mid + 1e-12
    assert mid <= l0 * (c1 + c2) * base + 1e-12


def test_rho_g_requires_transform():
    with pytest.raises(ConfigError):
        rho_g_gamma_V(np.zeros(1), np.ones(1), DistanceSpec(lyapunov=VP1))
    with pytest.raises(ConfigError):
        DistanceSpec(lyapunov=VP1, c1=1.0, c2=None, l0=1.0, gamma_weight=1.0)


def test_w1_1d_oracles():
    assert w1_empirical_1d([0.0, 1.0], [1.0, 2.0]) == pytest.approx(1.0)
    assert w1_empirical_1d([3.0], [1.0]) == pytest.approx(2.0)
    assert w1_empirical_1d([1, 2, 3], [3, 1, 2]) == 0.0
    with pytest.raises(ConfigError):
        w1_empirical_1d([1.0], [1.0, 2.0])
    with pytest.raises(ConfigError):
        w1_empirical_1d([], [])


@given(st.lists(st.floats(-100, 100), min_size=1, max_size=6),
       st.data())
@settings(max_examples=200, deadline=None)
def test_w1_1d_matches_permutation_oracle(a, data):
    b = data.draw(st.lists(st.floats(-100, 100), min_size=len(a), max_size=len(a)))
    got = w1_empirical_1d(a, b)
    brute = min(np.mean([abs(x - y) for x, y in zip(a, perm)])
                for perm in itertools.permutations(b))
    assert abs(got - brute) <= 1e-9


def test_w1_exact_matching_agrees_in_1d():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((40, 1))
    b = rng.standard_normal((40, 1)) + 0.5
    assert w1_exact_matching(a, b) == pytest.approx(w1_empirical_1d(a, b), abs=1e-12)
    with pytest.raises(ConfigError):
        w1_exact_matching(np.zeros((600, 1)), np.zeros((600, 1)))


def test_w1_sliced():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((64, 1))
    b = rng.standard_normal((64, 1))
    assert w1_sliced(a, b) == pytest.approx(w1_empirical_1d(a, b))
    # point masses: average |<theta, u-v>| <= |u-v|
    u, v = np.array([[1.0, 2.0]] * 8), np.array([[0.0, 0.0]] * 8)
    stream = simkit.NoiseStream(0, 0, "Slicing")
    val = w1_sliced(u, v, n_proj=32, rng=stream)
    assert 0 < val <= np.sqrt(5.0) + 1e-12
    # deterministic given the stream position
    val2 = w1_sliced(u, v, n_proj=32, rng=simkit.NoiseStream(0, 0, "Slicing"))
    assert val == val2
    with pytest.raises(ConfigError):
        w1_sliced(u, v, n_proj=32)  # d>1 needs an rng


def test_w1_triangle_sanity():
    rng = np.random.default_rng(7)
    a = rng.standard_normal(500)
    b = rng.standard_normal(500) + 1.0
    c = rng.standard_normal(500) + 2.0
    se = 4.0 / np.sqrt(500)
    assert w1_empirical_1d(a, c) <= w1_empirical_1d(a, b) + w1_empirical_1d(b, c) + 4 * se


def test_coupled_rho_mean():
    arr = np.array([[3.0, 5.0], [3.0, 5.0]])
    mean, se = coupled_rho_mean(arr)
    assert np.allclose(mean, 4.0)
    assert np.allclose(se, np.std([3.0, 5.0], ddof=1) / np.sqrt(2))
    mean, se = coupled_rho_mean(np.zeros((4, 3)))
    assert np.allclose(mean, 0.0)
    # nan-marked diverged pairs are dropped per time point
    mean, _ = coupled_rho_mean(np.array([[1.0, np.nan], [2.0, 4.0]]))
    assert np.allclose(mean, [1.0, 3.0])
    with pytest.raises(ConfigError):
        coupled_rho_mean(np.empty((0, 0)))
    with pytest.raises(ConfigError):
        coupled_rho_mean(np.array([[np.nan]]))


def test_moment_estimate():
    assert moment_estimate([0.0, 0.0], 2.0) == 0.0
    assert moment_estimate([1.0, 1.0, 1.0], 4.0) == 1.0
    assert moment_estimate([0.0, 2.0], 2.0) == 2.0
    assert moment_estimate(np.array([[3.0, 4.0]]), 1.0) == 5.0
    with pytest.raises(ConfigError):
        moment_estimate([1.0], 0.0)
    with pytest.raises(ConfigError):
        moment_estimate([], 2.0)


def test_fit_loglog_exact_power_laws():
    ds = [2.0 ** -k for k in range(4, 9)]
    fit = fit_loglog_slope([(d, d ** 0.5) for d in ds])
    assert fit.slope == pytest.approx(0.5, abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
    fit = fit_loglog_slope([(d, 2.0 * d) for d in ds])
    assert fit.slope == pytest.approx(1.0, abs=1e-12)
    assert fit.intercept == pytest.approx(np.log(2.0), abs=1e-12)
    with pytest.raises(ConfigError):
        fit_loglog_slope([(0.1, 1.0), (0.05, 0.5)])
    with pytest.raises(ConfigError):
        fit_loglog_slope([(0.1, 1.0), (0.05, 0.5), (0.025, 0.0)])


def test_fit_exp_rate_synthetic():
    t = np.linspace(0, 5, 40)
    out = fit_exp_rate(t, 3.0 * np.exp(-0.7 * t))
    assert out["rate"] == pytest.approx(0.7, abs=1e-10)
    assert out["ci_low"] - 1e-9 <= 0.7 <= out["ci_high"] + 1e-9
    assert out["r_squared"] == pytest.approx(1.0, abs=1e-10)
    with pytest.raises(ConfigError):
        fit_exp_rate([0, 1, 2], [1.0, -1.0, -2.0])
