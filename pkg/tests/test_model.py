import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from sdelab.model import (ConfigError, DomainError, LyapunovSpec, check_assumptions,
                          default_grid, double_well_grad, double_well_model,
                          eval_drift, eval_lyapunov, kinetic_double_well,
                          kinetic_quadratic, polynomial_model, quadratic_model,
                          radial_holder)

finite_states = hnp.arrays(np.float64, st.integers(1, 4).map(lambda d: (d,)),
                           elements=st.floats(-50, 50))


def test_double_well_drift_values():
    m = double_well_model(1)
    assert eval_drift(m, [0.0]) == pytest.approx(0.0)
    assert eval_drift(m, [2.0])[0] == pytest.approx(-6.0)
    assert eval_drift(m, [-2.0])[0] == pytest.approx(6.0)


def test_drift_batch_broadcast():
    m = double_well_model(2)
    x = np.array([[0.0, 0.0], [1.0, 1.0]])
    out = eval_drift(m, x)
    assert out.shape == (2, 2)
    assert np.allclose(out[1], 1.0 - 2.0)  # x - |x|^2 x at (1,1)


def test_drift_rejects_nonfinite_and_wrong_dim():
    m = double_well_model(1)
    with pytest.raises(DomainError):
        eval_drift(m, [np.inf])
    with pytest.raises(DomainError):
        eval_drift(m, [1.0, 2.0])


@given(finite_states)
@settings(max_examples=100, deadline=None)
def test_drift_decomposition_identity(x):
    # b = b0 + bbar1 - lambda* x exactly
    m = double_well_model(x.shape[-1])
    lhs = eval_drift(m, x)
    rhs = m.b0(x) + m.bbar1(x) - m.lambda_star * x
    # identity up to one float rounding in the add/subtract reassociation
    assert np.allclose(lhs, rhs, rtol=1e-14, atol=1e-14)


def test_double_well_grad_values():
    assert np.allclose(double_well_grad(np.array([1.0, 0.0])), 0.0)
    assert np.allclose(double_well_grad(np.array([0.0])), 0.0)
    assert double_well_grad(np.array([2.0]))[0] == pytest.approx(6.0)
    with pytest.raises(DomainError):
        double_well_grad(np.array([np.nan]))


def test_gradU_is_gradient_of_U():
    km = kinetic_double_well(3)
    rng = np.random.default_rng(0)
    pts = rng.uniform(-3, 3, size=(1000, 3))
    h = 1e-5
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        fd = (km.U(pts + e) - km.U(pts - e)) / (2 * h)
        g = km.gradU(pts)[:, j]
        assert np.max(np.abs(fd - g) / np.maximum(1.0, np.abs(g))) < 1e-6


def test_lyapunov_vp_values():
    assert eval_lyapunov(LyapunovSpec(kind="vp", p=2.0), np.array([0.0])) == pytest.approx(1.0)
    assert eval_lyapunov(LyapunovSpec(kind="vp", p=1.0), np.array([2.0])) == pytest.approx(np.sqrt(5.0))


def test_lyapunov_vlambda_value_and_range():
    km = kinetic_double_well(1)
    spec = LyapunovSpec(kind="vlambda", lam=0.2, kinetic=km)
    assert eval_lyapunov(spec, np.array([0.0, 0.0])) == pytest.approx(1.25)
    with pytest.raises(ConfigError):
        LyapunovSpec(kind="vlambda", lam=0.3, kinetic=km)  # above 1/4
    with pytest.raises(ConfigError):
        LyapunovSpec(kind="vlambda", lam=0.0, kinetic=km)


@given(hnp.arrays(np.float64, (2,), elements=st.floats(-20, 20)))
@settings(max_examples=200, deadline=None)
def test_vlambda_at_least_one(state):
    km = kinetic_double_well(1)
    spec = LyapunovSpec(kind="vlambda", lam=0.24, kinetic=km)
    assert eval_lyapunov(spec, state) >= 1.0 - 1e-12


@given(finite_states)
@settings(max_examples=100, deadline=None)
def test_vp_at_least_one(x):
    assert eval_lyapunov(LyapunovSpec(kind="vp", p=3.0), x) >= 1.0


def test_builder_validation():
    with pytest.raises(ConfigError):
        quadratic_model(1, rate=0.0)
    with pytest.raises(ConfigError):
        double_well_model(0)
    with pytest.raises(ConfigError):
        radial_holder(1.0, 1.0)
    with pytest.raises(ConfigError):
        polynomial_model(1, [], 1.0, 1.0, 1.0, 0.0)


@given(st.floats(0.1, 5.0), st.floats(0.05, 0.95),
       hnp.arrays(np.float64, (2, 3), elements=st.floats(-30, 30)))
@settings(max_examples=150, deadline=None)
def test_radial_holder_bound(scale, alpha, xy):
    # |b0(x)-b0(y)| <= scale 2^{1-alpha} |x-y|^alpha
    b0 = radial_holder(scale, alpha)
    x, y = xy
    lhs = np.linalg.norm(b0(x) - b0(y))
    rhs = scale * 2.0 ** (1.0 - alpha) * np.linalg.norm(x - y) ** alpha
    assert lhs <= rhs + 1e-9


def test_check_assumptions_double_well_satisfied():
    m = double_well_model(1)
    rep = check_assumptions(m, default_grid(1, seed=0), K1=1.0)
    assert rep["satisfied"]
    assert rep["one_sided_linear"] <= 1e-9
    assert rep["one_sided_lipschitz"] <= 1e-9


def test_check_assumptions_detects_violation():
    # b1(x)=x with lambda*=1, C*=1 fails the one-sided linear bound
    bad = polynomial_model(1, [1.0], lambda_star=1.0, C_star=1.0, L0=1.0, ell0=0.0)
    rep = check_assumptions(bad, default_grid(1, seed=0))
    assert not rep["satisfied"]
    assert rep["one_sided_linear"] > 0


def test_check_assumptions_empty_grid():
    m = double_well_model(1)
    with pytest.raises(ConfigError):
        check_assumptions(m, (np.empty((0, 1)), (np.empty((0, 1)), np.empty((0, 1)))))


def test_polynomial_model_matches_double_well():
    poly = polynomial_model(1, [1.0, -1.0], lambda_star=1.0, C_star=1.0, L0=4.0, ell0=2.0)
    dw = double_well_model(1)
    x = np.linspace(-3, 3, 41)[:, None]
    assert np.allclose(poly.b1(x), dw.b1(x))


def test_kinetic_builders():
    km = kinetic_quadratic(2)
    assert km.U_min == 0.0
    assert np.allclose(km.gradU(np.array([1.0, -2.0])), [1.0, -2.0])
    with pytest.raises(ConfigError):
        kinetic_double_well(1, a=0.0, b=0.0)
