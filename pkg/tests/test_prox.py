import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize, minimize_scalar

from proxtv.prox import (
    HuberParams,
    HuberProx,
    ObstacleProx,
    huber_gradient,
    huber_newton_derivative,
    huber_value,
    jacobian_algebra,
    prox_huber,
    prox_huber_conjugate,
    prox_newton_derivative,
)

PARAMS = [HuberParams(0.1, 1.0), HuberParams(1.0, 0.25), HuberParams(1e-3, 5.0), HuberParams(2.0, 2.0)]
vec = st.tuples(st.floats(-20, 20), st.floats(-20, 20)).map(np.array)


def _sample(seed=0, n=200, scale=4.0):
    return scale * np.random.default_rng(seed).standard_normal((n, 2))


def test_params_validated():
    with pytest.raises(ValueError):
        HuberParams(0.0, 1.0)
    with pytest.raises(ValueError):
        HuberParams(1.0, -1.0)


def test_huber_value_and_gradient():
    eps = 0.5
    t = np.array([[0.3, 0.0], [0.0, 2.0], [0.0, 0.0]])
    assert np.allclose(huber_value(t, eps), [0.09, 1.75, 0.0])
    assert np.allclose(huber_gradient(t, eps), [[0.6, 0.0], [0.0, 1.0], [0.0, 0.0]])
    # continuity of value and slope at |t| = eps
    s = np.array([[eps, 0.0]])
    assert huber_value(s * (1 - 1e-12), eps) == pytest.approx(huber_value(s * (1 + 1e-12), eps))


@pytest.mark.parametrize("params", PARAMS)
def test_prox_matches_numerical_minimizer(params):
    for t in _sample(1, 25):
        obj = lambda s: params.gamma * huber_value(s, params.epsilon) + 0.5 * np.sum((s - t) ** 2)  # noqa: E731
        ref = minimize(obj, t, method="Nelder-Mead", options=dict(xatol=1e-11, fatol=1e-14, maxiter=4000)).x
        assert np.allclose(prox_huber(t, params), ref, atol=1e-6)


@pytest.mark.parametrize("params", PARAMS)
def test_prox_is_the_resolvent(params):
    t = _sample(2)
    p = prox_huber(t, params)
    assert np.allclose(p + params.gamma * huber_gradient(p, params.epsilon), t, atol=1e-12)


def test_prox_at_zero_and_on_branches():
    params = HuberParams(0.5, 1.0)
    assert not prox_huber(np.zeros(2), params).any()
    inner = np.array([0.9, 0.0])  # |t| < gamma + eps: pure scaling
    assert np.allclose(prox_huber(inner, params), inner / 3.0)
    outer = np.array([0.0, 4.0])  # shrink the length by gamma
    assert np.allclose(prox_huber(outer, params), [0.0, 3.0])


@pytest.mark.parametrize("params", PARAMS)
def test_moreau_decomposition(params):
    t = _sample(3)
    assert np.abs(HuberProx(params).moreau_residual(t, params.gamma)).max() < 1e-12


def test_conjugate_prox_matches_numerical_minimizer():
    sigma, eps = 0.7, 0.2
    for t in _sample(4, 15, 2.0):
        obj = lambda y: 0.5 * sigma * eps * y @ y + 0.5 * np.sum((y - t) ** 2)  # noqa: E731
        cons = [{"type": "ineq", "fun": lambda y: 1.0 - y @ y}]
        ref = minimize(obj, np.zeros(2), constraints=cons, method="SLSQP", options=dict(ftol=1e-14)).x
        assert np.allclose(prox_huber_conjugate(t, sigma, eps), ref, atol=1e-6)


@pytest.mark.parametrize("params", PARAMS)
def test_newton_derivative_matches_finite_differences(params):
    t = _sample(5)
    r = np.linalg.norm(t, axis=1)
    t = t[np.abs(r - (params.gamma + params.epsilon)) > 1e-3]
    J = prox_newton_derivative(t, params)
    h = 1e-7
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        fd = (prox_huber(t + e, params) - prox_huber(t - e, params)) / (2 * h)
        assert np.allclose(J[:, :, k], fd, atol=1e-6)


@pytest.mark.parametrize("params", PARAMS)
def test_newton_derivative_spectrum(params):
    J = prox_newton_derivative(_sample(6, scale=10.0), params)
    assert np.allclose(J, np.swapaxes(J, 1, 2))
    ev = np.linalg.eigvalsh(J)
    lo = params.epsilon / (params.epsilon + params.gamma)
    assert (ev >= lo - 1e-14).all() and (ev <= 1 + 1e-14).all()


def test_newton_derivative_uses_ball_branch_on_interface():
    params = HuberParams(0.5, 1.5)
    t = np.array([2.0, 0.0])
    assert np.allclose(prox_newton_derivative(t, params), 0.25 * np.eye(2))


@pytest.mark.parametrize("params", PARAMS)
def test_jacobian_algebra_closed_forms(params):
    t = np.vstack([_sample(7, scale=6.0), np.zeros((1, 2))])
    J = prox_newton_derivative(t, params)
    inv, inv_compl = jacobian_algebra(t, params)
    eye = np.eye(2)
    assert np.allclose(inv @ J, eye, atol=1e-12)
    assert np.allclose(inv_compl, inv @ (eye - J), atol=1e-12)
    # J^{-1}(1 - J) is positive semidefinite
    assert (np.linalg.eigvalsh(inv_compl) >= -1e-12).all()


def test_huber_newton_derivative_matches_finite_differences():
    eps = 0.3
    t = _sample(8, scale=1.0)
    t = t[np.abs(np.linalg.norm(t, axis=1) - eps) > 1e-3]
    H = huber_newton_derivative(t, eps)
    h = 1e-7
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        fd = (huber_gradient(t + e, eps) - huber_gradient(t - e, eps)) / (2 * h)
        assert np.allclose(H[:, :, k], fd, atol=1e-5)


@settings(max_examples=200, deadline=None)
@given(vec, vec, st.floats(1e-3, 10.0), st.floats(1e-3, 10.0))
def test_prox_is_firmly_nonexpansive(a, b, eps, gamma):
    params = HuberParams(eps, gamma)
    pa, pb = prox_huber(a, params), prox_huber(b, params)
    d = pa - pb
    assert d @ d <= d @ (a - b) + 1e-9 * (1 + abs(a - b).sum()) ** 2


@settings(max_examples=100, deadline=None)
@given(vec, st.floats(1e-3, 10.0), st.floats(1e-3, 10.0))
def test_prox_keeps_direction_and_shrinks(t, eps, gamma):
    p = prox_huber(t, HuberParams(eps, gamma))
    assert np.linalg.norm(p) <= np.linalg.norm(t) + 1e-12
    assert p[0] * t[1] - p[1] * t[0] == pytest.approx(0.0, abs=1e-9 * (1 + t @ t))


@pytest.mark.parametrize("f", [-1.0, 0.0, 2.5])
def test_obstacle_prox(f):
    op = ObstacleProx(f, gamma2=0.8)
    for s in np.linspace(-4, 4, 17):
        ref = minimize_scalar(lambda y: -0.8 * f * y + 0.5 * (y - s) ** 2, bounds=(0, 20), method="bounded",
                              options=dict(xatol=1e-10)).x
        assert op.prox(s) == pytest.approx(ref, abs=1e-6)
        assert op.newton_derivative(s) == float(s + 0.8 * f > 0)
    s = np.linspace(-3, 3, 13)
    assert np.abs(op.moreau_residual(s, 0.8)).max() < 1e-12
    assert np.isinf(op.value(-1.0)) and op.value(2.0) == -2.0 * f
