import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from cpdisorder.model import PRESETS, ModelParams
from cpdisorder.posterior import (apply_generator, direct_bayes_posterior, flow, flow_hit_time,
                                  flow_integral, jump_update)
from cpdisorder.simulate import sample_path

probs = st.floats(0.0, 1.0)
times = st.floats(0.0, 50.0)


def rk4(p, t, params, steps):
    drift = lambda q: (params.lam - params.rho * q) * (1 - q)
    h = t / steps
    for _ in range(steps):
        k1 = drift(p)
        k2 = drift(p + 0.5 * h * k1)
        k3 = drift(p + 0.5 * h * k2)
        k4 = drift(p + h * k3)
        p += h * (k1 + 2 * k2 + 2 * k3 + k4) / 6
    return p


def rk4_converged(p, t, params, tol=1e-12):
    steps, prev = 16, rk4(p, t, params, 16)
    while True:
        steps *= 2
        cur = rk4(p, t, params, steps)
        if abs(cur - prev) < tol:
            return cur
        prev = cur


def test_flow_against_rk4():
    p = PRESETS["case1"]
    assert flow(0.1, 1.0, p) == pytest.approx(rk4_converged(0.1, 1.0, p), abs=1e-10)
    assert flow(0.1, 1.0, p) == pytest.approx(0.13562, abs=5e-6)
    for name in ("case3", "case4"):
        for p0, t in ((0.0, 3.0), (0.4, 0.7), (0.9, 5.0)):
            assert flow(p0, t, PRESETS[name]) == pytest.approx(rk4_converged(p0, t, PRESETS[name]), abs=1e-10)


def test_flow_degenerate_rate():
    # lam == rho makes the odds grow linearly
    p = ModelParams(2.0, 1.0, 0.5, 1.0)
    assert p.lam - p.rho == 0.0
    assert flow(0.2, 2.0, p) == pytest.approx(rk4_converged(0.2, 2.0, p), abs=1e-10)
    assert flow_hit_time(0.2, 0.6, p) == pytest.approx((1.5 - 0.25) / 0.5)


def test_flow_fixed_points():
    p = PRESETS["case1"]
    assert flow(p.B_hat, 7.0, p) == pytest.approx(p.B_hat, abs=1e-15)
    assert flow(1.0, 3.0, p) == 1.0
    assert flow(1.0, 3.0, PRESETS["case4"]) == 1.0
    with pytest.raises(ValueError):
        flow(0.5, -1.0, p)
    with pytest.raises(ValueError):
        flow(1.5, 1.0, p)


@given(p0=probs, s=times, t=times, name=st.sampled_from(sorted(PRESETS)))
def test_flow_semigroup(p0, s, t, name):
    params = PRESETS[name]
    assert flow(flow(p0, s, params), t, params) == pytest.approx(flow(p0, s + t, params), abs=1e-12)


@given(p0=probs, s=times, t=times)
def test_flow_monotone(p0, s, t):
    lo, hi = min(s, t), max(s, t)
    up = PRESETS["case4"]
    assert flow(p0, lo, up) <= flow(p0, hi, up) + 1e-15
    p = PRESETS["case1"]
    a, b = flow(p0, lo, p), flow(p0, hi, p)
    if p0 < p.B_hat:
        assert a <= b + 1e-15 and b <= p.B_hat + 1e-15
    elif p0 > p.B_hat and p0 < 1:
        assert a >= b - 1e-15 and b >= p.B_hat - 1e-15


@given(p0=st.floats(0.0, 0.999), t=st.floats(0.0, 30.0), name=st.sampled_from(sorted(PRESETS)))
@settings(max_examples=40)
def test_flow_integral_against_quadrature(p0, t, name):
    params = PRESETS[name]
    ref = quad(lambda s: flow(p0, s, params), 0.0, t, epsabs=1e-12, epsrel=1e-12)[0]
    assert flow_integral(p0, t, params) == pytest.approx(ref, abs=1e-9)


def test_hit_time_examples():
    p = PRESETS["case1"]
    assert flow_hit_time(0.3, 0.2, p) == 0.0
    assert flow_hit_time(0.1, 0.3, p) is None
    q = PRESETS["case4"]
    t = flow_hit_time(0.1, 0.5, q)
    assert t is not None and abs(flow(0.1, t, q) - 0.5) <= 1e-12
    arr = flow_hit_time(np.array([0.1, 0.1]), np.array([0.15, 0.3]), p)
    assert np.isfinite(arr[0]) and np.isinf(arr[1])


@given(p0=st.floats(0.0, 0.98), B=st.floats(0.01, 0.99), name=st.sampled_from(sorted(PRESETS)))
def test_hit_time_inverts_flow(p0, B, name):
    params = PRESETS[name]
    t = flow_hit_time(p0, B, params)
    if p0 >= B:
        assert t == 0.0
    elif t is not None:
        assert flow(p0, t, params) == pytest.approx(B, abs=1e-9)
    else:
        assert params.B_hat is not None and B >= params.B_hat * (1 - 1e-12)


def test_jump_examples():
    p = PRESETS["case1"]
    assert jump_update(0.5, math.log(2), p) == pytest.approx(2 / 3)
    assert jump_update(0.0, 5.0, p) == 0.0 and jump_update(1.0, 5.0, p) == 1.0
    assert jump_update(0.3, 0.0, p) == pytest.approx(0.3)
    assert jump_update(0.3, 1e4, p) == 1.0  # no overflow
    with pytest.raises(ValueError):
        jump_update(0.3, -1.0, p)


@given(pi=probs, x=st.floats(0, 50), y=st.floats(0, 50))
def test_jump_monotone_and_in_range(pi, x, y):
    lo, hi = min(x, y), max(x, y)
    up, down = PRESETS["case1"], PRESETS["case4"]
    assert 0.0 <= jump_update(pi, hi, up) <= 1.0
    assert jump_update(pi, lo, up) <= jump_update(pi, hi, up)
    assert jump_update(pi, lo, down) >= jump_update(pi, hi, down)


@pytest.mark.parametrize("name", ["case1", "case4"])
def test_generator_calibration(name):
    params = PRESETS[name]
    for pi in np.arange(0.05, 0.96, 0.05):
        assert apply_generator(lambda q: q, pi, params) == pytest.approx(params.lam * (1 - pi), abs=1e-6)
        assert apply_generator(lambda q: 3.0 + 0 * q, pi, params) == pytest.approx(0.0, abs=1e-12)


def test_generator_stopping_payoff():
    for params in PRESETS.values():
        for pi in (0.1, 0.5, 0.9):
            val = apply_generator(lambda q: 1 - q, pi, params)
            assert val == pytest.approx(-params.lam * (1 - pi), abs=1e-8)
            if pi >= params.B_bar:
                assert val >= -params.c * pi - 1e-8


@given(a=st.floats(-3, 3), b=st.floats(-3, 3), pi=st.floats(0.05, 0.95))
@settings(max_examples=20, deadline=None)
def test_generator_linear(a, b, pi):
    params = PRESETS["case3"]
    f, g = (lambda q: q ** 2), (lambda q: np.sin(3 * q))
    lhs = apply_generator(lambda q: a * f(q) + b * g(q), pi, params)
    rhs = a * apply_generator(f, pi, params) + b * apply_generator(g, pi, params)
    assert lhs == pytest.approx(rhs, abs=1e-7)


def test_generator_jump_part_against_direct_quadrature():
    # jump integral over sizes x, written out without the change of variables
    for params in (PRESETS["case1"], PRESETS["case4"]):
        f = lambda q: np.exp(-2 * q) * np.cos(q)
        fp = lambda q: -np.exp(-2 * q) * (2 * np.cos(q) + np.sin(q))
        for pi in (0.1, 0.6):
            w = lambda x: pi * np.exp(-params.lambda1 * x) + (1 - pi) * np.exp(-params.lambda0 * x)
            jump = quad(lambda x: (f(jump_update(pi, x, params)) - f(pi)) * w(x), 0, np.inf,
                        epsabs=1e-12, limit=200)[0]
            drift = (params.lam - params.rho * pi) * (1 - pi) * fp(pi)
            assert apply_generator(f, pi, params, fprime=fp) == pytest.approx(drift + jump, abs=1e-9)


def test_direct_bayes_trivial():
    p = PRESETS["case1"]
    assert direct_bayes_posterior([], 0.0, 0.3, p) == 0.3
    for pi0 in (0.0, 0.2):
        for t in (0.5, 4.0, 30.0):
            assert direct_bayes_posterior([], t, pi0, p) == pytest.approx(flow(pi0, t, p), abs=1e-10)


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_recursion_matches_direct_bayes(name):
    params = PRESETS[name].replace(pi0=0.02)
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(15):
        path = sample_path(params, 0.95, rng)
        jumps = []
        for t, mark, _, after in path.events:
            jumps.append((t, mark))
            worst = max(worst, abs(after - direct_bayes_posterior(jumps, t, params.pi0, params)))
    assert worst <= 1e-6
