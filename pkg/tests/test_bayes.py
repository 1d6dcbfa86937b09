import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cpdisorder import bayes
from cpdisorder.model import PRESETS, CaseLabel, ModelParams
from cpdisorder.posterior import apply_generator

from oracles import Literal

CASE1, CASE2, CASE3, CASE4 = (PRESETS[k] for k in ("case1", "case2", "case3", "case4"))


@pytest.fixture(scope="module")
def solutions():
    return {k: bayes.solve_bayes(p) for k, p in PRESETS.items()}


# kernels ------------------------------------------------------------------

def test_kernel_A():
    assert bayes.kernel_A(0.1, CASE1) == pytest.approx(0.1 / 0.11)
    assert bayes.kernel_A(CASE1.B_hat, CASE1) == pytest.approx(0.0, abs=1e-15)
    assert bayes.kernel_A(0.5, CASE4) == pytest.approx(0.7 / 0.75)
    with pytest.raises(ValueError):
        bayes.kernel_A(0.0, CASE1)


def test_kernel_C():
    B = 1 / 11
    assert bayes.kernel_C(B, B, CASE1) == pytest.approx(10 * (0.5 * (1 - B) - 1), rel=1e-12)
    assert bayes.kernel_C(B, B, CASE1) == pytest.approx(-5.45455, abs=1e-5)
    with pytest.raises(ValueError):
        bayes.kernel_C(0.1, 0.2, CASE4)


def test_kernel_logG():
    assert math.exp(bayes.kernel_logG(0.5, CASE1)) == pytest.approx(1.29904, abs=1e-5)
    assert bayes.kernel_logG(CASE1.B_hat, CASE1) == -math.inf
    lit = Literal(CASE3)
    for x, y in ((0.1, 0.4), (0.3, 0.9)):
        ratio = math.exp(bayes.kernel_logG(x, CASE3) - bayes.kernel_logG(y, CASE3))
        assert ratio == pytest.approx(lit.G(x) / lit.G(y), rel=1e-12)


def test_kernel_logG_exponential_branch():
    p = ModelParams(2.0, 1.0, 0.5, 1.0)  # lam*l0*l1 == l0 - l1
    assert bayes._exp_branch(p)
    x = 0.3
    expected = p.lambda0 * x / ((p.lambda1 - p.lambda0) * (1 - x)) - math.log(1 - x)
    assert bayes.kernel_logG(x, p) == pytest.approx(expected)


def test_kernel_F_at_boundary():
    B = 1 / 11
    expected = bayes.kernel_C(B, B, CASE1) / (bayes.kernel_A(B, CASE1) * B * (1 - B))
    assert bayes.kernel_F(B, B, CASE1) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("params,B", [(CASE1, 1 / 11), (CASE1, 0.15), (CASE3, 0.8), (CASE4, 0.3)])
def test_kernel_F_against_literal(params, B):
    lit = Literal(params)
    lo = params.B_hat + 0.02 if params.delta > 0 and B > params.B_hat else 0.01
    for x in np.linspace(lo, B - 1e-3, 6):
        assert bayes.kernel_F(x, B, params) == pytest.approx(lit.F(x, B), rel=1e-8, abs=1e-12)


def test_kernel_F_case_four_sign():
    lit = Literal(CASE4)
    for x in np.linspace(0.01, 0.99, 10):
        F = bayes.kernel_F(x, 0.999, CASE4)
        assert np.isfinite(F) and F > 0
        assert F == pytest.approx(lit.F(x, 0.999), rel=1e-8)
        assert bayes.fprime(x, 0.999, CASE4) < 0


def test_divergence_reported():
    B = 0.8  # not the root of H
    with pytest.raises(bayes.DivergenceError):
        bayes.kernel_F(CASE3.B_hat, B, CASE3)
    with pytest.raises(bayes.DivergenceError):
        bayes.value_candidate(0.1, B, CASE3)
    assert np.isfinite(bayes.value_candidate(0.5, B, CASE3))


# derivative and value -------------------------------------------------------

def test_fprime_examples():
    assert bayes.fprime(1 / 11, 1 / 11, CASE1) == pytest.approx(-1.0, abs=1e-6)
    assert bayes.fprime(0.2, 0.2, CASE2) == pytest.approx(-0.5, abs=1e-12)
    assert bayes.fprime(1e-6, 0.5, CASE4) == pytest.approx(0.0, abs=1e-5)
    assert bayes.fprime(1 - 1e-7, 1 - 1e-7, CASE4) < -1e5
    xs = np.linspace(0.01, 0.99, 30)
    vals = [bayes.fprime(x, x, CASE4) for x in xs]
    assert np.all(np.diff(vals) < 0)


def test_value_candidate_against_literal():
    lit = Literal(CASE1)
    B = 1 / 11
    for x in (0.01, 0.05, 0.08):
        assert bayes.value_candidate(x, B, CASE1) == pytest.approx(lit.f(x, B), abs=1e-10)
    lit4 = Literal(CASE4)
    for x in (0.02, 0.2, 0.5):
        assert bayes.value_candidate(x, 0.6, CASE4) == pytest.approx(lit4.f(x, 0.6), abs=1e-10)
    assert bayes.value_candidate(0.3, 0.3, CASE1) == 0.7


def test_value_candidate_case_one_shape():
    xs = np.linspace(0.0, 1 / 11, 40)
    vals = np.array([bayes.value_candidate(x, 1 / 11, CASE1) for x in xs])
    assert np.all(vals <= 1 - xs + 1e-12)
    assert np.all(np.diff(vals) <= 1e-14)


def test_value_candidate_case_four_concave():
    h = 1e-3
    xs = np.linspace(0.01, 0.6 - 2 * h, 30)
    for x in xs:
        second = (bayes.value_candidate(x + h, 0.6, CASE4) - 2 * bayes.value_candidate(x, 0.6, CASE4)
                  + bayes.value_candidate(x - h, 0.6, CASE4)) / h ** 2
        assert second < 0


def test_profile_matches_direct_derivative(solutions):
    for key, sol in solutions.items():
        for x in np.linspace(0.01, sol.B_star - 1e-3, 9):
            direct = bayes.fprime(float(x), sol.B_star, sol.params)
            assert sol.derivative(x) == pytest.approx(direct, rel=1e-8, abs=1e-10), key


# H and case III -----------------------------------------------------------------

def test_big_H_shape():
    bh, bb = CASE3.B_hat, CASE3.B_bar
    assert bayes.big_H(bh + 1e-4, CASE3) > 0
    assert bayes.big_H(bb, CASE3) > 0
    grid = np.linspace(bh + 1e-3, 1 - 1e-3, 60)
    vals = np.array([bayes.big_H(b, CASE3) for b in grid])
    rising = vals[grid < bb]
    falling = vals[grid > bb]
    assert np.all(np.diff(rising) > 0) and np.all(np.diff(falling) < 0)
    assert np.sum(np.diff(np.sign(vals)) != 0) == 1
    with pytest.raises(ValueError):
        bayes.big_H(0.1, CASE3)


def test_big_H_is_negated_literal_integral():
    lit = Literal(CASE3)
    ref = 0.5 * (1 + CASE3.B_hat)
    for B in (0.3, 0.5, 0.8):
        assert bayes.big_H(B, CASE3) == pytest.approx(-lit.H(B, ref), rel=1e-8)


def test_case_three_solution(solutions):
    sol = solutions["case3"]
    assert CASE3.B_bar < sol.B_star < 1
    assert abs(bayes.big_H(sol.B_star, CASE3)) <= 1e-8
    assert sol.B_star == pytest.approx(0.6735616342539371, abs=1e-9)
    # at B_hat the derivative takes the l'Hopital limit
    assert bayes.fprime(CASE3.B_hat, sol.B_star, CASE3) == pytest.approx(-0.125, abs=1e-12)
    assert sol.derivative(CASE3.B_hat) == pytest.approx(-0.125, abs=1e-12)
    for eps in (1e-3, 1e-5, 2e-6):
        assert sol.derivative(CASE3.B_hat - eps) == pytest.approx(-0.125, abs=50 * eps)
        assert sol.derivative(CASE3.B_hat + eps) == pytest.approx(-0.125, abs=50 * eps)
    # the left derivative at B* is forced by the equation at the boundary
    assert sol.left_derivative_at_boundary == pytest.approx(bayes.boundary_derivative(sol.B_star, CASE3), abs=1e-8)
    assert sol.left_derivative_at_boundary == pytest.approx(-0.55091, abs=1e-5)
    assert sol.left_derivative_at_boundary > -1


def test_solutions(solutions):
    assert solutions["case1"].B_star == pytest.approx(1 / 11, abs=1e-15)
    assert solutions["case1"].case is CaseLabel.I and solutions["case1"].smooth_fit
    assert solutions["case2"].B_star == pytest.approx(0.2, abs=1e-12)
    assert not solutions["case2"].smooth_fit
    assert solutions["case2"].left_derivative_at_boundary == pytest.approx(-0.5, abs=1e-12)
    assert solutions["case4"].case is CaseLabel.IV and solutions["case4"].smooth_fit
    assert solutions["case4"].B_star == pytest.approx(0.10447915016026775, abs=1e-9)
    assert solutions["case4"].left_derivative_at_boundary == pytest.approx(-1, abs=1e-8)


def test_value_function_shape(solutions):
    rng = np.random.default_rng(3)
    for sol in solutions.values():
        B = sol.B_star
        assert sol.params.B_bar <= B <= 1
        assert float(sol.value(np.nextafter(B, 0))) == pytest.approx(1 - B, abs=1e-10)
        assert sol.value(0.0) == pytest.approx(sol.value_at_zero)
        grid = np.linspace(0, 1, 501)
        vals = sol.value(grid)
        assert np.all(vals <= 1 - grid + 1e-10)
        assert np.all(np.diff(vals) <= 1e-12)
        a, b = rng.random(1000), rng.random(1000)
        assert np.all(sol.value(0.5 * (a + b)) >= 0.5 * (sol.value(a) + sol.value(b)) - 1e-8)
        assert sol.derivative(0.99) == -1.0


def test_value_at_zero_against_literal(solutions):
    lit = Literal(CASE1)
    assert solutions["case1"].value(0.0) == pytest.approx(lit.f(1e-12, 1 / 11), abs=1e-9)


@pytest.mark.parametrize("key", sorted(PRESETS))
def test_free_boundary_residual(solutions, key):
    sol = solutions[key]
    p, B = sol.params, sol.B_star
    for x in np.linspace(0.01, B - 0.01, 8):
        r = apply_generator(sol.value, x, p, fprime=sol.derivative, breakpoints=[B])
        assert abs(r + p.c * x) <= 1e-8
        # finite differences instead of the exact derivative
        r = apply_generator(sol.value, x, p, breakpoints=[B])
        assert abs(r + p.c * x) <= 1e-4
    for x in np.linspace(B + 0.01, 0.99, 6):
        assert apply_generator(sol.value, x, p, breakpoints=[B]) + p.c * x >= -1e-6


def test_exponential_branch_solution():
    p = ModelParams(2.0, 1.0, 0.5, 0.2)  # B_hat == 1
    sol = bayes.solve_bayes(p)
    assert sol.B_star == pytest.approx(p.B_bar)
    assert sol.left_derivative_at_boundary == pytest.approx(-1, abs=1e-8)
    for x in (0.1, 0.4, 0.6):
        r = apply_generator(sol.value, x, p, fprime=sol.derivative, breakpoints=[sol.B_star])
        assert abs(r + p.c * x) <= 1e-8


up_params = st.builds(lambda l1, r, lam, c: ModelParams(l1 * r, l1, lam, c),
                      st.floats(0.3, 3.0), st.floats(1.2, 4.0), st.floats(0.02, 0.5), st.floats(0.02, 3.0))
down_params = st.builds(lambda l0, r, lam, c: ModelParams(l0, l0 * r, lam, c),
                        st.floats(0.3, 3.0), st.floats(1.2, 4.0), st.floats(0.02, 0.5), st.floats(0.05, 3.0))


@given(p=st.one_of(up_params, down_params))
@settings(max_examples=25, deadline=None)
def test_random_instances(p):
    sol = bayes.solve_bayes(p)
    B = sol.B_star
    assert p.B_bar - 1e-12 <= B < 1
    assert float(sol.value(np.nextafter(B, 0))) == pytest.approx(1 - B, abs=1e-9)
    grid = np.linspace(0, 1, 101)
    assert np.all(sol.value(grid) <= 1 - grid + 1e-9)
    if sol.smooth_fit:
        assert sol.left_derivative_at_boundary == pytest.approx(-1, abs=1e-6)
    else:
        assert -1 < sol.left_derivative_at_boundary < 0
    x = 0.5 * B
    r = apply_generator(sol.value, x, p, fprime=sol.derivative, breakpoints=[B])
    assert abs(r + p.c * x) <= 1e-7
