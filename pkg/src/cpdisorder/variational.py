"""Detection with a bound on the false-alarm probability.

For a threshold rule ``tau_B = inf{t : pi_t >= B}`` the false-alarm
probability ``u(pi; B) = E[1 - pi_{tau_B}]`` solves ``L u = 0`` below ``B``
with ``u = 1 - pi`` above it.  For lambda0 < lambda1 the posterior only
jumps down and drifts up, so it reaches ``B`` exactly and ``u = 1 - B``.

For lambda0 > lambda1 the posterior drifts toward ``B_hat`` and crosses
upward by jumps:

* ``B < B_hat``: the flow reaches ``B`` from below, and
  ``u(pi; B) = 1 - B - int_pi^B u'(x) dx`` with
  ``u'(x) = delta*(1-B)*phi(x)/(S - delta*x) * exp(ell(B) - ell(x))``.
* ``B >= B_hat``: the flow never reaches ``B``, so every crossing is a jump
  overshoot.  Since overshoot sizes are memoryless in the log-odds, ``u`` is
  the constant ``lambda1(1-B)/(lambda1(1-B) + lambda0*B)`` on ``[0, B)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import optimize

from . import bayes
from ._quad import integrate
from .model import ModelParams


class Directive(enum.Enum):
    STOP_IMMEDIATELY = "StopImmediately"
    THRESHOLD = "Threshold"


@dataclass(frozen=True)
class VariationalSolution:
    directive: Directive
    alpha: float
    pi0: float
    B_alpha: Optional[float] = None

    def to_dict(self) -> dict:
        return {"directive": self.directive.value, "B_alpha": self.B_alpha,
                "alpha": self.alpha, "pi0": self.pi0}


def _ell_at(x, params: ModelParams):
    return bayes._ell(x, params)


def kernel_D(pi, B: float, params: ModelParams):
    """Density kernel of ``u`` (exponent ``gamma - 1``), zero when ``B`` is at or above ``B_hat``.

    Computed from log-G differences; ``D(B_hat, B) = 0``.
    """
    bayes._require_up(params, "kernel_D")
    p = np.asarray(pi, dtype=float)
    if np.any((p <= 0) | (p >= B)):
        raise ValueError("pi must lie in (0, B)")
    bh = params.B_hat
    if bh < 1.0 and B >= bh:
        out = np.zeros_like(p)
    else:
        g = params.gamma
        with np.errstate(divide="ignore"):
            log_ratio = bayes.kernel_logG(B, params) - bayes.kernel_logG(p, params)
        A = bayes.kernel_A(p, params)
        out = ((1 - B) / (g * (g - 1) * A * p * (1 - p)) * np.exp(log_ratio)
               * ((1 - B) / B) ** (g - 1))
        out = np.where(np.isfinite(out), out, 0.0)
    return float(out) if out.ndim == 0 else out


def _u_slope(x, B: float, params: ModelParams, ell_B: float):
    S = params.lam * params.lambda0 * params.lambda1
    d = params.delta
    gap = S - d * x
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        out = d * (1 - B) * (x / (1 - x)) * np.sign(gap) * np.exp(ell_B - _ell_at(x, params) - np.log(np.abs(gap)))
    return np.where(np.isfinite(out), out, 0.0)


def false_alarm_u(pi: float, B: float, params: ModelParams, tol: float = 1e-10) -> float:
    """False-alarm probability ``P[tau_B < theta]`` of the threshold rule at ``B``, from posterior ``pi``.

    ``pi = 0`` gives the limit ``u(0+; B)``; ``pi >= B`` gives ``1 - pi``.

    Raises:
        QuadratureError: the integral did not converge.
    """
    if not 0.0 <= pi <= 1.0:
        raise ValueError("pi must lie in [0, 1]")
    if not 0.0 < B <= 1.0:
        raise ValueError("B must lie in (0, 1]")
    if pi >= B:
        return 1.0 - pi
    if B == 1.0:
        return 0.0
    if params.delta < 0:
        return 1.0 - B
    bh = params.B_hat
    l0, l1 = params.lambda0, params.lambda1
    if bh < 1.0 and B >= bh:
        return l1 * (1 - B) / (l1 * (1 - B) + l0 * B)
    ell_B = float(_ell_at(B, params))
    drop = integrate(lambda x: _u_slope(x, B, params, ell_B), pi, B, tol=tol)
    return float(np.clip(1.0 - B - drop, 0.0, 1.0 - pi))


def solve_variational(pi0: float, alpha: float, params: ModelParams,
                      tol: float = 1e-12) -> VariationalSolution:
    """Threshold minimising expected delay subject to ``P[tau < theta] <= alpha``.

    ``alpha >= 1 - pi0`` means stopping at once already meets the bound.
    Otherwise the threshold is ``1 - alpha`` (lambda0 < lambda1) or the root of
    ``u(pi0; B) = alpha``, found by bisection on ``(pi0, 1)``.  When
    ``pi0 > B_hat`` and ``alpha`` lies below ``1 - pi0`` but above
    ``u(pi0; pi0+)`` no threshold attains ``alpha`` exactly; the smallest
    admissible threshold ``pi0 + 1e-9`` is returned.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if not 0.0 <= pi0 < 1.0:
        raise ValueError("pi0 must lie in [0, 1)")
    if alpha >= 1.0 - pi0:
        return VariationalSolution(Directive.STOP_IMMEDIATELY, alpha, pi0)
    if params.delta < 0:
        return VariationalSolution(Directive.THRESHOLD, alpha, pi0, 1.0 - alpha)
    fun = lambda b: false_alarm_u(pi0, b, params, tol=1e-12) - alpha
    lo = pi0 + 1e-9
    if fun(lo) <= 0:
        # pi0 > B_hat: u jumps down as B passes pi0, so the bound is already met just above pi0
        return VariationalSolution(Directive.THRESHOLD, alpha, pi0, lo)
    B = optimize.bisect(fun, lo, 1.0 - 1e-9, xtol=tol, maxiter=400)
    return VariationalSolution(Directive.THRESHOLD, alpha, pi0, B)


def cost_for_threshold(B: float, params: ModelParams, tol: float = 1e-8) -> float:
    """Delay cost ``c`` whose Bayes-optimal boundary equals ``B`` (diagnostic).

    The boundary decreases in ``c`` and is never below ``lam/(lam+c)``, so
    ``c = lam(1-B)/B`` gives a boundary at or above ``B``; bisection on ``log c``
    runs from there up to ``1e8``.
    """
    def gap(log_c):
        return bayes.solve_bayes(params.replace(c=float(np.exp(log_c))), tol=1e-12).B_star - B
    if not 0.0 < B < 1.0:
        raise ValueError("B must lie in (0, 1)")
    lo, hi = np.log(params.lam * (1 - B) / B), np.log(1e8)
    if gap(lo) <= 0:
        return float(np.exp(lo))
    if gap(hi) > 0:
        raise bayes.RootBracketError(f"no delay cost up to 1e8 gives boundary {B}")
    return float(np.exp(optimize.bisect(gap, lo, hi, xtol=tol)))
