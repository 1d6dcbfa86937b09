"""Closed-form value functions and optimal boundaries for the Bayesian problem.

Notation: ``phi = pi/(1-pi)`` (odds), ``delta = lambda0 - lambda1``,
``S = lam*lambda0*lambda1`` (so ``B_hat = S/delta``), ``gamma = lambda0/delta``.

The candidate value ``f(pi; B) = 1 - B - int_pi^B f'(x) dx`` has derivative
``f' = gamma*lambda1*F*(1-x)*phi^gamma/(lambda1 + delta*x)``.  Evaluating
``F`` literally multiplies huge powers of ``phi`` by tiny ones, so the
derivative is computed from an equivalent scaled form

    lambda0 > lambda1:  f'(x) = gamma*lambda1*phi*(Chat(x) - Q(x)) / (S - delta*x)
    lambda0 < lambda1:  f'(x) = -c*lambda0*lambda1*(phi - Q(x)) / (S - delta*x)

where ``Q(x) = int_x^anchor w(s) exp(ell(s) - ell(x)) ds`` and ``ell`` is
``log G`` minus a power of ``log phi``.  The anchor is ``B`` (case I),
``B_hat`` (cases II/III, where ``H(B) = 0`` makes the two equivalent) or 0
(lambda0 < lambda1).
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize

from ._quad import QuadratureError, gauss_legendre, graded_edges, integrate, panel_nodes
from .model import CaseLabel, ModelParams, classify_case

# half-width of the window around B_hat where f' is taken from its limit
SINGULAR_WINDOW = 1e-6
BRANCH_TOL = 1e-12


class DivergenceError(ArithmeticError):
    """The candidate solution is infinite at the requested point."""


class RootBracketError(RuntimeError):
    pass


def _up(params: ModelParams) -> bool:
    return params.delta > 0


def _require_up(params: ModelParams, what: str):
    if not _up(params):
        raise ValueError(f"{what} is defined only for lambda0 > lambda1")


def _exp_branch(params: ModelParams) -> bool:
    return abs(params.singular_scale - 1.0) <= BRANCH_TOL


def _interior_hat(params: ModelParams) -> Optional[float]:
    """B_hat when it lies inside (0, 1), else None."""
    bh = params.B_hat
    if bh is not None and bh < 1.0 and not _exp_branch(params):
        return bh
    return None


# ---------------------------------------------------------------------------
# kernels as printed


def kernel_A(pi, params: ModelParams):
    pi = np.asarray(pi, dtype=float)
    if np.any(pi <= 0.0):
        raise ValueError("kernel_A has a pole at pi = 0")
    S, d = params.lam * params.lambda0 * params.lambda1, params.delta
    out = (S - d * pi) / (pi * (params.lambda1 + d * pi))
    return float(out) if out.ndim == 0 else out


def kernel_C(pi, B: float, params: ModelParams):
    _require_up(params, "kernel_C")
    pi = np.asarray(pi, dtype=float)
    g = params.gamma
    out = ((1 - B) / (g * (g - 1)) * ((1 - B) / B) ** (g - 1)
           - params.c * params.delta * ((1 - pi) / pi) ** (g - 1))
    return float(out) if out.ndim == 0 else out


def kernel_logG(pi, params: ModelParams):
    """``log G(pi)``; only differences are ever used downstream.

    Returns ``-inf`` at ``pi = B_hat`` when the power branch has ``a > 0``.
    """
    pi = np.asarray(pi, dtype=float)
    l0, l1 = params.lambda0, params.lambda1
    S, d = params.lam * l0 * l1, params.delta
    with np.errstate(divide="ignore"):
        if _exp_branch(params):
            out = l0 * pi / ((l1 - l0) * (1 - pi)) - np.log1p(-pi)
        else:
            a = params.a
            out = a * np.log(np.abs((S - d * pi) / ((d - S) * (1 - pi)))) - np.log1p(-pi)
    return float(out) if out.ndim == 0 else out


def _log_odds(x):
    with np.errstate(divide="ignore"):
        return np.log(x) - np.log1p(-x)


def _ell(x, params: ModelParams):
    """Scaled log-weight: ``log G - (gamma-1) log phi`` (up) or ``log G - gamma log phi`` (down)."""
    shift = params.gamma - 1.0 if _up(params) else params.gamma
    return kernel_logG(x, params) - shift * _log_odds(x)


def _chat(x, B: float, params: ModelParams):
    """``C(x, B) * phi(x)^(gamma-1)``."""
    g = params.gamma
    phiB = B / (1.0 - B)
    return (1 - B) / (g * (g - 1)) * (x / (1 - x) / phiB) ** (g - 1) - params.c * params.delta


def _w(s, B: float, params: ModelParams):
    """Inner integrand (without the exp(ell) weight)."""
    S = params.lam * params.lambda0 * params.lambda1
    d, l1 = params.delta, params.lambda1
    if _up(params):
        return _chat(s, B, params) * (l1 + d * s) / ((S - d * s) * (1 - s))
    return (l1 + d * s) * s / ((S - d * s) * (1 - s) ** 2)


def _weighted(s, B: float, params: ModelParams, ell_ref):
    """``w(s) * exp(ell(s) - ell_ref)`` with the ``1/(S - delta*s)`` factor folded into the power."""
    S = params.lam * params.lambda0 * params.lambda1
    gap = S - params.delta * s
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        out = _w(s, B, params) * gap * np.sign(gap) * np.exp(_ell(s, params) - ell_ref - np.log(np.abs(gap)))
    # nodes rounding onto B_hat itself carry negligible weight
    return np.where(np.isfinite(out), out, 0.0)


def _head(x, B: float, params: ModelParams):
    if _up(params):
        return _chat(x, B, params)
    return x / (1 - x)


def _scale(x, params: ModelParams):
    S = params.lam * params.lambda0 * params.lambda1
    d = params.delta
    if _up(params):
        return params.gamma * params.lambda1 * (x / (1 - x)) / (S - d * x)
    return -params.c * params.lambda0 * params.lambda1 / (S - d * x)


def fprime_limit_at_hat(params: ModelParams) -> float:
    """Derivative of the regular solution at ``B_hat`` (l'Hopital)."""
    l0, l1 = params.lambda0, params.lambda1
    return -params.c * l1 ** 2 / (params.delta - params.lam * l0 * l1)


def boundary_derivative(B: float, params: ModelParams) -> float:
    """Left derivative ``f'(B-; B)`` forced by the free-boundary equation at ``B``."""
    rho, lam, c = params.rho, params.lam, params.c
    return B * (rho * (1 - B) - c) / ((1 - B) * (lam - rho * B))


def _fprime_to_F(fp, x, params: ModelParams):
    g, l1, d = params.gamma, params.lambda1, params.delta
    return fp * (l1 + d * x) / (g * l1 * (1 - x) * (x / (1 - x)) ** g)


# ---------------------------------------------------------------------------
# anchoring


def _literal_H_scaled(B: float, params: ModelParams, tol: float, ref: float) -> float:
    """``int_{B_hat}^B C G / (A x (1-x)) dx`` with G divided by ``G(ref)``."""
    bh = _interior_hat(params)
    ell_ref = float(kernel_logG(ref, params))
    return integrate(lambda s: _weighted(s, B, params, ell_ref), bh, B, tol=tol)


def _regular_at_hat(B: float, params: ModelParams, tol: float = 1e-6) -> bool:
    """Whether ``B`` makes the candidate finite at B_hat (``H(B) = 0`` to relative ``tol``)."""
    bh = _interior_hat(params)
    ell_B = float(_ell(B, params))
    f = lambda s: _weighted(s, B, params, ell_B)
    signed = integrate(f, bh, B, tol=1e-13)
    # only a scale; the kink of |f| limits attainable accuracy
    total = integrate(lambda s: np.abs(f(s)), bh, B, tol=1e-6)
    return abs(signed) <= tol * total


def _anchor(B: float, params: ModelParams) -> tuple[float, Optional[float]]:
    """Return ``(anchor, singular point inside (0, B])``."""
    if not _up(params):
        return 0.0, None
    bh = _interior_hat(params)
    if bh is None or bh > B + BRANCH_TOL:
        return B, None
    if abs(B - bh) <= BRANCH_TOL:
        return B, B
    if _regular_at_hat(B, params):
        return bh, bh
    return B, bh


# ---------------------------------------------------------------------------
# direct (single-point) evaluation


def _Q_direct(x: float, B: float, anchor: float, params: ModelParams, tol: float) -> float:
    ell_x = float(_ell(x, params))
    f = lambda s: _weighted(s, B, params, ell_x)
    return integrate(f, x, anchor, tol=tol)


def _fprime_raw(x: float, B: float, anchor: float, params: ModelParams, tol: float) -> float:
    q = _Q_direct(x, B, anchor, params, tol)
    return float(_scale(x, params) * (_head(x, B, params) - q))


def _fprime_direct(x: float, B: float, params: ModelParams, tol: float) -> float:
    anchor, sp = _anchor(B, params)
    if sp is not None:
        if anchor != sp and x <= sp:
            raise DivergenceError(
                f"candidate with B={B} diverges at B_hat={sp}; H(B) != 0")
        if abs(x - sp) < SINGULAR_WINDOW:
            lim = fprime_limit_at_hat(params)
            if x == sp:
                return lim
            side = sp + math.copysign(SINGULAR_WINDOW, x - sp)
            if side >= B:
                return lim
            edge = _fprime_raw(side, B, anchor, params, tol)
            return lim + (edge - lim) * abs(x - sp) / SINGULAR_WINDOW
    return _fprime_raw(x, B, anchor, params, tol)


def kernel_F(pi: float, B: float, params: ModelParams, tol: float = 1e-10) -> float:
    """The F kernel of the candidate value function at ``pi`` for boundary ``B``.

    For lambda0 > lambda1 and ``B > B_hat`` the kernel is finite at and below
    B_hat only for the root of ``H``; otherwise ``DivergenceError`` is raised
    there.  For lambda0 < lambda1, ``B`` is ignored.

    Raises:
        DivergenceError: evaluation at or below a singular B_hat for ``H(B) != 0``.
        QuadratureError: the inner integral did not converge.
    """
    if not 0.0 < pi < 1.0:
        raise ValueError("pi must lie in (0, 1)")
    fp = _fprime_direct(pi, B, params, tol)
    return float(_fprime_to_F(fp, pi, params))


def fprime(pi: float, B: float, params: ModelParams, tol: float = 1e-10) -> float:
    """Left derivative ``f'(pi-; B)`` of the candidate value function."""
    if not 0.0 < pi < 1.0:
        raise ValueError("pi must lie in (0, 1)")
    return _fprime_direct(pi, B, params, tol)


def big_H(B: float, params: ModelParams, tol: float = 1e-12) -> float:
    """Boundary function whose root in ``(B_bar, 1)`` is the case III boundary.

    Oriented so that ``H(B_hat+) = +0``, ``H`` rises on ``(B_hat, B_bar)`` and
    falls on ``(B_bar, 1)``.  G is normalised by its value at the midpoint of
    ``(B_hat, 1)``, which rescales ``H`` by a constant only.
    """
    bh = _interior_hat(params)
    if bh is None:
        raise ValueError("big_H needs lambda0 > lambda1 and B_hat < 1")
    if not bh < B < 1.0:
        raise ValueError(f"B must lie in (B_hat, 1) = ({bh}, 1)")
    return -_literal_H_scaled(B, params, tol, ref=0.5 * (1.0 + bh))


# ---------------------------------------------------------------------------
# tabulated profile of f on (0, B]


class _Profile:
    """``f(.; B)`` and ``f'(.; B)`` on (0, B] via cumulative graded quadrature.

    ``Q`` is tabulated at panel edges by recurrence toward the anchor, each
    step rescaled by ``exp(ell)`` differences; values inside a panel come
    from a partial Gauss-Legendre integral from the nearer edge.
    """

    def __init__(self, params: ModelParams, B: float, level: int = 0):
        self.params = params
        self.B = B
        anchor, sp = _anchor(B, params)
        self.anchor, self.sp = anchor, sp
        self.lower = 0.0
        if sp is not None and anchor == B and sp < B:
            # only (B_hat, B] is finite
            self.lower = sp
        points = [self.lower]
        if sp is not None and self.lower < sp < B:
            points.append(sp)
        points.append(B)
        depth, sub = 44 + 8 * level, 2 * 2 ** level
        parts = [graded_edges(lo, hi, depth=depth, subdivide=sub) for lo, hi in zip(points[:-1], points[1:])]
        edges = np.concatenate([p[:-1] for p in parts] + [[B]])
        self.edges = edges
        self.ell_edges = _ell(edges, params)
        self.t, self.wt = gauss_legendre()
        self.anchor_idx = int(np.argmin(np.abs(edges - anchor)))
        # a divergent candidate (lower > 0) is infinite at its first edge
        with np.errstate(invalid="ignore", over="ignore"):
            self._tabulate_Q()
            self._tabulate_f()
        self.left_derivative = float(self.fprime(np.array([B]))[0])

    # Q --------------------------------------------------------------

    def _partial(self, lo, hi, ref):
        """``int_lo^hi w(s) exp(ell(s) - ell(ref)) ds`` on one panel each (vectorised)."""
        s = lo[..., None] + (hi - lo)[..., None] * self.t
        ell_ref = _ell(ref, self.params)
        vals = _weighted(s, self.B, self.params, ell_ref[..., None])
        return (hi - lo) * (vals @ self.wt)

    def _tabulate_Q(self):
        e = self.edges
        q = np.zeros_like(e)
        ia = self.anchor_idx
        lo, hi = e[:-1], e[1:]
        below = self._partial(lo[:ia], hi[:ia], lo[:ia])      # referenced to left edge
        above = self._partial(lo[ia:], hi[ia:], hi[ia:])      # referenced to right edge
        ell = self.ell_edges
        for j in range(ia - 1, -1, -1):
            q[j] = np.exp(ell[j + 1] - ell[j]) * q[j + 1] + below[j] if q[j + 1] != 0 else below[j]
        for i, j in enumerate(range(ia, len(e) - 1)):
            carry = np.exp(ell[j] - ell[j + 1]) * q[j] if q[j] != 0 else 0.0
            q[j + 1] = carry - above[i]
        self.q_edges = q

    def _locate(self, x):
        j = np.searchsorted(self.edges, x, side="right") - 1
        return np.clip(j, 0, len(self.edges) - 2)

    def Q(self, x):
        x = np.asarray(x, dtype=float)
        j = self._locate(x)
        e, q, ell = self.edges, self.q_edges, self.ell_edges
        ell_x = _ell(x, self.params)
        toward_up = j + 1 <= self.anchor_idx
        out = np.empty_like(x)
        if np.any(toward_up):
            xs, js = x[toward_up], j[toward_up]
            part = self._partial(xs, e[js + 1], xs)
            with np.errstate(over="ignore", invalid="ignore"):
                carry = np.where(q[js + 1] != 0, np.exp(ell[js + 1] - ell_x[toward_up]) * q[js + 1], 0.0)
            out[toward_up] = carry + part
        down = ~toward_up
        if np.any(down):
            xs, js = x[down], j[down]
            part = self._partial(e[js], xs, xs)
            with np.errstate(over="ignore", invalid="ignore"):
                carry = np.where(q[js] != 0, np.exp(ell[js] - ell_x[down]) * q[js], 0.0)
            out[down] = carry - part
        return out

    # f ------------------------------------------------------------------

    def _raw_fprime(self, x):
        # exactly at B_hat this is 0 * inf; fprime() overwrites those points with the limit
        with np.errstate(divide="ignore", invalid="ignore"):
            return _scale(x, self.params) * (_head(x, self.B, self.params) - self.Q(x))

    def fprime(self, x):
        x = np.asarray(x, dtype=float)
        out = self._raw_fprime(x)
        sp = self.sp
        if sp is not None and self.anchor == sp:
            lim = fprime_limit_at_hat(self.params)
            near = np.abs(x - sp) < SINGULAR_WINDOW
            if np.any(near):
                xn = x[near]
                side = sp + np.copysign(SINGULAR_WINDOW, xn - sp)
                ok = side < self.B
                edge = np.where(ok, self._raw_fprime(np.where(ok, side, sp - SINGULAR_WINDOW)), lim)
                out[near] = lim + (edge - lim) * np.abs(xn - sp) / SINGULAR_WINDOW
        return out

    def _tabulate_f(self):
        e = self.edges
        lo, hi = e[:-1], e[1:]
        s = lo[:, None] + (hi - lo)[:, None] * self.t
        fp = self.fprime(s.ravel()).reshape(s.shape)
        panel = (hi - lo) * (fp @ self.wt)
        f = np.empty_like(e)
        f[-1] = 1.0 - self.B
        f[:-1] = f[-1] - np.cumsum(panel[::-1])[::-1]
        self.f_edges = f

    def f(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < self.lower) or (self.lower > 0 and np.any(x <= self.lower)):
            raise DivergenceError("candidate is infinite below B_hat for this B")
        j = self._locate(x)
        hi = self.edges[j + 1]
        s = x[:, None] + (hi - x)[:, None] * self.t
        fp = self.fprime(s.ravel()).reshape(s.shape)
        return self.f_edges[j + 1] - (hi - x) * (fp @ self.wt)


@functools.lru_cache(maxsize=64)
def _profile(params: ModelParams, B: float, level: int = 0) -> _Profile:
    return _Profile(params, B, level)


def value_candidate(pi: float, B: float, params: ModelParams, tol: float = 1e-9) -> float:
    """Candidate value ``f(pi; B)``; ``1 - pi`` for ``pi >= B``, ``f(0+; B)`` at 0.

    Raises:
        DivergenceError: ``pi <= B_hat < B`` and ``B`` is not the root of H.
        QuadratureError: two refinement levels of the profile disagree by more than ``tol``.
    """
    if not 0.0 <= pi <= 1.0 or not 0.0 < B < 1.0:
        raise ValueError("need pi in [0, 1] and B in (0, 1)")
    if pi >= B:
        return 1.0 - pi
    coarse = float(_profile(params, B, 0).f(np.array([pi]))[0])
    fine = float(_profile(params, B, 1).f(np.array([pi]))[0])
    if abs(fine - coarse) > tol:
        raise QuadratureError("profile refinement disagrees", fine, abs(fine - coarse))
    return fine


# ---------------------------------------------------------------------------
# solution


@dataclass(frozen=True)
class BayesSolution:
    """Optimal boundary and value function.

    ``value`` and ``derivative`` accept scalars or arrays on [0, 1].
    """

    params: ModelParams
    B_star: float
    case: CaseLabel
    left_derivative_at_boundary: float
    smooth_fit: bool
    tol: float
    _profile: _Profile = field(repr=False, compare=False)

    def value(self, pi):
        p = np.asarray(pi, dtype=float)
        flat = np.atleast_1d(p).astype(float)
        out = 1.0 - flat
        inside = flat < self.B_star
        if np.any(inside):
            out[inside] = self._profile.f(flat[inside])
        return float(out[0]) if p.ndim == 0 else out.reshape(p.shape)

    def derivative(self, pi):
        """Left derivative of the value function (``-1`` in the stopping region)."""
        p = np.asarray(pi, dtype=float)
        flat = np.atleast_1d(p).astype(float)
        out = np.full_like(flat, -1.0)
        inside = flat < self.B_star
        if np.any(inside):
            out[inside] = self._profile.fprime(flat[inside])
        return float(out[0]) if p.ndim == 0 else out.reshape(p.shape)

    __call__ = value

    @property
    def value_at_zero(self) -> float:
        return float(self._profile.f_edges[0])


def _bisect(fun, a, b, tol, what):
    fa, fb = fun(a), fun(b)
    if not fa * fb < 0:
        raise RootBracketError(f"{what}: no sign change on [{a}, {b}] (f(a)={fa}, f(b)={fb})")
    return optimize.bisect(fun, a, b, xtol=tol, maxiter=400)


def solve_bayes(params: ModelParams, tol: float = 1e-10) -> BayesSolution:
    """Optimal boundary ``B*`` and value function for the given instance.

    Cases I and II stop at ``B_bar``; case III solves ``H(B) = 0`` on
    ``(B_bar, 1)``; case IV solves the smooth-fit equation ``f'(B) = -1``.
    Roots are found by bisection to ``tol`` in ``B``.

    Raises:
        RootBracketError: the root equation shows no sign change on its bracket.
    """
    case = classify_case(params)
    if case in (CaseLabel.I, CaseLabel.II):
        B = params.B_bar
    elif case is CaseLabel.III:
        B = _bisect(lambda b: big_H(b, params), params.B_bar, 1.0 - 1e-6, tol, "H(B) = 0")
    else:
        B = _bisect(lambda b: _fprime_raw(b, b, 0.0, params, 1e-12) + 1.0, 1e-9, 1.0 - 1e-6, tol,
                    "f'(B) = -1")
    prof = _profile(params, B, 0)
    return BayesSolution(params=params, B_star=B, case=case,
                         left_derivative_at_boundary=prof.left_derivative,
                         smooth_fit=case in (CaseLabel.I, CaseLabel.IV), tol=tol, _profile=prof)
