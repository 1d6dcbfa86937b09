"""Dynamics of the posterior probability that the disorder has occurred.

Between jumps the posterior follows ``dpi/dt = (lam - rho*pi)(1 - pi)``; in
odds ``phi = pi/(1-pi)`` this is the linear ODE ``dphi/dt = lam + k*phi``
with ``k = lam - rho``, which is what every closed form below solves.  A jump
of size ``x`` multiplies the odds by ``exp((lambda0 - lambda1) x)``.

All functions accept scalars or numpy arrays and return the same shape.
"""

from __future__ import annotations

from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy.special import expit, logit

from ._quad import QuadratureError, integrate
from .model import ModelParams


def _out(x):
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x


def _check_prob(name, p):
    p = np.asarray(p, dtype=float)
    if np.any(~((p >= 0.0) & (p <= 1.0))):
        raise ValueError(f"{name} must lie in [0, 1]")
    return p


def _odds(p):
    with np.errstate(divide="ignore"):
        return p / (1.0 - p)


def _log_growth(p0, t, params: ModelParams):
    """``log((1 - p0)/(1 - p_t))`` along the flow, i.e. the growth of ``log(1 + phi)``."""
    k = params.lam - params.rho
    lam = params.lam
    if k == 0.0:
        return np.log1p(lam * t * (1.0 - p0))
    kt = k * t
    r = p0 + lam * (1.0 - p0) / k
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        direct = np.log1p(r * np.expm1(kt))
        # large positive k*t: 1 + r(e^{kt} - 1) = r e^{kt} (1 + (1-r) e^{-kt} / r)
        big = kt + np.log(np.abs(r)) + np.log1p((1.0 - r) * np.exp(-kt) / r)
    return np.where(kt > 600.0, big, direct)


def flow(pi0, t, params: ModelParams):
    """Posterior after ``t`` time units without jumps, started from ``pi0``."""
    p0 = _check_prob("pi0", pi0)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be >= 0")
    return _out(_flow(p0, t, params))


def _flow(p0, t, params: ModelParams):
    k = params.lam - params.rho
    lam = params.lam
    phi0 = _odds(p0)
    with np.errstate(over="ignore", invalid="ignore"):
        if k == 0.0:
            phi = phi0 + lam * t
        else:
            phi = phi0 * np.exp(k * t) + lam * np.expm1(k * t) / k
        p = np.where(np.isinf(phi), 1.0, phi / (1.0 + phi))
    p = np.where(p0 >= 1.0, 1.0, p)
    return np.clip(p, 0.0, 1.0)


def flow_integral(pi0, t, params: ModelParams):
    """Exact ``int_0^t pi_s ds`` along the flow started at ``pi0``.

    Uses ``d log(1 + phi)/dt = lam - rho*pi``, so the integral is
    ``(lam*t - log growth) / rho``.
    """
    p0 = np.asarray(pi0, dtype=float)
    t = np.asarray(t, dtype=float)
    val = (params.lam * t - _log_growth(p0, t, params)) / params.rho
    val = np.where(p0 >= 1.0, t, val)
    return _out(np.clip(val, 0.0, t))


def flow_hit_time(pi0, B, params: ModelParams):
    """Time for the flow from ``pi0`` to reach level ``B``.

    Returns 0 when ``pi0 >= B`` and ``inf`` when the flow never gets there
    (for instance ``B >= B_hat > pi0`` when lambda0 > lambda1).  For scalar
    input the unreachable case is reported as ``None``.
    """
    scalar = np.ndim(pi0) == 0 and np.ndim(B) == 0
    t = _flow_hit_time(np.asarray(pi0, dtype=float), np.asarray(B, dtype=float), params)
    if scalar:
        t = float(t)
        return None if np.isinf(t) else t
    return t


def _flow_hit_time(p0, B, params: ModelParams):
    k = params.lam - params.rho
    lam = params.lam
    phi0 = _odds(p0)
    phiB = _odds(B)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if k == 0.0:
            t = (phiB - phi0) / lam
        else:
            arg = k * (phiB - phi0) / (lam + k * phi0)
            t = np.log1p(arg) / k
            t = np.where(arg > -1.0, t, np.inf)
        t = np.where(np.isfinite(t) & (t >= 0.0), t, np.inf)
        t = np.where(B >= 1.0, np.inf, t)
    return np.where(p0 >= B, 0.0, t)


def jump_update(pi, x, params: ModelParams):
    """Bayes update of the posterior at a jump of size ``x``.

    Computed on the log-odds scale so that ``exp((lambda0-lambda1) x)`` never
    overflows; 0 and 1 stay fixed.
    """
    p = _check_prob("pi", pi)
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("jump size must be >= 0")
    return _out(_jump(p, x, params))


def _jump(p, x, params: ModelParams):
    with np.errstate(divide="ignore"):
        return expit(logit(p) + params.delta * x)


def _vectorised(f: Callable) -> Callable[[np.ndarray], np.ndarray]:
    def call(x):
        try:
            y = np.asarray(f(x), dtype=float)
            if y.shape == np.shape(x):
                return y
        except (TypeError, ValueError):
            pass
        return np.array([float(f(float(v))) for v in np.ravel(x)]).reshape(np.shape(x))
    return call


def central_step(pi: float) -> float:
    return min(1e-6, 0.5 * pi, 0.5 * (1.0 - pi))


def apply_generator(f: Callable, pi: float, params: ModelParams, quad_tol: float = 1e-8,
                    fprime: Optional[Callable] = None,
                    breakpoints: Sequence[float] = ()) -> float:
    """Infinitesimal generator of the posterior process applied to ``f`` at ``pi``.

    ``f`` should accept numpy arrays (a scalar-only callable also works, more
    slowly).  ``fprime`` supplies an exact derivative; otherwise a central
    difference is used.  ``breakpoints`` lists levels where ``f`` has a kink,
    so the jump integral is split there.

    The jump integral over sizes ``x in (0, inf)`` is mapped to
    ``u = exp(-|lambda0 - lambda1| x) in (0, 1)``, where the jump target has
    odds ``phi/u`` (lambda0 > lambda1) or ``phi*u`` (lambda0 < lambda1).

    Raises:
        QuadratureError: the jump integral did not reach ``quad_tol``.
    """
    if not 0.0 < pi < 1.0:
        raise ValueError("pi must lie in (0, 1)")
    fv = _vectorised(f)
    if fprime is not None:
        d1 = float(fprime(pi))
    else:
        h = central_step(pi)
        d1 = float((fv(np.array([pi + h])) - fv(np.array([pi - h])))[0] / (2.0 * h))
    drift = (params.lam - params.rho * pi) * (1.0 - pi) * d1

    s = abs(params.delta)
    b1, b0 = params.lambda1 / s, params.lambda0 / s
    phi = pi / (1.0 - pi)
    up = params.delta > 0
    f_pi = float(fv(np.array([pi]))[0])

    def integrand(u):
        if up:
            target = phi / (phi + u)
        else:
            target = phi * u / (1.0 + phi * u)
        weight = (pi * u ** (b1 - 1.0) + (1.0 - pi) * u ** (b0 - 1.0)) / s
        return (fv(target) - f_pi) * weight

    cuts = []
    for level in breakpoints:
        if not 0.0 < level < 1.0:
            continue
        phib = level / (1.0 - level)
        cut = phi / phib if up else phib / phi
        if 0.0 < cut < 1.0:
            cuts.append(cut)
    jump = integrate(integrand, 0.0, 1.0, tol=quad_tol, breakpoints=cuts)
    return drift + jump


# ---------------------------------------------------------------------------
# direct Bayes oracle


def _simpson(fun, a, b, n):
    x = np.linspace(a, b, 2 * n + 1)
    y = fun(x)
    h = (b - a) / (2 * n)
    return h / 3.0 * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-1:2].sum())


def direct_bayes_posterior(jumps: Iterable[tuple[float, float]], t: float, pi0: float,
                           params: ModelParams, grid_tol: float = 1e-10) -> float:
    """Posterior ``P[theta <= t | jumps on [0, t]]`` by explicit Bayes over the disorder time.

    Independent of the flow/jump recursion: the likelihood of the marked
    jump record is written down for every candidate disorder time ``s`` and
    mixed over the prior ``pi0*delta_0 + (1-pi0)*Exp(lam)``.  The mixture over
    ``s in (0, t]`` is integrated by composite Simpson on each inter-jump
    segment, doubling until successive totals differ by less than
    ``grid_tol`` relative.
    """
    jumps = sorted((float(a), float(b)) for a, b in jumps)
    times = np.array([j[0] for j in jumps], dtype=float)
    marks = np.array([j[1] for j in jumps], dtype=float)
    if np.any(np.diff(times) <= 0) or (times.size and (times[0] < 0 or times[-1] > t)):
        raise ValueError("jump times must be strictly increasing within [0, t]")
    if t == 0.0 or pi0 >= 1.0:
        return float(pi0)

    l0, l1, lam = params.lambda0, params.lambda1, params.lam
    # log-likelihood when the disorder happens at s: rates 1/l0 then 1/l1, marks
    # with densities l_i exp(-l_i x); rate times density is exp(-l_i x).
    cum_pre = np.concatenate([[0.0], np.cumsum(l0 * marks)])   # jumps before s
    cum_post = np.concatenate([[0.0], np.cumsum(l1 * marks[::-1])])[::-1]  # jumps at/after s
    n = times.size

    def loglik(s, idx):
        # idx jumps happen strictly before s
        return -s / l0 - (t - s) / l1 - cum_pre[idx] - cum_post[idx]

    log_at0 = loglik(0.0, 0)
    log_pre = -t / l0 - cum_pre[n]
    edges = np.concatenate([[0.0], times, [t]])
    # reference level for the scaled integrand
    ref = max(log_at0, log_pre - lam * t,
              max(loglik(e, i) for i, e in enumerate(edges[1:-1], start=1)) if n else log_at0,
              loglik(t, n) - lam * t)

    def segment_integral(i, m):
        a, b = edges[i], edges[i + 1]
        if b <= a:
            return 0.0
        return _simpson(lambda s: lam * np.exp(-lam * s + loglik(s, i) - ref), a, b, m)

    m = 4
    prev = sum(segment_integral(i, m) for i in range(n + 1))
    while True:
        m *= 2
        cur = sum(segment_integral(i, m) for i in range(n + 1))
        if abs(cur - prev) <= grid_tol * max(cur, 1e-300) or m > 2 ** 16:
            break
        prev = cur
    after = pi0 * np.exp(log_at0 - ref) + (1.0 - pi0) * cur
    before = (1.0 - pi0) * np.exp(-lam * t + log_pre - ref)
    return float(after / (after + before))


__all__ = [
    "flow", "flow_integral", "flow_hit_time", "jump_update", "apply_generator",
    "direct_bayes_posterior", "QuadratureError",
]
