"""Exact event-driven Monte Carlo for threshold rules.

Paths are simulated in fixed-size blocks, all paths of a block advancing in
lockstep one inter-jump interval at a time.  Between jumps the posterior is
moved with the closed-form flow, a crossing of ``B`` inside an interval is
located with the closed-form hitting time, and the running integral of the
posterior is accumulated in closed form.  Nothing is time-discretised.

Block ``k`` draws from ``SeedSequence(seed, spawn_key=(k,))``, so results
depend only on ``(seed, n_paths)`` and not on how blocks are spread over
worker processes.
"""

from __future__ import annotations

import csv
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .model import ModelParams
from .posterior import _flow, _flow_hit_time, _jump, flow_integral

BLOCK_SIZE = 4096
CAP_WARN = 1e-4


@dataclass(frozen=True)
class SimConfig:
    n_paths: int
    seed: int
    horizon_cap: Optional[float] = None  # default 50/lam
    B: Optional[float] = None
    workers: int = 1

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if self.horizon_cap is not None and not self.horizon_cap > 0:
            raise ValueError("horizon_cap must be > 0")
        if self.B is not None and not 0.0 < self.B <= 1.0:
            raise ValueError("B must lie in (0, 1]")

    def cap_for(self, params: ModelParams) -> float:
        return self.horizon_cap if self.horizon_cap is not None else 50.0 / params.lam


@dataclass(frozen=True)
class PathOutcome:
    theta: float
    tau: float
    false_alarm: bool
    delay: float
    capped: bool
    pi_tau: float
    events: list = field(default_factory=list)  # (time, mark, pi_before, pi_after)


@dataclass(frozen=True)
class RiskEstimate:
    mean: float
    stderr: float
    n: int
    capped_fraction: float
    indicator_mean: Optional[float] = None
    indicator_stderr: Optional[float] = None

    def to_dict(self) -> dict:
        out = {"mean": self.mean, "stderr": self.stderr, "n": self.n,
               "capped_fraction": self.capped_fraction}
        if self.indicator_mean is not None:
            out["indicator_mean"] = self.indicator_mean
            out["indicator_stderr"] = self.indicator_stderr
        return out


@dataclass
class Batch:
    """Per-path results of a simulation run, in path order."""

    theta: np.ndarray
    tau: np.ndarray
    pi_tau: np.ndarray
    integral: np.ndarray  # int_0^tau pi_t dt
    capped: np.ndarray

    @property
    def n(self) -> int:
        return self.theta.size


def sample_disorder(pi0: float, lam: float, rng: np.random.Generator, size=None):
    """Disorder time: 0 with probability ``pi0``, else exponential with rate ``lam``."""
    if not 0.0 <= pi0 <= 1.0:
        raise ValueError("pi0 must lie in [0, 1]")
    at_zero = rng.random(size) < pi0
    later = rng.exponential(1.0 / lam, size)
    out = np.where(at_zero, 0.0, later)
    return float(out) if size is None else out


def _simulate(params: ModelParams, B: float, n: int, rng: np.random.Generator, cap: float,
              record: bool = False):
    l0, l1 = params.lambda0, params.lambda1
    theta = sample_disorder(params.pi0, params.lam, rng, n)
    t = np.zeros(n)
    pi = np.full(n, params.pi0)
    tau = np.zeros(n)
    pi_tau = np.full(n, params.pi0)
    integral = np.zeros(n)
    capped = np.zeros(n, dtype=bool)
    events = []
    active = np.flatnonzero(pi < B)
    while active.size:
        m = active.size
        ta, pa, tha = t[active], pi[active], theta[active]
        pre = ta < tha
        e1, e2, em = rng.standard_exponential(m), rng.standard_exponential(m), rng.standard_exponential(m)
        # mean inter-arrival equals lambda_i (rate 1/lambda_i)
        nxt = ta + np.where(pre, l0, l1) * e1
        switched = pre & (nxt > tha)
        nxt = np.where(switched, tha + l1 * e2, nxt)
        post_at_jump = nxt >= tha
        mark = em / np.where(post_at_jump, l1, l0)

        dt = nxt - ta
        hit = _flow_hit_time(pa, np.full(m, B), params)
        room = cap - ta
        crossed = hit <= dt
        span = np.minimum(np.where(crossed, hit, dt), room)
        over = np.minimum(hit, dt) > room
        integral[active] += flow_integral(pa, span, params)
        moved = _flow(pa, span, params)

        stop_cap = over
        stop_flow = crossed & ~over
        go = ~crossed & ~over
        new_pi = moved.copy()
        new_pi[stop_flow] = B
        jumped = _jump(moved[go], mark[go], params)
        new_pi[go] = jumped
        if record and np.any(go):
            events.append((float(nxt[go][0]), float(mark[go][0]), float(moved[go][0]), float(jumped[0])))

        t[active] = np.where(go, nxt, ta + span)
        pi[active] = new_pi
        done = stop_cap | stop_flow | (go & (new_pi >= B))
        idx = active[done]
        tau[idx] = t[idx]
        pi_tau[idx] = pi[idx]
        capped[active[stop_cap]] = True
        active = active[~done]
    batch = Batch(theta=theta, tau=tau, pi_tau=pi_tau, integral=integral, capped=capped)
    return (batch, events) if record else batch


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))


def _run_block(args):
    params, B, seed, block, n, cap = args
    return _simulate(params, B, n, _block_rng(seed, block), cap)


def simulate_paths(params: ModelParams, B: float, config: SimConfig) -> Batch:
    """Simulate ``config.n_paths`` independent paths of the threshold rule at ``B``."""
    if not 0.0 < B <= 1.0:
        raise ValueError("B must lie in (0, 1]")
    cap = config.cap_for(params)
    sizes = [BLOCK_SIZE] * (config.n_paths // BLOCK_SIZE)
    if config.n_paths % BLOCK_SIZE:
        sizes.append(config.n_paths % BLOCK_SIZE)
    jobs = [(params, B, config.seed, k, n, cap) for k, n in enumerate(sizes)]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            parts = list(pool.map(_run_block, jobs))
    else:
        parts = [_run_block(j) for j in jobs]
    return Batch(*(np.concatenate([getattr(p, name) for p in parts])
                   for name in ("theta", "tau", "pi_tau", "integral", "capped")))


def sample_path(params: ModelParams, B: float, rng: np.random.Generator,
                horizon_cap: Optional[float] = None) -> PathOutcome:
    """One path of the threshold rule at ``B`` with its jump record."""
    cap = horizon_cap if horizon_cap is not None else 50.0 / params.lam
    batch, events = _simulate(params, B, 1, rng, cap, record=True)
    theta, tau = float(batch.theta[0]), float(batch.tau[0])
    return PathOutcome(theta=theta, tau=tau, false_alarm=tau < theta, delay=max(tau - theta, 0.0),
                       capped=bool(batch.capped[0]), pi_tau=float(batch.pi_tau[0]), events=events)


def _summarise(values: np.ndarray, batch: Batch, **extra) -> RiskEstimate:
    n = values.size
    mean = float(np.mean(values))
    stderr = float(np.std(values, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    capped = float(np.mean(batch.capped))
    if capped > CAP_WARN:
        warnings.warn(f"{capped:.2e} of paths hit the horizon cap and were scored at the cap",
                      RuntimeWarning, stacklevel=3)
    return RiskEstimate(mean=mean, stderr=stderr, n=n, capped_fraction=capped, **extra)


def direct_risk_samples(batch: Batch, params: ModelParams) -> np.ndarray:
    return (batch.tau < batch.theta) + params.c * np.maximum(batch.tau - batch.theta, 0.0)


def identity_risk_samples(batch: Batch, params: ModelParams) -> np.ndarray:
    return 1.0 - params.pi0 + (params.lam + params.c) * (batch.integral - params.B_bar * batch.tau)


def estimate_risk_direct(params: ModelParams, B: float, config: SimConfig,
                         batch: Optional[Batch] = None) -> RiskEstimate:
    """Mean of ``1{tau < theta} + c (tau - theta)^+`` over simulated paths."""
    batch = batch if batch is not None else simulate_paths(params, B, config)
    return _summarise(direct_risk_samples(batch, params), batch)


def estimate_risk_identity(params: ModelParams, B: float, config: SimConfig,
                           batch: Optional[Batch] = None) -> RiskEstimate:
    """Risk through ``1 - pi0 + (lam + c) E int_0^tau (pi_t - lam/(lam+c)) dt``."""
    batch = batch if batch is not None else simulate_paths(params, B, config)
    return _summarise(identity_risk_samples(batch, params), batch)


def estimate_false_alarm(params: ModelParams, B: float, config: SimConfig,
                         batch: Optional[Batch] = None) -> RiskEstimate:
    """``P[tau < theta]``: Rao-Blackwellised mean of ``1 - pi_tau``, indicator mean alongside."""
    batch = batch if batch is not None else simulate_paths(params, B, config)
    ind = (batch.tau < batch.theta).astype(float)
    n = ind.size
    ind_se = float(np.std(ind, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return _summarise(1.0 - batch.pi_tau, batch, indicator_mean=float(ind.mean()), indicator_stderr=ind_se)


SWEEP_COLUMNS = ("B", "risk_mean", "risk_stderr", "fa_mean", "fa_stderr", "n", "capped_fraction")


def sweep(params: ModelParams, thresholds: Iterable[float], config: SimConfig) -> list[dict]:
    """Direct risk and false-alarm estimates at each threshold, same seed throughout."""
    rows = []
    for B in thresholds:
        batch = simulate_paths(params, float(B), config)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            risk = estimate_risk_direct(params, B, config, batch)
            fa = estimate_false_alarm(params, B, config, batch)
        rows.append({"B": float(B), "risk_mean": risk.mean, "risk_stderr": risk.stderr,
                     "fa_mean": fa.mean, "fa_stderr": fa.stderr, "n": risk.n,
                     "capped_fraction": risk.capped_fraction})
    return rows


def write_sweep_csv(rows: Sequence[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def sweep_minimum_check(rows: Sequence[dict], B_star: float, k: float = 3.0) -> tuple[bool, int, int]:
    """Whether the grid point nearest ``B_star`` is within ``k`` combined SE of the sweep minimum.

    Returns ``(ok, index nearest B_star, index of the minimum)``.
    """
    Bs = np.array([r["B"] for r in rows])
    means = np.array([r["risk_mean"] for r in rows])
    ses = np.array([r["risk_stderr"] for r in rows])
    near = int(np.argmin(np.abs(Bs - B_star)))
    low = int(np.argmin(means))
    ok = means[near] - means[low] <= k * np.hypot(ses[near], ses[low])
    return bool(ok), near, low
