"""Problem parameters, derived thresholds and regime classification.

The observed process is a compound Poisson process whose jumps arrive at rate
``1/lambda0`` with ``Exp(lambda0)`` sizes before the disorder time and at rate
``1/lambda1`` with ``Exp(lambda1)`` sizes after it.  The disorder time is 0
with probability ``pi0`` and otherwise exponential with rate ``lam``.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Optional

CASE_TOL = 1e-12


class ParameterError(ValueError):
    """Invalid model parameter; ``field`` names the offending input."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class CaseLabel(enum.Enum):
    I = "I"
    II = "II"
    III = "III"
    IV = "IV"


@dataclass(frozen=True)
class ModelParams:
    """One problem instance.

    Attributes:
        lambda0: pre-disorder jump-size rate.
        lambda1: post-disorder jump-size rate.
        lam: disorder hazard rate (``lambda`` in JSON and on the CLI).
        c: delay cost per unit time.
        pi0: prior probability that the disorder has already happened.
    """

    lambda0: float
    lambda1: float
    lam: float
    c: float
    pi0: float = 0.0

    def __post_init__(self):
        for name in ("lambda0", "lambda1", "lam", "c"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ParameterError(_json_name(name), "must be a finite number")
            if value <= 0:
                raise ParameterError(_json_name(name), f"must be > 0, got {value}")
        if not isinstance(self.pi0, (int, float)) or not 0.0 <= self.pi0 <= 1.0:
            raise ParameterError("pi0", f"must lie in [0, 1], got {self.pi0}")
        if self.lambda0 == self.lambda1:
            raise ParameterError(
                "lambda1", "must differ from lambda0 (equal rates make the disorder unobservable)"
            )

    # derived constants -------------------------------------------------

    @property
    def delta(self) -> float:
        return self.lambda0 - self.lambda1

    @property
    def rho(self) -> float:
        """Drift coefficient ``(lambda0 - lambda1) / (lambda0 lambda1)``."""
        return self.delta / (self.lambda0 * self.lambda1)

    @property
    def gamma(self) -> float:
        return self.lambda0 / self.delta

    @property
    def B_bar(self) -> float:
        return self.lam / (self.lam + self.c)

    @property
    def B_hat(self) -> Optional[float]:
        """Fixed point of the between-jump flow; ``None`` when lambda0 < lambda1."""
        if self.delta < 0:
            return None
        return self.lam * self.lambda0 * self.lambda1 / self.delta

    @property
    def singular_scale(self) -> float:
        """``lam*lambda0*lambda1 / (lambda0 - lambda1)``; equals B_hat when lambda0 > lambda1."""
        return self.lam * self.lambda0 * self.lambda1 / self.delta

    @property
    def a(self) -> Optional[float]:
        """Exponent of the G kernel, undefined on the exponential branch."""
        denom = self.delta - self.lam * self.lambda0 * self.lambda1
        if denom == 0:
            return None
        return self.lambda1 * (1.0 + self.lam * self.lambda0) / denom

    @property
    def case_gap(self) -> float:
        """``c - (1/lambda1 - 1/lambda0 - lam)``; its sign separates cases I-III."""
        return self.c - (1.0 / self.lambda1 - 1.0 / self.lambda0 - self.lam)

    def replace(self, **changes: Any) -> "ModelParams":
        fields = dict(lambda0=self.lambda0, lambda1=self.lambda1, lam=self.lam, c=self.c, pi0=self.pi0)
        fields.update(changes)
        return ModelParams(**fields)

    def to_dict(self) -> dict:
        return {"lambda0": self.lambda0, "lambda1": self.lambda1, "lambda": self.lam,
                "c": self.c, "pi0": self.pi0}

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "ModelParams":
        kwargs = {}
        for key in ("lambda0", "lambda1", "lambda", "c"):
            if key not in data:
                raise ParameterError(key, "missing")
            kwargs[key] = data[key]
        pi0 = data.get("pi0", 0.0)
        for key, value in list(kwargs.items()) + [("pi0", pi0)]:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ParameterError(key, f"must be a number, got {value!r}")
        return cls(lambda0=float(kwargs["lambda0"]), lambda1=float(kwargs["lambda1"]),
                   lam=float(kwargs["lambda"]), c=float(kwargs["c"]), pi0=float(pi0))


def _json_name(field: str) -> str:
    return "lambda" if field == "lam" else field


def load_params(path: str | Path) -> ModelParams:
    """Read parameters from a JSON file with keys lambda0, lambda1, lambda, c, pi0."""
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ParameterError("config", "top-level JSON value must be an object")
    return ModelParams.from_mapping(data)


# One preset per regime of the Bayesian solution.
PRESETS = {
    "case1": ModelParams(lambda0=2.0, lambda1=1.0, lam=0.1, c=1.0),
    "case2": ModelParams(lambda0=2.0, lambda1=1.0, lam=0.1, c=0.4),
    "case3": ModelParams(lambda0=2.0, lambda1=1.0, lam=0.1, c=0.1),
    "case4": ModelParams(lambda0=1.0, lambda1=2.0, lam=0.1, c=1.0),
}


def thresholds(params: ModelParams) -> tuple[float, Optional[float]]:
    """Return ``(B_bar, B_hat)``; ``B_hat`` is ``None`` when lambda0 < lambda1 and may exceed 1."""
    return params.B_bar, params.B_hat


def classify_case(params: ModelParams) -> CaseLabel:
    if params.delta < 0:
        return CaseLabel.IV
    gap = params.case_gap
    if abs(gap) <= CASE_TOL * max(1.0, params.c):
        return CaseLabel.II
    return CaseLabel.I if gap > 0 else CaseLabel.III


def likelihood_ratio(x: float, params: ModelParams) -> float:
    """Density ratio ``Y(x) = exp((lambda0 - lambda1) x)`` of post- to pre-disorder jump measures."""
    if x < 0:
        raise ValueError(f"jump size must be >= 0, got {x}")
    return math.exp(params.delta * x)


def moment_condition_boundary(m0: float, m1: float, dominates: bool, lam: float, c: float) -> Optional[float]:
    """Sufficient condition for the boundary ``lam/(lam+c)`` from mean-jump integrals.

    ``m0`` and ``m1`` are the first moments of the pre- and post-disorder Levy
    measures, ``dominates`` whether the post-disorder measure dominates the
    pre-disorder one.  Returns the boundary when ``0 < m1 - m0 <= c + lam``
    holds together with domination, else ``None``.
    """
    if not (m0 > 0 and m1 > 0 and math.isfinite(m0) and math.isfinite(m1)):
        raise ValueError("moments must be finite and positive")
    diff = m1 - m0
    if dominates and 0 < diff <= c + lam:
        return lam / (lam + c)
    return None
