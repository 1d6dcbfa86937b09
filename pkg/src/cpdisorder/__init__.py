"""Quickest detection of a change in the jump law of a compound Poisson process."""

from .bayes import BayesSolution, DivergenceError, RootBracketError, solve_bayes
from .model import PRESETS, CaseLabel, ModelParams, ParameterError, classify_case, thresholds
from .posterior import apply_generator, flow, flow_hit_time, jump_update
from .simulate import RiskEstimate, SimConfig
from .variational import Directive, VariationalSolution, false_alarm_u, solve_variational

__all__ = [
    "BayesSolution", "CaseLabel", "Directive", "DivergenceError", "ModelParams", "PRESETS",
    "ParameterError", "RiskEstimate", "RootBracketError", "SimConfig", "VariationalSolution",
    "apply_generator", "classify_case", "false_alarm_u", "flow", "flow_hit_time", "jump_update",
    "solve_bayes", "solve_variational", "thresholds",
]
