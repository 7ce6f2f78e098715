"""Restless multi-armed bandit toolkit.

Exact Whittle-index computation, an index-based tabular Q-learning policy
with benchmark baselines, instance generators, and a seeded simulation
harness with CSV and figure output.
"""

from .mdp import ArmMdp, DynamicsEvent, RmabInstance, reward, sample_transition, validate, validate_instance
from .whittle import (
    AVERAGE,
    DISCOUNTED,
    IndexabilityReport,
    SubsidySolution,
    check_indexability,
    default_lambda_bound,
    index_table,
    solve_subsidized,
    whittle_index,
)

__version__ = "0.1.0"

from .policies import Policy, build_policy, top_m  # noqa: E402
from .sim import AggregateSeries, TrialLog, aggregate, run_episode, run_trials  # noqa: E402

__all__ = [
    "ArmMdp",
    "DynamicsEvent",
    "RmabInstance",
    "reward",
    "sample_transition",
    "validate",
    "validate_instance",
    "AVERAGE",
    "DISCOUNTED",
    "IndexabilityReport",
    "SubsidySolution",
    "check_indexability",
    "default_lambda_bound",
    "index_table",
    "solve_subsidized",
    "whittle_index",
    "Policy",
    "build_policy",
    "top_m",
    "AggregateSeries",
    "TrialLog",
    "aggregate",
    "run_episode",
    "run_trials",
    "__version__",
]
