"""Off-policy evaluation for piecewise-stationary contextual bandits and MDPs."""

from .core import IntervalDataset, LoggedInteraction, Policy, Population, RewardTable, ValidationError
from .bandit_estimators import (
    PopTotalMode,
    diff_estimate,
    dm_estimate,
    dr_estimate,
    is_estimate,
    reg_estimate,
    wis_estimate,
)

__version__ = "0.1.0"

__all__ = [
    "IntervalDataset",
    "LoggedInteraction",
    "Policy",
    "Population",
    "PopTotalMode",
    "RewardTable",
    "ValidationError",
    "diff_estimate",
    "dm_estimate",
    "dr_estimate",
    "is_estimate",
    "reg_estimate",
    "wis_estimate",
]
