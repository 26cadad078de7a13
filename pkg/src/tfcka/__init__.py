"""Rate engine for conference key agreement based on single-photon interference."""

from .channel_model import (
    REFERENCE_MISALIGNMENT,
    ChannelStatistics,
    SetupParams,
    UndefinedStatisticsError,
    base_statistics,
    dark_count_adjusted,
    loss_db_to_transmittance,
)
from .finite_key import SecuritySplit, gamma_correction, key_length
from .optimizer import OptimizationBudget, minimum_rounds, optimize_finite_key, optimize_q_asymptotic
from .rates import (
    RateResult,
    asymptotic_rate,
    direct_transmission_bound,
    subgroup_optimized_rate,
)

__version__ = "0.1.0"

__all__ = [
    "REFERENCE_MISALIGNMENT",
    "ChannelStatistics",
    "OptimizationBudget",
    "RateResult",
    "SecuritySplit",
    "SetupParams",
    "UndefinedStatisticsError",
    "asymptotic_rate",
    "base_statistics",
    "dark_count_adjusted",
    "direct_transmission_bound",
    "gamma_correction",
    "key_length",
    "loss_db_to_transmittance",
    "minimum_rounds",
    "optimize_finite_key",
    "optimize_q_asymptotic",
    "subgroup_optimized_rate",
]
