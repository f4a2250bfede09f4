"""harvestgov: a governed apple-commons simulator.

Agents vote on a welfare objective, a designer sets a bracketed tax schedule,
and learning agents harvest a depletable commons under the resulting
incentives. Includes an exact finite-game leader-follower equilibrium oracle
for desk-scale verification.
"""

from .config import RunConfig, default_config, load_config
from .fiscal import AgentType, TaxSchedule, mixed_reward, redistribute, tax_due
from .grid import GridConfig, HarvestEnv, PomgState, state_hash
from .stackelberg import (
    EquilibriumTolerance,
    FiniteStackelbergGame,
    brute_force_stackelberg,
    verify_ssmne,
)
from .welfare import (
    WelfareObjective,
    egalitarian,
    interpolated_objective,
    nash_welfare,
    social_choice_mean,
    utilitarian,
)

__version__ = "0.1.0"

__all__ = [
    "AgentType",
    "EquilibriumTolerance",
    "FiniteStackelbergGame",
    "GridConfig",
    "HarvestEnv",
    "PomgState",
    "RunConfig",
    "TaxSchedule",
    "WelfareObjective",
    "brute_force_stackelberg",
    "default_config",
    "egalitarian",
    "interpolated_objective",
    "load_config",
    "mixed_reward",
    "nash_welfare",
    "redistribute",
    "social_choice_mean",
    "state_hash",
    "tax_due",
    "utilitarian",
    "verify_ssmne",
]
