"""The tax designer's discrete action space, schedule selection, and the
two-phase annealing curriculum that caps the maximum rate early in training."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fiscal import TaxSchedule
from .nets import PolicyNetwork

DEFAULT_RATE_LEVELS = 21  # 0.00, 0.05, ..., 1.00


@dataclass
class PrincipalActionSpace:
    """Per-bracket discrete rate grid plus the current anneal ceiling."""

    rate_levels: np.ndarray
    ceiling: float = 1.0

    def __post_init__(self):
        levels = np.asarray(self.rate_levels, dtype=np.float64)
        if levels.ndim != 1 or levels.size < 1:
            raise ValueError("rate_levels must be a non-empty vector")
        if (np.diff(levels) <= 0).any():
            raise ValueError("rate_levels must be strictly ascending")
        if levels[0] < 0 or levels[-1] > 1:
            raise ValueError("rate_levels must lie in [0, 1]")
        if not (0 <= self.ceiling <= 1):
            raise ValueError("ceiling must lie in [0, 1]")
        self.rate_levels = levels

    @classmethod
    def uniform(cls, n_levels: int = DEFAULT_RATE_LEVELS, ceiling: float = 1.0):
        if n_levels < 2:
            raise ValueError("need at least two rate levels")
        return cls(np.linspace(0.0, 1.0, n_levels), ceiling)


def anneal_ceiling(round_index: int, tax_free_rounds: int = 20, rise_rounds: int = 50) -> float:
    """Maximum permitted rate at a given round.

    Phase 1 (the first ``tax_free_rounds`` rounds): 0, so agents learn the
    untaxed game first. Phase 2: rises linearly to 1 over ``rise_rounds``
    rounds and stays there.
    """
    if round_index < 0:
        raise ValueError("round_index must be >= 0")
    if tax_free_rounds < 0 or rise_rounds < 1:
        raise ValueError("invalid anneal phase lengths")
    if round_index < tax_free_rounds:
        return 0.0
    return min(1.0, (round_index - tax_free_rounds) / rise_rounds)


def select_tax_schedule(
    net: PolicyNetwork,
    obs_vec: np.ndarray,
    space: PrincipalActionSpace,
    bracket_edges,
    rng: np.random.Generator,
    prev_weights=None,
    max_change: float | None = None,
):
    """Sample one rate per bracket and assemble the resulting schedule.

    Sampled rates are clamped to the anneal ceiling and, when a per-round
    divergence bound is configured, to within ``max_change`` of the previous
    schedule. The recorded log-probability is that of the sampled grid
    levels (the clamp is part of how an action is implemented, not of the
    policy distribution).

    Returns (schedule, level indices, logp, value).
    """
    obs = np.asarray(obs_vec, dtype=np.float64).reshape(1, -1)
    actions, logp, values = net.sample(obs, rng)
    rates = space.rate_levels[actions[0]]
    rates = np.minimum(rates, space.ceiling)
    if max_change is not None:
        if prev_weights is None:
            raise ValueError("divergence bound needs the previous schedule")
        prev = np.asarray(prev_weights, dtype=np.float64)
        rates = np.clip(rates, prev - max_change, prev + max_change)
        rates = np.clip(rates, 0.0, 1.0)
    schedule = TaxSchedule(tuple(bracket_edges), tuple(float(r) for r in rates))
    return schedule, actions[0], float(logp[0]), float(values[0])
