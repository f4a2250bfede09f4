"""Bracketed taxation, redistribution, and selfishness-weighted reward mixing.

The tax instrument is a piecewise-linear marginal tax over apple income.
Collected tax is pooled and redistributed as an equal per-capita share, so
total post-tax reward always equals total income. Agents then experience a
mix of their own post-tax reward and the population total, weighted by a
per-agent selfishness coefficient.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolationError

DEFAULT_BRACKET_EDGES = (0, 10, 20, 10000)


@dataclass(frozen=True)
class TaxSchedule:
    """Ascending bracket edges plus one marginal rate per bracket.

    ``edges`` has length B+1 with ``edges[0] == 0``; ``weights`` has length B
    with every rate in [0, 1]. Income above ``edges[-1]`` is untaxed.
    Edges and weights may be exact number types (int, Fraction) for
    exact-arithmetic accounting; the array code paths use float64.
    """

    edges: tuple
    weights: tuple

    def __post_init__(self):
        edges = tuple(self.edges)
        weights = tuple(self.weights)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "weights", weights)
        if len(edges) != len(weights) + 1:
            raise ValueError("need len(edges) == len(weights) + 1")
        if len(weights) == 0:
            raise ValueError("schedule needs at least one bracket")
        if edges[0] != 0:
            raise ValueError("first bracket edge must be 0")
        if any(hi <= lo for lo, hi in zip(edges, edges[1:])):
            raise ValueError("bracket edges must be strictly ascending")
        if any(not (0 <= w <= 1) for w in weights):
            raise ValueError("bracket weights must lie in [0, 1]")

    @property
    def n_brackets(self) -> int:
        return len(self.weights)

    def brackets(self):
        """Iterate (lower edge, upper edge, rate) triples."""
        return zip(self.edges[:-1], self.edges[1:], self.weights)

    @classmethod
    def zero(cls, edges=DEFAULT_BRACKET_EDGES) -> "TaxSchedule":
        return cls(tuple(edges), (0,) * (len(edges) - 1))


@dataclass(frozen=True)
class AgentType:
    """Per-agent selfishness and the value reported to the vote.

    ``sigma`` weights own post-tax reward against the population total;
    ``reported_sigma`` is what enters the vote (defaults to the true value).
    """

    sigma: float
    reported_sigma: float = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.reported_sigma is None:
            object.__setattr__(self, "reported_sigma", self.sigma)
        for name in ("sigma", "reported_sigma"):
            v = getattr(self, name)
            if not (0 <= v <= 1):
                raise ValueError(f"{name} must lie in [0, 1]")


def tax_due(income, schedule: TaxSchedule):
    """Marginal tax due on ``income`` apples.

    Per bracket b with edges (lo, hi) and rate w, the bracket contributes
    ``w * (hi - lo)`` when income exceeds hi, and ``w * (income - lo)`` when
    lo < income <= hi. Scalar inputs keep their arithmetic type (Fraction in,
    Fraction out); ndarray inputs are evaluated in float64.
    """
    if isinstance(income, np.ndarray):
        a = np.asarray(income, dtype=np.float64)
        if (a < 0).any():
            raise ValueError("income must be non-negative")
        total = np.zeros_like(a)
        for lo, hi, rate in schedule.brackets():
            total += rate * ((hi - lo) * (a > hi) + (a - lo) * ((lo < a) & (a <= hi)))
        return total
    if income < 0:
        raise ValueError("income must be non-negative")
    total = 0
    for lo, hi, rate in schedule.brackets():
        if income > hi:
            total = total + rate * (hi - lo)
        elif lo < income <= hi:
            total = total + rate * (income - lo)
    return total


def redistribute(apples, schedule: TaxSchedule):
    """Post-tax reward per agent: own income minus tax, plus an equal share
    of the pooled tax. Conserves the total: sum(result) == sum(apples).

    ndarray in, float64 ndarray out; any other sequence is processed with
    element arithmetic (exact for Fraction entries).
    """
    if isinstance(apples, np.ndarray):
        if apples.size == 0:
            raise ValueError("empty agent vector")
        a = np.asarray(apples, dtype=np.float64)
        taxes = tax_due(a, schedule)
        return a - taxes + taxes.sum() / a.size
    n = len(apples)
    if n == 0:
        raise ValueError("empty agent vector")
    taxes = [tax_due(a, schedule) for a in apples]
    share = sum(taxes) / n
    return [a - t + share for a, t in zip(apples, taxes)]


def mixed_reward(
    apples: np.ndarray,
    sigmas: np.ndarray,
    schedule: TaxSchedule,
    visibility: np.ndarray | None = None,
) -> np.ndarray:
    """Selfishness-weighted mix of own post-tax reward and the group total.

    r_i = sigma_i * r_tax_i + (1 - sigma_i) * sum_j r_tax_j, with the sum
    over all agents by default. ``visibility`` (n x n boolean, row i = which
    agents i counts, self included) restricts the sum to each agent's field
    of view.
    """
    a = np.asarray(apples, dtype=np.float64)
    s = np.asarray(sigmas, dtype=np.float64)
    if a.shape != s.shape:
        raise ValueError("apples and sigmas must have matching lengths")
    if ((s < 0) | (s > 1)).any():
        raise ValueError("sigma values must lie in [0, 1]")
    r_tax = redistribute(a, schedule)
    if visibility is None:
        totals = r_tax.sum()
    else:
        vis = np.asarray(visibility, dtype=bool)
        if vis.shape != (a.size, a.size):
            raise ValueError("visibility must be an n x n matrix")
        totals = vis.astype(np.float64) @ r_tax
    return s * r_tax + (1 - s) * totals


def apply_tax_period(state, schedule: TaxSchedule, period_length: int) -> np.ndarray:
    """Levy and redistribute tax on the period tallies, resetting them.

    Must be called exactly at a period boundary (step clock a positive
    multiple of ``period_length``); round tallies are left intact.
    """
    if period_length < 1:
        raise ValueError("period_length must be >= 1")
    if state.step_clock <= 0 or state.step_clock % period_length != 0:
        raise ContractViolationError(
            f"tax applied off-boundary: clock {state.step_clock} is not a "
            f"positive multiple of the period length {period_length}"
        )
    counts = state.apples_this_period.astype(np.float64)
    rewards = redistribute(counts, schedule)
    state.apples_this_period[:] = 0
    return rewards
