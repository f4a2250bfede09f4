"""Social welfare functions, the vote over them, and the designer's reward.

Agents report their selfishness; the mean report becomes the interpolation
weight between total-output and worst-off-agent welfare. The environment
designer is rewarded by the change in the chosen welfare value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

OBJECTIVE_KINDS = ("utilitarian", "nash", "egalitarian", "interpolated")


@dataclass(frozen=True)
class WelfareObjective:
    """A named welfare function, or an interpolation weighted by ``eta``.

    ``eta`` = 1 recovers the utilitarian objective, 0 the egalitarian one.
    """

    kind: str
    eta: float | None = None

    def __post_init__(self):
        if self.kind not in OBJECTIVE_KINDS:
            raise ValueError(f"unknown objective kind: {self.kind!r}")
        if self.kind == "interpolated":
            if self.eta is None or not (0 <= self.eta <= 1):
                raise ValueError("interpolated objective needs eta in [0, 1]")
        elif self.eta is not None:
            raise ValueError(f"{self.kind} objective takes no eta")


@dataclass(frozen=True)
class VoteRecord:
    """One round's vote: the reports submitted and the objective chosen."""

    round_index: int
    reports: tuple
    chosen: WelfareObjective


def _utilities(u) -> np.ndarray:
    arr = np.asarray(u, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("empty utility vector")
    return arr


def utilitarian(u) -> float:
    """Sum of agent utilities."""
    return float(_utilities(u).sum())


def nash_welfare(u) -> float:
    """Geometric mean of agent utilities (non-negative domain).

    Computed in log space for n > 1 so products of many small utilities do
    not underflow; any zero utility gives zero welfare.
    """
    arr = _utilities(u)
    if (arr < 0).any():
        raise ValueError("nash welfare requires non-negative utilities")
    if (arr == 0).any():
        return 0.0
    if arr.size == 1:
        return float(arr[0])
    return float(np.exp(np.log(arr).mean()))


def egalitarian(u) -> float:
    """Minimum agent utility."""
    return float(_utilities(u).min())


def interpolated_objective(totals, eta: float) -> float:
    """eta * (total) + (1 - eta) * (minimum), over per-agent totals."""
    if not (0 <= eta <= 1):
        raise ValueError("eta must lie in [0, 1]")
    arr = _utilities(totals)
    return float(eta * arr.sum() + (1 - eta) * arr.min())


def social_choice_mean(reports, principal_report: float | None = None) -> float:
    """Mean of the reported selfishness values; the result is the vote's eta.

    ``principal_report``, when given, enters the average like one extra
    report (a designer-bias hook; disabled by default).
    """
    arr = np.asarray(reports, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("empty report vector")
    if ((arr < 0) | (arr > 1)).any():
        raise ValueError("reports must lie in [0, 1]")
    if principal_report is not None:
        if not (0 <= principal_report <= 1):
            raise ValueError("principal report must lie in [0, 1]")
        arr = np.append(arr, principal_report)
    return float(arr.mean())


def objective_value(objective: WelfareObjective, u) -> float:
    if objective.kind == "utilitarian":
        return utilitarian(u)
    if objective.kind == "nash":
        return nash_welfare(u)
    if objective.kind == "egalitarian":
        return egalitarian(u)
    return interpolated_objective(u, objective.eta)


def principal_reward(objective: WelfareObjective, totals_before, totals_after) -> float:
    """Change in objective value between two per-agent total snapshots."""
    before = np.asarray(totals_before, dtype=np.float64)
    after = np.asarray(totals_after, dtype=np.float64)
    if before.shape != after.shape:
        raise ValueError("total vectors must have matching lengths")
    return objective_value(objective, after) - objective_value(objective, before)
