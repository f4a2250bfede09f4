"""Shared helpers: independent oracles and fixture paths."""

from __future__ import annotations

from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from harvestgov.fiscal import TaxSchedule

REPO_ROOT = Path(__file__).resolve().parents[1]
DEFAULT_CONFIG = REPO_ROOT / "configs" / "default.yaml"
SAMPLE_GAME = REPO_ROOT / "games" / "leader_advantage_2x2.txt"


def per_unit_tax_oracle(income: int, schedule: TaxSchedule):
    """Independent oracle: sum the marginal rate of every whole apple unit.

    Unit u falls in bracket b when edges[b] < u <= edges[b+1]; units above
    the last edge are untaxed. Exact when given exact rate types.
    """
    total = 0
    for u in range(1, income + 1):
        for lo, hi, rate in schedule.brackets():
            if lo < u <= hi:
                total = total + rate
                break
    return total


def random_schedule(rng: np.random.Generator, exact: bool = False) -> TaxSchedule:
    """Random bracket structure; dyadic (exactly representable) rates when
    ``exact`` so float and rational arithmetic agree bit for bit."""
    n_brackets = int(rng.integers(1, 6))
    widths = rng.integers(1, 40, size=n_brackets)
    edges = (0,) + tuple(int(v) for v in np.cumsum(widths))
    if exact:
        weights = tuple(Fraction(int(k), 1024) for k in rng.integers(0, 1025, size=n_brackets))
    else:
        weights = tuple(float(w) for w in rng.uniform(0, 1, size=n_brackets))
    return TaxSchedule(edges, weights)


def finite_difference_grads(loss_fn, theta: np.ndarray, h: float) -> np.ndarray:
    """Central finite differences of a scalar function of a flat vector."""
    fd = np.zeros_like(theta)
    for i in range(theta.size):
        up = theta.copy()
        up[i] += h
        down = theta.copy()
        down[i] -= h
        fd[i] = (loss_fn(up) - loss_fn(down)) / (2 * h)
    return fd


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
