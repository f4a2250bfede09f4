"""Finite leader-follower games with an exact enumeration-based oracle.

A leader commits to an action; followers then play a simultaneous game among
themselves. The oracle enumerates pure strategies only: it finds, for each
leader action, the follower profiles in which every follower is within
``delta`` of its best response, and scores the leader optimistically over
those profiles (followers break indifference in the leader's favor, with a
deterministic lowest-index tie-break). ``verify_ssmne`` checks a candidate
profile against the same enumeration and reports the violated inequality
when the check fails.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import CapacityError, NoPureEquilibriumError

DEFAULT_ENUMERATION_CAP = 10_000_000


@dataclass(frozen=True)
class EquilibriumTolerance:
    """Leader slack ``epsilon`` and follower slack ``delta``, both >= 0."""

    epsilon: float
    delta: float

    def __post_init__(self):
        if self.epsilon < 0 or self.delta < 0:
            raise ValueError("tolerances must be non-negative")


class FiniteStackelbergGame:
    """Payoff tables for one leader and n followers, all actions finite.

    ``leader_payoff`` has shape (X, c_1, ..., c_n): leader action index
    first, then one axis per follower. ``follower_payoffs`` has shape
    (n, X, c_1, ..., c_n): follower i's payoff at every joint outcome.
    """

    def __init__(self, leader_payoff, follower_payoffs):
        lp = np.asarray(leader_payoff, dtype=np.float64)
        fp = np.asarray(follower_payoffs, dtype=np.float64)
        if lp.ndim < 2:
            raise ValueError("leader_payoff needs a leader axis plus one axis per follower")
        if fp.ndim != lp.ndim + 1 or fp.shape != (fp.shape[0],) + lp.shape:
            raise ValueError("follower_payoffs must have shape (n,) + leader_payoff.shape")
        if fp.shape[0] != lp.ndim - 1:
            raise ValueError("one follower axis required per follower")
        if min(lp.shape) < 1:
            raise ValueError("every action count must be >= 1")
        if not (np.isfinite(lp).all() and np.isfinite(fp).all()):
            raise ValueError("payoff entries must be finite")
        self.leader_payoff = lp
        self.follower_payoffs = fp

    @property
    def n_leader_actions(self) -> int:
        return self.leader_payoff.shape[0]

    @property
    def n_followers(self) -> int:
        return self.follower_payoffs.shape[0]

    @property
    def follower_action_counts(self) -> tuple[int, ...]:
        return self.leader_payoff.shape[1:]

    @property
    def profile_count(self) -> int:
        return int(np.prod(self.follower_action_counts, dtype=np.int64))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(game_to_text(self))

    @classmethod
    def load(cls, path) -> "FiniteStackelbergGame":
        with open(path, "r", encoding="utf-8") as fh:
            return game_from_text(fh.read())


@dataclass(frozen=True)
class StackelbergMarkovSpec:
    """Descriptive record tying a leader action space to the game it induces.

    ``implementation_map`` turns a leader action vector into the parameters
    of the induced multi-agent environment; this module does not solve such
    games, it only carries the wiring.
    """

    leader_dim: int
    leader_bounds: tuple
    implementation_map: Callable
    discount: float
    horizon: int

    def __post_init__(self):
        if self.leader_dim < 1:
            raise ValueError("leader action space needs at least one dimension")
        if not (0 <= self.discount < 1):
            raise ValueError("discount must lie in [0, 1)")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")


@dataclass(frozen=True)
class EquilibriumWitness:
    """A violated inequality: ``achieved < attainable - slack``.

    For a follower witness, ``deviation`` is the improving action of that
    follower. For a leader witness it is the (leader action, profile) pair
    attaining the benchmark.
    """

    side: str
    follower: int | None
    deviation: tuple
    achieved: float
    attainable: float
    slack: float


@dataclass(frozen=True)
class VerificationResult:
    passed: bool
    witness: EquilibriumWitness | None

    def __bool__(self) -> bool:
        return self.passed


@dataclass(frozen=True)
class StackelbergSolution:
    leader_action: int
    profile: tuple[int, ...]
    leader_value: float


def _check_capacity(game: FiniteStackelbergGame, cap: int) -> None:
    total = game.n_leader_actions * game.profile_count
    if total > cap:
        raise CapacityError(
            f"{total} leader/profile pairs exceed the enumeration cap of {cap}"
        )


def _validate_profile(game: FiniteStackelbergGame, leader_action, profile) -> tuple[int, ...]:
    if not (0 <= leader_action < game.n_leader_actions):
        raise ValueError(f"leader action {leader_action} out of range")
    prof = tuple(int(a) for a in profile)
    counts = game.follower_action_counts
    if len(prof) != len(counts):
        raise ValueError("profile length must equal the number of followers")
    for i, (a, c) in enumerate(zip(prof, counts)):
        if not (0 <= a < c):
            raise ValueError(f"follower {i} action {a} out of range")
    return prof


def _own_payoffs(game, follower, leader_action, profile) -> np.ndarray:
    """Follower's payoff vector over its own actions, everything else fixed."""
    table = game.follower_payoffs[follower, leader_action]
    index = tuple(profile[:follower]) + (slice(None),) + tuple(profile[follower + 1 :])
    return table[index]


def best_response_set(
    game: FiniteStackelbergGame, leader_action: int, profile, follower: int, delta: float
) -> set[int]:
    """Actions within ``delta`` of the follower's best payoff, all else fixed.

    ``profile`` is a full joint profile; the named follower's own entry is
    ignored.
    """
    if not (0 <= follower < game.n_followers):
        raise ValueError(f"follower index {follower} out of range")
    if delta < 0:
        raise ValueError("delta must be non-negative")
    prof = _validate_profile(game, leader_action, profile)
    own = _own_payoffs(game, follower, leader_action, prof)
    return set(int(a) for a in np.flatnonzero(own >= own.max() - delta))


def _delta_nash_mask(game: FiniteStackelbergGame, leader_action: int, delta: float) -> np.ndarray:
    """Boolean array over follower profiles that are delta-Nash among the
    followers under the given leader action."""
    mask = np.ones(game.follower_action_counts, dtype=bool)
    for i in range(game.n_followers):
        table = game.follower_payoffs[i, leader_action]
        best = table.max(axis=i, keepdims=True)
        mask &= table >= best - delta
    return mask


def verify_ssmne(
    game: FiniteStackelbergGame,
    leader_action: int,
    profile,
    tol: EquilibriumTolerance,
    enumeration_cap: int = DEFAULT_ENUMERATION_CAP,
) -> VerificationResult:
    """Check a candidate (leader action, follower profile) pair.

    Passes iff (a) every follower is within ``tol.delta`` of its best
    response given the others, and (b) the leader's payoff is within
    ``tol.epsilon`` of the best payoff attainable over all leader actions
    paired with delta-Nash follower profiles (optimistic follower
    tie-breaking). Exhaustive enumeration; fails fast with a witness.
    """
    prof = _validate_profile(game, leader_action, profile)
    _check_capacity(game, enumeration_cap)

    for i in range(game.n_followers):
        own = _own_payoffs(game, i, leader_action, prof)
        best = float(own.max())
        achieved = float(own[prof[i]])
        if achieved < best - tol.delta:
            return VerificationResult(
                False,
                EquilibriumWitness(
                    side="follower",
                    follower=i,
                    deviation=(int(own.argmax()),),
                    achieved=achieved,
                    attainable=best,
                    slack=tol.delta,
                ),
            )

    benchmark = -math.inf
    benchmark_arg: tuple | None = None
    for x in range(game.n_leader_actions):
        mask = _delta_nash_mask(game, x, tol.delta)
        if not mask.any():
            continue
        values = np.where(mask, game.leader_payoff[x], -np.inf)
        flat = int(values.argmax())
        v = float(values.flat[flat])
        if v > benchmark:
            benchmark = v
            benchmark_arg = (x, tuple(int(k) for k in np.unravel_index(flat, mask.shape)))
    achieved = float(game.leader_payoff[(leader_action,) + prof])
    if achieved < benchmark - tol.epsilon:
        return VerificationResult(
            False,
            EquilibriumWitness(
                side="leader",
                follower=None,
                deviation=benchmark_arg,
                achieved=achieved,
                attainable=benchmark,
                slack=tol.epsilon,
            ),
        )
    return VerificationResult(True, None)


def brute_force_stackelberg(
    game: FiniteStackelbergGame,
    delta: float,
    enumeration_cap: int = DEFAULT_ENUMERATION_CAP,
) -> StackelbergSolution:
    """Exact pure-strategy optimistic solution by exhaustive enumeration.

    Over all leader actions and all delta-Nash follower profiles, returns
    the pair maximizing the leader's payoff. Ties break toward the lowest
    leader action, then the lexicographically lowest profile.
    """
    if delta < 0:
        raise ValueError("delta must be non-negative")
    _check_capacity(game, enumeration_cap)
    best: tuple[float, int, tuple[int, ...]] | None = None
    for x in range(game.n_leader_actions):
        mask = _delta_nash_mask(game, x, delta)
        if not mask.any():
            continue
        values = np.where(mask, game.leader_payoff[x], -np.inf)
        flat = int(values.argmax())  # first occurrence = lowest profile index
        v = float(values.flat[flat])
        if best is None or v > best[0]:
            best = (v, x, tuple(int(k) for k in np.unravel_index(flat, mask.shape)))
    if best is None:
        raise NoPureEquilibriumError(
            f"no pure follower equilibrium at delta={delta} for any leader action"
        )
    value, leader_action, profile = best
    return StackelbergSolution(leader_action=leader_action, profile=profile, leader_value=value)


def random_game(
    rng: np.random.Generator,
    n_leader_actions: int,
    follower_action_counts,
    low: float = -1.0,
    high: float = 1.0,
) -> FiniteStackelbergGame:
    """Uniform random payoff tables; handy for oracle self-tests."""
    counts = tuple(int(c) for c in follower_action_counts)
    shape = (n_leader_actions,) + counts
    leader = rng.uniform(low, high, size=shape)
    followers = rng.uniform(low, high, size=(len(counts),) + shape)
    return FiniteStackelbergGame(leader, followers)


# --- text format ------------------------------------------------------------
#
# Self-describing whitespace/token format, '#' starts a comment:
#
#   leader_actions 2
#   followers 1
#   follower_actions 2
#   leader_payoffs
#   1.0 3.0
#   0.0 2.0
#   follower_payoffs 0
#   1.0 0.0
#   0.0 1.0
#
# Each payoff block holds one row per leader action; within a row, follower
# profiles are flattened in row-major order (the last follower's action
# varies fastest).


def game_to_text(game: FiniteStackelbergGame) -> str:
    counts = game.follower_action_counts
    lines = [
        f"leader_actions {game.n_leader_actions}",
        f"followers {game.n_followers}",
        "follower_actions " + " ".join(str(c) for c in counts),
        "leader_payoffs",
    ]
    for x in range(game.n_leader_actions):
        lines.append(" ".join(repr(float(v)) for v in game.leader_payoff[x].ravel()))
    for i in range(game.n_followers):
        lines.append(f"follower_payoffs {i}")
        for x in range(game.n_leader_actions):
            lines.append(" ".join(repr(float(v)) for v in game.follower_payoffs[i, x].ravel()))
    return "\n".join(lines) + "\n"


def game_from_text(text: str) -> FiniteStackelbergGame:
    tokens: list[str] = []
    for line in text.splitlines():
        line = line.split("#", 1)[0]
        tokens.extend(line.split())
    pos = 0

    def take(expected: str | None = None) -> str:
        nonlocal pos
        if pos >= len(tokens):
            raise ValueError("truncated game file")
        tok = tokens[pos]
        pos += 1
        if expected is not None and tok != expected:
            raise ValueError(f"expected {expected!r}, found {tok!r}")
        return tok

    take("leader_actions")
    n_leader = int(take())
    take("followers")
    n_followers = int(take())
    take("follower_actions")
    counts = tuple(int(take()) for _ in range(n_followers))
    per_row = int(np.prod(counts, dtype=np.int64))

    def read_table() -> np.ndarray:
        flat = [float(take()) for _ in range(n_leader * per_row)]
        return np.asarray(flat, dtype=np.float64).reshape((n_leader,) + counts)

    take("leader_payoffs")
    leader = read_table()
    followers = np.empty((n_followers, n_leader) + counts, dtype=np.float64)
    for i in range(n_followers):
        take("follower_payoffs")
        idx = int(take())
        if idx != i:
            raise ValueError(f"follower payoff blocks out of order: expected {i}, found {idx}")
        followers[i] = read_table()
    if pos != len(tokens):
        raise ValueError("trailing tokens after payoff tables")
    return FiniteStackelbergGame(leader, followers)
