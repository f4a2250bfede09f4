"""Apple-commons gridworld: bounded-view agents harvesting a depletable crop.

Agents move egocentrically on a bounded grid (orientation matters because
the viewing window is asymmetric), collect apples by stepping onto them, and
apples regrow stochastically at rates that rise with the number of apples
within a circular radius of 2 — an isolated empty cell never regrows, so
full depletion is permanent. Only cells stocked in the initial layout can
ever carry an apple.

One environment instance is single-threaded: ``step`` mutates the state it
is given. Run independent instances on independent RNG streams for parallel
rollouts. Apples never regrow under an agent (a cell occupied by an agent is
not "empty").
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import CapacityError

# cell content codes, also used in observations
CELL_EMPTY = 0
CELL_APPLE = 1
CELL_AGENT = 2
CELL_OOB = 3

# orientations
NORTH, EAST, SOUTH, WEST = 0, 1, 2, 3
ORIENTATION_NAMES = ("N", "E", "S", "W")
# (row, col) unit vector pointing "forward" for each orientation
_FORWARD = ((-1, 0), (0, 1), (1, 0), (0, -1))

# actions
NOOP = 0
FORWARD = 1
BACKWARD = 2
STRAFE_LEFT = 3
STRAFE_RIGHT = 4
TURN_LEFT = 5
TURN_RIGHT = 6
N_ACTIONS = 7
ACTION_NAMES = (
    "noop",
    "forward",
    "backward",
    "strafe-left",
    "strafe-right",
    "turn-left",
    "turn-right",
)

DEFAULT_RESPAWN_PROBABILITIES = (0.0, 0.0025, 0.005, 0.025)


@dataclass(frozen=True)
class GridConfig:
    """Static environment parameters.

    ``respawn_probabilities`` maps the neighbor-count bucket (0, 1, 2, >=3
    apples within Euclidean distance 2) to a per-step regrowth probability;
    the zero-neighbor entry must be exactly 0. ``apple_cells``, when given,
    fixes the initial layout explicitly; otherwise ``apple_clusters`` seeded
    clusters are generated at reset time.
    """

    width: int = 24
    height: int = 15
    n_agents: int = 7
    initial_apples: int = 64
    apple_clusters: int = 4
    apple_cells: tuple | None = None
    episode_length: int = 1000
    respawn_probabilities: tuple = DEFAULT_RESPAWN_PROBABILITIES
    view_forward: int = 9
    view_right: int = 5
    view_backward: int = 1
    view_left: int = 5

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("grid dimensions must be >= 1")
        if self.n_agents < 1:
            raise ValueError("need at least one agent")
        if self.episode_length < 1:
            raise ValueError("episode_length must be >= 1")
        if self.initial_apples < 0:
            raise ValueError("initial_apples must be >= 0")
        if self.initial_apples > self.width * self.height:
            raise ValueError("more initial apples than grid cells")
        if self.initial_apples > 0 and self.apple_cells is None and self.apple_clusters < 1:
            raise ValueError("apple_clusters must be >= 1 when apples are generated")
        if len(self.respawn_probabilities) != 4:
            raise ValueError("respawn_probabilities needs 4 bucket entries (0, 1, 2, >=3)")
        if self.respawn_probabilities[0] != 0.0:
            raise ValueError("zero-neighbor respawn probability must be exactly 0")
        if any(not (0 <= p <= 1) for p in self.respawn_probabilities):
            raise ValueError("respawn probabilities must lie in [0, 1]")
        for name in ("view_forward", "view_right", "view_backward", "view_left"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.apple_cells is not None:
            cells = tuple((int(r), int(c)) for r, c in self.apple_cells)
            object.__setattr__(self, "apple_cells", cells)
            if len(set(cells)) != len(cells):
                raise ValueError("apple_cells contains duplicates")
            if len(cells) != self.initial_apples:
                raise ValueError("apple_cells count must equal initial_apples")
            for r, c in cells:
                if not (0 <= r < self.height and 0 <= c < self.width):
                    raise ValueError(f"apple cell {(r, c)} out of bounds")

    @property
    def window_shape(self) -> tuple[int, int]:
        return (
            self.view_forward + self.view_backward + 1,
            self.view_left + self.view_right + 1,
        )


@dataclass(eq=False)
class PomgState:
    """Full mutable world state; everything the dynamics depend on.

    ``apples_this_period`` resets at every tax boundary, ``apples_this_round``
    at every voting-round boundary, so period tallies never exceed round
    tallies. ``rng`` drives movement priority and regrowth draws.
    """

    apple_map: np.ndarray  # (H, W) bool
    positions: np.ndarray  # (n, 2) int64 rows/cols
    orientations: np.ndarray  # (n,) int64
    apples_this_period: np.ndarray  # (n,) int64
    apples_this_round: np.ndarray  # (n,) int64
    step_clock: int
    rng: np.random.Generator

    def clone(self) -> "PomgState":
        g = np.random.Generator(type(self.rng.bit_generator)())
        g.bit_generator.state = self.rng.bit_generator.state
        return PomgState(
            apple_map=self.apple_map.copy(),
            positions=self.positions.copy(),
            orientations=self.orientations.copy(),
            apples_this_period=self.apples_this_period.copy(),
            apples_this_round=self.apples_this_round.copy(),
            step_clock=self.step_clock,
            rng=g,
        )


@dataclass(frozen=True)
class AgentObservation:
    """Egocentric rotated window plus the agent's own fiscal context."""

    window: np.ndarray  # (rows, cols) int8 cell codes, row 0 = farthest forward
    period_apples: int
    tax_weights: np.ndarray


@dataclass(frozen=True)
class PrincipalView:
    """The designer's unrestricted view: full grid and running tallies only.

    Deliberately excludes agent types and mixed rewards; the designer can
    steer agents only through the tax instrument.
    """

    apple_map: np.ndarray
    positions: np.ndarray
    orientations: np.ndarray
    apples_this_period: np.ndarray
    apples_this_round: np.ndarray
    step_clock: int


def canonical_state_bytes(state: PomgState) -> bytes:
    """Stable byte serialization of the economic state; RNG state excluded
    so continuity checks compare world content, not generator internals."""
    h, w = state.apple_map.shape
    parts = [
        b"POMGSTATE:1",
        struct.pack("<qqqq", h, w, state.positions.shape[0], state.step_clock),
        np.ascontiguousarray(state.apple_map, dtype=np.uint8).tobytes(),
        np.ascontiguousarray(state.positions, dtype="<i8").tobytes(),
        np.ascontiguousarray(state.orientations, dtype="<i8").tobytes(),
        np.ascontiguousarray(state.apples_this_period, dtype="<i8").tobytes(),
        np.ascontiguousarray(state.apples_this_round, dtype="<i8").tobytes(),
    ]
    return b"".join(parts)


def state_hash(state: PomgState) -> str:
    return hashlib.blake2b(canonical_state_bytes(state), digest_size=8).hexdigest()


class HarvestEnv:
    """The gridworld itself; construct once per run and reuse across rounds.

    ``event_sink``, when set, receives one dict per move/collect/respawn
    event (the replay log). ``current_tax_weights`` is the fiscal context
    embedded in observations; the orchestration layer updates it whenever a
    new schedule takes effect.
    """

    def __init__(self, config: GridConfig, event_sink: Callable[[dict], None] | None = None):
        self.config = config
        self.event_sink = event_sink
        self.current_tax_weights = np.zeros(0, dtype=np.float64)
        h, w = config.height, config.width
        self._pad = max(
            config.view_forward, config.view_backward, config.view_left, config.view_right
        )
        self._padded = np.full((h + 2 * self._pad, w + 2 * self._pad), CELL_OOB, dtype=np.int8)
        # occupancy kept as a flat byte buffer: cheap single-cell updates in
        # the movement loop, zero-copy numpy view for the regrowth pass
        self._occ_bytes = bytearray(h * w)
        self._occ_zero = bytes(h * w)
        self._occ_view = np.frombuffer(self._occ_bytes, dtype=np.uint8)
        self._bucket_probs = np.asarray(config.respawn_probabilities, dtype=np.float64)
        self._off_r, self._off_c = self._window_offsets()
        # layout-dependent tables, filled by reset()
        self._capable_flat: np.ndarray | None = None
        self._adjacency: np.ndarray | None = None

    # --- geometry helpers ---------------------------------------------------

    def _window_offsets(self):
        """World (row, col) offsets for every window cell, per orientation.

        Window row i runs from farthest-forward (i = 0) to farthest-back;
        column j from leftmost to rightmost, in the agent's own frame.
        """
        cfg = self.config
        fwd_steps = cfg.view_forward - np.arange(cfg.view_forward + cfg.view_backward + 1)
        right_steps = np.arange(cfg.view_left + cfg.view_right + 1) - cfg.view_left
        off_r = np.empty((4,) + cfg.window_shape, dtype=np.int64)
        off_c = np.empty((4,) + cfg.window_shape, dtype=np.int64)
        for o in range(4):
            fr, fc = _FORWARD[o]
            rr, rc = _FORWARD[(o + 1) % 4]  # "right" is a quarter turn clockwise
            off_r[o] = fwd_steps[:, None] * fr + right_steps[None, :] * rr
            off_c[o] = fwd_steps[:, None] * fc + right_steps[None, :] * rc
        return off_r, off_c

    def _build_regrowth_tables(self, apple_cells: np.ndarray) -> None:
        """Adjacency among capable cells within Euclidean distance 2."""
        self._capable_flat = apple_cells[:, 0] * self.config.width + apple_cells[:, 1]
        if len(apple_cells) == 0:
            self._adjacency = np.zeros((0, 0), dtype=np.int16)
            return
        dr = apple_cells[:, 0][:, None] - apple_cells[:, 0][None, :]
        dc = apple_cells[:, 1][:, None] - apple_cells[:, 1][None, :]
        d2 = dr * dr + dc * dc
        adj = (d2 > 0) & (d2 <= 4)
        self._adjacency = adj.astype(np.int16)

    def _generate_layout(self, rng: np.random.Generator) -> np.ndarray:
        """Seeded clusters: anchors drawn on the interior, each cluster takes
        the nearest unused cells (deterministic distance/row/col order)."""
        cfg = self.config
        total = cfg.initial_apples
        if total == 0:
            return np.zeros((0, 2), dtype=np.int64)
        k = min(cfg.apple_clusters, total)
        margin = 2 if cfg.height > 4 and cfg.width > 4 else 0
        rows = np.arange(margin, cfg.height - margin)
        cols = np.arange(margin, cfg.width - margin)
        interior = np.array([(r, c) for r in rows for c in cols], dtype=np.int64)
        anchors = interior[rng.choice(len(interior), size=k, replace=False)]
        sizes = [total // k + (1 if i < total % k else 0) for i in range(k)]
        rr, cc = np.meshgrid(np.arange(cfg.height), np.arange(cfg.width), indexing="ij")
        rr, cc = rr.ravel(), cc.ravel()
        used = np.zeros(cfg.height * cfg.width, dtype=bool)
        chosen: list[int] = []
        for (ar, ac), size in zip(anchors, sizes):
            d2 = (rr - ar) ** 2 + (cc - ac) ** 2
            order = np.lexsort((cc, rr, d2))
            picked = 0
            for idx in order:
                if used[idx]:
                    continue
                used[idx] = True
                chosen.append(idx)
                picked += 1
                if picked == size:
                    break
        flat = np.asarray(chosen, dtype=np.int64)
        return np.stack([flat // cfg.width, flat % cfg.width], axis=1)

    # --- lifecycle ------------------------------------------------------------

    def reset(self, seed) -> PomgState:
        """Deterministic initial state for (config, seed): apples placed per
        layout, agents on distinct apple-free cells, clocks zeroed."""
        cfg = self.config
        rng = np.random.default_rng(seed)
        if cfg.apple_cells is not None:
            cells = np.asarray(cfg.apple_cells, dtype=np.int64).reshape(-1, 2)
        else:
            cells = self._generate_layout(rng)
        self._build_regrowth_tables(cells)
        apple_map = np.zeros((cfg.height, cfg.width), dtype=bool)
        if len(cells):
            apple_map[cells[:, 0], cells[:, 1]] = True
        free = np.flatnonzero(~apple_map.ravel())
        if len(free) < cfg.n_agents:
            raise CapacityError(
                f"cannot place {cfg.n_agents} agents on {len(free)} apple-free cells"
            )
        spots = free[rng.choice(len(free), size=cfg.n_agents, replace=False)]
        positions = np.stack([spots // cfg.width, spots % cfg.width], axis=1)
        orientations = rng.integers(0, 4, size=cfg.n_agents, dtype=np.int64)
        return PomgState(
            apple_map=apple_map,
            positions=positions,
            orientations=orientations,
            apples_this_period=np.zeros(cfg.n_agents, dtype=np.int64),
            apples_this_round=np.zeros(cfg.n_agents, dtype=np.int64),
            step_clock=0,
            rng=rng,
        )

    def attach_state(self, state: PomgState) -> None:
        """Rebuild layout-dependent tables for a state restored from disk.

        The capable-cell set is the initial layout; a restored state carries
        apples only on those cells, so they can be recovered from the reset
        of the same (config, seed) by the caller — this hook exists for
        explicit-layout configs and tests that construct states directly.
        """
        if self._capable_flat is None:
            cells = np.argwhere(state.apple_map).astype(np.int64)
            self._build_regrowth_tables(cells)

    # --- dynamics -------------------------------------------------------------

    def step(self, state: PomgState, actions):
        """Advance one tick: move (seeded random priority on conflicts),
        collect, regrow, then advance the clock.

        Returns ``(state, collected, observations)``; the state object is
        mutated in place.
        """
        cfg = self.config
        acts = np.asarray(actions, dtype=np.int64).ravel()
        if acts.shape[0] != cfg.n_agents:
            raise ValueError(f"expected {cfg.n_agents} actions, got {acts.shape[0]}")
        if ((acts < 0) | (acts >= N_ACTIONS)).any():
            raise ValueError("action code out of range")
        collected = np.zeros(cfg.n_agents, dtype=np.int64)
        sink = self.event_sink
        clock = state.step_clock
        height, width = cfg.height, cfg.width
        self._sync_occupancy(state)
        occ = self._occ_bytes
        rows = state.positions[:, 0].tolist()
        cols = state.positions[:, 1].tolist()
        orients = state.orientations.tolist()
        acts_list = acts.tolist()
        apple = state.apple_map
        # priority drawn every step, even without conflicts, to keep the
        # RNG stream independent of the action pattern
        for i in state.rng.permutation(cfg.n_agents).tolist():
            a = acts_list[i]
            if a == NOOP:
                continue
            if a == TURN_LEFT:
                orients[i] = (orients[i] - 1) % 4
                continue
            if a == TURN_RIGHT:
                orients[i] = (orients[i] + 1) % 4
                continue
            o = orients[i]
            if a == FORWARD:
                dr, dc = _FORWARD[o]
            elif a == BACKWARD:
                dr, dc = _FORWARD[(o + 2) % 4]
            elif a == STRAFE_LEFT:
                dr, dc = _FORWARD[(o + 3) % 4]
            else:  # STRAFE_RIGHT
                dr, dc = _FORWARD[(o + 1) % 4]
            r = rows[i] + dr
            c = cols[i] + dc
            if r < 0 or r >= height or c < 0 or c >= width or occ[r * width + c]:
                continue
            occ[rows[i] * width + cols[i]] = 0
            occ[r * width + c] = 1
            if sink is not None:
                sink(
                    {
                        "step": clock,
                        "type": "move",
                        "agent": i,
                        "from": [rows[i], cols[i]],
                        "to": [r, c],
                    }
                )
            rows[i] = r
            cols[i] = c
            if apple[r, c]:
                apple[r, c] = False
                collected[i] += 1
                state.apples_this_period[i] += 1
                state.apples_this_round[i] += 1
                if sink is not None:
                    sink({"step": clock, "type": "collect", "agent": i, "cell": [r, c]})
        state.positions[:, 0] = rows
        state.positions[:, 1] = cols
        state.orientations[:] = orients
        self._respawn(state)
        state.step_clock = clock + 1
        return state, collected, self.observe_all(state)

    def _sync_occupancy(self, state: PomgState) -> None:
        self._occ_bytes[:] = self._occ_zero
        width = self.config.width
        for r, c in state.positions.tolist():
            self._occ_bytes[r * width + c] = 1

    def respawn_update(self, state: PomgState) -> PomgState:
        """Regrow apples on empty capable cells, independently per cell.

        The probability depends on how many apples currently sit within
        Euclidean distance 2 of the cell: bucket 0 -> 0 (an empty
        neighborhood never recovers), 1, 2, and >= 3 use the configured
        table. Cells under an agent are skipped.
        """
        self._sync_occupancy(state)
        return self._respawn(state)

    def _respawn(self, state: PomgState) -> PomgState:
        """Regrowth pass; requires the occupancy buffer to be current."""
        if self._capable_flat is None:
            self.attach_state(state)
        if len(self._capable_flat) == 0:
            return state
        flat_map = state.apple_map.ravel()
        present = flat_map[self._capable_flat]
        if present.all():
            return state
        blocked = self._occ_view[self._capable_flat].astype(bool)
        eligible = np.flatnonzero(~present & ~blocked)
        if eligible.size == 0:
            return state
        counts = self._adjacency[eligible] @ present.astype(np.int16)
        probs = self._bucket_probs[np.minimum(counts, 3)]
        draws = state.rng.random(eligible.size)
        grown = eligible[draws < probs]
        if grown.size:
            flat_map[self._capable_flat[grown]] = True
            if self.event_sink is not None:
                w = self.config.width
                for f in self._capable_flat[grown]:
                    self.event_sink(
                        {
                            "step": state.step_clock,
                            "type": "respawn",
                            "cell": [int(f) // w, int(f) % w],
                        }
                    )
        return state

    # --- observation ----------------------------------------------------------

    def _paint_padded(self, state: PomgState) -> np.ndarray:
        p = self._pad
        view = self._padded[p : p + self.config.height, p : p + self.config.width]
        view.fill(CELL_EMPTY)
        view[state.apple_map] = CELL_APPLE
        view[state.positions[:, 0], state.positions[:, 1]] = CELL_AGENT
        return self._padded

    def observe(self, state: PomgState, agent: int) -> AgentObservation:
        """Egocentric window for one agent, rotated so forward is up."""
        if not (0 <= agent < self.config.n_agents):
            raise ValueError(f"agent index {agent} out of range")
        padded = self._paint_padded(state)
        return self._window(state, agent, padded)

    def _window(self, state: PomgState, agent: int, padded: np.ndarray) -> AgentObservation:
        o = int(state.orientations[agent])
        pr = int(state.positions[agent, 0]) + self._pad
        pc = int(state.positions[agent, 1]) + self._pad
        window = padded[pr + self._off_r[o], pc + self._off_c[o]]
        return AgentObservation(
            window=window,
            period_apples=int(state.apples_this_period[agent]),
            tax_weights=self.current_tax_weights,
        )

    def observe_all(self, state: PomgState) -> list[AgentObservation]:
        padded = self._paint_padded(state)
        # one gather for all agents; each window row below is a view into it
        orients = state.orientations
        rows = self._off_r[orients] + (state.positions[:, 0] + self._pad)[:, None, None]
        cols = self._off_c[orients] + (state.positions[:, 1] + self._pad)[:, None, None]
        windows = padded[rows, cols]
        tax = self.current_tax_weights
        return [
            AgentObservation(
                window=windows[i],
                period_apples=int(state.apples_this_period[i]),
                tax_weights=tax,
            )
            for i in range(self.config.n_agents)
        ]

    def principal_observe(self, state: PomgState) -> PrincipalView:
        """Unrestricted read-only snapshot: grid plus running tallies."""
        return PrincipalView(
            apple_map=state.apple_map.copy(),
            positions=state.positions.copy(),
            orientations=state.orientations.copy(),
            apples_this_period=state.apples_this_period.copy(),
            apples_this_round=state.apples_this_round.copy(),
            step_clock=state.step_clock,
        )

    def visibility_matrix(self, state: PomgState) -> np.ndarray:
        """Boolean (n, n): entry (i, j) true iff agent j's cell lies inside
        agent i's viewing window. Diagonal is always true."""
        n = self.config.n_agents
        vis = np.zeros((n, n), dtype=bool)
        for i in range(n):
            o = int(state.orientations[i])
            rows = state.positions[i, 0] + self._off_r[o]
            cols = state.positions[i, 1] + self._off_c[o]
            for j in range(n):
                vis[i, j] = bool(
                    ((rows == state.positions[j, 0]) & (cols == state.positions[j, 1])).any()
                )
        return vis

    def render(self, state: PomgState) -> str:
        """ASCII frame: '.' empty, 'o' apple, agent digits with orientation."""
        chars = np.full(state.apple_map.shape, ".", dtype="<U1")
        chars[state.apple_map] = "o"
        for i, (r, c) in enumerate(state.positions):
            chars[r, c] = str(i % 10)
        lines = ["".join(row) for row in chars]
        tallies = " ".join(str(int(v)) for v in state.apples_this_round)
        header = (
            f"t={state.step_clock} apples={int(state.apple_map.sum())} "
            f"round-tallies=[{tallies}]"
        )
        return "\n".join([header] + lines)
