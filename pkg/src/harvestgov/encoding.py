"""Observation encodings: fixed-width float vectors fed to the networks.

Followers see their categorical window one-hot per cell type, their own
period tally, the active tax rates, and a one-hot identity channel (shared
parameters need identity to break symmetry). The designer sees the full
apple map, per-agent round tallies, and the current vote outcome.

Lane layout per row: [window one-hot | tally | tax rates | agent id].
"""

from __future__ import annotations

import numpy as np

from .grid import AgentObservation, PrincipalView

N_CELL_TYPES = 4
TALLY_SCALE = 0.1  # keeps raw apple counts in a small numeric range


def follower_obs_dim(window_shape: tuple[int, int], n_brackets: int, n_agents: int) -> int:
    rows, cols = window_shape
    return rows * cols * N_CELL_TYPES + 1 + n_brackets + n_agents


class ObsEncoder:
    """Reusable encoding matrix for all (environment, agent) lanes.

    The identity block never changes and the tax block changes once per
    schedule, so per-step encoding only rewrites the window one-hot and
    tally slots. ``matrix`` is the (lanes, dim) float64 array fed to the
    policy network.
    """

    def __init__(self, window_shape, n_brackets: int, n_agents: int, n_envs: int = 1):
        self.n_agents = n_agents
        self.n_envs = n_envs
        self.n_brackets = n_brackets
        self.window_cells = window_shape[0] * window_shape[1]
        self._w = self.window_cells * N_CELL_TYPES
        self.dim = self._w + 1 + n_brackets + n_agents
        lanes = n_envs * n_agents
        self.matrix = np.zeros((lanes, self.dim))
        id_base = self._w + 1 + n_brackets
        for lane in range(lanes):
            self.matrix[lane, id_base + lane % n_agents] = 1.0

    def lanes(self, env_idx: int) -> slice:
        return slice(env_idx * self.n_agents, (env_idx + 1) * self.n_agents)

    def set_tax_weights(self, env_idx: int, weights) -> None:
        block = self.matrix[self.lanes(env_idx), self._w + 1 : self._w + 1 + self.n_brackets]
        block[:] = np.asarray(weights, dtype=np.float64)

    def encode_env(self, env_idx: int, observations: list[AgentObservation]) -> None:
        """Rewrite the dynamic slots for one environment's lanes."""
        rows = self.matrix[self.lanes(env_idx)]
        cells = np.stack([ob.window for ob in observations]).reshape(self.n_agents, -1)
        onehot = rows[:, : self._w].reshape(self.n_agents, self.window_cells, N_CELL_TYPES)
        for t in range(N_CELL_TYPES):
            onehot[:, :, t] = cells == t
        rows[:, self._w] = [ob.period_apples * TALLY_SCALE for ob in observations]


def encode_observations(
    observations: list[AgentObservation],
    n_agents: int,
    out: np.ndarray | None = None,
) -> np.ndarray:
    """One-shot encoding of a single environment's observations.

    Row i corresponds to agent i. Convenience wrapper over ``ObsEncoder``
    for evaluation paths and tests; training uses a persistent encoder.
    """
    n = len(observations)
    enc = ObsEncoder(
        observations[0].window.shape, observations[0].tax_weights.size, n_agents, 1
    )
    enc.set_tax_weights(0, observations[0].tax_weights)
    enc.encode_env(0, observations)
    if out is None:
        return enc.matrix
    out[:] = enc.matrix[:n]
    return out


def principal_obs_dim(height: int, width: int, n_agents: int) -> int:
    return height * width + n_agents + 1


def encode_principal_view(view: PrincipalView, eta: float) -> np.ndarray:
    """Apple map, round tallies, and the voted interpolation weight."""
    grid = view.apple_map.astype(np.float64).ravel()
    tallies = view.apples_this_round.astype(np.float64) * TALLY_SCALE
    return np.concatenate([grid, tallies, [eta]])
