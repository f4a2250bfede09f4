"""Advantage estimation, rollout storage, and the clipped-surrogate update."""

from __future__ import annotations

import numpy as np

from .errors import ContractViolationError
from .nets import Adam, PolicyNetwork


def gae_advantages(rewards, values, dones, gamma: float, lam: float, last_value=0.0):
    """Exponentially weighted TD-error recursion.

    delta_t = r_t + gamma * v_{t+1} * (1 - done_t) - v_t
    A_t     = delta_t + gamma * lam * (1 - done_t) * A_{t+1}

    ``values`` aligns with ``rewards`` (length T); ``last_value`` bootstraps
    v_T and is masked by the final done flag. Trailing axes are vectorized.
    Returns (advantages, returns) with returns = advantages + values.
    """
    r = np.asarray(rewards, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    d = np.asarray(dones, dtype=np.float64)
    if r.shape != v.shape or r.shape != d.shape:
        raise ValueError("rewards, values, and dones must have matching shapes")
    if not (0 <= gamma <= 1 and 0 <= lam <= 1):
        raise ValueError("gamma and lam must lie in [0, 1]")
    T = r.shape[0]
    adv = np.zeros_like(r)
    next_value = np.broadcast_to(np.asarray(last_value, dtype=np.float64), r.shape[1:]).copy()
    next_adv = np.zeros(r.shape[1:], dtype=np.float64)
    for t in range(T - 1, -1, -1):
        live = 1.0 - d[t]
        delta = r[t] + gamma * next_value * live - v[t]
        next_adv = delta + gamma * lam * live * next_adv
        adv[t] = next_adv
        next_value = v[t]
    return adv, adv + v


class RolloutBuffer:
    """Fixed-capacity on-policy storage, time-ordered per lane.

    A lane is one (environment instance, agent) pair; capacity is
    ``horizon * n_lanes`` records. ``agent_ids`` maps each lane to its agent
    index for bookkeeping.
    """

    def __init__(self, horizon: int, n_lanes: int, obs_dim: int, n_heads: int = 1,
                 agent_ids=None):
        if horizon < 1 or n_lanes < 1:
            raise ValueError("horizon and n_lanes must be >= 1")
        self.horizon = horizon
        self.n_lanes = n_lanes
        self.obs = np.zeros((horizon, n_lanes, obs_dim))
        self.actions = np.zeros((horizon, n_lanes, n_heads), dtype=np.int64)
        self.logp = np.zeros((horizon, n_lanes))
        self.values = np.zeros((horizon, n_lanes))
        self.rewards = np.zeros((horizon, n_lanes))
        self.dones = np.zeros((horizon, n_lanes), dtype=bool)
        self.agent_ids = (
            np.asarray(agent_ids, dtype=np.int64)
            if agent_ids is not None
            else np.zeros(n_lanes, dtype=np.int64)
        )
        self.cursor = 0

    @property
    def capacity(self) -> int:
        return self.horizon * self.n_lanes

    @property
    def full(self) -> bool:
        return self.cursor == self.horizon

    def add(self, obs, actions, logp, values, rewards, dones) -> None:
        if self.full:
            raise ContractViolationError("rollout buffer already full")
        t = self.cursor
        self.obs[t] = obs
        self.actions[t] = np.asarray(actions).reshape(self.n_lanes, -1)
        self.logp[t] = logp
        self.values[t] = values
        self.rewards[t] = rewards
        self.dones[t] = dones
        self.cursor += 1

    def drain(self, gamma: float, lam: float, last_values) -> dict:
        """Finish the rollout: compute advantages, flatten, reset cursor.

        The obs/actions/logp entries are views into the buffer storage, so
        the batch must be consumed before the next ``add`` overwrites it.
        """
        if not self.full:
            raise ContractViolationError(
                f"drain before the sampling horizon: {self.cursor}/{self.horizon}"
            )
        adv, rets = gae_advantages(
            self.rewards, self.values, self.dones, gamma, lam, last_value=last_values
        )
        batch = {
            "obs": self.obs.reshape(self.capacity, -1),
            "actions": self.actions.reshape(self.capacity, -1),
            "logp": self.logp.reshape(-1),
            "advantages": adv.reshape(-1),
            "returns": rets.reshape(-1),
        }
        self.cursor = 0
        return batch


def ppo_update(
    net: PolicyNetwork,
    optimizer: Adam,
    batch: dict,
    rng: np.random.Generator,
    clip: float = 0.2,
    epochs: int = 4,
    minibatch_size: int = 256,
    lr: float = 3e-4,
    value_coef: float = 0.5,
    entropy_coef: float = 0.01,
    normalize_advantages: bool = True,
) -> dict:
    """Minibatch clipped-surrogate updates over a drained rollout batch.

    Advantages are normalized once per batch (skipped for singleton batches,
    where normalization would zero the gradient). Returns mean diagnostics
    across all minibatch steps plus the final approximate KL.
    """
    m = batch["obs"].shape[0]
    if m == 0:
        raise ContractViolationError("empty rollout batch")
    adv = np.asarray(batch["advantages"], dtype=np.float64)
    if normalize_advantages and m > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    obs = batch["obs"]
    actions = batch["actions"]
    logp_old = batch["logp"]
    returns = batch["returns"]

    totals: dict[str, float] = {}
    steps = 0
    last_kl = 0.0
    for _ in range(max(1, int(epochs))):
        order = rng.permutation(m)
        for start in range(0, m, minibatch_size):
            idx = order[start : start + minibatch_size]
            _, grads, diag = net.loss_and_grads(
                obs[idx],
                actions[idx],
                logp_old[idx],
                adv[idx],
                returns[idx],
                clip=clip,
                value_coef=value_coef,
                entropy_coef=entropy_coef,
            )
            optimizer.step(net.params, grads, lr)
            steps += 1
            last_kl = diag["approx_kl"]
            for k, v in diag.items():
                totals[k] = totals.get(k, 0.0) + v
    out = {k: v / steps for k, v in totals.items()}
    out["updates"] = steps
    out["final_approx_kl"] = last_kl
    return out
