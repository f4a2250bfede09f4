"""Orchestration of the full governed-commons loop: vote, design, simulate,
learn, repeat — with deterministic seeding, metrics, and checkpoints.

Round structure: collect reports and compute the vote, let the designer pick
a tax schedule under the anneal ceiling, simulate a fixed number of tax
periods (levying and redistributing at each boundary), and update all
learners. The world state carries over between rounds unreset; each round
record stores entry and terminal state hashes so the continuity constraint
is checkable from the artifacts alone.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, restore_rng, rng_state, save_checkpoint
from .config import RunConfig, config_to_dict
from .encoding import (
    ObsEncoder,
    encode_principal_view,
    follower_obs_dim,
    principal_obs_dim,
)
from .errors import ContractViolationError
from .fiscal import TaxSchedule, apply_tax_period, mixed_reward, tax_due
from .grid import N_ACTIONS, HarvestEnv, state_hash
from .nets import Adam, PolicyNetwork
from .ppo import RolloutBuffer, ppo_update
from .principal import PrincipalActionSpace, anneal_ceiling, select_tax_schedule
from .stackelberg import StackelbergMarkovSpec
from .welfare import WelfareObjective, objective_value, social_choice_mean

METRICS_FIELDS_PREFIX = (
    "round",
    "period",
    "agent",
    "apples",
    "tax_paid",
    "redistribution",
    "mixed_reward",
    "eta",
)
METRICS_FIELDS_SUFFIX = ("welfare", "principal_reward")


@dataclass(frozen=True)
class RoundRecord:
    """One voting round's outcome, self-contained and hash-chained."""

    round_index: int
    eta: float
    reports: tuple
    schedule_edges: tuple
    schedule_weights: tuple
    apple_totals: tuple
    welfare: float
    principal_reward: float
    initial_state_hash: str
    terminal_state_hash: str


@dataclass
class TrainState:
    """Everything mutable across rounds besides the world states."""

    sigmas: np.ndarray
    reported: np.ndarray
    follower_net: PolicyNetwork
    follower_opt: Adam
    principal_net: PolicyNetwork
    principal_opt: Adam
    action_rng: np.random.Generator
    update_rng: np.random.Generator
    principal_rng: np.random.Generator
    buffer: RolloutBuffer
    pending_principal: list
    prev_weights: np.ndarray
    encoder: ObsEncoder
    rounds_completed: int = 0


def _make_objective(mode: str, eta: float) -> WelfareObjective:
    if mode == "interpolated":
        return WelfareObjective("interpolated", eta)
    return WelfareObjective(mode)


def gini(values) -> float:
    """Mean absolute difference normalized by twice the mean; 0 for an
    all-zero vector."""
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        raise ValueError("empty vector")
    if (x < 0).any():
        raise ValueError("gini requires non-negative values")
    total = x.sum()
    if total == 0:
        return 0.0
    diffs = np.abs(x[:, None] - x[None, :]).sum()
    return float(diffs / (2.0 * x.size * total))


def induced_markov_spec(config: RunConfig) -> StackelbergMarkovSpec:
    """Wiring record: a weight vector pins down a schedule and the gridworld
    it governs for one round."""
    edges = tuple(config.fiscal.bracket_edges)
    grid_cfg = config.environment.to_grid_config()

    def implement(weights):
        return TaxSchedule(edges, tuple(float(w) for w in weights)), grid_cfg

    n_brackets = len(edges) - 1
    return StackelbergMarkovSpec(
        leader_dim=n_brackets,
        leader_bounds=((0.0, 1.0),) * n_brackets,
        implementation_map=implement,
        discount=config.learning.gamma,
        horizon=config.round_steps,
    )


def build_experiment(config: RunConfig, seed: int):
    """Construct environments, initial states, and the training bundle,
    all deterministically derived from (config, seed)."""
    n = config.environment.n_agents
    n_envs = config.learning.n_envs
    ss = np.random.SeedSequence(seed)
    children = ss.spawn(5 + n_envs)
    types_rng = np.random.default_rng(children[0])
    lo, hi = config.learning.sigma_range
    sigmas = types_rng.uniform(lo, hi, size=n)
    reported = sigmas.copy() if config.voting.truthful else types_rng.uniform(lo, hi, size=n)

    grid_cfg = config.environment.to_grid_config()
    n_brackets = len(config.fiscal.bracket_edges) - 1
    envs = [HarvestEnv(grid_cfg) for _ in range(n_envs)]
    for env in envs:
        env.current_tax_weights = np.zeros(n_brackets)
    states = [env.reset(children[5 + e]) for e, env in enumerate(envs)]

    net_rng = np.random.default_rng(children[1])
    encoder = ObsEncoder(grid_cfg.window_shape, n_brackets, n, n_envs)
    obs_dim = follower_obs_dim(grid_cfg.window_shape, n_brackets, n)
    assert obs_dim == encoder.dim
    follower_net = PolicyNetwork(
        obs_dim, (N_ACTIONS,), hidden_width=config.learning.hidden_width, rng=net_rng
    )
    p_obs_dim = principal_obs_dim(grid_cfg.height, grid_cfg.width, n)
    principal_net = PolicyNetwork(
        p_obs_dim,
        (config.learning.principal_rate_levels,) * n_brackets,
        hidden_width=config.learning.hidden_width,
        rng=net_rng,
    )
    lanes = n_envs * n
    train = TrainState(
        sigmas=sigmas,
        reported=reported,
        follower_net=follower_net,
        follower_opt=Adam(follower_net.params),
        principal_net=principal_net,
        principal_opt=Adam(principal_net.params),
        action_rng=np.random.default_rng(children[2]),
        update_rng=np.random.default_rng(children[3]),
        principal_rng=np.random.default_rng(children[4]),
        buffer=RolloutBuffer(
            config.learning.sampling_horizon,
            lanes,
            obs_dim,
            n_heads=1,
            agent_ids=np.tile(np.arange(n), n_envs),
        ),
        pending_principal=[],
        prev_weights=np.zeros((n_envs, n_brackets)),
        encoder=encoder,
    )
    return envs, states, train


def run_round(
    envs,
    states,
    train: TrainState,
    config: RunConfig,
    round_idx: int,
    metrics_rows: list | None = None,
    render: bool = False,
) -> RoundRecord:
    """Execute one full voting round; mutates states and train in place."""
    lrn = config.learning
    n = config.environment.n_agents
    n_envs = lrn.n_envs
    edges = tuple(config.fiscal.bracket_edges)
    period_len = config.fiscal.tax_period
    n_periods = config.run.periods_per_round

    entry_hash = state_hash(states[0])
    eta = social_choice_mean(train.reported, principal_report=config.voting.principal_bias)
    objective = _make_objective(config.voting.mode, eta)
    ceiling = anneal_ceiling(round_idx, lrn.anneal_tax_free_rounds, lrn.anneal_rise_rounds)
    space = PrincipalActionSpace.uniform(lrn.principal_rate_levels, ceiling)

    schedules = []
    stashed = []
    for e, env in enumerate(envs):
        if lrn.principal_mode == "zero":
            schedules.append(TaxSchedule.zero(edges))
            stashed.append(None)
        else:
            view = env.principal_observe(states[e])
            pobs = encode_principal_view(view, eta)
            schedule, levels, logp, value = select_tax_schedule(
                train.principal_net,
                pobs,
                space,
                edges,
                train.principal_rng,
                prev_weights=train.prev_weights[e],
                max_change=lrn.divergence_bound,
            )
            schedules.append(schedule)
            stashed.append(
                {"obs": pobs, "actions": levels, "logp": logp, "value": value}
            )
        train.prev_weights[e] = np.asarray(schedules[e].weights, dtype=np.float64)
        env.current_tax_weights = np.asarray(schedules[e].weights, dtype=np.float64)
        train.encoder.set_tax_weights(e, schedules[e].weights)
        states[e].apples_this_round[:] = 0
        states[e].apples_this_period[:] = 0

    welfare_start = objective_value(objective, np.zeros(n))
    welfare_prev = welfare_start
    obs_mat = train.encoder.matrix
    for e, env in enumerate(envs):
        train.encoder.encode_env(e, env.observe_all(states[e]))

    round_acc = np.zeros(n_envs * n)
    phi_row = [float(w) for w in schedules[0].weights]
    for period in range(n_periods):
        for k in range(period_len):
            actions, logp, values = train.follower_net.sample(obs_mat, train.action_rng)
            rewards = np.zeros(n_envs * n)
            obs_lists = []
            for e, env in enumerate(envs):
                _, _, obs_e = env.step(states[e], actions[e * n : (e + 1) * n, 0])
                obs_lists.append(obs_e)
            if k == period_len - 1:
                for e, env in enumerate(envs):
                    a_period = states[e].apples_this_period.copy()
                    r_tax = apply_tax_period(states[e], schedules[e], period_len)
                    vis = (
                        env.visibility_matrix(states[e])
                        if config.fiscal.social_reward_scope == "field_of_view"
                        else None
                    )
                    mixed = mixed_reward(
                        a_period.astype(np.float64), train.sigmas, schedules[e], vis
                    )
                    if config.fiscal.delivery == "per_period":
                        rewards[e * n : (e + 1) * n] = mixed
                    else:
                        round_acc[e * n : (e + 1) * n] += mixed
                    # period tallies reset: refresh what the agents see
                    obs_lists[e] = env.observe_all(states[e])
                    if e == 0:
                        totals = states[0].apples_this_round.astype(np.float64)
                        welfare_now = objective_value(objective, totals)
                        if metrics_rows is not None:
                            taxes = tax_due(a_period.astype(np.float64), schedules[0])
                            share = taxes.sum() / n
                            for i in range(n):
                                metrics_rows.append(
                                    [
                                        round_idx,
                                        period,
                                        i,
                                        int(a_period[i]),
                                        float(taxes[i]),
                                        float(share),
                                        float(mixed[i]),
                                        float(eta),
                                        *phi_row,
                                        float(welfare_now),
                                        float(welfare_now - welfare_prev),
                                    ]
                                )
                        welfare_prev = welfare_now
                if render:
                    print(envs[0].render(states[0]))
            if config.fiscal.delivery == "end_of_round" and period == n_periods - 1 and k == period_len - 1:
                rewards += round_acc
            train.buffer.add(obs_mat, actions, logp, values, rewards, False)
            for e in range(n_envs):
                train.encoder.encode_env(e, obs_lists[e])
            if train.buffer.full:
                _, last_values = train.follower_net.forward(obs_mat)
                batch = train.buffer.drain(lrn.gamma, lrn.gae_lambda, last_values)
                ppo_update(
                    train.follower_net,
                    train.follower_opt,
                    batch,
                    train.update_rng,
                    clip=lrn.clip,
                    epochs=lrn.epochs,
                    minibatch_size=lrn.minibatch,
                    lr=lrn.learning_rate,
                    value_coef=lrn.value_coef,
                    entropy_coef=lrn.entropy_coef,
                )

    totals0 = states[0].apples_this_round.copy()
    welfare_end = objective_value(objective, totals0.astype(np.float64))
    if lrn.principal_mode == "learn":
        for e in range(n_envs):
            totals_e = states[e].apples_this_round.astype(np.float64)
            stashed[e]["reward"] = objective_value(objective, totals_e) - welfare_start
            train.pending_principal.append(stashed[e])
        if (round_idx + 1) % lrn.principal_update_every == 0 and train.pending_principal:
            pend = train.pending_principal
            rew = np.array([p["reward"] for p in pend])
            val = np.array([p["value"] for p in pend])
            batch = {
                "obs": np.stack([p["obs"] for p in pend]),
                "actions": np.stack([p["actions"] for p in pend]),
                "logp": np.array([p["logp"] for p in pend]),
                # one-step episodes: no bootstrapping across rounds
                "advantages": rew - val,
                "returns": rew,
            }
            ppo_update(
                train.principal_net,
                train.principal_opt,
                batch,
                train.update_rng,
                clip=lrn.clip,
                epochs=lrn.epochs,
                minibatch_size=len(pend),
                lr=lrn.principal_learning_rate,
                value_coef=lrn.value_coef,
                entropy_coef=lrn.entropy_coef,
            )
            train.pending_principal = []

    record = RoundRecord(
        round_index=round_idx,
        eta=float(eta),
        reports=tuple(float(r) for r in train.reported),
        schedule_edges=edges,
        schedule_weights=tuple(float(w) for w in schedules[0].weights),
        apple_totals=tuple(int(v) for v in totals0),
        welfare=float(welfare_end),
        principal_reward=float(welfare_end - welfare_start),
        initial_state_hash=entry_hash,
        terminal_state_hash=state_hash(states[0]),
    )
    train.rounds_completed = round_idx + 1
    return record


# --- persistence --------------------------------------------------------------


def _checkpoint_payload(envs, states, train: TrainState, config: RunConfig, seed: int,
                        last_terminal_hash: str | None):
    tensors: dict[str, np.ndarray] = {}
    for k, v in train.follower_net.params.items():
        tensors[f"follower.{k}"] = v
        tensors[f"follower_opt.m.{k}"] = train.follower_opt.m[k]
        tensors[f"follower_opt.v.{k}"] = train.follower_opt.v[k]
    for k, v in train.principal_net.params.items():
        tensors[f"principal.{k}"] = v
        tensors[f"principal_opt.m.{k}"] = train.principal_opt.m[k]
        tensors[f"principal_opt.v.{k}"] = train.principal_opt.v[k]
    tensors["types.sigma"] = train.sigmas
    tensors["types.reported"] = train.reported
    tensors["prev_weights"] = train.prev_weights
    for e, state in enumerate(states):
        tensors[f"env{e}.apple_map"] = state.apple_map.astype(np.uint8)
        tensors[f"env{e}.positions"] = state.positions
        tensors[f"env{e}.orientations"] = state.orientations
        tensors[f"env{e}.period_tally"] = state.apples_this_period
        tensors[f"env{e}.round_tally"] = state.apples_this_round
    pend = train.pending_principal
    if pend:
        tensors["pending.obs"] = np.stack([p["obs"] for p in pend])
        tensors["pending.actions"] = np.stack([p["actions"] for p in pend])
        tensors["pending.logp"] = np.array([p["logp"] for p in pend])
        tensors["pending.value"] = np.array([p["value"] for p in pend])
        tensors["pending.reward"] = np.array([p["reward"] for p in pend])
    meta = {
        "kind": "experiment",
        "config": config_to_dict(config),
        "seed": int(seed),
        "rounds_completed": int(train.rounds_completed),
        "env_clocks": [int(s.step_clock) for s in states],
        "env_rng": [rng_state(s.rng) for s in states],
        "action_rng": rng_state(train.action_rng),
        "update_rng": rng_state(train.update_rng),
        "principal_rng": rng_state(train.principal_rng),
        "follower_opt_t": int(train.follower_opt.t),
        "principal_opt_t": int(train.principal_opt.t),
        "pending_count": len(pend),
        "last_terminal_hash": last_terminal_hash,
    }
    return tensors, meta


def _restore_experiment(path, envs, states, train: TrainState, config: RunConfig, seed: int):
    tensors, meta = load_checkpoint(path)
    if meta.get("kind") != "experiment":
        raise ValueError("not an experiment checkpoint")
    if meta["config"] != config_to_dict(config):
        raise ContractViolationError(
            "checkpoint was produced under a different configuration"
        )
    if meta["seed"] != int(seed):
        raise ContractViolationError(
            f"checkpoint seed {meta['seed']} does not match run seed {seed}"
        )
    for k in train.follower_net.params:
        train.follower_net.params[k][...] = tensors[f"follower.{k}"]
        train.follower_opt.m[k][...] = tensors[f"follower_opt.m.{k}"]
        train.follower_opt.v[k][...] = tensors[f"follower_opt.v.{k}"]
    for k in train.principal_net.params:
        train.principal_net.params[k][...] = tensors[f"principal.{k}"]
        train.principal_opt.m[k][...] = tensors[f"principal_opt.m.{k}"]
        train.principal_opt.v[k][...] = tensors[f"principal_opt.v.{k}"]
    train.follower_opt.t = meta["follower_opt_t"]
    train.principal_opt.t = meta["principal_opt_t"]
    train.sigmas[...] = tensors["types.sigma"]
    train.reported[...] = tensors["types.reported"]
    train.prev_weights[...] = tensors["prev_weights"]
    for e, state in enumerate(states):
        state.apple_map[...] = tensors[f"env{e}.apple_map"].astype(bool)
        state.positions[...] = tensors[f"env{e}.positions"]
        state.orientations[...] = tensors[f"env{e}.orientations"]
        state.apples_this_period[...] = tensors[f"env{e}.period_tally"]
        state.apples_this_round[...] = tensors[f"env{e}.round_tally"]
        state.step_clock = meta["env_clocks"][e]
        state.rng = restore_rng(meta["env_rng"][e])
        envs[e].current_tax_weights = train.prev_weights[e].copy()
    train.action_rng = restore_rng(meta["action_rng"])
    train.update_rng = restore_rng(meta["update_rng"])
    train.principal_rng = restore_rng(meta["principal_rng"])
    train.pending_principal = []
    for i in range(meta["pending_count"]):
        train.pending_principal.append(
            {
                "obs": tensors["pending.obs"][i].copy(),
                "actions": tensors["pending.actions"][i].copy(),
                "logp": float(tensors["pending.logp"][i]),
                "value": float(tensors["pending.value"][i]),
                "reward": float(tensors["pending.reward"][i]),
            }
        )
    train.rounds_completed = meta["rounds_completed"]
    return meta["rounds_completed"], meta.get("last_terminal_hash")


def _fmt_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def metrics_header(n_brackets: int) -> list[str]:
    return (
        list(METRICS_FIELDS_PREFIX)
        + [f"phi_{b}" for b in range(n_brackets)]
        + list(METRICS_FIELDS_SUFFIX)
    )


def run_experiment(
    config: RunConfig,
    seed: int,
    out_dir,
    render: bool = False,
    resume_from=None,
    events_path=None,
    event_kinds=("move", "collect", "respawn"),
) -> dict:
    """Run the configured number of rounds; write metrics, votes, round
    records, checkpoints, and a summary. Returns the summary dict."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "checkpoints").mkdir(exist_ok=True)
    n_brackets = len(config.fiscal.bracket_edges) - 1
    n = config.environment.n_agents
    # open every output now: an unwritable directory must fail before any
    # simulation happens
    metrics_fh = open(out / "metrics.csv", "w", encoding="utf-8", newline="")
    votes_fh = open(out / "votes.csv", "w", encoding="utf-8", newline="")
    rounds_fh = open(out / "rounds.jsonl", "w", encoding="utf-8", newline="")
    events_fh = open(events_path, "w", encoding="utf-8", newline="") if events_path else None
    try:
        metrics_fh.write(",".join(metrics_header(n_brackets)) + "\n")
        votes_fh.write(
            ",".join(["round", "eta"] + [f"report_{i}" for i in range(n)]) + "\n"
        )
        envs, states, train = build_experiment(config, seed)
        start_round = 0
        prev_terminal = None
        if resume_from is not None:
            start_round, prev_terminal = _restore_experiment(
                resume_from, envs, states, train, config, seed
            )
            restored_hash = state_hash(states[0])
            if prev_terminal is not None and restored_hash != prev_terminal:
                raise ContractViolationError(
                    "restored state hash does not match the checkpointed terminal hash"
                )
        if events_fh is not None:
            kinds = set(event_kinds)

            def sink(event: dict) -> None:
                if event["type"] in kinds:
                    events_fh.write(json.dumps(event, sort_keys=True) + "\n")

            envs[0].event_sink = sink

        welfare_by_round = []
        cumulative = np.zeros(n, dtype=np.int64)
        t0 = time.perf_counter()
        env_steps = 0
        for r in range(start_round, config.run.rounds):
            rows: list = []
            record = run_round(envs, states, train, config, r, metrics_rows=rows, render=render)
            if prev_terminal is not None and record.initial_state_hash != prev_terminal:
                raise ContractViolationError(
                    f"continuity violated entering round {r}: entry hash "
                    f"{record.initial_state_hash} != previous terminal {prev_terminal}"
                )
            prev_terminal = record.terminal_state_hash
            for row in rows:
                metrics_fh.write(",".join(_fmt_cell(v) for v in row) + "\n")
            votes_fh.write(
                ",".join(
                    [str(r), repr(record.eta)] + [repr(v) for v in record.reports]
                )
                + "\n"
            )
            rounds_fh.write(json.dumps(asdict(record), sort_keys=True) + "\n")
            welfare_by_round.append(record.welfare)
            cumulative += np.asarray(record.apple_totals, dtype=np.int64)
            env_steps += config.round_steps * config.learning.n_envs
            if (r + 1) % config.run.checkpoint_every == 0 or (r + 1) == config.run.rounds:
                tensors, meta = _checkpoint_payload(
                    envs, states, train, config, seed, prev_terminal
                )
                save_checkpoint(
                    out / "checkpoints" / f"ckpt_round_{r + 1:06d}.bin", tensors, meta
                )
        elapsed = time.perf_counter() - t0
        throughput = env_steps / elapsed if elapsed > 0 else float("inf")
        summary = {
            "seed": int(seed),
            "rounds_executed": config.run.rounds - start_round,
            "first_round": start_round,
            "env_steps": int(env_steps),
            "wall_seconds": elapsed,
            "env_steps_per_second": throughput,
            "welfare_by_round": welfare_by_round,
            "apple_totals_cumulative": [int(v) for v in cumulative],
            "gini_apple_totals": gini(cumulative),
            "final_round_totals": list(
                map(int, states[0].apples_this_round)
            ),
        }
        with open(out / "summary.json", "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"env-steps/second: {throughput:.1f} ({env_steps} steps in {elapsed:.2f}s)")
        return summary
    finally:
        metrics_fh.close()
        votes_fh.close()
        rounds_fh.close()
        if events_fh is not None:
            events_fh.close()


def evaluate_checkpoint(checkpoint_path, episodes: int, seed: int = 0) -> list[dict]:
    """Frozen-policy rollouts from a checkpoint; no learning.

    Each episode is a fresh world (config episode length), with the voting
    round cadence and tax machinery running as in training. The anneal
    ceiling is taken at the checkpoint's round counter. Returns one summary
    dict per episode.
    """
    from .config import config_from_dict

    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    tensors, meta = load_checkpoint(checkpoint_path)
    if meta.get("kind") != "experiment":
        raise ValueError("not an experiment checkpoint")
    config = config_from_dict(meta["config"])
    lrn = config.learning
    n = config.environment.n_agents
    edges = tuple(config.fiscal.bracket_edges)
    n_brackets = len(edges) - 1
    grid_cfg = config.environment.to_grid_config()

    obs_dim = follower_obs_dim(grid_cfg.window_shape, n_brackets, n)
    follower_net = PolicyNetwork(obs_dim, (N_ACTIONS,), hidden_width=lrn.hidden_width)
    for k in follower_net.params:
        follower_net.params[k][...] = tensors[f"follower.{k}"]
    p_obs_dim = principal_obs_dim(grid_cfg.height, grid_cfg.width, n)
    principal_net = PolicyNetwork(
        p_obs_dim,
        (lrn.principal_rate_levels,) * n_brackets,
        hidden_width=lrn.hidden_width,
    )
    for k in principal_net.params:
        principal_net.params[k][...] = tensors[f"principal.{k}"]
    sigmas = tensors["types.sigma"].copy()
    reported = tensors["types.reported"].copy()
    ceiling = anneal_ceiling(
        max(0, meta["rounds_completed"] - 1),
        lrn.anneal_tax_free_rounds,
        lrn.anneal_rise_rounds,
    )
    space = PrincipalActionSpace.uniform(lrn.principal_rate_levels, ceiling)
    eta = social_choice_mean(reported, principal_report=config.voting.principal_bias)
    objective = _make_objective(config.voting.mode, eta)

    children = np.random.SeedSequence(seed).spawn(2 * episodes)
    period_len = config.fiscal.tax_period
    results = []
    for ep in range(episodes):
        env = HarvestEnv(grid_cfg)
        env.current_tax_weights = np.zeros(n_brackets)
        state = env.reset(children[2 * ep])
        rollout_rng = np.random.default_rng(children[2 * ep + 1])
        mixed_return = np.zeros(n)
        episode_totals = np.zeros(n, dtype=np.int64)
        prev_weights = np.zeros(n_brackets)
        n_total_periods = config.environment.episode_length // period_len
        schedule = TaxSchedule.zero(edges)
        encoder = ObsEncoder(grid_cfg.window_shape, n_brackets, n, 1)
        obs_list = env.observe_all(state)
        for period in range(n_total_periods):
            if period % config.run.periods_per_round == 0:
                if lrn.principal_mode == "zero":
                    schedule = TaxSchedule.zero(edges)
                else:
                    view = env.principal_observe(state)
                    pobs = encode_principal_view(view, eta)
                    schedule, _, _, _ = select_tax_schedule(
                        principal_net,
                        pobs,
                        space,
                        edges,
                        rollout_rng,
                        prev_weights=prev_weights,
                        max_change=lrn.divergence_bound,
                    )
                prev_weights = np.asarray(schedule.weights, dtype=np.float64)
                env.current_tax_weights = prev_weights
                encoder.set_tax_weights(0, prev_weights)
                state.apples_this_round[:] = 0
            for _ in range(period_len):
                encoder.encode_env(0, obs_list)
                actions, _, _ = follower_net.sample(encoder.matrix, rollout_rng)
                _, collected, obs_list = env.step(state, actions[:, 0])
                episode_totals += collected
            a_period = state.apples_this_period.copy()
            apply_tax_period(state, schedule, period_len)
            apply_result = mixed_reward(
                a_period.astype(np.float64), sigmas, schedule, None
            )
            mixed_return += apply_result
            obs_list = env.observe_all(state)
        results.append(
            {
                "episode": ep,
                "apple_totals": [int(v) for v in episode_totals],
                "mixed_return": [float(v) for v in mixed_return],
                "welfare_final_round": objective_value(
                    objective, state.apples_this_round.astype(np.float64)
                ),
            }
        )
    return results
