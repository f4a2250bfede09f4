"""Run configuration: a strict, typed key-value tree loaded from YAML.

Unknown keys are rejected loudly and every error names the offending dotted
key — reproducible experiments need configs that fail fast, not configs
that silently ignore typos.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import yaml

from .errors import ConfigError
from .fiscal import DEFAULT_BRACKET_EDGES
from .grid import DEFAULT_RESPAWN_PROBABILITIES, GridConfig


@dataclass(frozen=True)
class EnvironmentSection:
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

    def to_grid_config(self) -> GridConfig:
        return GridConfig(
            width=self.width,
            height=self.height,
            n_agents=self.n_agents,
            initial_apples=self.initial_apples,
            apple_clusters=self.apple_clusters,
            apple_cells=self.apple_cells,
            episode_length=self.episode_length,
            respawn_probabilities=tuple(self.respawn_probabilities),
            view_forward=self.view_forward,
            view_right=self.view_right,
            view_backward=self.view_backward,
            view_left=self.view_left,
        )


@dataclass(frozen=True)
class FiscalSection:
    bracket_edges: tuple = DEFAULT_BRACKET_EDGES
    tax_period: int = 50
    delivery: str = "per_period"  # or end_of_round
    social_reward_scope: str = "all"  # or field_of_view


@dataclass(frozen=True)
class VotingSection:
    mode: str = "interpolated"  # or utilitarian | nash | egalitarian
    truthful: bool = True
    principal_bias: float | None = None


@dataclass(frozen=True)
class LearningSection:
    hidden_width: int = 64
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip: float = 0.2
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    learning_rate: float = 3e-4
    epochs: int = 4
    minibatch: int = 256
    sampling_horizon: int = 200
    n_envs: int = 1
    principal_mode: str = "learn"  # or zero (no-tax baseline)
    principal_rate_levels: int = 21
    principal_update_every: int = 8
    principal_learning_rate: float = 3e-4
    anneal_tax_free_rounds: int = 20
    anneal_rise_rounds: int = 50
    divergence_bound: float | None = None
    sigma_range: tuple = (0.0, 1.0)


@dataclass(frozen=True)
class RunSection:
    rounds: int = 10
    periods_per_round: int = 4
    checkpoint_every: int = 5


@dataclass(frozen=True)
class RunConfig:
    environment: EnvironmentSection = field(default_factory=EnvironmentSection)
    fiscal: FiscalSection = field(default_factory=FiscalSection)
    voting: VotingSection = field(default_factory=VotingSection)
    learning: LearningSection = field(default_factory=LearningSection)
    run: RunSection = field(default_factory=RunSection)

    @property
    def round_steps(self) -> int:
        return self.run.periods_per_round * self.fiscal.tax_period


_SECTIONS = {
    "environment": EnvironmentSection,
    "fiscal": FiscalSection,
    "voting": VotingSection,
    "learning": LearningSection,
    "run": RunSection,
}

_LIST_KEYS = {
    "environment.respawn_probabilities",
    "environment.apple_cells",
    "fiscal.bracket_edges",
    "learning.sigma_range",
}


def _coerce(dotted: str, expected_type, value):
    if value is None:
        return None
    if dotted in _LIST_KEYS:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{dotted}: expected a list")
        if dotted == "environment.apple_cells":
            try:
                return tuple((int(r), int(c)) for r, c in value)
            except (TypeError, ValueError):
                raise ConfigError(f"{dotted}: expected a list of [row, col] pairs") from None
        return tuple(value)
    if expected_type is bool or isinstance(value, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{dotted}: expected a boolean, got {value!r}")
        return value
    if expected_type is int:
        if not isinstance(value, int):
            raise ConfigError(f"{dotted}: expected an integer, got {value!r}")
        return value
    if expected_type is float:
        if not isinstance(value, (int, float)):
            raise ConfigError(f"{dotted}: expected a number, got {value!r}")
        return float(value)
    if expected_type is str:
        if not isinstance(value, str):
            raise ConfigError(f"{dotted}: expected a string, got {value!r}")
        return value
    return value


_OPTIONAL_FLOAT_KEYS = {"voting.principal_bias", "learning.divergence_bound"}
_OPTIONAL_LIST_KEYS = {"environment.apple_cells"}


def _build_section(name: str, cls, data: dict):
    if not isinstance(data, dict):
        raise ConfigError(f"{name}: expected a mapping")
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        dotted = f"{name}.{key}"
        if key not in known:
            raise ConfigError(f"unknown config key: {dotted}")
        fobj = known[key]
        if dotted in _OPTIONAL_FLOAT_KEYS:
            kwargs[key] = None if value is None else _coerce(dotted, float, value)
        elif dotted in _OPTIONAL_LIST_KEYS:
            kwargs[key] = None if value is None else _coerce(dotted, tuple, value)
        else:
            base = fobj.type
            expected = {"int": int, "float": float, "str": str, "bool": bool}.get(
                base if isinstance(base, str) else getattr(base, "__name__", ""), None
            )
            kwargs[key] = _coerce(dotted, expected, value)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from None


def config_from_dict(data: dict) -> RunConfig:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    sections = {}
    for key, value in data.items():
        if key not in _SECTIONS:
            raise ConfigError(f"unknown config key: {key}")
        sections[key] = _build_section(key, _SECTIONS[key], value or {})
    cfg = RunConfig(**sections)
    _validate_cross(cfg)
    return cfg


def _validate_cross(cfg: RunConfig) -> None:
    env, fis, vot, lrn, run = cfg.environment, cfg.fiscal, cfg.voting, cfg.learning, cfg.run
    try:
        env.to_grid_config()
    except ValueError as exc:
        raise ConfigError(f"environment: {exc}") from None
    edges = fis.bracket_edges
    if len(edges) < 2 or edges[0] != 0 or any(b <= a for a, b in zip(edges, edges[1:])):
        raise ConfigError("fiscal.bracket_edges must ascend strictly from 0")
    if fis.tax_period < 1:
        raise ConfigError("fiscal.tax_period must be >= 1")
    if env.episode_length % fis.tax_period != 0:
        raise ConfigError(
            "environment.episode_length must be divisible by fiscal.tax_period "
            f"({env.episode_length} % {fis.tax_period} != 0)"
        )
    if fis.delivery not in ("per_period", "end_of_round"):
        raise ConfigError("fiscal.delivery must be per_period or end_of_round")
    if fis.social_reward_scope not in ("all", "field_of_view"):
        raise ConfigError("fiscal.social_reward_scope must be all or field_of_view")
    if vot.mode not in ("interpolated", "utilitarian", "nash", "egalitarian"):
        raise ConfigError("voting.mode must be interpolated, utilitarian, nash, or egalitarian")
    if vot.principal_bias is not None and not (0 <= vot.principal_bias <= 1):
        raise ConfigError("voting.principal_bias must lie in [0, 1]")
    if run.rounds < 1:
        raise ConfigError("run.rounds must be >= 1")
    if run.periods_per_round < 1:
        raise ConfigError("run.periods_per_round must be >= 1")
    if run.checkpoint_every < 1:
        raise ConfigError("run.checkpoint_every must be >= 1")
    round_steps = run.periods_per_round * fis.tax_period
    if lrn.sampling_horizon < 1:
        raise ConfigError("learning.sampling_horizon must be >= 1")
    if round_steps % lrn.sampling_horizon != 0:
        raise ConfigError(
            "run.periods_per_round * fiscal.tax_period must be divisible by "
            f"learning.sampling_horizon ({round_steps} % {lrn.sampling_horizon} != 0)"
        )
    if not (0 <= lrn.gamma <= 1 and 0 <= lrn.gae_lambda <= 1):
        raise ConfigError("learning.gamma and learning.gae_lambda must lie in [0, 1]")
    if lrn.clip <= 0:
        raise ConfigError("learning.clip must be positive")
    if lrn.hidden_width < 1 or lrn.epochs < 1 or lrn.minibatch < 1 or lrn.n_envs < 1:
        raise ConfigError(
            "learning.hidden_width, epochs, minibatch, and n_envs must be >= 1"
        )
    if lrn.principal_mode not in ("learn", "zero"):
        raise ConfigError("learning.principal_mode must be learn or zero")
    if lrn.principal_rate_levels < 2:
        raise ConfigError("learning.principal_rate_levels must be >= 2")
    if lrn.principal_update_every < 1:
        raise ConfigError("learning.principal_update_every must be >= 1")
    if lrn.anneal_tax_free_rounds < 0 or lrn.anneal_rise_rounds < 1:
        raise ConfigError(
            "learning.anneal_tax_free_rounds must be >= 0 and anneal_rise_rounds >= 1"
        )
    if lrn.divergence_bound is not None and lrn.divergence_bound < 0:
        raise ConfigError("learning.divergence_bound must be >= 0")
    sr = lrn.sigma_range
    if len(sr) != 2 or not (0 <= sr[0] <= sr[1] <= 1):
        raise ConfigError("learning.sigma_range must be [lo, hi] with 0 <= lo <= hi <= 1")


def default_config() -> RunConfig:
    return RunConfig()


def load_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML: {exc}") from None
    return config_from_dict(data)


def config_to_dict(cfg: RunConfig) -> dict:
    """Plain-dict echo of a config (checkpoint metadata, summaries)."""

    def section(obj):
        out = {}
        for f in fields(obj):
            v = getattr(obj, f.name)
            if isinstance(v, tuple):
                v = [list(x) if isinstance(x, tuple) else x for x in v]
            out[f.name] = v
        return out

    return {
        "environment": section(cfg.environment),
        "fiscal": section(cfg.fiscal),
        "voting": section(cfg.voting),
        "learning": section(cfg.learning),
        "run": section(cfg.run),
    }
