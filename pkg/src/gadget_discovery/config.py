"""Run configuration: one TOML document with a section per stage."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .agents.ddqn import DdqnConfig
from .agents.mcts import MctsConfig
from .mining import MiningConfig

ENVS = ("qo", "qi")


@dataclass
class CollectConfig:
    agents: int = 10
    dataset_size: int = 10000
    max_episodes: int | None = None
    g_min: float = 1.0
    gamma: float = 1.0
    train_episodes: int = 0
    collect_epsilon: float | None = None
    curve_window: int = 1000


@dataclass
class MineConfig:
    count_range: tuple[int, int] = (1, 10)
    length_range: tuple[int, int | None] = (1, None)
    max_coverage: int | None = 2
    reward_filter: bool = False
    start: tuple[float, float] = (0.1, 0.7)
    max_attempts: int = 30
    keep_features: tuple[int, ...] | None = None

    def mining_config(self, g_min: float) -> MiningConfig:
        return MiningConfig(
            count_range=tuple(self.count_range),
            length_range=tuple(self.length_range),
            max_coverage=self.max_coverage,
            reward_filter=self.reward_filter,
            g_min=g_min,
            start=tuple(self.start),
            max_attempts=self.max_attempts,
        )


@dataclass
class ClusterConfig:
    min_samples: int = 2
    min_cluster_size: int = 5
    allow_single_cluster: bool = False
    utility_weights: tuple[float, ...] = (1.0, 1.0, 1.0, 1.0)
    initset_cap: int = 2000
    context_weights: tuple[float, ...] = (1 / 3, 1 / 3, 1 / 3)
    context: bool = False
    srv: bool = False


@dataclass
class RunConfig:
    env: str = "qo"
    seed: int = 0
    out: str = "runs"
    collect: CollectConfig = field(default_factory=CollectConfig)
    mine: MineConfig = field(default_factory=MineConfig)
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    mcts: MctsConfig = field(default_factory=MctsConfig)
    ddqn: DdqnConfig = field(default_factory=DdqnConfig)

    def __post_init__(self) -> None:
        if self.env not in ENVS:
            raise ValueError(f"unknown environment {self.env!r}; expected one of {ENVS}")
        if self.collect.agents < 1:
            raise ValueError("need at least one agent")
        if self.collect.dataset_size < 1:
            raise ValueError("dataset_size must be positive")

    @classmethod
    def default(cls, env: str) -> "RunConfig":
        """Settings of the published experiments."""
        if env == "qo":
            return cls(
                env="qo",
                collect=CollectConfig(agents=10, dataset_size=10000),
                mine=MineConfig(count_range=(1, 5), length_range=(4, 6), max_coverage=2, reward_filter=True),
                cluster=ClusterConfig(srv=True),
            )
        if env == "qi":
            return cls(
                env="qi",
                collect=CollectConfig(agents=3, dataset_size=80000, train_episodes=400000),
                mine=MineConfig(count_range=(1, 10), length_range=(3, None), max_coverage=2, keep_features=(0, 1, 2)),
                cluster=ClusterConfig(context=True),
            )
        raise ValueError(f"unknown environment {env!r}; expected one of {ENVS}")

    def agent_seeds(self) -> list[int]:
        return [self.seed * 1000 + i for i in range(self.collect.agents)]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_SECTIONS = {
    "collect": CollectConfig,
    "mine": MineConfig,
    "cluster": ClusterConfig,
    "mcts": MctsConfig,
    "ddqn": DdqnConfig,
}
_OPEN = {"length_range"}  # 0 in TOML stands for an open upper bound


def _coerce(section: str, cls, values: dict[str, Any]):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise ValueError(f"unknown keys in [{section}]: {sorted(unknown)}")
    out = {}
    for k, v in values.items():
        if isinstance(v, list):
            v = tuple(v)
            if k in _OPEN and len(v) == 2 and v[1] == 0:
                v = (v[0], None)
        out[k] = v
    return out


def load_config(
    path: str | Path | None = None,
    *,
    env: str | None = None,
    seed: int | None = None,
    out: str | None = None,
) -> RunConfig:
    """Defaults for the environment, overlaid with the TOML file, then with explicit overrides."""
    doc: dict[str, Any] = {}
    if path is not None:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    env = env or doc.get("env") or "qo"
    base = RunConfig.default(env)
    top = {k: v for k, v in doc.items() if k not in _SECTIONS}
    unknown = set(top) - {"env", "seed", "out"}
    if unknown:
        raise ValueError(f"unknown top-level keys: {sorted(unknown)}")
    sections = {}
    for name, cls in _SECTIONS.items():
        current = dataclasses.asdict(getattr(base, name))
        current.update(_coerce(name, cls, doc.get(name, {})))
        sections[name] = cls(**current)
    return RunConfig(
        env=env,
        seed=int(seed if seed is not None else top.get("seed", base.seed)),
        out=str(out if out is not None else top.get("out", base.out)),
        **sections,
    )
