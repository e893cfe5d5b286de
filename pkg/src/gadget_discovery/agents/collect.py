"""Episode drivers, agent training loops and dataset collection."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator

import numpy as np

from ..envs import circuit
from ..seqcore import Dataset, InteractionSequence, Step
from .ddqn import DdqnAgent, DdqnConfig
from .mcts import Mcts, MctsConfig, optics_search


class CollectionTimeout(RuntimeError):
    """The episode budget ran out before the dataset reached its target size."""


def collect_dataset(
    episodes: Iterator[InteractionSequence] | Callable[[], InteractionSequence],
    target_size: int,
    horizon: int,
    *,
    g_min: float = 1.0,
    gamma: float = 1.0,
    max_episodes: int | None = None,
) -> Dataset:
    """Keep unique sequences whose return reaches ``g_min`` until ``target_size`` are held."""
    if target_size < 0:
        raise ValueError("target size must be non-negative")
    next_episode = episodes if callable(episodes) else episodes.__next__
    ds = Dataset(horizon, strict=False)
    n = 0
    while len(ds) < target_size:
        if max_episodes is not None and n >= max_episodes:
            raise CollectionTimeout(f"collected {len(ds)}/{target_size} sequences within {max_episodes} episodes")
        try:
            ep = next_episode()
        except StopIteration:
            raise CollectionTimeout(f"episode source exhausted at {len(ds)}/{target_size} sequences") from None
        n += 1
        if ep.episode_return(gamma) >= g_min:
            ds.add_interaction(ep)
    ds.strict = True
    return ds


def mcts_episodes(seed: int, config: MctsConfig | None = None, agent_id: int = 0) -> Iterator[InteractionSequence]:
    search: Mcts = optics_search(seed, config)
    while True:
        yield search.episode(agent_id=agent_id)


@dataclass
class EpisodeLog:
    episode: int
    success: bool
    ret: float
    epsilon: float


def circuit_episode(
    agent: DdqnAgent | None,
    env: circuit.CircuitEnv,
    env_seed: int,
    rng: np.random.Generator,
    *,
    learn: bool = True,
    eps: float | None = None,
    agent_id: int = 0,
) -> InteractionSequence:
    """Play one circuit episode; ``agent=None`` plays uniformly at random."""
    env.reset(seed=env_seed)
    steps = []
    state = env.encoded()
    obs = env.observation()
    while not env.done:
        a = int(rng.integers(circuit.N_ACTIONS)) if agent is None else agent.act(state, eps)
        next_obs, r, done = env.step(a)
        next_state = env.encoded()
        if agent is not None and learn:
            agent.observe(state, a, r, next_state, done)
        steps.append(Step(obs, circuit.CATALOG_ACTIONS[a], r))
        state, obs = next_state, next_obs
    extra = {
        "env_seed": int(env_seed),
        "circuit": env.circuit_mnemonics(),
        "env_ops": [op.mnemonic for op in env.env_ops],
    }
    return InteractionSequence(tuple(steps), agent_id, extra)


def success(ep: InteractionSequence) -> bool:
    return ep.steps[-1].reward > 0


def _env_seeds(seed: int) -> Iterator[int]:
    rng = np.random.default_rng([seed, 0xE5])
    while True:
        yield int(rng.integers(2**62))


def train_ddqn(
    episodes: int,
    seed: int = 0,
    config: DdqnConfig | None = None,
    log_path: str | Path | None = None,
    agent_id: int = 0,
) -> tuple[DdqnAgent, list[EpisodeLog]]:
    env = circuit.CircuitEnv()
    agent = DdqnAgent(circuit.OBS_SIZE, circuit.N_ACTIONS, config, seed)
    seeds = _env_seeds(seed)
    logs = []
    for i in range(episodes):
        eps = agent.epsilon()
        ep = circuit_episode(agent, env, next(seeds), agent.rng, agent_id=agent_id)
        logs.append(EpisodeLog(i, success(ep), ep.episode_return(1.0), eps))
    if log_path is not None:
        write_episode_log(log_path, logs)
    return agent, logs


def random_success_rate(episodes: int, seed: int = 0) -> float:
    env = circuit.CircuitEnv()
    rng = np.random.default_rng([seed, 0x5A])
    seeds = _env_seeds(seed)
    wins = sum(success(circuit_episode(None, env, next(seeds), rng)) for _ in range(episodes))
    return wins / episodes


def ddqn_episodes(
    agent: DdqnAgent, seed: int, *, eps: float | None = None, learn: bool = False, agent_id: int = 0
) -> Iterator[InteractionSequence]:
    """Episodes from an agent; env seeds come from a stream separate from training."""
    env = circuit.CircuitEnv()
    seeds = _env_seeds(seed + 7919)
    while True:
        yield circuit_episode(agent, env, next(seeds), agent.rng, learn=learn, eps=eps, agent_id=agent_id)


def write_episode_log(path: str | Path, logs: list[EpisodeLog]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["episode", "success", "return", "epsilon"])
        for row in logs:
            w.writerow([row.episode, int(row.success), f"{row.ret:g}", f"{row.epsilon:.6f}"])


def learning_curve(flags, window: int = 1000) -> list[tuple[int, int, float, float]]:
    """Per complete window: (index, first episode, mean, standard deviation)."""
    x = np.asarray(flags, dtype=float)
    out = []
    for k in range(len(x) // window):
        chunk = x[k * window : (k + 1) * window]
        out.append((k, k * window, float(chunk.mean()), float(chunk.std())))
    return out


def write_learning_curve(path: str | Path, flags, window: int = 1000) -> list[tuple[int, int, float, float]]:
    rows = learning_curve(flags, window)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["window", "first_episode", "mean", "std"])
        for k, start, m, s in rows:
            w.writerow([k, start, f"{m:.6f}", f"{s:.6f}"])
    return rows
