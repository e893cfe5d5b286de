"""Sequence and event primitives shared by the miners, metrics and agents.

Actions are plain tuples of small integer feature codes, so they hash, compare
lexicographically and serialize to JSON lists without any wrapping. A
sequence of actions is a tuple of such tuples. Timestamps are the implicit
positions ``0..T-1``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Hashable, Iterable, Iterator, Sequence

Action = tuple[int, ...]
ActionSeq = tuple[Action, ...]


class DuplicateSequenceError(ValueError):
    """Raised when a dataset would contain the same action sequence twice."""


def make_action(features: Iterable[int], alphabet_sizes: Sequence[int] | None = None) -> Action:
    """Build an action tuple, optionally validating arity and alphabet bounds."""
    action = tuple(int(f) for f in features)
    if alphabet_sizes is not None:
        if len(action) != len(alphabet_sizes):
            raise ValueError(f"action {action} has arity {len(action)}, expected {len(alphabet_sizes)}")
        for code, size in zip(action, alphabet_sizes):
            if not 0 <= code < size:
                raise ValueError(f"feature code {code} outside alphabet of size {size}")
    return action


@dataclass(frozen=True)
class Event:
    item: Action
    timestamp: int

    def __post_init__(self) -> None:
        if self.timestamp < 0:
            raise ValueError("timestamps are non-negative")


def events(seq: Sequence[Action]) -> list[Event]:
    return [Event(tuple(a), t) for t, a in enumerate(seq)]


def is_subsequence(sub: Sequence[Hashable], seq: Sequence[Hashable]) -> bool:
    """True iff ``sub`` embeds into ``seq`` preserving order (gaps allowed)."""
    it = iter(seq)
    return all(any(x == y for y in it) for x in sub)


def shortest_interval(sub: Sequence[Hashable], seq: Sequence[Hashable]) -> int:
    """Length of the shortest window ``seq[s:e+1]`` that contains ``sub``.

    Single pass: ``start[k]`` holds the latest window start from which the
    first ``k+1`` items of ``sub`` embed into the prefix scanned so far.
    """
    m = len(sub)
    if m == 0:
        raise ValueError("shortest interval of the empty pattern is undefined")
    start = [-1] * m
    best = None
    for j, item in enumerate(seq):
        # walk backwards so one position is not reused within the same step
        for k in range(m - 1, -1, -1):
            if sub[k] != item:
                continue
            if k == 0:
                start[0] = j
            elif start[k - 1] >= 0:
                start[k] = start[k - 1]
        if sub[m - 1] == item and start[m - 1] >= 0:
            width = j - start[m - 1] + 1
            if best is None or width < best:
                best = width
    if best is None:
        raise ValueError("pattern is not a subsequence of the sequence")
    return best


def episode_return(rewards: Sequence[float], gamma: float) -> float:
    """Discounted return with the first reward already discounted once."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    total = 0.0
    g = gamma
    for r in rewards:
        total += r * g
        g *= gamma
    return total


def project_features(seq: Sequence[Action], keep: Iterable[int]) -> ActionSeq:
    """Restrict every action to the feature indices in ``keep`` (0-based, order kept)."""
    idx = sorted(set(keep))
    if not idx:
        raise ValueError("keep must name at least one feature")
    return tuple(tuple(a[i] for i in idx) for a in seq)


@dataclass(frozen=True)
class Step:
    observation: ActionSeq
    action: Action
    reward: float


@dataclass(frozen=True)
class InteractionSequence:
    """One episode: ``T`` (observation, action, reward) triples."""

    steps: tuple[Step, ...]
    agent_id: int = 0
    extra: dict = field(default_factory=dict, compare=False, hash=False)

    @property
    def horizon(self) -> int:
        return len(self.steps)

    @property
    def actions(self) -> ActionSeq:
        return tuple(s.action for s in self.steps)

    @property
    def observations(self) -> tuple[ActionSeq, ...]:
        return tuple(s.observation for s in self.steps)

    @property
    def rewards(self) -> tuple[float, ...]:
        return tuple(s.reward for s in self.steps)

    def episode_return(self, gamma: float = 1.0) -> float:
        return episode_return(self.rewards, gamma)

    def to_record(self, gamma: float = 1.0) -> dict:
        rec = {
            "agent_id": self.agent_id,
            "actions": [list(a) for a in self.actions],
            "observations": [[list(a) for a in o] for o in self.observations],
            "rewards": list(self.rewards),
            "return": self.episode_return(gamma),
        }
        rec.update(self.extra)
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "InteractionSequence":
        steps = tuple(
            Step(tuple(tuple(a) for a in obs), tuple(act), float(r))
            for obs, act, r in zip(rec["observations"], rec["actions"], rec["rewards"])
        )
        known = {"agent_id", "actions", "observations", "rewards", "return"}
        extra = {k: v for k, v in rec.items() if k not in known}
        return cls(steps, int(rec.get("agent_id", 0)), extra)


class Dataset:
    """Duplicate-free collection of fixed-horizon action sequences.

    ``interactions`` keeps the full episodes (observations and rewards) when
    they are available, aligned with ``sequences``.
    """

    def __init__(self, horizon: int, *, strict: bool = True):
        if horizon <= 0:
            raise ValueError("horizon must be positive")
        self.horizon = horizon
        self.strict = strict
        self.sequences: list[ActionSeq] = []
        self.interactions: list[InteractionSequence | None] = []
        self._index: set[ActionSeq] = set()

    def __len__(self) -> int:
        return len(self.sequences)

    def __iter__(self) -> Iterator[ActionSeq]:
        return iter(self.sequences)

    def __contains__(self, seq) -> bool:
        return tuple(tuple(a) for a in seq) in self._index

    def add(self, seq: Sequence[Action], interaction: InteractionSequence | None = None) -> bool:
        """Insert a sequence; returns False (or raises when strict) on duplicates."""
        key = tuple(tuple(a) for a in seq)
        if len(key) != self.horizon:
            raise ValueError(f"sequence length {len(key)} != horizon {self.horizon}")
        if key in self._index:
            if self.strict:
                raise DuplicateSequenceError(f"duplicate sequence {key}")
            return False
        self._index.add(key)
        self.sequences.append(key)
        self.interactions.append(interaction)
        return True

    def add_interaction(self, episode: InteractionSequence) -> bool:
        return self.add(episode.actions, episode)

    @classmethod
    def from_sequences(cls, seqs: Iterable[Sequence[Action]], horizon: int | None = None) -> "Dataset":
        seqs = [tuple(tuple(a) for a in s) for s in seqs]
        if not seqs and horizon is None:
            raise ValueError("cannot infer the horizon of an empty dataset")
        ds = cls(horizon if horizon is not None else len(seqs[0]))
        for s in seqs:
            ds.add(s)
        return ds

    def project(self, keep: Iterable[int]) -> "Dataset":
        """Feature projection; sequences that collapse onto each other are merged."""
        keep = list(keep)
        out = Dataset(self.horizon, strict=False)
        for seq, inter in zip(self.sequences, self.interactions):
            out.add(project_features(seq, keep), inter)
        out.strict = self.strict
        return out


def write_jsonl(path: str | Path, episodes: Iterable[InteractionSequence], gamma: float = 1.0) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ep in episodes:
            fh.write(json.dumps(ep.to_record(gamma), separators=(",", ":")) + "\n")


def read_jsonl(path: str | Path) -> list[InteractionSequence]:
    with open(path, encoding="utf-8") as fh:
        return [InteractionSequence.from_record(json.loads(line)) for line in fh if line.strip()]


def dataset_from_episodes(episodes: Sequence[InteractionSequence]) -> Dataset:
    if not episodes:
        raise ValueError("no episodes")
    ds = Dataset(episodes[0].horizon)
    for ep in episodes:
        ds.add_interaction(ep)
    return ds
