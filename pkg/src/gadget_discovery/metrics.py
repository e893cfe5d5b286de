"""Distances between gadgets: utility tallies and initialization-set context."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Hashable, Sequence

import numpy as np

from .seqcore import Action, ActionSeq, InteractionSequence, project_features

CategoryFn = Callable[[Action], int]


def utility_encode(
    gadget: Sequence[Action],
    category: CategoryFn,
    weights: Sequence[float],
) -> np.ndarray:
    """Tally of actions per category, scaled componentwise by ``weights``."""
    weights = np.asarray(weights, dtype=float)
    tally = np.zeros(len(weights))
    for a in gadget:
        c = category(a)
        if c is None or not 0 <= c < len(weights):
            raise ValueError(f"action {a} maps to no utility category")
        tally[c] += 1
    return tally * weights


def utility_distance(g1, g2, category: CategoryFn, weights: Sequence[float]) -> float:
    return float(np.linalg.norm(utility_encode(g1, category, weights) - utility_encode(g2, category, weights)))


def utility_distance_matrix(gadgets: Sequence[Sequence[Action]], category: CategoryFn, weights) -> np.ndarray:
    enc = np.array([utility_encode(g, category, weights) for g in gadgets]).reshape(len(gadgets), -1)
    diff = enc[:, None, :] - enc[None, :, :]
    return np.sqrt((diff**2).sum(axis=-1))


@dataclass(frozen=True)
class InitializationSet:
    gadget: ActionSeq
    observations: tuple[ActionSeq, ...]
    rewards: tuple[float, ...]
    cap: int
    n_occurrences: int

    @property
    def empty(self) -> bool:
        return not self.observations

    def mean_length(self) -> float:
        return float(np.mean([len(o) for o in self.observations])) if self.observations else float("nan")

    def mean_reward(self) -> float:
        return float(np.mean(self.rewards)) if self.rewards else float("nan")


def first_occurrence(gadget: Sequence[Action], actions: Sequence[Action]) -> int | None:
    """Index of the first occurrence of the gadget's first action, if the gadget occurs."""
    it = iter(enumerate(actions))
    first = None
    for g in gadget:
        for t, a in it:
            if a == g:
                if first is None:
                    first = t
                break
        else:
            return None
    return first


def extract_initialization_set(
    gadget: Sequence[Action],
    episodes: Sequence[InteractionSequence],
    cap: int = 2000,
    *,
    keep: Sequence[int] | None = None,
    obs_reward: Callable[[InteractionSequence, int], float] | None = None,
    seed: int = 0,
) -> InitializationSet:
    """Observations seen right before each sequence's first use of the gadget.

    ``keep`` projects actions and observations before matching. ``obs_reward``
    scores the observation at step t (defaults to the reward collected on the
    previous step, or 0 at t=0). When more than ``cap`` observations exist a
    seeded uniform subsample is drawn.
    """
    gadget = tuple(tuple(a) for a in gadget)
    obs, rewards = [], []
    for ep in episodes:
        acts = ep.actions if keep is None else project_features(ep.actions, keep)
        t = first_occurrence(gadget, acts)
        if t is None:
            continue
        o = ep.steps[t].observation
        obs.append(o if keep is None else project_features(o, keep))
        if obs_reward is not None:
            rewards.append(obs_reward(ep, t))
        else:
            rewards.append(ep.steps[t - 1].reward if t > 0 else 0.0)
    n_occ = len(obs)
    if n_occ > cap:
        idx = np.sort(np.random.default_rng(seed).choice(n_occ, size=cap, replace=False))
        obs = [obs[i] for i in idx]
        rewards = [rewards[i] for i in idx]
    return InitializationSet(gadget, tuple(obs), tuple(rewards), cap, n_occ)


def observation_distance(o: Sequence[Action], q: Sequence[Action], weights: Sequence[float] = (1 / 3, 1 / 3, 1 / 3)) -> float:
    """Weighted per-feature mismatch rate; observations of different length are maximally far."""
    if len(o) != len(q):
        return 1.0
    if not o:
        return 0.0
    total = 0.0
    for a, b in zip(o, q):
        total += sum(w for w, x, y in zip(weights, a, b) if x != y)
    return total / len(o)


def initset_distance_naive(set1, set2, weights=(1 / 3, 1 / 3, 1 / 3)) -> float:
    """Symmetric average of minimum distances, by direct double loop."""
    if not set1 or not set2:
        raise ValueError("initialization sets must be non-empty")
    d = np.array([[observation_distance(o, q, weights) for q in set2] for o in set1])
    return float((d.min(axis=1).sum() + d.min(axis=0).sum()) / (len(set1) + len(set2)))


class ObservationEncoder:
    """One-hot feature encoding so weighted Hamming distances become a matmul.

    For equal-length observations ``m(o, q) = sum(w) - <e(o), e(q)> / L``
    where ``e`` stacks ``sqrt(w_i)``-scaled one-hot codes of every feature.
    """

    def __init__(self, alphabet_sizes: Sequence[int], weights: Sequence[float]):
        self.sizes = list(alphabet_sizes)
        self.scale = np.sqrt(np.asarray(weights, dtype=float))
        self.offsets = np.concatenate([[0], np.cumsum(self.sizes)[:-1]])
        self.width = int(sum(self.sizes))

    def encode(self, observations: Sequence[ActionSeq]) -> dict[int, tuple[np.ndarray, np.ndarray]]:
        """Group by length -> (row indices, encoded matrix)."""
        groups: dict[int, list[int]] = {}
        for i, o in enumerate(observations):
            groups.setdefault(len(o), []).append(i)
        out = {}
        for length, idx in groups.items():
            mat = np.zeros((len(idx), max(length, 1) * self.width))
            for r, i in enumerate(idx):
                for k, a in enumerate(observations[i]):
                    for f, code in enumerate(a):
                        mat[r, k * self.width + self.offsets[f] + code] = self.scale[f]
            out[length] = (np.array(idx), mat)
        return out


def initset_distance(
    set1: Sequence[ActionSeq],
    set2: Sequence[ActionSeq],
    weights: Sequence[float] = (1 / 3, 1 / 3, 1 / 3),
    alphabet_sizes: Sequence[int] | None = None,
) -> float:
    """Symmetric average of each element's minimum distance to the other set."""
    if not set1 or not set2:
        raise ValueError("initialization sets must be non-empty")
    if alphabet_sizes is None:
        codes = [a for s in (set1, set2) for o in s for a in o]
        alphabet_sizes = [1 + max((a[f] for a in codes), default=0) for f in range(len(weights))]
    enc = ObservationEncoder(alphabet_sizes, weights)
    return _initset_distance_encoded(enc.encode(set1), len(set1), enc.encode(set2), len(set2), float(np.sum(weights)))


def _initset_distance_encoded(g1, n1, g2, n2, wsum) -> float:
    # cross-length pairs sit at distance 1, so minima start there
    min1 = np.ones(n1)
    min2 = np.ones(n2)
    for length, (idx1, m1) in g1.items():
        if length not in g2:
            continue
        idx2, m2 = g2[length]
        if length == 0:
            min1[idx1] = 0.0
            min2[idx2] = 0.0
            continue
        d = (length * wsum - m1 @ m2.T) / length
        d[d < 1e-12] = 0.0  # rounding noise of the matmul on identical rows
        min1[idx1] = np.minimum(min1[idx1], d.min(axis=1))
        min2[idx2] = np.minimum(min2[idx2], d.min(axis=0))
    return float((min1.sum() + min2.sum()) / (n1 + n2))


def initset_distance_matrix(
    sets: Sequence[Sequence[ActionSeq]],
    alphabet_sizes: Sequence[int],
    weights: Sequence[float] = (1 / 3, 1 / 3, 1 / 3),
) -> np.ndarray:
    enc = ObservationEncoder(alphabet_sizes, weights)
    encoded = [enc.encode(s) for s in sets]
    wsum = float(np.sum(weights))
    n = len(sets)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            if not sets[i] or not sets[j]:
                raise ValueError(f"initialization set {i if not sets[i] else j} is empty")
            out[i, j] = out[j, i] = _initset_distance_encoded(encoded[i], len(sets[i]), encoded[j], len(sets[j]), wsum)
    return out


def write_matrix_csv(path: str | Path, matrix: np.ndarray, labels: Sequence[Hashable]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([""] + [str(l) for l in labels])
        for lab, row in zip(labels, matrix):
            w.writerow([str(lab)] + [f"{x:.10g}" for x in row])
