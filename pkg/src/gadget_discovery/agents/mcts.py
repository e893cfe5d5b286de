"""Tree search with a novelty-driven intrinsic reward.

Each rollout descends from the root for ``horizon`` steps. A node with
untried actions expands one of them uniformly at random; a fully expanded
node follows the highest ``uct_mod`` child. The terminal setup is evaluated;
with intrinsic motivation the rollout earns 1 only the first time a rewarded
terminal state is seen, otherwise the extrinsic reward is used directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Hashable

import numpy as np

from ..seqcore import InteractionSequence, Step


class Node:
    __slots__ = ("children", "n", "u")

    def __init__(self) -> None:
        self.children: dict[int, Node] = {}
        self.n = 0
        self.u = 0


@dataclass
class MctsConfig:
    horizon: int = 12
    c: float = 0.01
    boredom: int = 1000
    intrinsic: bool = True
    full_reset: bool = False

    def __post_init__(self) -> None:
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.boredom < 1:
            raise ValueError("boredom threshold must be >= 1")


@dataclass(frozen=True)
class Outcome:
    """Evaluation of a terminal setup: extrinsic reward and canonical state identity."""

    reward: float
    key: Hashable | None = None
    info: dict = field(default_factory=dict)


def uct_mod(parent: Node, child: Node, c: float = 0.01) -> float:
    if child.n < 1:
        raise ValueError("uct_mod needs a visited child")
    return child.u / child.n + 0.001 * c * math.sqrt(math.log(parent.n) / child.n)


def _uct_all(node: Node, c: float) -> tuple[list[int], np.ndarray]:
    acts = list(node.children)
    n = np.array([node.children[a].n for a in acts], dtype=float)
    u = np.array([node.children[a].u for a in acts], dtype=float)
    if np.any(n < 1):
        raise ValueError("uct_mod needs visited children")
    return acts, u / n + 0.001 * c * np.sqrt(math.log(node.n) / n)


class Mcts:
    """Single-start tree search over a fixed action catalog.

    ``evaluate(actions)`` scores a complete action sequence and returns an
    ``Outcome``; ``actions`` are catalog indices mapped through ``catalog``.
    """

    def __init__(
        self,
        catalog: list,
        evaluate: Callable[[list], Outcome],
        config: MctsConfig | None = None,
        seed: int = 0,
    ):
        self.catalog = list(catalog)
        self.evaluate = evaluate
        self.config = config or MctsConfig()
        self.rng = np.random.default_rng(seed)
        self.root = Node()
        self.registry: set[Hashable] = set()
        self.boredom_resets = 0
        self.rollouts = 0

    def _select(self, node: Node) -> tuple[int, bool]:
        n_actions = len(self.catalog)
        if len(node.children) < n_actions:
            untried = [a for a in range(n_actions) if a not in node.children]
            return untried[int(self.rng.integers(len(untried)))], True
        acts, vals = _uct_all(node, self.config.c)
        best = np.flatnonzero(vals >= vals.max() - 1e-15)
        return acts[int(best[self.rng.integers(len(best))])], False

    def rollout(self) -> tuple[list[int], Outcome, float]:
        """One descent: returns (action indices, outcome, reward backed up)."""
        path = [self.root]
        actions: list[int] = []
        node = self.root
        for _ in range(self.config.horizon):
            a, new = self._select(node)
            if new:
                node.children[a] = Node()
            node = node.children[a]
            path.append(node)
            actions.append(a)
        outcome = self.evaluate([self.catalog[a] for a in actions])
        rewarded = outcome.reward > 0
        novel = rewarded and outcome.key is not None and outcome.key not in self.registry
        if rewarded and outcome.key is not None:
            self.registry.add(outcome.key)
        r = (1.0 if novel else 0.0) if self.config.intrinsic else float(outcome.reward)
        for nd in path:
            nd.n += 1
            nd.u += r
        self.rollouts += 1
        self.boredom_check(path)
        return actions, outcome, r

    def boredom_check(self, path: list[Node] | None = None) -> bool:
        """Reset novelty counts once any count reaches the threshold.

        Only novelty counts get bored; with extrinsic values this is a no-op.
        """
        if not self.config.intrinsic:
            return False
        nodes = path[1:] if path is not None else None
        if nodes is None:
            hit = any(nd.u >= self.config.boredom for nd in self._iter_nodes(include_root=False))
        else:
            hit = any(nd.u >= self.config.boredom for nd in nodes)
        if not hit:
            return False
        self.boredom_resets += 1
        if self.config.full_reset:
            self.root = Node()
            return True
        for nd in self._iter_nodes(include_root=True):
            nd.u = 0
        return True

    def _iter_nodes(self, include_root: bool):
        stack = [self.root]
        while stack:
            nd = stack.pop()
            if nd is not self.root or include_root:
                yield nd
            stack.extend(nd.children.values())

    def episode(self, to_action: Callable[[object], tuple] = lambda x: x, agent_id: int = 0) -> InteractionSequence:
        """Run one rollout and package it as an interaction sequence."""
        actions, outcome, _ = self.rollout()
        acts = [tuple(to_action(self.catalog[a])) for a in actions]
        steps = []
        for t, a in enumerate(acts):
            r = float(outcome.reward) if t == len(acts) - 1 else 0.0
            steps.append(Step(tuple(acts[:t]), a, r))
        return InteractionSequence(tuple(steps), agent_id, dict(outcome.info))

    def n_nodes(self) -> int:
        return sum(1 for _ in self._iter_nodes(include_root=True))


def optics_outcome(elements: list) -> Outcome:
    """Evaluate an optics setup for the search agent."""
    from ..envs import optics

    state = optics.conditional_state(elements)
    if state.is_zero():
        return Outcome(0.0, None, {"srv": None})
    srv = optics.schmidt_rank_vector(state)
    reward = optics.reward_qo(srv)
    key = optics.state_key(state) if reward else None
    return Outcome(float(reward), key, {"srv": list(srv)})


def optics_search(seed: int = 0, config: MctsConfig | None = None) -> Mcts:
    from ..envs import optics

    return Mcts(list(optics.CATALOG_ACTIONS), optics_outcome, config, seed)
