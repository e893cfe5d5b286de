"""Double deep Q-learning with a small dense network, in plain numpy."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np


class Mlp:
    """ReLU network with a linear output layer.

    Parameters are ``weights[i]`` of shape (fan_in, fan_out) and ``biases[i]``.
    Initialization is Glorot-uniform, biases zero.
    """

    def __init__(self, sizes: Sequence[int], rng: np.random.Generator | int | None = None, dtype=np.float64):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        rng = np.random.default_rng(rng)
        self.sizes = list(sizes)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            lim = np.sqrt(6.0 / (fan_in + fan_out))
            self.weights.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)).astype(dtype))
            self.biases.append(np.zeros(fan_out, dtype=dtype))

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy_from(self, other: "Mlp") -> None:
        for mine, theirs in zip(self.params, other.params):
            mine[...] = theirs

    def clone(self) -> "Mlp":
        twin = Mlp.__new__(Mlp)
        twin.sizes = list(self.sizes)
        twin.weights = [w.copy() for w in self.weights]
        twin.biases = [b.copy() for b in self.biases]
        return twin

    def forward(self, x: np.ndarray) -> np.ndarray:
        h = np.asarray(x, dtype=self.weights[0].dtype)
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = np.maximum(h, 0.0)
        return h

    __call__ = forward

    def forward_backward(self, x: np.ndarray, grad_fn) -> tuple[float, list[np.ndarray]]:
        """Run forward, get ``(loss, dL/dout)`` from ``grad_fn(out)`` and backpropagate.

        Returns the loss and gradients in ``params`` order.
        """
        acts = [np.asarray(x, dtype=self.weights[0].dtype)]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = acts[-1] @ w + b
            if i < last:
                h = np.maximum(h, 0.0)
            acts.append(h)
        loss, g = grad_fn(acts[-1])
        grads: list[np.ndarray] = []
        for i in range(last, -1, -1):
            if i < last:
                g = g * (acts[i + 1] > 0)
            grads.append(g.sum(axis=0))
            grads.append(acts[i].T @ g)
            if i > 0:
                g = g @ self.weights[i].T
        grads.reverse()
        return loss, grads

    def n_params(self) -> int:
        return sum(p.size for p in self.params)


class Adam:
    def __init__(self, params: list[np.ndarray], lr: float = 1e-5, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        c1 = 1 - self.b1**self.t
        c2 = 1 - self.b2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def smooth_l1(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean Huber loss (beta 1) and its gradient with respect to ``pred``."""
    diff = pred - target
    ad = np.abs(diff)
    loss = np.where(ad < 1.0, 0.5 * diff**2, ad - 0.5)
    grad = np.where(ad < 1.0, diff, np.sign(diff)) / diff.size
    return float(loss.mean()), grad


class ReplayBuffer:
    """Fixed-capacity FIFO of transitions stored in preallocated arrays."""

    def __init__(self, capacity: int, state_size: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.states = np.zeros((capacity, state_size), dtype=np.float32)
        self.next_states = np.zeros((capacity, state_size), dtype=np.float32)
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.dones = np.zeros(capacity, dtype=bool)
        self.ids = np.zeros(capacity, dtype=np.int64)  # insertion counter, for FIFO checks
        self.head = 0
        self.size = 0
        self.pushed = 0

    def __len__(self) -> int:
        return self.size

    def push(self, state, action: int, reward: float, next_state, done: bool) -> None:
        i = self.head
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_states[i] = next_state
        self.dones[i] = done
        self.ids[i] = self.pushed
        self.pushed += 1
        self.head = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
        idx = rng.integers(self.size, size=batch)
        return {
            "states": self.states[idx],
            "actions": self.actions[idx],
            "rewards": self.rewards[idx],
            "next_states": self.next_states[idx],
            "dones": self.dones[idx],
        }


def ddqn_target(rewards, next_states, dones, policy: Mlp, target: Mlp, gamma: float) -> np.ndarray:
    """``r + gamma * Q_target(s', argmax_a Q_policy(s', a))``, or ``r`` at terminal steps."""
    rewards = np.asarray(rewards, dtype=float)
    dones = np.asarray(dones, dtype=bool)
    if gamma == 0:
        return rewards.copy()
    best = np.argmax(policy(next_states), axis=1)
    q_next = target(next_states)[np.arange(len(best)), best]
    return rewards + gamma * np.where(dones, 0.0, q_next)


def epsilon(t: int, eps0: float = 1.0, decay: float = 0.999991, floor: float = 0.01) -> float:
    if t < 0:
        raise ValueError("t must be non-negative")
    return max(floor, eps0 * decay**t)


@dataclass
class DdqnConfig:
    hidden: tuple[int, ...] = (150, 150, 150)
    lr: float = 1e-5
    batch: int = 100
    capacity: int = 2000
    sync_every: int = 1000
    gamma: float = 0.9
    eps0: float = 1.0
    eps_decay: float = 0.999991
    eps_min: float = 0.01


class DdqnAgent:
    def __init__(self, n_inputs: int, n_actions: int, config: DdqnConfig | None = None, seed: int = 0):
        self.config = config or DdqnConfig()
        self.rng = np.random.default_rng(seed)
        sizes = [n_inputs, *self.config.hidden, n_actions]
        self.policy = Mlp(sizes, self.rng, dtype=np.float32)
        self.target = self.policy.clone()
        self.optimizer = Adam(self.policy.params, lr=self.config.lr)
        self.buffer = ReplayBuffer(self.config.capacity, n_inputs)
        self.n_actions = n_actions
        self.steps = 0
        self.replay_calls = 0

    def epsilon(self) -> float:
        c = self.config
        return epsilon(self.steps, c.eps0, c.eps_decay, c.eps_min)

    def act(self, state: np.ndarray, eps: float | None = None) -> int:
        eps = self.epsilon() if eps is None else eps
        if self.rng.random() < eps:
            return int(self.rng.integers(self.n_actions))
        q = self.policy(state[None, :])[0]
        return int(np.argmax(q))

    def observe(self, state, action, reward, next_state, done) -> float | None:
        """Store a transition, advance the exploration clock and learn once."""
        self.buffer.push(state, action, reward, next_state, done)
        self.steps += 1
        return self.train_step()

    def train_step(self) -> float | None:
        c = self.config
        if len(self.buffer) < c.batch:
            return None
        b = self.buffer.sample(c.batch, self.rng)
        self.replay_calls += 1
        y = ddqn_target(b["rewards"], b["next_states"], b["dones"], self.policy, self.target, c.gamma)
        rows = np.arange(c.batch)

        def grad_fn(out):
            loss, g = smooth_l1(out[rows, b["actions"]], y)
            full = np.zeros_like(out)
            full[rows, b["actions"]] = g
            return loss, full

        loss, grads = self.policy.forward_backward(b["states"], grad_fn)
        self.optimizer.step(grads)
        if self.replay_calls % c.sync_every == 0:
            self.target.copy_from(self.policy)
        return loss

    def save(self, path: str | Path) -> None:
        save_checkpoint(path, self.policy, {"steps": self.steps, "config": asdict(self.config)})


def save_checkpoint(path: str | Path, net: Mlp, meta: dict | None = None) -> None:
    """Flat float64 parameters in ``<path>.bin`` plus a JSON header in ``<path>.json``."""
    path = Path(path)
    flat = np.concatenate([p.ravel() for p in net.params]).astype("<f8")
    header = {"sizes": net.sizes, "shapes": [list(p.shape) for p in net.params], "meta": meta or {}}
    path.with_suffix(".json").write_text(json.dumps(header, indent=1))
    path.with_suffix(".bin").write_bytes(flat.tobytes())


def load_checkpoint(path: str | Path) -> tuple[Mlp, dict]:
    path = Path(path)
    header = json.loads(path.with_suffix(".json").read_text())
    flat = np.frombuffer(path.with_suffix(".bin").read_bytes(), dtype="<f8")
    net = Mlp(header["sizes"], 0)
    pos = 0
    for p, shape in zip(net.params, header["shapes"]):
        if list(p.shape) != shape:
            raise ValueError("checkpoint shapes do not match the declared sizes")
        n = p.size
        p[...] = flat[pos : pos + n].reshape(shape)
        pos += n
    if pos != flat.size:
        raise ValueError("checkpoint has trailing data")
    return net, header["meta"]
