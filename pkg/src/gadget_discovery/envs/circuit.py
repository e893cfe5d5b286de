"""Four-qubit circuit environment: protect the information on qubit 1.

Qubit 1 is the most significant bit of the 16-dim statevector. An operation
is encoded by four integer features:

* f1: 0 = gate (G), 1 = measurement (M)
* f2: 0 = one-qubit, 1 = two-qubit
* f3: 0..3 single qubits 1..4, 4..9 pairs 12, 13, 14, 23, 24, 34
* f4: X, Z, H, S, CNOT, CZ, PX, PY, PZ, Bell, BellSL, BellSR

The circuit has nine slots. The environment fills slots 1, 4 and 7 at reset
and the agent fills the rest in order, so the layout is A,E,A,A,E,A,A,E,A.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

N_QUBITS = 4
DIM = 2**N_QUBITS
N_SLOTS = 9
ENV_SLOTS = (1, 4, 7)
AGENT_SLOTS = tuple(s for s in range(N_SLOTS) if s not in ENV_SLOTS)
HORIZON = len(AGENT_SLOTS)
FINAL_SCALE = 5.0
TOL = 1e-9

OP_NAMES = ("X", "Z", "H", "S", "CNOT", "CZ", "PX", "PY", "PZ", "Bell", "BellSL", "BellSR")
REGISTERS = ((0,), (1,), (2,), (3,)) + tuple(itertools.combinations(range(4), 2))
ALPHABET_SIZES = (2, 2, 10, 12)
FEATURE_WIDTH = sum(ALPHABET_SIZES)
OBS_SIZE = N_SLOTS * FEATURE_WIDTH

_GATE1 = ("X", "Z", "H", "S")
_MEAS1 = ("PX", "PY", "PZ")
_GATE2 = ("CNOT", "CZ")
_MEAS2 = ("Bell", "BellSL", "BellSR")

_S = np.diag([1, 1j])
_PHI = np.array([1, 0, 0, 1]) / np.sqrt(2)
_P_BELL = np.outer(_PHI, _PHI.conj())
_SI = np.kron(_S, np.eye(2))
_IS = np.kron(np.eye(2), _S)
_PLUS = np.array([1, 1]) / np.sqrt(2)
_PLUS_I = np.array([1, 1j]) / np.sqrt(2)

LOCAL_MATRICES = {
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Z": np.diag([1, -1]).astype(complex),
    "H": np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2),
    "S": _S.astype(complex),
    "PX": np.outer(_PLUS, _PLUS.conj()),
    "PY": np.outer(_PLUS_I, _PLUS_I.conj()),
    "PZ": np.diag([1, 0]).astype(complex),
    "CNOT": np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex),
    "CZ": np.diag([1, 1, 1, -1]).astype(complex),
    "Bell": _P_BELL.astype(complex),
    "BellSL": (_SI @ _P_BELL @ _SI.conj().T).astype(complex),
    "BellSR": (_IS @ _P_BELL @ _IS.conj().T).astype(complex),
}


@dataclass(frozen=True)
class CircuitOp:
    kind: str  # "G" or "M"
    qubits: tuple[int, ...]  # 0-based, ascending
    name: str

    def __post_init__(self) -> None:
        allowed = {
            ("G", 1): _GATE1,
            ("M", 1): _MEAS1,
            ("G", 2): _GATE2,
            ("M", 2): _MEAS2,
        }.get((self.kind, len(self.qubits)))
        if allowed is None or self.name not in allowed:
            raise ValueError(f"{self.kind}{len(self.qubits)} cannot be {self.name}")
        if tuple(sorted(set(self.qubits))) != self.qubits or not all(0 <= q < N_QUBITS for q in self.qubits):
            raise ValueError(f"bad register {self.qubits}")

    @property
    def is_measurement(self) -> bool:
        return self.kind == "M"

    @property
    def register(self) -> str:
        return "".join(str(q + 1) for q in self.qubits)

    @property
    def mnemonic(self) -> str:
        return f"{self.kind}{len(self.qubits)}_{self.register}{self.name}"

    @property
    def short(self) -> str:
        """Mnemonic without the specific operation (the form seen after projection)."""
        return f"{self.kind}{len(self.qubits)}_{self.register}"

    def to_action(self) -> tuple[int, int, int, int]:
        return (
            0 if self.kind == "G" else 1,
            len(self.qubits) - 1,
            REGISTERS.index(self.qubits),
            OP_NAMES.index(self.name),
        )

    @classmethod
    def from_action(cls, action: Sequence[int]) -> "CircuitOp":
        if len(action) != 4:
            raise ValueError(f"circuit actions have 4 features, got {action}")
        f1, f2, f3, f4 = (int(x) for x in action)
        for code, size in zip((f1, f2, f3, f4), ALPHABET_SIZES):
            if not 0 <= code < size:
                raise ValueError(f"feature code {code} outside alphabet of size {size}")
        qubits = REGISTERS[f3]
        if len(qubits) != f2 + 1:
            raise ValueError(f"register {qubits} does not match arity feature {f2}")
        return cls("G" if f1 == 0 else "M", qubits, OP_NAMES[f4])

    @classmethod
    def parse(cls, mnemonic: str) -> "CircuitOp":
        head, rest = mnemonic.split("_", 1)
        kind, arity = head[0], int(head[1:])
        reg, name = rest[:arity], rest[arity:]
        return cls(kind, tuple(int(c) - 1 for c in reg), name)

    def matrix(self) -> np.ndarray:
        return _full_matrix(self)

    def __str__(self) -> str:
        return self.mnemonic


def action_catalog() -> list[CircuitOp]:
    out = [CircuitOp("G", (q,), n) for q in range(4) for n in _GATE1]
    out += [CircuitOp("M", (q,), n) for q in range(4) for n in _MEAS1]
    pairs = REGISTERS[4:]
    out += [CircuitOp("G", p, n) for p in pairs for n in _GATE2]
    out += [CircuitOp("M", p, n) for p in pairs for n in _MEAS2]
    return out


CATALOG = tuple(action_catalog())
CATALOG_ACTIONS = tuple(op.to_action() for op in CATALOG)
N_ACTIONS = len(CATALOG)
ACTION_INDEX = {a: i for i, a in enumerate(CATALOG_ACTIONS)}


def op_of(action) -> CircuitOp:
    if isinstance(action, CircuitOp):
        return action
    if isinstance(action, str):
        return CircuitOp.parse(action)
    if isinstance(action, (int, np.integer)):
        return CATALOG[int(action)]
    return CircuitOp.from_action(action)


def mnemonics(actions: Iterable, short: bool = False) -> list[str]:
    """Mnemonics of full (4-feature) or projected (3-feature) actions."""
    out = []
    for a in actions:
        if not isinstance(a, (CircuitOp, str)) and len(a) == 3:
            f1, f2, f3 = a
            out.append(f"{'GM'[f1]}{f2 + 1}_{''.join(str(q + 1) for q in REGISTERS[f3])}")
        else:
            op = op_of(a)
            out.append(op.short if short else op.mnemonic)
    return out


def utility_category(action) -> int:
    """G1, G2, M1, M2 -> 0..3; works on full and projected actions."""
    f1, f2 = int(action[0]), int(action[1])
    return 2 * f1 + f2


def embed(local: np.ndarray, qubits: Sequence[int]) -> np.ndarray:
    """Lift a 2- or 4-dim operator on the given qubits (qubit 0 most significant) to 16 dims."""
    k = len(qubits)
    rest = [q for q in range(N_QUBITS) if q not in qubits]
    order = list(qubits) + rest
    full = np.kron(local, np.eye(2 ** (N_QUBITS - k)))
    full = full.reshape([2] * (2 * N_QUBITS))
    # axes are (out qubits in `order`, in qubits in `order`); move them back to natural order
    inv = np.argsort(order)
    full = full.transpose(list(inv) + [N_QUBITS + i for i in inv])
    return full.reshape(DIM, DIM)


@lru_cache(maxsize=None)
def _full_matrix_cached(kind: str, qubits: tuple[int, ...], name: str) -> np.ndarray:
    m = embed(LOCAL_MATRICES[name], qubits)
    m.setflags(write=False)
    return m


def _full_matrix(op: CircuitOp) -> np.ndarray:
    return _full_matrix_cached(op.kind, op.qubits, op.name)


def apply_op(state: np.ndarray, op) -> np.ndarray:
    return _full_matrix(op_of(op)) @ state


def circuit_matrix(ops: Iterable) -> np.ndarray:
    m = np.eye(DIM, dtype=complex)
    for op in ops:
        m = _full_matrix(op_of(op)) @ m
    return m


def _inputs() -> list[tuple[np.ndarray, np.ndarray]]:
    zero, one = np.array([1, 0], dtype=complex), np.array([0, 1], dtype=complex)
    out = []
    for anc in (np.array([1, 0], dtype=complex), _PLUS.astype(complex)):
        phi = np.kron(np.kron(anc, anc), anc)
        out.append((np.kron(zero, phi), np.kron(one, phi)))
    return out


_INPUTS = _inputs()


def info_alive(ops: Iterable) -> int:
    """+1 if |0>|phi> and |1>|phi> stay nonzero and orthogonal for phi in {|000>, |+++>}."""
    m = circuit_matrix(ops)
    for a, b in _INPUTS:
        pa, pb = m @ a, m @ b
        na, nb = np.linalg.norm(pa), np.linalg.norm(pb)
        if na > TOL and nb > TOL and abs(np.vdot(pa, pb)) < TOL * na * nb:
            return 1
    return -1


def encode_observation(slots: Sequence) -> np.ndarray:
    """One-hot of each slot's four features; empty slots (None) stay zero."""
    if len(slots) > N_SLOTS:
        raise ValueError(f"at most {N_SLOTS} slots")
    out = np.zeros(OBS_SIZE)
    offsets = np.concatenate([[0], np.cumsum(ALPHABET_SIZES)[:-1]])
    for s, op in enumerate(slots):
        if op is None:
            continue
        for f, code in enumerate(op_of(op).to_action()):
            out[s * FEATURE_WIDTH + offsets[f] + code] = 1.0
    return out


class CircuitEnv:
    """Episode: three random environment ops, then six agent placements.

    ``step`` returns the observation as the tuple of ops placed so far in slot
    order (environment ops included), the reward ``info_alive`` of that
    circuit (times 5 on the last step) and the done flag.
    """

    horizon = HORIZON
    n_actions = len(CATALOG)
    alphabet_sizes = ALPHABET_SIZES

    def __init__(self, env_ops: Sequence | None = None):
        self.fixed_env_ops = None if env_ops is None else [op_of(o) for o in env_ops]
        self.slots: list[CircuitOp | None] = [None] * N_SLOTS
        self.t = 0
        self.seed: int | None = None

    def reset(self, seed: int | None = None, env_ops: Sequence | None = None) -> tuple:
        self.seed = seed
        if env_ops is not None:
            ops = [op_of(o) for o in env_ops]
        elif self.fixed_env_ops is not None:
            ops = list(self.fixed_env_ops)
        else:
            rng = np.random.default_rng(seed)
            ops = [CATALOG[i] for i in rng.integers(len(CATALOG), size=len(ENV_SLOTS))]
        if len(ops) != len(ENV_SLOTS):
            raise ValueError(f"need {len(ENV_SLOTS)} environment ops")
        self.slots = [None] * N_SLOTS
        for s, op in zip(ENV_SLOTS, ops):
            self.slots[s] = op
        self.t = 0
        return self.observation()

    @property
    def env_ops(self) -> list[CircuitOp]:
        return [self.slots[s] for s in ENV_SLOTS]

    @property
    def done(self) -> bool:
        return self.t >= HORIZON

    def placed(self) -> list[CircuitOp]:
        return [op for op in self.slots if op is not None]

    def observation(self) -> tuple:
        return tuple(op.to_action() for op in self.placed())

    def encoded(self) -> np.ndarray:
        return encode_observation(self.slots)

    def step(self, action) -> tuple[tuple, float, bool]:
        if self.done:
            raise RuntimeError("episode is over; call reset()")
        if isinstance(action, (int, np.integer)) and not 0 <= action < len(CATALOG):
            raise ValueError(f"action index {action} outside the catalog")
        op = op_of(action)
        if op.to_action() not in ACTION_INDEX:
            raise ValueError(f"{op} not in the catalog")
        self.slots[AGENT_SLOTS[self.t]] = op
        self.t += 1
        reward = float(info_alive(self.placed()))
        if self.done:
            reward *= FINAL_SCALE
        return self.observation(), reward, self.done

    def circuit_mnemonics(self) -> list[str]:
        return [("E:" if s in ENV_SLOTS else "") + op.mnemonic for s, op in enumerate(self.slots) if op is not None]
