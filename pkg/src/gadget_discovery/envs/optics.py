"""Four-photon OAM linear-optics experiment.

Two SPDC pairs start on paths (a, b) and (c, d). Elements act as linear maps
on the single-photon (path, OAM) space; photons are tracked as
distinguishable labels and post-selected to one photon per path. The photon
in path ``d`` triggers by projection onto OAM ``m = 0``, leaving a
tripartite state on (a, b, c) whose Schmidt-rank vector decides the reward.

Beam splitter convention (unitary, symmetric in its two ports)::

    |m>_p -> ( i|-m>_p + |m>_q ) / sqrt(2)
    |m>_q -> (  |m>_p + i|-m>_q ) / sqrt(2)

``PhotonState`` is the reference sparse representation. ``evaluate`` uses
the factorised route: the whole setup is a single-photon map ``U`` and the
initial state is a product of two pair states, so only twelve single-photon
vectors are propagated.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

PATHS = "abcd"
KINDS = ("BS", "DP", "Refl", "Holo")
PAIRS = tuple(itertools.combinations(range(4), 2))
SHIFTS = (-2, -1, 1, 2)
ALPHABET_SIZES = (4, 16)
HORIZON = 12
TRIGGER_PATH = 3
RANK_TOL = 1e-10
PRUNE = 1e-12
_SQ = 1 / math.sqrt(2)

Mode = tuple[int, int]  # (path index, OAM value)
Term = tuple[Mode, Mode, Mode, Mode]


@dataclass(frozen=True)
class OpticalElement:
    kind: str
    paths: tuple[int, ...]
    shift: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown element kind {self.kind}")
        if (self.shift is not None) != (self.kind == "Holo"):
            raise ValueError("a shift is given iff the element is a hologram")
        if self.kind == "Holo" and self.shift not in SHIFTS:
            raise ValueError(f"hologram shift {self.shift} not in {SHIFTS}")
        want = 2 if self.kind == "BS" else 1
        if len(self.paths) != want or len(set(self.paths)) != want or not all(0 <= p < 4 for p in self.paths):
            raise ValueError(f"{self.kind} needs {want} distinct paths, got {self.paths}")
        if self.kind == "BS" and self.paths[0] > self.paths[1]:
            object.__setattr__(self, "paths", tuple(sorted(self.paths)))

    @property
    def mnemonic(self) -> str:
        ps = "".join(PATHS[p] for p in self.paths)
        if self.kind == "Holo":
            return f"Holo_{ps}({self.shift:+d})"
        return f"{self.kind}_{ps}"

    def to_action(self) -> tuple[int, int]:
        kind = KINDS.index(self.kind)
        if self.kind == "BS":
            return kind, PAIRS.index(self.paths)
        if self.kind == "Holo":
            return kind, 4 * self.paths[0] + SHIFTS.index(self.shift)
        return kind, self.paths[0]

    @classmethod
    def from_action(cls, action: Sequence[int]) -> "OpticalElement":
        if len(action) != 2:
            raise ValueError(f"optics actions have 2 features, got {action}")
        kind, arg = int(action[0]), int(action[1])
        if not 0 <= kind < 4:
            raise ValueError(f"bad element code {kind}")
        name = KINDS[kind]
        if name == "BS":
            if not 0 <= arg < 6:
                raise ValueError(f"bad beam splitter pair {arg}")
            return cls(name, PAIRS[arg])
        if name == "Holo":
            if not 0 <= arg < 16:
                raise ValueError(f"bad hologram code {arg}")
            return cls(name, (arg // 4,), SHIFTS[arg % 4])
        if not 0 <= arg < 4:
            raise ValueError(f"bad path {arg}")
        return cls(name, (arg,))

    @classmethod
    def parse(cls, mnemonic: str) -> "OpticalElement":
        kind, rest = mnemonic.split("_", 1)
        shift = None
        if "(" in rest:
            rest, tail = rest.split("(")
            shift = int(tail.rstrip(")"))
        return cls(kind, tuple(PATHS.index(c) for c in rest), shift)

    def __str__(self) -> str:
        return self.mnemonic


def action_catalog() -> list[OpticalElement]:
    out = [OpticalElement("BS", p) for p in PAIRS]
    out += [OpticalElement("DP", (p,)) for p in range(4)]
    out += [OpticalElement("Refl", (p,)) for p in range(4)]
    out += [OpticalElement("Holo", (p,), k) for p in range(4) for k in SHIFTS]
    return out


CATALOG = tuple(action_catalog())
CATALOG_ACTIONS = tuple(e.to_action() for e in CATALOG)


def element_of(action) -> OpticalElement:
    if isinstance(action, OpticalElement):
        return action
    if isinstance(action, str):
        return OpticalElement.parse(action)
    return OpticalElement.from_action(action)


def mnemonics(actions: Iterable) -> list[str]:
    return [element_of(a).mnemonic for a in actions]


def utility_category(action) -> int:
    """BS, DP, Refl, Holo -> 0..3."""
    return KINDS.index(element_of(action).kind)


# ---------------------------------------------------------------- sparse route


class PhotonState(dict):
    """Sparse map ``term -> amplitude``; a term lists (path, m) for photons 1..4."""

    def norm(self) -> float:
        return math.sqrt(sum(abs(v) ** 2 for v in self.values()))


def initial_state() -> PhotonState:
    s = PhotonState()
    for m1 in (-1, 0, 1):
        for m2 in (-1, 0, 1):
            s[((0, m1), (1, -m1), (2, m2), (3, -m2))] = 1 / 3
    return s


def single_photon_map(element: OpticalElement, mode: Mode) -> list[tuple[Mode, complex]]:
    path, m = mode
    if path not in element.paths:
        return [(mode, 1.0)]
    if element.kind == "Holo":
        return [((path, m + element.shift), 1.0)]
    if element.kind == "Refl":
        return [((path, -m), 1.0)]
    if element.kind == "DP":
        return [((path, -m), 1j * (-1) ** (m % 2))]
    other = element.paths[1] if path == element.paths[0] else element.paths[0]
    return [((path, -m), 1j * _SQ), ((other, m), _SQ)]


def apply_element(state: PhotonState, element) -> PhotonState:
    element = element_of(element)
    out: dict[Term, complex] = {}
    for term, amp in state.items():
        images = [single_photon_map(element, mode) for mode in term]
        for combo in itertools.product(*images):
            a = amp
            for _, c in combo:
                a *= c
            key = tuple(mode for mode, _ in combo)
            out[key] = out.get(key, 0) + a
    return PhotonState({k: v for k, v in out.items() if abs(v) > PRUNE})


def run_setup(actions: Iterable) -> PhotonState:
    state = initial_state()
    for a in actions:
        state = apply_element(state, a)
    return state


@dataclass(frozen=True)
class TripartiteState:
    """Unnormalised amplitudes ``tensor[i, j, k]`` for OAM ``(i-offset, j-offset, k-offset)`` on paths a, b, c."""

    tensor: np.ndarray
    offset: int

    def is_zero(self, tol: float = 1e-12) -> bool:
        return not np.any(np.abs(self.tensor) > tol)

    def as_dict(self, tol: float = PRUNE) -> dict[tuple[int, int, int], complex]:
        idx = np.argwhere(np.abs(self.tensor) > tol)
        return {tuple(int(x) - self.offset for x in i): complex(self.tensor[tuple(i)]) for i in idx}

    def norm(self) -> float:
        return float(np.linalg.norm(self.tensor))


def post_select_and_trigger(state: PhotonState, trigger_m: int = 0) -> TripartiteState:
    kept: dict[tuple[int, int, int], complex] = {}
    for term, amp in state.items():
        paths = sorted(p for p, _ in term)
        if paths != [0, 1, 2, 3]:
            continue
        by_path = {p: m for p, m in term}
        if by_path[TRIGGER_PATH] != trigger_m:
            continue
        key = (by_path[0], by_path[1], by_path[2])
        kept[key] = kept.get(key, 0) + amp
    return _dense(kept)


def _dense(amps: dict[tuple[int, int, int], complex]) -> TripartiteState:
    amps = {k: v for k, v in amps.items() if abs(v) > PRUNE}
    if not amps:
        return TripartiteState(np.zeros((1, 1, 1), dtype=complex), 0)
    off = max(abs(m) for k in amps for m in k)
    t = np.zeros((2 * off + 1,) * 3, dtype=complex)
    for (i, j, k), v in amps.items():
        t[i + off, j + off, k + off] = v
    return TripartiteState(t, off)


def schmidt_rank_vector(state, tol: float = RANK_TOL) -> tuple[int, int, int]:
    """Ranks of the three single-party reduced states, sorted descending."""
    t = state.tensor if isinstance(state, TripartiteState) else np.asarray(state)
    if not np.any(np.abs(t) > 0):
        raise ValueError("Schmidt ranks of the zero state are undefined")
    ranks = []
    for axis in range(3):
        mat = np.moveaxis(t, axis, 0).reshape(t.shape[axis], -1)
        sv = np.linalg.svd(mat, compute_uv=False)
        ranks.append(int(np.sum(sv > tol * sv[0])))
    return tuple(sorted(ranks, reverse=True))


def reward_qo(srv: Sequence[int]) -> int:
    srv = tuple(sorted(srv, reverse=True))
    if srv == (4, 3, 3):
        return 0
    return int(all(r >= 2 for r in srv))


# ---------------------------------------------------------------- fast route


def _propagate(elements: Sequence[OpticalElement]) -> tuple[np.ndarray, int]:
    """Images of the 12 start modes: array (4 start paths, 3 start m, 4 paths, M)."""
    off = 1 + sum(abs(e.shift) for e in elements if e.kind == "Holo")
    size = 2 * off + 1
    u = np.zeros((4, 3, 4, size), dtype=complex)
    for p in range(4):
        for j, m in enumerate((-1, 0, 1)):
            u[p, j, p, m + off] = 1.0
    sign = np.array([(-1) ** ((i - off) % 2) for i in range(size)])
    for e in elements:
        if e.kind == "Holo":
            p, k = e.paths[0], e.shift
            u[:, :, p, :] = np.roll(u[:, :, p, :], k, axis=-1)
        elif e.kind == "Refl":
            p = e.paths[0]
            u[:, :, p, :] = u[:, :, p, ::-1]
        elif e.kind == "DP":
            p = e.paths[0]
            u[:, :, p, :] = 1j * sign * u[:, :, p, ::-1]
        else:
            p, q = e.paths
            up, uq = u[:, :, p, :].copy(), u[:, :, q, :].copy()
            u[:, :, p, :] = (1j * up[..., ::-1] + uq) * _SQ
            u[:, :, q, :] = (up + 1j * uq[..., ::-1]) * _SQ
    return u, off


def _pair_half(free: np.ndarray, trig_pair: np.ndarray, trig: int) -> np.ndarray:
    """Terms where ``trig_pair`` supplies the path-d photon and ``free`` fills two of a, b, c."""
    d = TRIGGER_PATH
    # the remaining photon of the triggering pair, on path p, with either photon order
    rest = trig_pair[:, :, d, trig] + trig_pair[d, trig, :, :]
    both = free + free.transpose(2, 3, 0, 1)
    out = both[0, :, 1, :][:, :, None] * rest[2][None, None, :]
    out = out + both[0, :, 2, :][:, None, :] * rest[1][None, :, None]
    out = out + both[1, :, 2, :][None, :, :] * rest[0][:, None, None]
    return out


def conditional_state(actions: Iterable, trigger_m: int = 0) -> TripartiteState:
    """Post-selected, triggered state of a setup, via single-photon propagation."""
    elements = [element_of(a) for a in actions]
    u, off = _propagate(elements)
    live = np.flatnonzero(np.abs(u).reshape(-1, u.shape[-1]).max(axis=0) > PRUNE)
    if len(live) == 0 or not (0 <= trigger_m + off < u.shape[-1]):
        return TripartiteState(np.zeros((1, 1, 1), dtype=complex), 0)
    half = int(max(abs(live[0] - off), abs(live[-1] - off), abs(trigger_m)))
    lo, hi = off - half, off + half + 1
    v = u[..., lo:hi]
    trig = trigger_m + half
    # pair states: sum over the shared OAM index, photons 1,2 (paths a,b) and 3,4 (paths c,d)
    pair1 = np.einsum("jpx,jqy->pxqy", v[0], v[1][::-1]) / math.sqrt(3)
    pair2 = np.einsum("jpx,jqy->pxqy", v[2], v[3][::-1]) / math.sqrt(3)
    psi = _pair_half(pair1, pair2, trig) + _pair_half(pair2, pair1, trig)
    psi[np.abs(psi) < PRUNE] = 0
    return TripartiteState(psi, half)


def evaluate(actions: Iterable) -> tuple[tuple[int, int, int] | None, int]:
    """(SRV or None when post-selection leaves nothing, reward) of a setup run from the start."""
    st = conditional_state(actions)
    if st.is_zero():
        return None, 0
    srv = schmidt_rank_vector(st)
    return srv, reward_qo(srv)


def state_key(state: TripartiteState, digits: int = 8) -> bytes:
    """Canonical identity of a conditional state up to norm and global phase.

    Amplitudes are normalised, the first amplitude of (near) maximal magnitude
    is rotated to be real-positive, and values are rounded to ``digits``.
    """
    t = state.tensor
    nrm = np.linalg.norm(t)
    if nrm == 0:
        return b""
    flat = t.reshape(-1) / nrm
    mags = np.abs(flat)
    pivot = int(np.flatnonzero(mags >= mags.max() - 1e-9)[0])
    flat = flat * (abs(flat[pivot]) / flat[pivot])
    keep = np.flatnonzero(mags > 10.0 ** (-digits))
    coords = np.stack(np.unravel_index(keep, t.shape), axis=1) - state.offset
    vals = np.round(flat[keep], digits)
    parts = (coords.astype(np.int64), vals.real + 0.0, vals.imag + 0.0)
    return b"|".join(np.ascontiguousarray(x).tobytes() for x in parts)


class OpticsEnv:
    """Episodic setup builder: 12 placements, reward at the end only."""

    horizon = HORIZON
    n_actions = len(CATALOG)
    alphabet_sizes = ALPHABET_SIZES

    def __init__(self, horizon: int = HORIZON):
        self.horizon = horizon
        self.placed: list[tuple[int, int]] = []
        self.last_srv: tuple[int, int, int] | None = None
        self.last_state: TripartiteState | None = None

    def reset(self, seed: int | None = None) -> tuple:
        self.placed = []
        self.last_srv = None
        self.last_state = None
        return ()

    @property
    def done(self) -> bool:
        return len(self.placed) >= self.horizon

    def step(self, action) -> tuple[tuple, float, bool]:
        if self.done:
            raise RuntimeError("episode is over; call reset()")
        if isinstance(action, (int, np.integer)):
            if not 0 <= action < len(CATALOG):
                raise ValueError(f"action index {action} outside the catalog")
            action = CATALOG_ACTIONS[action]
        elif isinstance(action, (OpticalElement, str)):
            action = element_of(action).to_action()
        action = tuple(int(x) for x in action)
        if action not in CATALOG_ACTIONS:
            raise ValueError(f"action {action} not in the catalog")
        self.placed.append(action)
        reward = 0.0
        if self.done:
            self.last_state = conditional_state(self.placed)
            if not self.last_state.is_zero():
                self.last_srv = schmidt_rank_vector(self.last_state)
                reward = float(reward_qo(self.last_srv))
        return tuple(self.placed), reward, self.done
