"""Interestingness-based sequential pattern mining.

The miner is level-wise: length-1 items above the interestingness threshold
seed the interesting set, and interesting length-k patterns are extended on
the right by interesting items. Because cohesion is not anti-monotone this
search can miss patterns whose prefixes fail a threshold; that is intended.

All thresholds are compared with ``>=``.

Support and shortest intervals are computed on a vertical, numpy-backed
representation. For a pattern ``P`` and each containing sequence we keep an
array ``L[j]`` = latest window start ``s`` such that ``P`` embeds into
``seq[s..j]`` (``-1`` if none). Right-extension by an item ``x`` is then a
shift, a mask and a running maximum.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .seqcore import Action, ActionSeq, Dataset, is_subsequence, shortest_interval

log = logging.getLogger(__name__)

Pattern = ActionSeq


@dataclass(frozen=True)
class PatternStats:
    pattern: Pattern
    support: float
    cohesion: float
    interestingness: float

    def __len__(self) -> int:
        return len(self.pattern)

    def to_dict(self) -> dict:
        return {
            "pattern": [list(a) for a in self.pattern],
            "F": self.support,
            "C": self.cohesion,
            "I": self.interestingness,
        }


@dataclass(frozen=True)
class MiningThresholds:
    f_min: float
    c_min: float
    i_min: float

    def __post_init__(self) -> None:
        for name in ("f_min", "c_min", "i_min"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")

    @classmethod
    def from_support_cohesion(cls, f_min: float, c_min: float) -> "MiningThresholds":
        return cls(f_min, c_min, f_min * c_min)

    def to_dict(self) -> dict:
        return {"F_min": self.f_min, "C_min": self.c_min, "I_min": self.i_min}


@dataclass(frozen=True)
class MiningConfig:
    """Knobs for one mining run and its postprocessing filters.

    ``count_range`` is the target interval for auto-tuning. ``length_range``
    may use ``None`` as an open upper bound. ``max_length=None`` means "use the
    dataset horizon".
    """

    count_range: tuple[int, int] = (1, 10)
    max_length: int | None = None
    length_range: tuple[int, int | None] = (1, None)
    max_coverage: int | None = None
    reward_filter: bool = False
    g_min: float = 1.0
    start: tuple[float, float] = (0.1, 0.7)
    max_attempts: int = 30

    def __post_init__(self) -> None:
        lo, hi = self.count_range
        if lo < 1 or hi < lo:
            raise ValueError(f"invalid count range {self.count_range}")
        if self.max_length is not None and self.max_length < 1:
            raise ValueError("max_length must be positive")
        llo, lhi = self.length_range
        if llo < 1 or (lhi is not None and lhi < llo):
            raise ValueError(f"invalid length range {self.length_range}")
        if self.max_length is not None and llo > self.max_length:
            raise ValueError("length filter lies beyond the maximum pattern length")
        if self.max_coverage is not None and self.max_coverage < 1:
            raise ValueError("max_coverage must be >= 1")


class AutoTuneError(RuntimeError):
    pass


class _Vertical:
    """Item-id matrix of a dataset plus the alphabet mapping."""

    def __init__(self, dataset: Dataset | Sequence[ActionSeq]):
        seqs = [tuple(tuple(a) for a in s) for s in dataset]
        if not seqs:
            raise ValueError("dataset is empty")
        horizon = len(seqs[0])
        if any(len(s) != horizon for s in seqs):
            raise ValueError("all sequences must share the same horizon")
        if not isinstance(dataset, Dataset) and len(set(seqs)) != len(seqs):
            raise ValueError("dataset contains duplicate sequences")
        self.items: list[Action] = sorted({a for s in seqs for a in s})
        self.item_id = {a: i for i, a in enumerate(self.items)}
        self.n, self.horizon = len(seqs), horizon
        self.matrix = np.array([[self.item_id[a] for a in s] for s in seqs], dtype=np.int32)
        self.positions = np.arange(horizon, dtype=np.int32)

    def single(self, item: int):
        hit = self.matrix == item
        rows = np.flatnonzero(hit.any(axis=1))
        ends = np.where(hit[rows], self.positions, -1)
        return rows, np.maximum.accumulate(ends, axis=1), np.ones(len(rows), dtype=np.int64)

    def extend(self, rows: np.ndarray, latest: np.ndarray, item: int):
        prev = np.full_like(latest, -1)
        prev[:, 1:] = latest[:, :-1]
        starts = np.where((self.matrix[rows] == item) & (prev >= 0), prev, -1)
        ok = starts >= 0
        has = ok.any(axis=1)
        widths = np.where(ok, self.positions - starts + 1, np.iinfo(np.int32).max)
        w = widths[has].min(axis=1)
        starts = starts[has]
        return rows[has], np.maximum.accumulate(starts, axis=1), w

    def containing_rows(self, pattern: Pattern) -> np.ndarray:
        ids = [self.item_id.get(tuple(a)) for a in pattern]
        if any(i is None for i in ids):
            return np.empty(0, dtype=np.int64)
        rows, latest, _ = self.single(ids[0])
        for i in ids[1:]:
            rows, latest, _ = self.extend(rows, latest, i)
        return rows


def _stats(pattern: Pattern, n_contain: int, sum_w: int, n_total: int) -> PatternStats:
    f = n_contain / n_total
    c = len(pattern) * n_contain / sum_w
    return PatternStats(pattern, f, c, f * c)


def support(pattern: Sequence[Action], dataset: Iterable[ActionSeq]) -> float:
    seqs = list(dataset)
    if not seqs:
        raise ValueError("support is undefined on an empty dataset")
    return sum(is_subsequence(pattern, d) for d in seqs) / len(seqs)


def cohesion(pattern: Sequence[Action], dataset: Iterable[ActionSeq]) -> float:
    widths = [shortest_interval(pattern, d) for d in dataset if is_subsequence(pattern, d)]
    if not widths:
        raise ValueError("cohesion is undefined: pattern occurs in no sequence")
    return len(pattern) * len(widths) / sum(widths)


def interestingness(pattern: Sequence[Action], dataset: Iterable[ActionSeq]) -> float:
    seqs = list(dataset)
    return support(pattern, seqs) * cohesion(pattern, seqs)


def pattern_stats(pattern: Sequence[Action], dataset: Iterable[ActionSeq]) -> PatternStats:
    seqs = list(dataset)
    pattern = tuple(tuple(a) for a in pattern)
    widths = [shortest_interval(pattern, d) for d in seqs if is_subsequence(pattern, d)]
    if not widths:
        raise ValueError("pattern occurs in no sequence")
    return _stats(pattern, len(widths), sum(widths), len(seqs))


def mine(
    dataset: Dataset | Sequence[ActionSeq],
    thresholds: MiningThresholds,
    config: MiningConfig | None = None,
) -> list[PatternStats]:
    """Level-wise search for patterns passing all three thresholds.

    Returns every retained pattern (length-1 seeds included), ordered by
    length and then by item order.
    """
    if not isinstance(thresholds, MiningThresholds):
        raise TypeError("thresholds must be MiningThresholds")
    config = config or MiningConfig()
    vert = _Vertical(dataset)
    max_len = config.max_length or vert.horizon
    n = vert.n
    f_min, c_min, i_min = thresholds.f_min, thresholds.c_min, thresholds.i_min

    out: list[PatternStats] = []
    seeds: list[int] = []
    level: list[tuple[Pattern, np.ndarray, np.ndarray]] = []
    for item in range(len(vert.items)):
        rows, latest, _ = vert.single(item)
        st = _stats((vert.items[item],), len(rows), len(rows), n)
        if st.interestingness >= i_min:
            seeds.append(item)
            out.append(st)
            level.append((st.pattern, rows, latest))

    length = 1
    while level and length < max_len:
        length += 1
        nxt = []
        for pattern, rows, latest in level:
            for item in seeds:
                new_rows, new_latest, w = vert.extend(rows, latest, item)
                if len(new_rows) == 0:
                    continue
                st = _stats(pattern + (vert.items[item],), len(new_rows), int(w.sum()), n)
                if st.support >= f_min and st.cohesion >= c_min and st.interestingness >= i_min:
                    out.append(st)
                    nxt.append((st.pattern, new_rows, new_latest))
        level = nxt
        log.debug("level %d: %d patterns", length, len(level))
    return out


def filter_length(patterns: Iterable[PatternStats], interval: tuple[int, int | None]) -> list[PatternStats]:
    lo, hi = interval
    return [p for p in patterns if len(p.pattern) >= lo and (hi is None or len(p.pattern) <= hi)]


def coverage_order(patterns: Iterable[PatternStats]) -> list[PatternStats]:
    """Highest interestingness first; then longer patterns; then item order."""
    return sorted(patterns, key=lambda p: (-p.interestingness, -len(p.pattern), p.pattern))


def filter_coverage(
    patterns: Iterable[PatternStats],
    dataset: Dataset | Sequence[ActionSeq],
    max_cov: int,
) -> list[PatternStats]:
    """Let every sequence be covered by at most ``max_cov`` multi-item patterns.

    Length-1 patterns pass through untouched. Input order is preserved.
    """
    if max_cov < 1:
        raise ValueError("max_cov must be >= 1")
    patterns = list(patterns)
    if not patterns:
        return []
    vert = _Vertical(dataset)
    counters = np.zeros(vert.n, dtype=np.int64)
    keep: set[Pattern] = {p.pattern for p in patterns if len(p.pattern) == 1}
    for p in coverage_order(q for q in patterns if len(q.pattern) > 1):
        rows = vert.containing_rows(p.pattern)
        free = rows[counters[rows] < max_cov]
        if len(free):
            counters[free] += 1
            keep.add(p.pattern)
    return [p for p in patterns if p.pattern in keep]


def filter_reward(
    patterns: Iterable[PatternStats],
    evaluate: Callable[[Pattern], float],
    threshold: float = 1.0,
) -> list[PatternStats]:
    """Keep patterns that earn at least ``threshold`` when run as a whole episode."""
    return [p for p in patterns if evaluate(p.pattern) >= threshold]


def postprocess(
    patterns: list[PatternStats],
    dataset: Dataset | Sequence[ActionSeq],
    config: MiningConfig,
    evaluate: Callable[[Pattern], float] | None = None,
) -> list[PatternStats]:
    out = filter_length(patterns, config.length_range)
    if config.max_coverage is not None:
        out = filter_coverage(out, dataset, config.max_coverage)
    if config.reward_filter:
        if evaluate is None:
            raise ValueError("reward filter enabled but no evaluation function given")
        out = filter_reward(out, evaluate, config.g_min)
    return out


@dataclass
class TuneResult:
    thresholds: MiningThresholds
    patterns: list[PatternStats]
    attempts: list[dict] = field(default_factory=list)


def _thresholds_at(scale: float, start: tuple[float, float]) -> MiningThresholds:
    return MiningThresholds.from_support_cohesion(min(1.0, start[0] * scale), min(1.0, start[1] * scale))


def auto_tune(
    dataset: Dataset | Sequence[ActionSeq],
    config: MiningConfig,
    evaluate: Callable[[Pattern], float] | None = None,
) -> TuneResult:
    """Scale ``(F_min, C_min)`` jointly until the filtered count is in range.

    Multiplicative bisection on a common scale factor applied to
    ``config.start``; ``I_min`` follows as ``F_min * C_min``. The search
    doubles or halves until the target is bracketed, then takes geometric
    midpoints.
    """
    lo, hi = config.count_range
    scale = 1.0
    loose = strict = None  # scales known to give too many / too few patterns
    attempts: list[dict] = []
    n = len(list(dataset))
    max_scale = 1.0 / min(config.start)
    min_scale = 1.0 / (n * config.start[0])
    for _ in range(config.max_attempts):
        th = _thresholds_at(scale, config.start)
        found = postprocess(mine(dataset, th, config), dataset, config, evaluate)
        attempts.append({**th.to_dict(), "count": len(found)})
        log.info("auto-tune F_min=%.4g C_min=%.4g -> %d patterns", th.f_min, th.c_min, len(found))
        if lo <= len(found) <= hi:
            return TuneResult(th, found, attempts)
        if len(found) > hi:
            loose = scale
            if strict is None:
                if scale >= max_scale:
                    break
                scale = min(scale * 2.0, max_scale)
                continue
        else:
            strict = scale
            if loose is None:
                if scale <= min_scale:
                    break
                scale = max(scale / 2.0, min_scale)
                continue
        if strict / loose < 1.0 + 1e-4:
            break  # the count jumps across the target range; no threshold can hit it
        scale = math.sqrt(loose * strict)
    raise AutoTuneError(
        f"no thresholds produced between {lo} and {hi} patterns after {len(attempts)} attempts: {attempts}"
    )
