import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gadget_discovery.envs import optics
from gadget_discovery.mining import (
    AutoTuneError,
    MiningConfig,
    MiningThresholds,
    PatternStats,
    auto_tune,
    cohesion,
    filter_coverage,
    filter_length,
    filter_reward,
    interestingness,
    mine,
    pattern_stats,
    support,
)
from gadget_discovery.seqcore import Dataset, DuplicateSequenceError

from oracles import level_wise, stats

A, B, C, X, Y = (0,), (1,), (2,), (3,), (4,)


def random_dataset(rng, n_max=30, t_max=6, alpha_max=4):
    t = rng.randint(2, t_max)
    alpha = rng.randint(2, alpha_max)
    seqs = {tuple((rng.randrange(alpha),) for _ in range(t)) for _ in range(rng.randint(1, n_max))}
    return sorted(seqs)


def test_definitions():
    d = [(A, B, C), (A, C, B), (B, C, A)]
    assert support((A, B), d) == pytest.approx(2 / 3, abs=1e-12)
    assert support((A,), d) == 1
    assert support((X,), d) == 0
    assert cohesion((A, B), [(A, X, X, B)]) == pytest.approx(0.5, abs=1e-12)
    assert cohesion((A, B), [(A, B, X), (X, A, B)]) == 1
    assert cohesion((C,), d) == 1
    assert interestingness((A, B), d) == pytest.approx(support((A, B), d) * cohesion((A, B), d), abs=1e-12)
    with pytest.raises(ValueError):
        support((A,), [])
    with pytest.raises(ValueError):
        cohesion((X,), d)


def test_thresholds_validated():
    with pytest.raises(ValueError):
        MiningThresholds(1.1, 0.5, 0.5)
    with pytest.raises(ValueError):
        MiningThresholds(0.5, -0.1, 0.0)
    th = MiningThresholds.from_support_cohesion(0.2, 0.5)
    assert th.i_min == pytest.approx(0.1)


def test_config_validated():
    with pytest.raises(ValueError):
        MiningConfig(count_range=(0, 5))
    with pytest.raises(ValueError):
        MiningConfig(length_range=(4, 3))


def test_duplicate_dataset_rejected():
    with pytest.raises(DuplicateSequenceError):
        Dataset.from_sequences([(A, B), (A, B)])
    with pytest.raises(ValueError):
        mine([(A, B), (A, B)], MiningThresholds(0.1, 0.1, 0.01))


def test_noisy_contiguous_pair():
    rng = random.Random(3)
    seqs = set()
    while len(seqs) < 10:
        pos = rng.randrange(5)
        noise = [(rng.randrange(2, 6),) for _ in range(6)]
        seqs.add(tuple(noise[:pos] + [A, B] + noise[pos:]))
    while len(seqs) < 20:
        seqs.add(tuple((rng.randrange(2, 6),) for _ in range(8)))
    out = {p.pattern: p for p in mine(sorted(seqs), MiningThresholds.from_support_cohesion(0.4, 0.8))}
    assert out[(A, B)].support == pytest.approx(0.5)
    assert out[(A, B)].cohesion == pytest.approx(1.0)


def test_full_thresholds_keep_only_perfect_patterns():
    d = [(A, B), (A, C)]
    out = mine(d, MiningThresholds(1.0, 1.0, 1.0))
    assert [p.pattern for p in out] == [(A,)]


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.0, 0.6), st.floats(0.0, 1.0))
def test_mine_matches_level_wise_oracle(seed, f_min, c_min):
    d = random_dataset(random.Random(seed))
    th = MiningThresholds.from_support_cohesion(f_min, c_min)
    got = {p.pattern: (p.support, p.cohesion, p.interestingness) for p in mine(d, th)}
    want = level_wise(d, th.f_min, th.c_min, th.i_min, len(d[0]))
    assert set(got) == set(want)
    for p, v in got.items():
        assert v == pytest.approx(want[p], abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_emitted_stats_bounds_and_antimonotone_support(seed):
    d = random_dataset(random.Random(seed))
    for p in mine(d, MiningThresholds.from_support_cohesion(0.05, 0.1)):
        assert 0 <= p.support <= 1 and 0 < p.cohesion <= 1
        assert p.interestingness == pytest.approx(p.support * p.cohesion, abs=1e-15)
        assert p.support == pytest.approx(support(p.pattern, d), abs=1e-15)
        if len(p.pattern) > 1:
            assert p.support <= support(p.pattern[:-1], d) + 1e-15


def test_max_length():
    d = [(A, B, C), (A, B, X), (A, C, B)]
    out = mine(d, MiningThresholds(0.0, 0.0, 0.0), MiningConfig(max_length=2))
    assert max(len(p.pattern) for p in out) == 2


def _ps(pattern, i, f=0.5):
    return PatternStats(tuple(pattern), f, i / f, i)


def test_filter_length():
    pats = [_ps([A, B, C], 0.2), _ps([A, B, C, X], 0.1), _ps([A], 0.3)]
    assert [len(p) for p in filter_length(pats, (4, 6))] == [4]
    assert [len(p) for p in filter_length(pats, (3, None))] == [3, 4]
    assert filter_length(pats, (1, 4)) == pats


def test_filter_coverage():
    d = [(A, B, C)]
    single = [_ps([A, B], 0.4)]
    assert filter_coverage(single, d, 1) == single
    two = [_ps([A, B], 0.4), _ps([B, C], 0.3), _ps([A], 0.9)]
    kept = filter_coverage(two, d, 1)
    assert [p.pattern for p in kept] == [(A, B), (A,)]
    assert filter_coverage(two, d, 2) == two


def test_filter_coverage_tie_prefers_longer_then_lexicographic():
    d = [(A, B, C)]
    pats = [_ps([B, C], 0.3), _ps([A, B, C], 0.3), _ps([A, B], 0.3)]
    assert [p.pattern for p in filter_coverage(pats, d, 1)] == [(A, B, C)]
    pats = [_ps([B, C], 0.3), _ps([A, B], 0.3)]
    assert [p.pattern for p in filter_coverage(pats, d, 1)] == [(A, B)]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 3))
def test_filter_coverage_subset_and_keeps_singletons(seed, cov):
    d = random_dataset(random.Random(seed))
    pats = mine(d, MiningThresholds.from_support_cohesion(0.05, 0.2))
    kept = filter_coverage(pats, d, cov)
    assert set(p.pattern for p in kept) <= set(p.pattern for p in pats)
    assert {p.pattern for p in pats if len(p) == 1} <= {p.pattern for p in kept}


def test_filter_reward_with_optics():
    good = tuple(optics.OpticalElement.parse(m).to_action() for m in ("BS_ac", "BS_ab", "DP_a", "Refl_b"))
    mirrors = tuple(optics.OpticalElement.parse(m).to_action() for m in ("Refl_a", "Refl_b", "Refl_c", "Refl_d"))
    assert optics.evaluate(good)[0] == (3, 3, 2)

    def reward(p):
        return float(optics.evaluate(p)[1])

    pats = [_ps(good, 0.2), _ps(mirrors, 0.1)]
    assert [p.pattern for p in filter_reward(pats, reward)] == [good]
    assert filter_reward([], reward) == []


def test_auto_tune_lands_in_range():
    rng = random.Random(0)
    d = sorted({tuple((rng.randrange(5),) for _ in range(6)) for _ in range(60)})
    cfg = MiningConfig(count_range=(2, 6), length_range=(2, None))
    res = auto_tune(d, cfg)
    assert 2 <= len(res.patterns) <= 6
    assert res.attempts[-1]["count"] == len(res.patterns)
    assert res.thresholds.i_min == pytest.approx(res.thresholds.f_min * res.thresholds.c_min)


def test_auto_tune_failure_is_diagnosed():
    d = [(A, B), (B, A)]
    with pytest.raises(AutoTuneError, match="attempts"):
        auto_tune(d, MiningConfig(count_range=(5, 6), length_range=(2, None), max_attempts=10))


def test_auto_tune_stops_on_count_gap():
    # every length-2 pattern has F = 1/2 and C = 1, so counts jump from 2 to 0
    d = [(A, B), (B, A)]
    with pytest.raises(AutoTuneError) as err:
        auto_tune(d, MiningConfig(count_range=(1, 1), length_range=(2, None)))
    assert "after 30 attempts" not in str(err.value)


def test_pattern_stats_matches_oracle():
    d = [(A, B, C, A), (C, A, X, B), (B, B, A, C)]
    for p in [(A,), (A, B), (B, A), (A, C), (C, A, B)]:
        got = pattern_stats(p, d)
        assert (got.support, got.cohesion, got.interestingness) == pytest.approx(stats(p, d), abs=1e-12)
