import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gadget_discovery.envs.optics import (
    CATALOG,
    CATALOG_ACTIONS,
    OpticalElement,
    OpticsEnv,
    PhotonState,
    TripartiteState,
    apply_element,
    conditional_state,
    evaluate,
    initial_state,
    post_select_and_trigger,
    reward_qo,
    run_setup,
    schmidt_rank_vector,
    state_key,
)

from oracles import statevector_conditional

E = OpticalElement.parse


def single(path, m):
    """A one-photon state; element maps act photon-wise, so this isolates a single table row."""
    return PhotonState({((path, m),): 1.0})


def as_dict(state):
    return state.as_dict()


def assert_states_close(a: dict, b: dict, tol=1e-10):
    keys = set(a) | set(b)
    for k in keys:
        assert abs(a.get(k, 0) - b.get(k, 0)) < tol, k


def test_catalog():
    assert len(CATALOG) == 30
    assert len(set(CATALOG_ACTIONS)) == 30
    kinds = [e.kind for e in CATALOG]
    assert kinds.count("BS") == 6 and kinds.count("Holo") == 16
    for e in CATALOG:
        assert OpticalElement.from_action(e.to_action()) == e
        assert E(e.mnemonic) == e
    assert E("BS_ba") == E("BS_ab")


def test_element_validation():
    with pytest.raises(ValueError):
        OpticalElement("Holo", (0,))
    with pytest.raises(ValueError):
        OpticalElement("DP", (0,), 1)
    with pytest.raises(ValueError):
        OpticalElement("Holo", (0,), 3)
    with pytest.raises(ValueError):
        OpticalElement("BS", (1, 1))
    with pytest.raises(ValueError):
        OpticalElement.from_action((0, 6))
    with pytest.raises(ValueError):
        OpticalElement("Laser", (0,))


def test_initial_state():
    s = initial_state()
    assert len(s) == 9
    assert s.norm() == pytest.approx(1.0, abs=1e-15)
    assert all(term[0][0] == 0 for term in s)


def test_table_rows_on_single_photons():
    assert apply_element(single(0, 0), E("Holo_a(+1)")) == {((0, 1),): 1.0}
    assert apply_element(single(0, 2), E("Holo_a(-2)")) == {((0, 0),): 1.0}
    assert apply_element(single(0, 0), E("DP_a")) == {((0, 0),): 1j}
    assert apply_element(single(0, 1), E("DP_a")) == {((0, -1),): -1j}
    assert apply_element(single(0, 3), E("Refl_a")) == {((0, -3),): 1.0}
    twice = apply_element(apply_element(single(0, 3), E("Refl_a")), E("Refl_a"))
    assert twice == {((0, 3),): 1.0}
    bs = apply_element(single(0, 1), E("BS_ab"))
    assert bs[((0, -1),)] == pytest.approx(1j / math.sqrt(2))
    assert bs[((1, 1),)] == pytest.approx(1 / math.sqrt(2))
    bs_b = apply_element(single(1, 1), E("BS_ab"))
    assert bs_b[((0, 1),)] == pytest.approx(1 / math.sqrt(2))
    assert bs_b[((1, -1),)] == pytest.approx(1j / math.sqrt(2))
    assert apply_element(single(2, 5), E("BS_ab")) == {((2, 5),): 1.0}


def test_beam_splitter_is_unitary_on_one_photon_space():
    # images of |m>_a and |m>_b for m in -2..2 must be orthonormal
    cols = []
    modes = [(p, m) for p in (0, 1) for m in range(-2, 3)]
    for p, m in modes:
        img = apply_element(single(p, m), E("BS_ab"))
        cols.append([img.get(((q, n),), 0) for q, n in modes])
    u = np.array(cols).T
    assert np.allclose(u.conj().T @ u, np.eye(len(modes)), atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 29), min_size=1, max_size=5))
def test_elements_preserve_norm(idx):
    s = run_setup([CATALOG_ACTIONS[i] for i in idx])
    assert s.norm() == pytest.approx(1.0, abs=1e-10)


def test_double_beam_splitter_keeps_probabilities_in_place():
    s = initial_state()
    for el in (E("BS_ab"), E("BS_ab")):
        s = apply_element(s, el)
    assert s.norm() == pytest.approx(1.0, abs=1e-12)
    # BS twice sends |m>_a to i|-m>_b, so no two photons end up sharing a path
    for term in s:
        assert sorted(p for p, _ in term) == [0, 1, 2, 3]


def test_post_selection_examples():
    t = post_select_and_trigger(initial_state())
    d = as_dict(t)
    assert set(d) == {(m, -m, 0) for m in (-1, 0, 1)}
    assert all(v == pytest.approx(1 / 3) for v in d.values())
    bunched = PhotonState({((0, 0), (0, 1), (2, 0), (3, 0)): 0.5, ((0, 0), (1, 0), (2, 1), (3, 0)): 0.5})
    assert as_dict(post_select_and_trigger(bunched)) == {(0, 0, 1): 0.5}
    assert post_select_and_trigger(PhotonState()).is_zero()


def test_schmidt_rank_examples():
    ghz = np.zeros((2, 2, 2))
    ghz[0, 0, 0] = ghz[1, 1, 1] = 1 / math.sqrt(2)
    assert schmidt_rank_vector(ghz) == (2, 2, 2)
    prod = np.einsum("i,j,k->ijk", [1, 2], [0.5, 1], [3, 1])
    assert schmidt_rank_vector(prod) == (1, 1, 1)
    assert schmidt_rank_vector(post_select_and_trigger(initial_state())) == (3, 3, 1)
    with pytest.raises(ValueError):
        schmidt_rank_vector(np.zeros((2, 2, 2)))


def test_schmidt_rank_sorted_and_thresholded():
    t = np.zeros((3, 2, 1))
    t[0, 0, 0] = 1
    t[1, 1, 0] = 1
    t[2, 1, 0] = 1e-12
    assert schmidt_rank_vector(t) == (2, 2, 1)


def test_reward_rule():
    assert reward_qo((3, 3, 2)) == 1
    assert reward_qo((4, 3, 3)) == 0
    assert reward_qo((3, 3, 1)) == 0
    assert reward_qo((2, 2, 2)) == 1
    assert reward_qo((3, 4, 3)) == 0
    assert reward_qo((4, 4, 3)) == 1


def _random_setup(rng, n):
    return [CATALOG[rng.randrange(30)] for _ in range(n)]


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10**6), st.integers(0, 6))
def test_fast_route_matches_sparse_route(seed, n):
    els = _random_setup(random.Random(seed), n)
    fast = conditional_state(els)
    slow = post_select_and_trigger(run_setup(els))
    assert_states_close(as_dict(fast), as_dict(slow))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(0, 4))
def test_fast_route_matches_dense_oracle(seed, n):
    els = _random_setup(random.Random(seed), n)
    assert_states_close(as_dict(conditional_state(els)), statevector_conditional(els))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(0, 4), st.sampled_from([-2, -1, 1, 2]))
def test_trigger_reflection_commutes(seed, n, m):
    els = _random_setup(random.Random(seed), n)
    a = conditional_state(els + [E("Refl_d")], trigger_m=m)
    b = conditional_state(els, trigger_m=-m)
    assert_states_close(as_dict(a), as_dict(b))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.integers(0, 4), st.integers(1, 4))
def test_srv_invariant_under_local_suffix(seed, n, k):
    rng = random.Random(seed)
    els = _random_setup(rng, n)
    srv = evaluate(els)[0]
    path = rng.choice("abc")
    local = [E(rng.choice([f"DP_{path}", f"Refl_{path}", f"Holo_{path}({rng.choice([-2, -1, 1, 2]):+d})"])) for _ in range(k)]
    assert evaluate(els + local)[0] == srv


def test_bounded_search_finds_known_shapes():
    target = ("BS_ac", "BS_ab", "DP_a", "Refl_b")
    assert evaluate([E(x) for x in target]) == ((3, 3, 2), 1)
    srv, r = evaluate([E("Holo_c(-2)"), E("BS_bc"), E("Holo_a(+2)")])
    assert srv == (4, 4, 3) and r == 1


def test_state_key_ignores_phase_and_norm():
    t = conditional_state([E("BS_ac"), E("BS_ab")])
    scaled = TripartiteState(t.tensor * 2.5 * np.exp(0.7j), t.offset)
    assert state_key(t) == state_key(scaled)
    other = conditional_state([E("BS_ac"), E("BS_ad")])
    assert state_key(t) != state_key(other)
    assert state_key(TripartiteState(np.zeros((1, 1, 1)), 0)) == b""


def test_env_episode():
    env = OpticsEnv()
    assert env.horizon == 12 and env.reset() == ()
    rewards = []
    for t, name in enumerate(["BS_ac", "BS_ab", "DP_a", "Refl_b"] + ["Refl_a"] * 8):
        obs, r, done = env.step(name if t % 2 else E(name).to_action())
        rewards.append(r)
        assert len(obs) == t + 1 and done == (t == 11)
    assert rewards[:11] == [0.0] * 11
    assert rewards[11] == reward_qo(env.last_srv)
    with pytest.raises(RuntimeError):
        env.step(0)
    env.reset()
    with pytest.raises(ValueError):
        env.step(30)
    with pytest.raises(ValueError):
        env.step((0, 7))
    env.step(29)
    assert env.placed == [CATALOG_ACTIONS[29]]
