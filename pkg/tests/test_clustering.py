import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.distance import cdist

from gadget_discovery.clustering import (
    NOISE,
    as_distance_matrix,
    condense_tree,
    core_distance,
    core_distances,
    extract_clusters,
    group_by_label,
    hdbscan,
    mst_prim,
    mutual_reachability,
    single_linkage,
)

from oracles import kruskal_weight, spanning_tree_weights


def random_matrix(rng, n):
    pts = rng.normal(size=(n, 2))
    return cdist(pts, pts)


def blobs(rng, sizes, spread=0.2, sep=6.0):
    centers = rng.uniform(-sep * len(sizes), sep * len(sizes), size=(len(sizes), 2))
    pts = np.vstack([c + rng.normal(scale=spread, size=(s, 2)) for c, s in zip(centers, sizes)])
    return cdist(pts, pts)


def test_validation():
    with pytest.raises(ValueError):
        as_distance_matrix([[0, 1], [2, 0]])
    with pytest.raises(ValueError):
        as_distance_matrix([[1, 1], [1, 0]])
    with pytest.raises(ValueError):
        as_distance_matrix([[0, -1], [-1, 0]])
    with pytest.raises(ValueError):
        as_distance_matrix(np.zeros((2, 3)))


def test_core_distance_examples():
    x = np.array([0.0, 1.0, 3.0])
    m = np.abs(x[:, None] - x[None, :])
    assert core_distance(m, 1, 1) == 1
    assert core_distance(m, 0, 2) == 3
    dup = np.zeros((2, 2))
    assert core_distance(dup, 0, 1) == 0
    with pytest.raises(ValueError):
        core_distance(m, 0, 3)
    with pytest.raises(ValueError):
        core_distances(m, 0)


@given(st.integers(0, 10**6), st.integers(3, 15))
def test_core_distances_match_sort_oracle(seed, n):
    m = random_matrix(np.random.default_rng(seed), n)
    for k in range(1, n):
        want = [sorted(np.delete(m[i], i))[k - 1] for i in range(n)]
        assert np.allclose(core_distances(m, k), want)


def test_mutual_reachability_examples():
    # cores 2 and 3, base distance 1 -> 3
    m = np.array([[0, 1, 2, 9], [1, 0, 9, 3], [2, 9, 0, 9], [9, 3, 9, 0]], dtype=float)
    r = mutual_reachability(m, 2)
    assert core_distances(m, 2)[0] == 2 and core_distances(m, 2)[1] == 3
    assert r[0, 1] == 3
    assert r[0, 3] == 9


@given(st.integers(0, 10**6), st.integers(3, 20), st.integers(1, 2))
def test_mutual_reachability_dominates(seed, n, k):
    m = random_matrix(np.random.default_rng(seed), n)
    r = mutual_reachability(m, k)
    assert np.all(r >= m - 1e-15)
    assert np.allclose(r, r.T)
    assert np.all(np.diag(r) == 0)


def test_mst_examples():
    tri = np.array([[0, 1, 3], [1, 0, 2], [3, 2, 0]], dtype=float)
    edges = mst_prim(tri)
    assert sorted(w for *_, w in edges) == [1, 2]
    assert min(spanning_tree_weights(tri)) == 3
    assert mst_prim(np.array([[0, 5.0], [5.0, 0]])) == [(0, 1, 5.0)]


@settings(max_examples=50)
@given(st.integers(0, 10**6), st.integers(2, 30))
def test_mst_weight_matches_kruskal_and_is_order_invariant(seed, n):
    rng = np.random.default_rng(seed)
    m = random_matrix(rng, n)
    edges = mst_prim(m)
    assert len(edges) == n - 1
    w = sum(e[2] for e in edges)
    assert w == pytest.approx(kruskal_weight(m.tolist()), rel=1e-12)
    perm = rng.permutation(n)
    assert sum(e[2] for e in mst_prim(m[np.ix_(perm, perm)])) == pytest.approx(w, rel=1e-12)
    if n <= 6:
        assert w == pytest.approx(min(spanning_tree_weights(m.tolist())), rel=1e-12)


def test_single_linkage_matches_scipy():
    from scipy.cluster.hierarchy import linkage
    from scipy.spatial.distance import squareform

    rng = np.random.default_rng(5)
    m = random_matrix(rng, 12)
    ours = single_linkage(mst_prim(m), 12)
    ref = linkage(squareform(m), method="single")
    assert np.allclose(ours[:, 2], ref[:, 2])
    assert np.array_equal(ours[:, 3], ref[:, 3])


def _sklearn_labels(m, min_samples, mcs):
    from sklearn.cluster import HDBSCAN

    # sklearn counts the point itself among its min_samples neighbours
    return HDBSCAN(metric="precomputed", min_samples=min_samples + 1, min_cluster_size=mcs).fit(m).labels_


def _same_partition(a, b):
    from sklearn.metrics import adjusted_rand_score

    return adjusted_rand_score(a, b) == 1.0 and np.array_equal(np.asarray(a) == NOISE, np.asarray(b) == NOISE)


def test_three_blobs():
    rng = np.random.default_rng(0)
    m = blobs(rng, [10, 10, 10], spread=0.1, sep=10)
    res = hdbscan(m, 2, 5)
    assert res.n_clusters == 3
    assert np.all(res.labels != NOISE)
    assert _same_partition(res.labels, _sklearn_labels(m, 2, 5))


def test_small_scatter_is_noise_and_single_blob():
    rng = np.random.default_rng(1)
    m = random_matrix(rng, 4)
    res = hdbscan(m, 2, 5)
    assert np.all(res.labels == NOISE) and np.all(res.probabilities == 0)
    blob = random_matrix(rng, 20)
    assert hdbscan(blob, 2, 5, allow_single_cluster=True).n_clusters == 1


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_hdbscan_matches_reference(seed):
    rng = np.random.default_rng(seed)
    sizes = list(rng.integers(3, 15, size=rng.integers(2, 5)))
    m = blobs(rng, sizes, spread=rng.uniform(0.2, 1.5), sep=4.0)
    res = hdbscan(m, 2, 5)
    assert _same_partition(res.labels, _sklearn_labels(m, 2, 5))
    assert np.all(res.probabilities[res.labels == NOISE] == 0)
    assert np.all((res.probabilities >= 0) & (res.probabilities <= 1))
    for lab, members in res.members().items():
        if lab != NOISE:
            assert len(members) >= 5


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6))
def test_permutation_equivariance(seed):
    rng = np.random.default_rng(seed)
    m = blobs(rng, [8, 9, 7], spread=0.5)
    perm = rng.permutation(len(m))
    a = hdbscan(m, 2, 5).labels
    b = hdbscan(m[np.ix_(perm, perm)], 2, 5).labels
    assert _same_partition(a[perm], b)


def test_probabilities_follow_lambda_ratio():
    rng = np.random.default_rng(4)
    m = blobs(rng, [12, 12], spread=0.3, sep=10)
    reach = mutual_reachability(m, 2)
    tree = condense_tree(single_linkage(mst_prim(reach), len(m)), 5)
    res = extract_clusters(tree)
    for lab in range(res.n_clusters):
        idx = np.flatnonzero(res.labels == lab)
        assert res.probabilities[idx].max() == pytest.approx(1.0)


def test_stability_rule_parent_needs_strictly_more():
    rng = np.random.default_rng(7)
    m = blobs(rng, [10, 10], spread=0.2, sep=8)
    tree = condense_tree(single_linkage(mst_prim(mutual_reachability(m, 2)), len(m)), 5)
    stab = tree.stabilities()
    kids = tree.cluster_children()
    res = extract_clusters(tree, allow_single_cluster=True)
    if res.n_clusters == 1:
        assert stab[tree.root] > sum(stab[c] for c in kids[tree.root])
    else:
        assert stab[tree.root] <= sum(stab[c] for c in kids[tree.root])


def test_duplicate_points_infinite_lambda():
    pts = np.array([[0, 0]] * 6 + [[10, 10]] * 6, dtype=float)
    m = cdist(pts, pts)
    res = hdbscan(m, 2, 5)
    assert res.n_clusters == 2
    assert np.all(res.probabilities == 1)


def test_group_by_label():
    g = group_by_label(["a", "b", "c"], lambda x: (3, 3, 2) if x != "c" else (4, 3, 3))
    assert g == {(3, 3, 2): ["a", "b"], (4, 3, 3): ["c"]}
    assert group_by_label([], lambda x: x) == {}
