"""HDBSCAN over precomputed distance matrices, plus exact label grouping.

Pipeline: core distances -> mutual reachability -> Prim MST -> single
linkage hierarchy (union-find over sorted MST edges) -> condensed tree ->
excess-of-mass cluster selection.

``min_samples`` counts neighbours other than the point itself, so
``core_k`` is the distance to the k-th nearest *other* point.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Callable, Hashable, Iterable, TypeVar

import numpy as np

T = TypeVar("T")
NOISE = -1


def as_distance_matrix(matrix, atol: float = 1e-9) -> np.ndarray:
    """Validate and return a float copy of a square, symmetric, zero-diagonal matrix."""
    m = np.array(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("distance matrix must be square")
    if not np.all(np.isfinite(m)):
        raise ValueError("distance matrix has non-finite entries")
    if np.any(m < -atol):
        raise ValueError("distances must be non-negative")
    if not np.allclose(m, m.T, atol=atol):
        raise ValueError("distance matrix must be symmetric")
    if np.any(np.abs(np.diag(m)) > atol):
        raise ValueError("distance matrix must have a zero diagonal")
    m = np.maximum(m, 0.0)
    np.fill_diagonal(m, 0.0)
    return m


def core_distance(matrix, point: int, k: int) -> float:
    m = np.asarray(matrix, dtype=float)
    n = m.shape[0]
    if not 1 <= k < n:
        raise ValueError(f"k={k} must satisfy 1 <= k < n={n}")
    others = np.delete(m[point], point)
    return float(np.partition(others, k - 1)[k - 1])


def core_distances(matrix, k: int) -> np.ndarray:
    m = np.asarray(matrix, dtype=float)
    n = m.shape[0]
    if not 1 <= k < n:
        raise ValueError(f"k={k} must satisfy 1 <= k < n={n}")
    # the diagonal zero sits at sorted index 0 of each row, so index k is the k-th other point
    off = m + np.diag(np.full(n, -np.inf))
    return np.partition(off, k, axis=1)[:, k]


def mutual_reachability(matrix, k: int) -> np.ndarray:
    m = as_distance_matrix(matrix)
    core = core_distances(m, k)
    out = np.maximum(m, np.maximum.outer(core, core))
    np.fill_diagonal(out, 0.0)
    return out


def mst_prim(matrix) -> list[tuple[int, int, float]]:
    """Dense O(n^2) Prim. Edges come out in the order they join the tree."""
    m = np.asarray(matrix, dtype=float)
    n = m.shape[0]
    if n < 2:
        return []
    in_tree = np.zeros(n, dtype=bool)
    best = np.full(n, np.inf)
    parent = np.full(n, -1)
    current = 0
    in_tree[0] = True
    edges = []
    for _ in range(n - 1):
        row = m[current]
        closer = ~in_tree & (row < best)
        best[closer] = row[closer]
        parent[closer] = current
        cand = np.where(in_tree, np.inf, best)
        nxt = int(np.argmin(cand))
        edges.append((int(parent[nxt]), nxt, float(best[nxt])))
        in_tree[nxt] = True
        current = nxt
    return edges


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(2 * n - 1))
        self.size = [1] * n + [0] * (n - 1)
        self.next_label = n

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> int:
        label = self.next_label
        self.next_label += 1
        self.parent[a] = self.parent[b] = label
        self.size[label] = self.size[a] + self.size[b]
        return label


def single_linkage(edges: Iterable[tuple[int, int, float]], n: int) -> np.ndarray:
    """Merge tree in scipy linkage layout: rows ``(left, right, distance, size)``."""
    edges = list(edges)
    order = np.argsort([w for _, _, w in edges], kind="stable")
    uf = _UnionFind(n)
    rows = []
    for idx in order:
        a, b, w = edges[idx]
        ra, rb = uf.find(a), uf.find(b)
        label = uf.union(ra, rb)
        rows.append((ra, rb, w, uf.size[label]))
    return np.array(rows, dtype=float).reshape(-1, 4)


@dataclass(frozen=True)
class CondensedTree:
    """Edges ``parent -> child`` with the lambda at which the child leaves.

    Children ``< n_points`` are data points, the rest are clusters; the root
    cluster has id ``n_points``.
    """

    parent: np.ndarray
    child: np.ndarray
    lam: np.ndarray
    child_size: np.ndarray
    n_points: int
    min_cluster_size: int

    @property
    def root(self) -> int:
        return self.n_points

    def cluster_ids(self) -> list[int]:
        return sorted({self.root, *(int(c) for c in self.child[self.child >= self.n_points])})

    def births(self) -> dict[int, float]:
        out = {self.root: 0.0}
        for c, lam in zip(self.child, self.lam):
            if c >= self.n_points:
                out[int(c)] = float(lam)
        return out

    def stabilities(self) -> dict[int, float]:
        births = self.births()
        stab = {c: 0.0 for c in births}
        for p, lam, size in zip(self.parent, self.lam, self.child_size):
            p = int(p)
            if np.isinf(lam):
                # a finite-distance cluster never contains a zero-distance merge at its own birth
                stab[p] = np.inf if not np.isinf(births[p]) else stab[p]
                continue
            stab[p] += (lam - births[p]) * size
        return stab

    def cluster_children(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = defaultdict(list)
        for p, c in zip(self.parent, self.child):
            if c >= self.n_points:
                out[int(p)].append(int(c))
        return out


def _lambda(distance: float) -> float:
    return 1.0 / distance if distance > 0 else np.inf


def condense_tree(hierarchy: np.ndarray, min_cluster_size: int) -> CondensedTree:
    if min_cluster_size < 2:
        raise ValueError("min_cluster_size must be >= 2")
    n = hierarchy.shape[0] + 1
    if n == 1:
        empty = np.empty(0)
        return CondensedTree(empty.astype(int), empty.astype(int), empty, empty.astype(int), 1, min_cluster_size)

    left = hierarchy[:, 0].astype(int)
    right = hierarchy[:, 1].astype(int)
    dist = hierarchy[:, 2]
    size = np.concatenate([np.ones(n, dtype=int), hierarchy[:, 3].astype(int)])

    def leaves(node: int) -> list[int]:
        out, stack = [], [node]
        while stack:
            x = stack.pop()
            if x < n:
                out.append(x)
            else:
                stack.extend((left[x - n], right[x - n]))
        return out

    parents, children, lams, sizes = [], [], [], []
    next_label = n + 1
    stack = [(2 * n - 2, n)]  # (hierarchy node, condensed cluster label)
    while stack:
        node, label = stack.pop()
        if node < n:
            continue
        a, b = left[node - n], right[node - n]
        lam = _lambda(dist[node - n])
        big_a, big_b = size[a] >= min_cluster_size, size[b] >= min_cluster_size
        if big_a and big_b:
            for sub in (a, b):
                parents.append(label)
                children.append(next_label)
                lams.append(lam)
                sizes.append(size[sub])
                stack.append((sub, next_label))
                next_label += 1
            continue
        for sub, big in ((a, big_a), (b, big_b)):
            if big:
                stack.append((sub, label))
            else:
                for p in leaves(sub):
                    parents.append(label)
                    children.append(p)
                    lams.append(lam)
                    sizes.append(1)
    return CondensedTree(
        np.array(parents, dtype=int),
        np.array(children, dtype=int),
        np.array(lams, dtype=float),
        np.array(sizes, dtype=int),
        n,
        min_cluster_size,
    )


@dataclass(frozen=True)
class ClusterAssignment:
    labels: np.ndarray
    probabilities: np.ndarray

    @property
    def n_clusters(self) -> int:
        return len(set(self.labels.tolist()) - {NOISE})

    def members(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = defaultdict(list)
        for i, lab in enumerate(self.labels.tolist()):
            out[lab].append(i)
        return dict(out)


def select_clusters(tree: CondensedTree, allow_single_cluster: bool = False) -> set[int]:
    """Excess-of-mass selection, bottom up. A parent replaces its children only
    when its own stability is strictly larger than their (propagated) sum."""
    stab = tree.stabilities()
    kids = tree.cluster_children()
    value: dict[int, float] = {}
    selected: set[int] = set()
    root_ok = allow_single_cluster and tree.n_points >= tree.min_cluster_size

    def descendants(c: int) -> list[int]:
        out, stack = [], list(kids.get(c, []))
        while stack:
            x = stack.pop()
            out.append(x)
            stack.extend(kids.get(x, []))
        return out

    for c in sorted(stab, reverse=True):
        if c == tree.root and not root_ok:
            continue
        ch = kids.get(c, [])
        if not ch:
            selected.add(c)
            value[c] = stab[c]
            continue
        below = sum(value[x] for x in ch)
        if stab[c] > below:
            selected.difference_update(descendants(c))
            selected.add(c)
            value[c] = stab[c]
        else:
            value[c] = below
    return selected


def extract_clusters(tree: CondensedTree, allow_single_cluster: bool = False) -> ClusterAssignment:
    """Labels and membership strengths from a condensed tree.

    Membership is ``lambda_p / lambda_max`` inside the selected cluster, where
    ``lambda_max`` is the largest finite departure level of its members;
    points that leave at infinite lambda get 1. Noise gets 0.
    """
    n = tree.n_points
    labels = np.full(n, NOISE, dtype=int)
    probs = np.zeros(n)
    if len(tree.parent) == 0:
        return ClusterAssignment(labels, probs)
    selected = select_clusters(tree, allow_single_cluster)
    up = {int(c): int(p) for p, c in zip(tree.parent, tree.child) if c >= n}

    point_lam = np.zeros(n)
    owner = np.full(n, NOISE, dtype=int)
    for p, c, lam in zip(tree.parent, tree.child, tree.lam):
        if c < n:
            point_lam[c] = lam
            x = int(p)
            while x not in selected and x in up:
                x = up[x]
            if x in selected:
                owner[c] = x

    # number clusters by their smallest member so labels do not depend on tree ids
    order = sorted(set(owner[owner != NOISE].tolist()), key=lambda c: int(np.flatnonzero(owner == c)[0]))
    for new_label, c in enumerate(order):
        idx = np.flatnonzero(owner == c)
        labels[idx] = new_label
        lam = point_lam[idx]
        finite = lam[np.isfinite(lam)]
        top = finite.max() if len(finite) else 0.0
        p = np.ones(len(idx))
        if top > 0:
            p = np.where(np.isfinite(lam), np.minimum(lam, top) / top, 1.0)
        probs[idx] = p
    return ClusterAssignment(labels, probs)


def hdbscan(
    matrix,
    min_samples: int = 2,
    min_cluster_size: int = 5,
    allow_single_cluster: bool = False,
) -> ClusterAssignment:
    m = as_distance_matrix(matrix)
    n = m.shape[0]
    if n < min_cluster_size or n < 2:
        return ClusterAssignment(np.full(n, NOISE, dtype=int), np.zeros(n))
    k = min(min_samples, n - 1)
    reach = mutual_reachability(m, k)
    hierarchy = single_linkage(mst_prim(reach), n)
    tree = condense_tree(hierarchy, min_cluster_size)
    return extract_clusters(tree, allow_single_cluster)


def group_by_label(items: Iterable[T], label_fn: Callable[[T], Hashable]) -> dict[Hashable, list[T]]:
    groups: dict[Hashable, list[T]] = {}
    for item in items:
        groups.setdefault(label_fn(item), []).append(item)
    return groups
