import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from torus_noc.topology import (Direction, NodeId, TorusTopology, bfs_distances, diameter,
                                is_path, neighbors, reachable_set, ring_distance,
                                torus_distance)

sizes = st.integers(1, 9)


def floyd_warshall(topo, faulty=frozenset()):
    """Dense all-pairs distances, an oracle independent of the BFS code."""
    n = topo.size
    d = np.full((n, n), np.inf)
    np.fill_diagonal(d, 0)
    for i in range(n):
        r, c = divmod(i, topo.cols)
        if topo.node(i) in faulty:
            continue
        for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            j = ((r + dr) % topo.rows) * topo.cols + (c + dc) % topo.cols
            if j != i and topo.node(j) not in faulty:
                d[i, j] = 1
    for k in range(n):
        d = np.minimum(d, d[:, k:k + 1] + d[k:k + 1, :])
    return d


class UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, a):
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a, b):
        self.parent[self.find(a)] = self.find(b)


def test_neighbors_interior_and_wrap():
    t = TorusTopology(4, 5)
    assert neighbors(t, NodeId(0, 0)) == [
        (Direction.N, (3, 0)), (Direction.S, (1, 0)), (Direction.E, (0, 1)), (Direction.W, (0, 4))]
    assert dict(t.neighbors(NodeId(3, 4))) == {
        Direction.N: (2, 4), Direction.S: (0, 4), Direction.E: (3, 0), Direction.W: (3, 3)}


def test_degenerate_sizes_collapse_duplicate_ports():
    assert TorusTopology(1, 1).neighbors(NodeId(0, 0)) == ()
    assert neighbors(TorusTopology(1, 2), NodeId(0, 0)) == [(Direction.E, (0, 1))]
    assert neighbors(TorusTopology(2, 2), NodeId(0, 0)) == [
        (Direction.N, (1, 0)), (Direction.E, (0, 1))]
    assert TorusTopology(2, 3).neighbor(NodeId(0, 0), Direction.S) is None


def test_invalid_sizes_and_nodes():
    with pytest.raises(ValueError):
        TorusTopology(0, 3)
    with pytest.raises(ValueError):
        TorusTopology(3, 3).neighbors(NodeId(3, 0))


@settings(max_examples=60, deadline=None)
@given(sizes, sizes)
def test_adjacency_is_symmetric_and_simple(m, n):
    t = TorusTopology(m, n)
    for v in t.nodes():
        nbrs = [u for _, u in t.neighbors(v)]
        assert v not in nbrs
        assert len(nbrs) == len(set(nbrs))
        targets = {t.shift(v, d) for d in Direction} - {v}
        assert set(nbrs) == targets
        for u in nbrs:
            assert v in {w for _, w in t.neighbors(u)}
        if m >= 3 and n >= 3:
            assert len(nbrs) == 4


@settings(max_examples=40, deadline=None)
@given(sizes, sizes)
def test_distance_matches_dense_oracle(m, n):
    t = TorusTopology(m, n)
    d = floyd_warshall(t)
    for i, j in itertools.product(range(t.size), repeat=2):
        assert torus_distance(t, t.node(i), t.node(j)) == d[i, j]
    assert diameter(t) == d.max() == m // 2 + n // 2


@given(st.integers(1, 30), st.data())
def test_ring_distance_properties(k, data):
    a = data.draw(st.integers(0, k - 1))
    b = data.draw(st.integers(0, k - 1))
    assert ring_distance(a, b, k) == ring_distance(b, a, k) <= k // 2


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 8), st.integers(2, 8), st.sets(st.integers(0, 63)), st.data())
def test_bfs_matches_oracle_under_faults(m, n, raw, data):
    t = TorusTopology(m, n)
    faulty = frozenset(t.node(i % t.size) for i in raw)
    live = [v for v in t.nodes() if v not in faulty]
    if not live:
        return
    src = data.draw(st.sampled_from(live))
    d = floyd_warshall(t, faulty)
    dist = bfs_distances(t, faulty, src)
    for v in t.nodes():
        want = d[t.index(src), t.index(v)]
        assert dist.get(v, np.inf) == want


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 8), st.integers(1, 8), st.sets(st.integers(0, 63)), st.data())
def test_reachable_set_matches_union_find(m, n, raw, data):
    t = TorusTopology(m, n)
    faulty = frozenset(t.node(i % t.size) for i in raw)
    live = [v for v in t.nodes() if v not in faulty]
    if not live:
        return
    uf = UnionFind(t.size)
    for v in live:
        for _, u in t.neighbors(v):
            if u not in faulty:
                uf.union(t.index(v), t.index(u))
    src = data.draw(st.sampled_from(live))
    want = {v for v in live if uf.find(t.index(v)) == uf.find(t.index(src))}
    assert reachable_set(t, faulty, src) == want


def test_reachable_set_rejects_faulty_source():
    t = TorusTopology(3, 3)
    with pytest.raises(ValueError):
        reachable_set(t, [NodeId(1, 1)], NodeId(1, 1))


def test_ring_of_faults_cuts_the_torus():
    t = TorusTopology(5, 5)
    wall = [NodeId(2, c) for c in range(5)] + [NodeId(4, c) for c in range(5)]
    assert reachable_set(t, wall, NodeId(0, 0)) == {NodeId(r, c) for r in (0, 1) for c in range(5)}


def test_is_path():
    t = TorusTopology(3, 3)
    assert is_path(t, [NodeId(0, 0), NodeId(0, 2), NodeId(2, 2)])
    assert not is_path(t, [NodeId(0, 0), NodeId(1, 1)])
    assert not is_path(t, [NodeId(0, 0), NodeId(0, 1), NodeId(0, 0)])
    assert not is_path(t, [])
