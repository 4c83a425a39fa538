"""2D torus graph: coordinates, wrap-around neighbors, distances, reachability."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from enum import IntEnum
from typing import TYPE_CHECKING, Iterable, NamedTuple

if TYPE_CHECKING:
    from .faults import FaultScenario


class Direction(IntEnum):
    """Output port of a router. The integer value is the RL action index."""

    N = 0
    S = 1
    E = 2
    W = 3


# (row delta, col delta); row 0 is the top row.
OFFSETS = {
    Direction.N: (-1, 0),
    Direction.S: (1, 0),
    Direction.E: (0, 1),
    Direction.W: (0, -1),
}


class NodeId(NamedTuple):
    row: int
    col: int

    def __str__(self) -> str:
        return f"({self.row},{self.col})"


@dataclass(frozen=True)
class TorusTopology:
    """An m x n torus, the Cartesian product of a row cycle and a column cycle.

    For one- and two-wide dimensions the +1 and -1 wraps coincide or loop back
    to the node itself. Self-loops are removed and duplicate slots are
    collapsed onto the first direction in N, S, E, W order, so the graph stays
    simple.
    """

    rows: int
    cols: int

    def __post_init__(self) -> None:
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"torus dimensions must be positive, got {self.rows}x{self.cols}")
        table = []
        for idx in range(self.rows * self.cols):
            v = self.node(idx)
            seen = set()
            slots: list[tuple[Direction, NodeId]] = []
            for d in Direction:
                u = self.shift(v, d)
                if u == v or u in seen:
                    continue
                seen.add(u)
                slots.append((d, u))
            table.append(tuple(slots))
        object.__setattr__(self, "_neighbors", tuple(table))

    @property
    def size(self) -> int:
        return self.rows * self.cols

    def node(self, index: int) -> NodeId:
        return NodeId(index // self.cols, index % self.cols)

    def index(self, v: NodeId) -> int:
        return v[0] * self.cols + v[1]

    def nodes(self) -> Iterable[NodeId]:
        return (self.node(i) for i in range(self.size))

    def contains(self, v: NodeId) -> bool:
        return 0 <= v[0] < self.rows and 0 <= v[1] < self.cols

    def check(self, v: NodeId) -> NodeId:
        if not self.contains(v):
            raise ValueError(f"node {tuple(v)} outside {self.rows}x{self.cols} torus")
        return NodeId(*v)

    def shift(self, v: NodeId, d: Direction) -> NodeId:
        """Raw modular step; may return ``v`` itself on one-wide dimensions."""
        dr, dc = OFFSETS[d]
        return NodeId((v[0] + dr) % self.rows, (v[1] + dc) % self.cols)

    def neighbors(self, v: NodeId) -> tuple[tuple[Direction, NodeId], ...]:
        return self._neighbors[self.index(self.check(v))]

    def neighbor(self, v: NodeId, d: Direction) -> NodeId | None:
        """Neighbor through port ``d``, or None if that slot was deduplicated away."""
        for dd, u in self.neighbors(v):
            if dd == d:
                return u
        return None

    def distance(self, a: NodeId, b: NodeId) -> int:
        return torus_distance(self, a, b)

    def diameter(self) -> int:
        return diameter(self)


def neighbors(topo: TorusTopology, v: NodeId) -> list[tuple[Direction, NodeId]]:
    return list(topo.neighbors(v))


def ring_distance(a: int, b: int, k: int) -> int:
    d = abs(a - b) % k
    return min(d, k - d)


def torus_distance(topo: TorusTopology, a: NodeId, b: NodeId) -> int:
    a, b = topo.check(a), topo.check(b)
    return ring_distance(a.row, b.row, topo.rows) + ring_distance(a.col, b.col, topo.cols)


def diameter(topo: TorusTopology) -> int:
    return topo.rows // 2 + topo.cols // 2


def reachable_set(topo: TorusTopology, faults: "FaultScenario | Iterable[NodeId] | None",
                  src: NodeId) -> set[NodeId]:
    """BFS from ``src`` over the non-faulty subgraph."""
    faulty = _faulty_set(faults)
    src = topo.check(src)
    if src in faulty:
        raise ValueError(f"source {src} is faulty")
    seen = {src}
    queue = deque([src])
    while queue:
        v = queue.popleft()
        for _, u in topo.neighbors(v):
            if u not in seen and u not in faulty:
                seen.add(u)
                queue.append(u)
    return seen


def bfs_distances(topo: TorusTopology, faults, src: NodeId) -> dict[NodeId, int]:
    """Hop counts from ``src`` to every node reachable around the faults."""
    faulty = _faulty_set(faults)
    dist = {topo.check(src): 0}
    queue = deque([src])
    while queue:
        v = queue.popleft()
        for _, u in topo.neighbors(v):
            if u not in dist and u not in faulty:
                dist[u] = dist[v] + 1
                queue.append(u)
    return dist


def is_path(topo: TorusTopology, nodes: list[NodeId]) -> bool:
    """True for a non-empty sequence of distinct, pairwise adjacent nodes."""
    if not nodes or len(set(nodes)) != len(nodes):
        return False
    return all(b in {u for _, u in topo.neighbors(a)} for a, b in zip(nodes, nodes[1:]))


def _faulty_set(faults) -> frozenset[NodeId]:
    if faults is None:
        return frozenset()
    if hasattr(faults, "faulty"):
        return faults.faulty
    return frozenset(NodeId(*v) for v in faults)
