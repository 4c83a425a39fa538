"""Dimension-order adaptive minimal routing with one-step fault fallback.

Packets resolve the column offset first, then the row offset, each time
stepping the shorter way around the ring. If that neighbor is faulty the
opposite direction of the same dimension is tried. A packet whose current
dimension is blocked both ways is dropped. With ``switch_dimensions=True``
a stuck column dimension hands over to the row dimension instead, and the
packet is dropped only once every unresolved dimension is blocked. No node is
entered twice.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .faults import FaultScenario
from .topology import Direction, NodeId, TorusTopology


class Status(str, Enum):
    DELIVERED = "Delivered"
    DROPPED_BLOCKED = "DroppedBlocked"
    DROPPED_DISCONNECTED = "DroppedDisconnected"
    DROPPED_HOP_LIMIT = "DroppedHopLimit"


@dataclass
class RoutingOutcome:
    status: Status
    path: list[NodeId]
    # number of steps that did not take the shorter-wrap direction
    detours: int = 0
    reason: str = field(default="", compare=False)

    @property
    def delivered(self) -> bool:
        return self.status is Status.DELIVERED

    @property
    def hops(self) -> int:
        return len(self.path) - 1

    def to_dict(self) -> dict:
        return {
            "status": self.status.value,
            "hops": self.hops,
            "path": [list(v) for v in self.path],
            "detours": self.detours,
        }


def preferred_directions(offset: int, size: int, positive: Direction, negative: Direction):
    """(primary, fallback) ports for a signed ring offset; ties go the positive way."""
    fwd = offset % size
    if fwd <= size - fwd:
        return positive, negative
    return negative, positive


def hop_limit(topo: TorusTopology) -> int:
    return 4 * (topo.rows + topo.cols)


def _dimension_candidates(topo: TorusTopology, cur: NodeId, dst: NodeId,
                          switch_dimensions: bool = False):
    """Per eligible dimension, the ordered (direction, is_primary) attempts."""
    dims = []
    if cur.col != dst.col:
        p, q = preferred_directions(dst.col - cur.col, topo.cols, Direction.E, Direction.W)
        dims.append(((p, True), (q, False)))
    if cur.row != dst.row:
        p, q = preferred_directions(dst.row - cur.row, topo.rows, Direction.S, Direction.N)
        dims.append(((p, True), (q, False)))
    return dims if switch_dimensions else dims[:1]


def blocked(topo: TorusTopology, scenario: FaultScenario, cur: NodeId, dst: NodeId,
            visited, switch_dimensions: bool = False) -> bool:
    """The drop predicate: every eligible dimension is blocked both ways."""
    for dim in _dimension_candidates(topo, cur, dst, switch_dimensions):
        for d, _ in dim:
            nxt = topo.shift(cur, d)
            if nxt not in scenario.faulty and nxt not in visited:
                return False
    return True


def route_baseline(topo: TorusTopology, scenario: FaultScenario, src: NodeId,
                   dst: NodeId, switch_dimensions: bool = False) -> RoutingOutcome:
    src, dst = topo.check(src), topo.check(dst)
    if src in scenario.faulty:
        raise ValueError(f"source {src} is faulty")
    if dst in scenario.faulty:
        raise ValueError(f"destination {dst} is faulty")
    if src == dst:
        raise ValueError("source and destination coincide")

    path = [src]
    visited = {src}
    detours = 0
    limit = hop_limit(topo)
    cur = src
    while cur != dst:
        if len(path) - 1 >= limit:
            return RoutingOutcome(Status.DROPPED_HOP_LIMIT, path, detours, "hop limit")
        step = None
        for dim in _dimension_candidates(topo, cur, dst, switch_dimensions):
            for d, primary in dim:
                nxt = topo.shift(cur, d)
                if nxt not in scenario.faulty and nxt not in visited:
                    step = (nxt, primary)
                    break
            if step is not None:
                break
        if step is None:
            return RoutingOutcome(Status.DROPPED_BLOCKED, path, detours,
                                  f"both directions blocked at {cur}")
        cur, primary = step
        if not primary:
            detours += 1
        path.append(cur)
        visited.add(cur)
    return RoutingOutcome(Status.DELIVERED, path, detours)
