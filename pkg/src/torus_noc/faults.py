"""Reproducible node-fault scenarios."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .seeding import make_rng
from .topology import NodeId, TorusTopology


class NotEnoughLiveNodes(ValueError):
    pass


@dataclass(frozen=True)
class FaultScenario:
    """A set of disabled routers. Faulty nodes neither send, receive nor forward."""

    topo: TorusTopology
    density: float
    seed: int
    faulty: frozenset[NodeId]

    def is_faulty(self, v: NodeId) -> bool:
        return v in self.faulty

    def live_nodes(self) -> list[NodeId]:
        return [v for v in self.topo.nodes() if v not in self.faulty]

    def faulty_indices(self) -> list[int]:
        return sorted(self.topo.index(v) for v in self.faulty)

    def to_dict(self) -> dict:
        return {
            "rows": self.topo.rows,
            "cols": self.topo.cols,
            "density": self.density,
            "seed": self.seed,
            "faulty": self.faulty_indices(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FaultScenario":
        topo = TorusTopology(int(data["rows"]), int(data["cols"]))
        faulty = set()
        for idx in data["faulty"]:
            if not 0 <= int(idx) < topo.size:
                raise ValueError(f"faulty index {idx} outside {topo.rows}x{topo.cols} torus")
            faulty.add(topo.node(int(idx)))
        return cls(topo, float(data["density"]), int(data["seed"]), frozenset(faulty))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "FaultScenario":
        return cls.from_dict(json.loads(Path(path).read_text()))


def fault_count(topo: TorusTopology, f: float) -> int:
    """round-half-up(f*m*n), clamped so two live nodes survive."""
    count = math.floor(f * topo.size + 0.5)
    if topo.size >= 2:
        count = min(count, topo.size - 2)
    else:
        count = 0
    return count


def inject_faults(topo: TorusTopology, f: float, seed: int) -> FaultScenario:
    """Disable ``fault_count(topo, f)`` nodes drawn uniformly without replacement."""
    if not 0.0 <= f <= 1.0:
        raise ValueError(f"fault density must be in [0, 1], got {f}")
    if f >= 1.0:
        raise NotEnoughLiveNodes("density 1.0 leaves no live nodes")
    count = fault_count(topo, f)
    rng = make_rng(seed, "faults")
    picked = rng.choice(topo.size, size=count, replace=False) if count else []
    return FaultScenario(topo, f, seed, frozenset(topo.node(int(i)) for i in picked))


def no_faults(topo: TorusTopology) -> FaultScenario:
    return FaultScenario(topo, 0.0, 0, frozenset())


def sample_endpoints(scenario: FaultScenario, rng: np.random.Generator) -> tuple[NodeId, NodeId]:
    """Uniform ordered pair of distinct live nodes; connectivity is not checked."""
    live = scenario.live_nodes()
    k = len(live)
    if k < 2:
        raise NotEnoughLiveNodes(f"need 2 live nodes, scenario has {k}")
    i = int(rng.integers(k))
    j = int(rng.integers(k - 1))
    if j >= i:
        j += 1
    return live[i], live[j]
