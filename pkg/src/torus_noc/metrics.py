"""Batched evaluation: PDR, normalized throughput and fault-adaptive score.

Packets are routed independently (no link or buffer contention), so
throughput under load-driven injection is the delivered share of injected
packets. Every figure averages over a list of fault-scenario seeds; the
routers being compared see identical scenarios and identical endpoints.

The fault-adaptive score (FT) has no published formula. Here it is
``PDR * path_efficiency * coverage`` where path efficiency is the mean of
shortest-surviving-path length over actual hops for delivered packets and
coverage is the delivered share of BFS-connected packets.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .faults import FaultScenario, inject_faults, sample_endpoints
from .seeding import derive_seed, make_rng
from .topology import NodeId, TorusTopology, bfs_distances

FT_NOTE = ("ft_score is an artifact definition (PDR x path_efficiency x coverage); "
           "no formula for it is published")

ROUTER_CHOICES = ("baseline", "rl", "both")


@dataclass
class ExperimentConfig:
    rows: int = 8
    cols: int = 8
    densities: list[float] = field(default_factory=lambda: [0.0, 0.1, 0.2, 0.3, 0.4, 0.5])
    loads: list[float] = field(default_factory=lambda: [0.1, 0.3, 0.5, 0.7, 0.9])
    fault_density: float = 0.2
    trials: int = 500
    scenarios: int = 20
    cycles: int = 200
    seed: int = 0
    router: str = "both"
    checkpoint: str | None = None

    def __post_init__(self) -> None:
        if self.trials < 1 or self.scenarios < 1 or self.cycles < 1:
            raise ValueError("trials, scenarios and cycles must be >= 1")
        if any(not 0.0 <= f <= 1.0 for f in self.densities) or not 0.0 <= self.fault_density <= 1.0:
            raise ValueError("fault densities must lie in [0, 1]")
        if any(not 0.0 < x <= 1.0 for x in self.loads):
            raise ValueError("loads must lie in (0, 1]")
        if self.router not in ROUTER_CHOICES:
            raise ValueError(f"router must be one of {ROUTER_CHOICES}")

    def scenario_seeds(self, f: float) -> list[int]:
        return scenario_seeds(self.seed, f, self.scenarios)


def scenario_seeds(seed: int, f: float, count: int) -> list[int]:
    """Scenario seeds for density ``f``; shared by every router and load level."""
    key = int(round(f * 1_000_000))
    return [derive_seed(seed, "scenario", key, k) for k in range(count)]


@dataclass
class MetricPoint:
    sweep: str
    x: float
    router: str
    fault_density: float
    load: float | None
    pdr: float
    throughput: float | None
    ft_score: float
    path_efficiency: float
    coverage: float
    mean_hops: float
    connected_fraction: float
    packets: int
    scenarios: int

    COLUMNS = ("sweep", "router", "x", "fault_density", "load", "pdr", "throughput", "ft_score",
               "path_efficiency", "coverage", "mean_hops", "connected_fraction", "packets",
               "scenarios")


@dataclass
class Tally:
    """Per-packet accumulator; merge order does not change integer fields."""

    packets: int = 0
    delivered: int = 0
    connected: int = 0
    hops: int = 0
    efficiencies: list[float] = field(default_factory=list)

    def add(self, delivered: bool, connected: bool, hops: int, shortest: int | None) -> None:
        self.packets += 1
        self.connected += connected
        if delivered:
            self.delivered += 1
            self.hops += hops
            self.efficiencies.append(shortest / hops)

    def merge(self, other: "Tally") -> "Tally":
        return Tally(self.packets + other.packets, self.delivered + other.delivered,
                     self.connected + other.connected, self.hops + other.hops,
                     self.efficiencies + other.efficiencies)

    @property
    def pdr(self) -> float:
        return self.delivered / self.packets if self.packets else 0.0

    @property
    def connected_fraction(self) -> float:
        return self.connected / self.packets if self.packets else 0.0

    @property
    def path_efficiency(self) -> float:
        return math.fsum(self.efficiencies) / len(self.efficiencies) if self.efficiencies else 0.0

    @property
    def coverage(self) -> float:
        return self.delivered / self.connected if self.connected else 0.0

    @property
    def mean_hops(self) -> float:
        return self.hops / self.delivered if self.delivered else 0.0

    @property
    def ft_score(self) -> float:
        if not self.connected or not self.delivered:
            return 0.0
        return self.pdr * self.path_efficiency * self.coverage


class _Oracle:
    """BFS distances around faults, cached per source."""

    def __init__(self, topo: TorusTopology, scenario: FaultScenario):
        self.topo = topo
        self.scenario = scenario
        self._dist: dict[NodeId, dict[NodeId, int]] = {}

    def distance(self, src: NodeId, dst: NodeId) -> int | None:
        if src not in self._dist:
            self._dist[src] = bfs_distances(self.topo, self.scenario, src)
        return self._dist[src].get(dst)


def _memoize(route):
    # both routers are deterministic given (scenario, src, dst)
    cache = {}

    def wrapped(src: NodeId, dst: NodeId):
        key = (src, dst)
        if key not in cache:
            cache[key] = route(src, dst)
        return cache[key]
    return wrapped


def _prepare(routers, topo: TorusTopology, scenario: FaultScenario) -> dict:
    return {r.name: _memoize(r.prepare(topo, scenario)) for r in routers}


def _record(tally: Tally, route, oracle: _Oracle, src: NodeId, dst: NodeId) -> None:
    out = route(src, dst)
    shortest = oracle.distance(src, dst)
    tally.add(out.delivered, shortest is not None, out.hops, shortest)


def _pdr_block(args) -> dict[str, Tally]:
    topo, f, routers, trials, seed = args
    scenario = inject_faults(topo, f, seed)
    oracle = _Oracle(topo, scenario)
    routes = _prepare(routers, topo, scenario)
    tallies = {name: Tally() for name in routes}
    rng = make_rng(seed, "endpoints")
    for _ in range(trials):
        src, dst = sample_endpoints(scenario, rng)
        for name, route in routes.items():
            _record(tallies[name], route, oracle, src, dst)
    return tallies


def _load_block(args) -> dict[str, Tally]:
    topo, f, load, routers, cycles, seed = args
    scenario = inject_faults(topo, f, seed)
    oracle = _Oracle(topo, scenario)
    routes = _prepare(routers, topo, scenario)
    tallies = {name: Tally() for name in routes}
    live = scenario.live_nodes()
    k = len(live)
    rng = make_rng(seed, "traffic", int(round(load * 1_000_000)))
    for _ in range(cycles):
        for i, src in enumerate(live):
            if rng.random() >= load:
                continue
            j = int(rng.integers(k - 1))
            dst = live[j + 1 if j >= i else j]
            for name, route in routes.items():
                _record(tallies[name], route, oracle, src, dst)
    return tallies


def _run_blocks(fn: Callable, blocks: list, jobs: int = 1) -> dict[str, Tally]:
    """Evaluate blocks, possibly in parallel, and reduce in block order."""
    if jobs > 1 and len(blocks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(fn, blocks))
    else:
        results = [fn(b) for b in blocks]
    total: dict[str, Tally] = {}
    for res in results:
        for name, t in res.items():
            total[name] = total[name].merge(t) if name in total else t
    return total


def pdr_tallies(topo: TorusTopology, f: float, routers: Sequence, trials: int,
                seeds: Sequence[int], jobs: int = 1) -> dict[str, Tally]:
    return _run_blocks(_pdr_block, [(topo, f, list(routers), trials, s) for s in seeds], jobs)


def throughput_tallies(topo: TorusTopology, f: float, load: float, routers: Sequence,
                       cycles: int, seeds: Sequence[int], jobs: int = 1) -> dict[str, Tally]:
    if not 0.0 < load <= 1.0:
        raise ValueError(f"load must be in (0, 1], got {load}")
    return _run_blocks(_load_block, [(topo, f, load, list(routers), cycles, s) for s in seeds],
                       jobs)


def _point(sweep: str, x: float, name: str, f: float, load: float | None, t: Tally,
           scenarios: int) -> MetricPoint:
    return MetricPoint(sweep, x, name, f, load, t.pdr, t.pdr if load is not None else None,
                       t.ft_score, t.path_efficiency, t.coverage, t.mean_hops,
                       t.connected_fraction, t.packets, scenarios)


def measure_pdr(topo: TorusTopology, f: float, router, trials: int, seeds: Sequence[int],
                jobs: int = 1) -> MetricPoint:
    """PDR over ``trials`` random pairs in each seeded scenario."""
    t = pdr_tallies(topo, f, [router], trials, seeds, jobs)[router.name]
    return _point("faults", f, router.name, f, None, t, len(seeds))


def measure_throughput(topo: TorusTopology, f: float, load: float, router, cycles: int,
                       seeds: Sequence[int], jobs: int = 1) -> MetricPoint:
    """Delivered over injected packets when each live node injects with probability ``load``."""
    t = throughput_tallies(topo, f, load, [router], cycles, seeds, jobs)[router.name]
    return _point("load", load, router.name, f, load, t, len(seeds))


def ft_score(topo: TorusTopology, f: float, router, trials: int, seeds: Sequence[int],
             jobs: int = 1) -> float:
    return measure_pdr(topo, f, router, trials, seeds, jobs).ft_score


def connected_fraction(topo: TorusTopology, scenario: FaultScenario, samples: int = 10_000,
                       rng: np.random.Generator | None = None) -> float:
    """Share of ordered live pairs joined by a fault-free path.

    Exact over all pairs when at most 64 nodes are live, sampled otherwise.
    """
    live = scenario.live_nodes()
    k = len(live)
    if k < 2:
        return 0.0
    if k <= 64:
        comp: dict[NodeId, int] = {}
        sizes = []
        for v in live:
            if v in comp:
                continue
            members = bfs_distances(topo, scenario, v)
            for u in members:
                comp[u] = len(sizes)
            sizes.append(len(members))
        return sum(s * (s - 1) for s in sizes) / (k * (k - 1))
    if rng is None:
        rng = make_rng(scenario.seed, "connected")
    oracle = _Oracle(topo, scenario)
    hits = 0
    for _ in range(samples):
        src, dst = sample_endpoints(scenario, rng)
        hits += oracle.distance(src, dst) is not None
    return hits / samples


# --------------------------------------------------------------------------- #
# sweeps and export


def fault_sweep(cfg: ExperimentConfig, routers: Sequence, jobs: int = 1) -> list[MetricPoint]:
    topo = TorusTopology(cfg.rows, cfg.cols)
    points = []
    for f in cfg.densities:
        tallies = pdr_tallies(topo, f, routers, cfg.trials, cfg.scenario_seeds(f), jobs)
        points += [_point("faults", f, r.name, f, None, tallies[r.name], cfg.scenarios)
                   for r in routers]
    return points


def load_sweep(cfg: ExperimentConfig, routers: Sequence, jobs: int = 1) -> list[MetricPoint]:
    topo = TorusTopology(cfg.rows, cfg.cols)
    f = cfg.fault_density
    seeds = cfg.scenario_seeds(f)
    points = []
    for load in cfg.loads:
        tallies = throughput_tallies(topo, f, load, routers, cfg.cycles, seeds, jobs)
        points += [_point("load", load, r.name, f, load, tallies[r.name], cfg.scenarios)
                   for r in routers]
    return points


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def to_csv(points: Sequence[MetricPoint], cfg: ExperimentConfig) -> str:
    buf = io.StringIO()
    buf.write(f"# {FT_NOTE}\n")
    buf.write("# config: " + json.dumps(asdict(cfg), sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MetricPoint.COLUMNS)
    for p in points:
        w.writerow([_fmt(getattr(p, c)) for c in MetricPoint.COLUMNS])
    return buf.getvalue()


def read_csv(text: str) -> list[dict]:
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def to_json(points: Sequence[MetricPoint], cfg: ExperimentConfig) -> str:
    """Nested router -> metric -> list of {x, value} points."""
    results: dict[str, dict[str, list]] = {}
    metrics = ("pdr", "throughput", "ft_score", "path_efficiency", "coverage", "mean_hops",
               "connected_fraction")
    for p in points:
        by_metric = results.setdefault(p.router, {})
        for m in metrics:
            v = getattr(p, m)
            if v is None:
                continue
            by_metric.setdefault(m, []).append({
                "sweep": p.sweep, "x": p.x, "fault_density": p.fault_density, "load": p.load,
                "value": v, "packets": p.packets, "scenarios": p.scenarios,
            })
    doc = {"config": asdict(cfg), "notes": {"ft_score": FT_NOTE}, "results": results}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
