"""Uniform routing interface over the baseline and the trained policy."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import cycle, islice

import numpy as np

from .baseline import RoutingOutcome, Status, route_baseline
from .env import (DEAD_END_PENALTY, STEP_COST, STEP_LIMIT_PENALTY, EpisodeStatus,
                  RoutingEnv)
from .faults import FaultScenario
from .nn import Checkpoint
from .ppo import greedy_table
from .topology import Direction, NodeId, TorusTopology

_RL_STATUS = {
    EpisodeStatus.DELIVERED: Status.DELIVERED,
    EpisodeStatus.DEAD_END: Status.DROPPED_BLOCKED,
    EpisodeStatus.FAULT_ENTRY: Status.DROPPED_BLOCKED,
    EpisodeStatus.STEP_LIMIT: Status.DROPPED_HOP_LIMIT,
}


@dataclass
class RlOutcome(RoutingOutcome):
    episode_status: EpisodeStatus = EpisodeStatus.RUNNING
    total_reward: float = 0.0
    steps: list[dict] = field(default_factory=list, compare=False)

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["episode_status"] = self.episode_status.value
        d["total_reward"] = self.total_reward
        return d


def route_rl(ckpt: Checkpoint, topo: TorusTopology, scenario: FaultScenario, src: NodeId,
             dst: NodeId, table: np.ndarray | None = None, record: bool = True,
             env: RoutingEnv | None = None) -> RlOutcome:
    """Greedy rollout of the policy through the environment.

    Walks may revisit nodes; a deterministic memoryless policy that revisits
    a node is caught in a cycle and ends at the step limit. Without ``record``
    that tail is fast-forwarded instead of stepped.
    """
    if table is None:
        table = greedy_table(ckpt, topo, scenario)
    if env is None:
        env = RoutingEnv(topo, scenario, rng=None)
    state, _, _ = env.reset(src, dst)
    path = [state.current]
    steps = []
    # a source with no live neighbor ends before any move
    total = DEAD_END_PENALTY if state.done else 0.0
    di = topo.index(dst)
    first_seen = {state.current: 0}
    while not state.done:
        action = Direction(int(table[topo.index(state.current), di]))
        prev = state
        state, reward, done, _ = env.step(action)
        total += reward
        if record:
            steps.append({
                "state": {"current": list(prev.current), "destination": list(prev.destination),
                          "steps_taken": prev.steps_taken},
                "action": action.name,
                "reward": reward,
                "done": done,
                "status": state.status.value,
            })
        if state.status is not EpisodeStatus.FAULT_ENTRY:
            path.append(state.current)
        if not record and not state.done:
            if state.current in first_seen:
                loop = path[first_seen[state.current] + 1:]
                remaining = env.limit - state.steps_taken
                path.extend(islice(cycle(loop), remaining))
                total += STEP_COST * remaining + STEP_LIMIT_PENALTY
                return RlOutcome(Status.DROPPED_HOP_LIMIT, path, 0, "StepLimit",
                                 episode_status=EpisodeStatus.STEP_LIMIT, total_reward=total)
            first_seen[state.current] = len(path) - 1
    return RlOutcome(_RL_STATUS[state.status], path, 0, state.status.value,
                     episode_status=state.status, total_reward=total, steps=steps)


class BaselineRouter:
    name = "baseline"

    def __init__(self, switch_dimensions: bool = False):
        self.switch_dimensions = switch_dimensions

    def prepare(self, topo: TorusTopology, scenario: FaultScenario):
        def route(src: NodeId, dst: NodeId) -> RoutingOutcome:
            return route_baseline(topo, scenario, src, dst, self.switch_dimensions)
        return route


class RlRouter:
    name = "rl"

    def __init__(self, ckpt: Checkpoint):
        self.ckpt = ckpt

    def prepare(self, topo: TorusTopology, scenario: FaultScenario):
        table = greedy_table(self.ckpt, topo, scenario)
        env = RoutingEnv(topo, scenario, rng=None)

        def route(src: NodeId, dst: NodeId) -> RoutingOutcome:
            return route_rl(self.ckpt, topo, scenario, src, dst, table, record=False, env=env)
        return route
