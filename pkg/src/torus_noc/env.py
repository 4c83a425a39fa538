"""Single-packet routing MDP over a faulty torus.

The observation is the pair (current node, destination). It is encoded as
a 60-wide absolute block, one-hot current row, current col, destination row
and destination col over 15 slots each, followed by a 30-wide relative block,
one-hot shortest signed row and column offsets to the destination over
[-7, 7]. The torus size is not visible in the absolute block, and the
shorter wrap direction depends on it; the relative block resolves that, so
one network serves every torus up to 15x15.

The action is an output port; the mask allows ports whose neighbor exists
and is live.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .faults import FaultScenario, sample_endpoints
from .topology import Direction, NodeId, TorusTopology

MAX_DIM = 15
ABS_SIZE = 4 * MAX_DIM
OFFSET_RADIUS = MAX_DIM // 2
REL_SIZE = 2 * MAX_DIM
OBS_SIZE = ABS_SIZE + REL_SIZE
N_ACTIONS = len(Direction)

SUCCESS_BASE = 100.0
SUCCESS_FAULT_BONUS = 50.0
STEP_COST = -1.0
FAULT_PENALTY = -50.0
DEAD_END_PENALTY = -20.0
STEP_LIMIT_PENALTY = -20.0


class EpisodeStatus(str, Enum):
    RUNNING = "Running"
    DELIVERED = "Delivered"
    FAULT_ENTRY = "FaultEntry"
    DEAD_END = "DeadEnd"
    STEP_LIMIT = "StepLimit"


class InvalidAction(ValueError):
    pass


@dataclass(frozen=True)
class EnvState:
    current: NodeId
    destination: NodeId
    steps_taken: int = 0
    done: bool = False
    status: EpisodeStatus = EpisodeStatus.RUNNING


def success_reward(f: float) -> float:
    return SUCCESS_BASE + SUCCESS_FAULT_BONUS * f


def step_limit(topo: TorusTopology) -> int:
    return 8 * (topo.rows + topo.cols)


def encode_state(state: EnvState, topo: TorusTopology) -> np.ndarray:
    return encode_pair(state.current, state.destination, topo)


def signed_offset(a: int, b: int, k: int) -> int:
    """Shortest signed ring offset from a to b; ties resolve positive."""
    fwd = (b - a) % k
    return fwd if fwd <= k - fwd else fwd - k


def encode_pair(current: NodeId, destination: NodeId, topo: TorusTopology) -> np.ndarray:
    x = np.zeros(OBS_SIZE)
    x[current[0]] = 1.0
    x[MAX_DIM + current[1]] = 1.0
    x[2 * MAX_DIM + destination[0]] = 1.0
    x[3 * MAX_DIM + destination[1]] = 1.0
    x[ABS_SIZE + OFFSET_RADIUS + signed_offset(current[0], destination[0], topo.rows)] = 1.0
    x[ABS_SIZE + MAX_DIM + OFFSET_RADIUS + signed_offset(current[1], destination[1], topo.cols)] = 1.0
    return x


def decode_state(x: np.ndarray) -> tuple[NodeId, NodeId]:
    """Recover (current, destination) from the absolute block."""
    blocks = np.asarray(x)[:ABS_SIZE].reshape(4, MAX_DIM)
    if not np.array_equal(blocks.sum(axis=1), np.ones(4)) or set(np.unique(blocks)) - {0.0, 1.0}:
        raise ValueError("not a valid one-hot state encoding")
    r, c, dr, dc = (int(np.argmax(b)) for b in blocks)
    return NodeId(r, c), NodeId(dr, dc)


def action_mask(topo: TorusTopology, scenario: FaultScenario, v: NodeId) -> np.ndarray:
    mask = np.zeros(N_ACTIONS, dtype=bool)
    for d, u in topo.neighbors(v):
        if u not in scenario.faulty:
            mask[d] = True
    return mask


def mask_table(topo: TorusTopology, scenario: FaultScenario) -> np.ndarray:
    """Action masks for every node, shape ``(m*n, 4)``."""
    return np.stack([action_mask(topo, scenario, v) for v in topo.nodes()])


class RoutingEnv:
    """reset/step contract for one packet at a time.

    ``step`` folds the dead-end and step-limit terminations into the move
    that triggers them, so the reward for such a move is the step cost plus
    the terminal penalty.
    """

    def __init__(self, topo: TorusTopology, scenario: FaultScenario, rng: np.random.Generator):
        if topo.rows > MAX_DIM or topo.cols > MAX_DIM:
            raise ValueError(f"torus larger than {MAX_DIM}x{MAX_DIM} cannot be encoded")
        self.topo = topo
        self.scenario = scenario
        self.rng = rng
        self.limit = step_limit(topo)
        self.state: EnvState | None = None
        self._masks = mask_table(topo, scenario)

    def mask(self, v: NodeId | None = None) -> np.ndarray:
        v = self.state.current if v is None else v
        return self._masks[self.topo.index(v)].copy()

    def reset(self, src: NodeId | None = None, dst: NodeId | None = None):
        """Start an episode; endpoints are sampled unless both are given.

        A source with no live neighbor yields an already-finished DeadEnd
        episode, since no action can be taken from it.
        """
        if src is None or dst is None:
            src, dst = sample_endpoints(self.scenario, self.rng)
        else:
            src, dst = self.topo.check(src), self.topo.check(dst)
            if src in self.scenario.faulty or dst in self.scenario.faulty:
                raise ValueError("episode endpoints must be live")
            if src == dst:
                raise ValueError("source and destination coincide")
        self.state = EnvState(src, dst)
        mask = self.mask()
        if not mask.any():
            self.state = replace(self.state, done=True, status=EpisodeStatus.DEAD_END)
        return self.state, encode_state(self.state, self.topo), mask

    def step(self, action: int | Direction):
        s = self.state
        if s is None or s.done:
            raise RuntimeError("step() called on a finished episode; call reset()")
        nxt = self.topo.neighbor(s.current, Direction(int(action)))
        if nxt is None:
            raise InvalidAction(f"no {Direction(int(action)).name} port at {s.current} "
                                f"on {self.topo.rows}x{self.topo.cols} torus")
        steps = s.steps_taken + 1
        if nxt == s.destination:
            reward = success_reward(self.scenario.density)
            s = EnvState(nxt, s.destination, steps, True, EpisodeStatus.DELIVERED)
        elif nxt in self.scenario.faulty:
            # the packet is lost at the faulty router; position stays put
            reward = FAULT_PENALTY
            s = EnvState(s.current, s.destination, steps, True, EpisodeStatus.FAULT_ENTRY)
        else:
            reward = STEP_COST
            s = EnvState(nxt, s.destination, steps)
            if not self._masks[self.topo.index(nxt)].any():
                reward += DEAD_END_PENALTY
                s = replace(s, done=True, status=EpisodeStatus.DEAD_END)
            elif steps >= self.limit:
                reward += STEP_LIMIT_PENALTY
                s = replace(s, done=True, status=EpisodeStatus.STEP_LIMIT)
        self.state = s
        mask = np.zeros(N_ACTIONS, dtype=bool) if s.done else self.mask()
        info = {"status": s.status, "mask": mask, "encoding": encode_state(s, self.topo)}
        return s, reward, s.done, info
