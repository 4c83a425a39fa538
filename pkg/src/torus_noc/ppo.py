"""PPO with clipped surrogate, GAE and mini-batch epochs, all in numpy."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Sequence

import numpy as np

from .env import (DEAD_END_PENALTY, MAX_DIM, N_ACTIONS, OBS_SIZE, RoutingEnv, encode_pair,
                  mask_table)
from .faults import inject_faults
from .nn import Adam, Checkpoint, backward, forward_policy, forward_value
from .seeding import make_rng
from .topology import Direction, TorusTopology

log = logging.getLogger(__name__)

TRAIN_DENSITIES = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class PpoConfig:
    clip_eps: float = 0.2
    gamma: float = 0.99
    gae_lambda: float = 0.95
    episodes_per_batch: int = 32
    epochs_per_batch: int = 4
    minibatch_size: int = 64
    learning_rate: float = 3e-4
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    total_episodes: int = 5000
    hidden: int = 64
    min_size: int = 1
    max_size: int = MAX_DIM
    train_densities: tuple[float, ...] = TRAIN_DENSITIES

    def __post_init__(self) -> None:
        self.train_densities = tuple(float(f) for f in self.train_densities)
        if not 0.0 < self.clip_eps < 1.0:
            raise ValueError("clip_eps must be in (0, 1)")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError("gae_lambda must be in [0, 1]")
        if self.episodes_per_batch < 1 or self.epochs_per_batch < 1 or self.minibatch_size < 1:
            raise ValueError("batch sizes and epoch count must be positive")
        if self.total_episodes < 0:
            raise ValueError("total_episodes must be non-negative")
        if not 1 <= self.min_size <= self.max_size <= MAX_DIM:
            raise ValueError(f"torus size range must lie within 1..{MAX_DIM}")
        if not self.train_densities or any(not 0.0 <= f < 1.0 for f in self.train_densities):
            raise ValueError("train_densities must be non-empty values in [0, 1)")

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


# --------------------------------------------------------------------------- #
# advantages


def compute_gae(rewards, values, dones, gamma: float, lam: float):
    """GAE over one or more concatenated complete episodes.

    The bootstrap value after a step flagged ``done`` is zero, so episode
    boundaries cut the recursion. Returns ``(advantages, returns)``.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=bool)
    T = len(rewards)
    adv = np.zeros(T)
    running = 0.0
    for t in range(T - 1, -1, -1):
        if dones[t]:
            next_value, running = 0.0, 0.0
        else:
            next_value = values[t + 1] if t + 1 < T else 0.0
        delta = rewards[t] + gamma * next_value - values[t]
        running = delta + gamma * lam * running
        adv[t] = running
    return adv, adv + values


def normalize(adv: np.ndarray) -> np.ndarray:
    if len(adv) < 2:
        return adv - adv.mean() if len(adv) else adv
    return (adv - adv.mean()) / (adv.std() + 1e-8)


# --------------------------------------------------------------------------- #
# loss


@dataclass
class Batch:
    obs: np.ndarray
    masks: np.ndarray
    actions: np.ndarray
    old_logp: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray

    def __len__(self) -> int:
        return len(self.actions)

    def take(self, idx: np.ndarray) -> "Batch":
        return Batch(*(getattr(self, f.name)[idx] for f in fields(self)))


def ppo_loss(batch: Batch, ckpt: Checkpoint, config: PpoConfig, grad: bool = False):
    """Clipped surrogate + value MSE - entropy bonus, to be minimized.

    Returns ``(loss, diagnostics)`` or, with ``grad=True``,
    ``(loss, diagnostics, grads)`` where grads is keyed
    ``policy.<name>`` / ``value.<name>``.
    """
    B = len(batch)
    eps = config.clip_eps
    probs, logp_all, _, pcache = forward_policy(ckpt.policy, batch.obs, batch.masks)
    rows = np.arange(B)
    logp = logp_all[rows, batch.actions]
    ratio = np.exp(logp - batch.old_logp)
    adv = batch.advantages
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps) * adv
    surrogate = np.minimum(unclipped, clipped)
    policy_loss = -surrogate.mean()

    plogp = np.where(batch.masks, probs * logp_all, 0.0)
    entropy = -plogp.sum(axis=1)

    values, vcache = forward_value(ckpt.value, batch.obs)
    value_err = values - batch.returns
    value_loss = np.mean(value_err ** 2)

    loss = policy_loss + config.value_coef * value_loss - config.entropy_coef * entropy.mean()
    diag = {
        "loss": float(loss),
        "policy_loss": float(policy_loss),
        "value_loss": float(value_loss),
        "entropy": float(entropy.mean()),
        "mean_ratio": float(ratio.mean()),
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > eps)),
    }
    if not grad:
        return float(loss), diag

    # d(-min(rA, clip(r)A))/d logp: the unclipped branch carries gradient r*A
    active = unclipped <= clipped
    dlogp = np.where(active, -ratio * adv, 0.0) / B
    onehot = np.zeros_like(probs)
    onehot[rows, batch.actions] = 1.0
    dlogits = dlogp[:, None] * (onehot - probs)
    # dH/dz_j = -p_j (log p_j + H) on allowed actions
    safe_logp = np.where(batch.masks, logp_all, 0.0)
    dent = -probs * (safe_logp + entropy[:, None])
    dlogits -= config.entropy_coef * dent / B
    gp = backward(ckpt.policy, pcache, dlogits)

    dv = (config.value_coef * 2.0 / B) * value_err
    gv = backward(ckpt.value, vcache, dv[:, None])

    grads = {f"policy.{k}": v for k, v in gp.items()}
    grads.update({f"value.{k}": v for k, v in gv.items()})
    return float(loss), diag, grads


def param_view(ckpt: Checkpoint) -> dict[str, np.ndarray]:
    """Flat name -> array view sharing memory with ``ckpt``."""
    view = {f"policy.{k}": v for k, v in ckpt.policy.items()}
    view.update({f"value.{k}": v for k, v in ckpt.value.items()})
    return view


# --------------------------------------------------------------------------- #
# acting


def act_greedy(ckpt: Checkpoint, obs: np.ndarray, mask: np.ndarray) -> Direction:
    """Most probable allowed port; ties go to the lowest index."""
    probs, *_ = forward_policy(ckpt.policy, obs, mask)
    return Direction(int(np.argmax(probs[0])))


def greedy_table(ckpt: Checkpoint, topo: TorusTopology, scenario) -> np.ndarray:
    """Greedy port for every (current, destination) index pair.

    Entries are -1 where the current node has no allowed port.
    """
    n = topo.size
    masks = mask_table(topo, scenario)
    table = np.full((n, n), -1, dtype=int)
    live = [i for i in range(n) if masks[i].any()]
    if not live:
        return table
    nodes = list(topo.nodes())
    obs = np.stack([encode_pair(nodes[c], nodes[d], topo) for c in live for d in range(n)])
    m = np.repeat(masks[live], n, axis=0)
    probs, *_ = forward_policy(ckpt.policy, obs, m)
    table[live] = np.argmax(probs, axis=1).reshape(len(live), n)
    return table


def sample_action(probs: np.ndarray, rng: np.random.Generator) -> int:
    cdf = np.cumsum(probs)
    a = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    # guard against landing on a zero-probability tail through rounding
    while probs[min(a, N_ACTIONS - 1)] == 0.0:
        a -= 1
    return min(a, N_ACTIONS - 1)


# --------------------------------------------------------------------------- #
# training


@dataclass
class EpisodeRecord:
    episode: int
    total_reward: float
    rows: int
    cols: int
    fault_density: float
    status: str = ""


@dataclass
class LearningCurve:
    records: list[EpisodeRecord] = field(default_factory=list)

    def rewards(self) -> np.ndarray:
        return np.array([r.total_reward for r in self.records])

    def moving_average(self, window: int = 100) -> np.ndarray:
        r = self.rewards()
        if not len(r):
            return r
        c = np.concatenate([[0.0], np.cumsum(r)])
        idx = np.arange(1, len(r) + 1)
        lo = np.maximum(idx - window, 0)
        return (c[idx] - c[lo]) / (idx - lo)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["episode", "total_reward", "moving_avg_100", "torus_rows", "torus_cols",
                    "fault_density"])
        for rec, ma in zip(self.records, self.moving_average(100)):
            w.writerow([rec.episode, repr(float(rec.total_reward)), repr(float(ma)), rec.rows,
                        rec.cols, repr(float(rec.fault_density))])
        return buf.getvalue()


@dataclass
class _Rollout:
    obs: list = field(default_factory=list)
    masks: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    logp: list = field(default_factory=list)
    values: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    dones: list = field(default_factory=list)


def _sample_size(rng: np.random.Generator, config: PpoConfig) -> TorusTopology:
    while True:
        m = int(rng.integers(config.min_size, config.max_size + 1))
        n = int(rng.integers(config.min_size, config.max_size + 1))
        if m * n >= 2:
            return TorusTopology(m, n)


def run_episode(ckpt: Checkpoint, env: RoutingEnv, rng: np.random.Generator, buf: _Rollout):
    """One stochastic episode appended to ``buf``; returns (total reward, status)."""
    state, obs, mask = env.reset()
    if state.done:
        return DEAD_END_PENALTY, state.status.value
    total = 0.0
    while True:
        probs, logp, _, _ = forward_policy(ckpt.policy, obs, mask)
        v, _ = forward_value(ckpt.value, obs)
        a = sample_action(probs[0], rng)
        state, reward, done, info = env.step(a)
        buf.obs.append(obs)
        buf.masks.append(mask)
        buf.actions.append(a)
        buf.logp.append(logp[0, a])
        buf.values.append(v[0])
        buf.rewards.append(reward)
        buf.dones.append(done)
        total += reward
        if done:
            return total, state.status.value
        obs, mask = info["encoding"], info["mask"]


def train(config: PpoConfig, seed: int,
          progress: Callable[[int, LearningCurve], None] | None = None,
          init: Checkpoint | None = None):
    """Train one shared routing policy on randomly sized, randomly faulted tori.

    Returns ``(checkpoint, learning_curve)``.
    """
    ckpt = init if init is not None else Checkpoint.initial(seed, config.hidden)
    curve = LearningCurve()
    rng_env = make_rng(seed, "train-episodes")
    rng_act = make_rng(seed, "train-actions")
    rng_mb = make_rng(seed, "train-minibatch")
    opt = Adam(lr=config.learning_rate)
    params = param_view(ckpt)

    done_eps = 0
    while done_eps < config.total_episodes:
        n_eps = min(config.episodes_per_batch, config.total_episodes - done_eps)
        buf = _Rollout()
        for _ in range(n_eps):
            topo = _sample_size(rng_env, config)
            f = float(config.train_densities[int(rng_env.integers(len(config.train_densities)))])
            scenario = inject_faults(topo, f, int(rng_env.integers(2 ** 63)))
            env = RoutingEnv(topo, scenario, rng_env)
            total, status = run_episode(ckpt, env, rng_act, buf)
            curve.records.append(EpisodeRecord(done_eps, total, topo.rows, topo.cols, f, status))
            done_eps += 1
        if buf.actions:
            update(ckpt, opt, params, buf, config, rng_mb)
        if progress is not None:
            progress(done_eps, curve)
    return ckpt, curve


def update(ckpt: Checkpoint, opt: Adam, params, buf: _Rollout, config: PpoConfig,
           rng: np.random.Generator) -> dict:
    adv, ret = compute_gae(buf.rewards, buf.values, buf.dones, config.gamma, config.gae_lambda)
    batch = Batch(
        obs=np.asarray(buf.obs).reshape(-1, OBS_SIZE),
        masks=np.asarray(buf.masks, dtype=bool).reshape(-1, N_ACTIONS),
        actions=np.asarray(buf.actions, dtype=int),
        old_logp=np.asarray(buf.logp, dtype=float),
        advantages=normalize(adv),
        returns=ret,
    )
    diag = {}
    for _ in range(config.epochs_per_batch):
        perm = rng.permutation(len(batch))
        for start in range(0, len(batch), config.minibatch_size):
            mb = batch.take(perm[start:start + config.minibatch_size])
            loss, diag, grads = ppo_loss(mb, ckpt, config, grad=True)
            if not np.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss {loss}")
            opt.step(params, grads)
    return diag


def config_dict(config: PpoConfig) -> dict:
    d = asdict(config)
    d["train_densities"] = list(config.train_densities)
    return d


def densities_from(values: Sequence[float]) -> tuple[float, ...]:
    return tuple(float(v) for v in values)
