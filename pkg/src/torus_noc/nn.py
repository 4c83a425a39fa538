"""One-hidden-layer tanh networks with hand-written gradients and Adam."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .env import N_ACTIONS, OBS_SIZE

PARAM_NAMES = ("W1", "b1", "W2", "b2")
MASK_PENALTY = -1e9
CHECKPOINT_VERSION = 1
DEFAULT_HIDDEN = 64

Params = dict[str, np.ndarray]


def init_mlp(rng: np.random.Generator, n_in: int, hidden: int, n_out: int) -> Params:
    """Glorot-uniform weights, zero biases."""
    a1 = np.sqrt(6.0 / (n_in + hidden))
    a2 = np.sqrt(6.0 / (hidden + n_out))
    return {
        "W1": rng.uniform(-a1, a1, size=(hidden, n_in)),
        "b1": np.zeros(hidden),
        "W2": rng.uniform(-a2, a2, size=(n_out, hidden)),
        "b2": np.zeros(n_out),
    }


@dataclass
class ForwardCache:
    x: np.ndarray  # (B, n_in)
    h: np.ndarray  # tanh activations (B, hidden)


def forward(params: Params, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    x = np.atleast_2d(x)
    h = np.tanh(x @ params["W1"].T + params["b1"])
    out = h @ params["W2"].T + params["b2"]
    return out, ForwardCache(x, h)


def backward(params: Params, cache: ForwardCache, dout: np.ndarray) -> Params:
    """Gradients of a scalar loss given d loss / d output, shape (B, n_out)."""
    dout = np.atleast_2d(dout)
    dh = dout @ params["W2"]
    dpre = dh * (1.0 - cache.h ** 2)
    return {
        "W1": dpre.T @ cache.x,
        "b1": dpre.sum(axis=0),
        "W2": dout.T @ cache.h,
        "b2": dout.sum(axis=0),
    }


def masked_log_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    z = np.where(mask, logits, logits + MASK_PENALTY)
    zmax = z.max(axis=-1, keepdims=True)
    lse = zmax + np.log(np.exp(z - zmax).sum(axis=-1, keepdims=True))
    return z - lse


def forward_policy(params: Params, x: np.ndarray, mask: np.ndarray):
    """Masked action distribution.

    Returns ``(probs, logprobs, logits, cache)``; rows are samples. Disallowed
    actions get probability exactly 0.
    """
    mask = np.atleast_2d(np.asarray(mask, dtype=bool))
    if not mask.any(axis=-1).all():
        raise ValueError("action mask allows no action")
    logits, cache = forward(params, x)
    logp = masked_log_softmax(logits, mask)
    probs = np.where(mask, np.exp(logp), 0.0)
    return probs, logp, logits, cache


def forward_value(params: Params, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    out, cache = forward(params, x)
    return out[:, 0], cache


def zeros_like(params: Params) -> Params:
    return {k: np.zeros_like(v) for k, v in params.items()}


class Adam:
    """Bias-corrected adaptive moments over a dict of arrays (minimizes)."""

    def __init__(self, lr: float = 3e-4, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            if k not in self.m:
                self.m[k] = np.zeros_like(g)
                self.v[k] = np.zeros_like(g)
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            mhat = self.m[k] / c1
            vhat = self.v[k] / c2
            params[k] -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


@dataclass
class Checkpoint:
    policy: Params
    value: Params
    hidden: int = DEFAULT_HIDDEN
    seed: int = 0

    @classmethod
    def initial(cls, seed: int, hidden: int = DEFAULT_HIDDEN) -> "Checkpoint":
        from .seeding import make_rng

        rng = make_rng(seed, "init")
        policy = init_mlp(rng, OBS_SIZE, hidden, N_ACTIONS)
        value = init_mlp(rng, OBS_SIZE, hidden, 1)
        return cls(policy, value, hidden, seed)

    def to_dict(self) -> dict:
        def flat(p: Params) -> dict:
            return {k: p[k].ravel().tolist() for k in PARAM_NAMES}

        return {
            "version": CHECKPOINT_VERSION,
            "hidden": self.hidden,
            "seed": self.seed,
            "policy": flat(self.policy),
            "value": flat(self.value),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Checkpoint":
        if data.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {data.get('version')!r}")
        hidden = int(data["hidden"])

        def unflat(p: dict, n_out: int) -> Params:
            shapes = {"W1": (hidden, OBS_SIZE), "b1": (hidden,), "W2": (n_out, hidden), "b2": (n_out,)}
            out = {}
            for k, shape in shapes.items():
                arr = np.asarray(p[k], dtype=float)
                if arr.size != int(np.prod(shape)):
                    raise ValueError(f"{k}: expected {int(np.prod(shape))} values, got {arr.size}")
                if not np.all(np.isfinite(arr)):
                    raise ValueError(f"{k}: non-finite parameter")
                out[k] = arr.reshape(shape)
            return out

        return cls(unflat(data["policy"], N_ACTIONS), unflat(data["value"], 1), hidden,
                   int(data.get("seed", 0)))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":")) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path: str | Path) -> "Checkpoint":
        return cls.from_dict(json.loads(Path(path).read_text()))
