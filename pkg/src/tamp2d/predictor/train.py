"""Minibatch Adam training for the feasibility model."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import Model, NonFiniteLossError, bce_from_logits, forward, logits_of, loss_and_gradients


class DivergenceError(FloatingPointError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    class_weight: str | None = None  # None | "balanced"
    max_bad_steps: int = 3

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.lr <= 0:
            raise ValueError("bad training hyperparameters")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float | None = None
    val_acc: float | None = None


@dataclass
class History:
    epochs: list = field(default_factory=list)

    def losses(self) -> list:
        return [e.train_loss for e in self.epochs]

    def as_rows(self) -> list[dict]:
        return [vars(e).copy() for e in self.epochs]


class Adam:
    def __init__(self, params: dict, cfg: TrainConfig, frozen=()):
        self.cfg = cfg
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0
        self.frozen = set(frozen)

    def step(self, params: dict, grads: dict):
        c = self.cfg
        self.t += 1
        b1t = 1.0 - c.beta1 ** self.t
        b2t = 1.0 - c.beta2 ** self.t
        for k, g in grads.items():
            if k in self.frozen:
                continue
            self.m[k] = c.beta1 * self.m[k] + (1 - c.beta1) * g
            self.v[k] = c.beta2 * self.v[k] + (1 - c.beta2) * g * g
            params[k] -= c.lr * (self.m[k] / b1t) / (np.sqrt(self.v[k] / b2t) + c.eps)


def evaluate(model: Model, seqs, labels) -> tuple[float, float]:
    """(mean BCE, accuracy at 0.5) on a labelled set."""
    if not len(seqs):
        return math.nan, math.nan
    y = np.asarray(labels, dtype=float)
    logits = np.concatenate([logits_of(model, seqs[i:i + 256]) for i in range(0, len(seqs), 256)])
    loss = float(bce_from_logits(logits, y).mean())
    acc = float(((logits >= 0.0) == (y == 1.0)).mean())
    return loss, acc


def _weights(y: np.ndarray, mode) -> np.ndarray:
    if mode is None:
        return np.ones_like(y, dtype=float)
    if mode != "balanced":
        raise ValueError(f"unknown class_weight {mode!r}")
    pos = max(1.0, float(y.sum()))
    neg = max(1.0, float(len(y) - y.sum()))
    return np.where(y == 1, len(y) / (2 * pos), len(y) / (2 * neg))


def train(model: Model, seqs, labels, cfg: TrainConfig | None = None, rng=0, val=None,
          log=None) -> tuple[Model, History]:
    """Train ``model`` in place; returns it with the per-epoch history.

    ``val`` is an optional (seqs, labels) pair evaluated after every epoch.
    """
    cfg = cfg or TrainConfig()
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    y = np.asarray(labels, dtype=float)
    if len(seqs) == 0:
        raise ValueError("empty training set")
    if len(y) != len(seqs):
        raise ValueError("one label per sequence")
    w_all = _weights(y, cfg.class_weight)
    opt = Adam(model.params, cfg, model.frozen)
    hist = History()
    bad = 0
    for ep in range(cfg.epochs):
        order = rng.permutation(len(seqs))
        tot, n = 0.0, 0
        for i in range(0, len(order), cfg.batch_size):
            idx = order[i:i + cfg.batch_size]
            try:
                loss, grads = loss_and_gradients(model, [seqs[j] for j in idx], y[idx], w_all[idx])
            except NonFiniteLossError:
                bad += 1
                if bad >= cfg.max_bad_steps:
                    raise DivergenceError(f"non-finite loss for {bad} consecutive steps (epoch {ep})") from None
                continue
            if not all(np.isfinite(g).all() for g in grads.values()):
                bad += 1
                if bad >= cfg.max_bad_steps:
                    raise DivergenceError(f"non-finite gradients for {bad} consecutive steps") from None
                continue
            bad = 0
            opt.step(model.params, grads)
            tot += loss * len(idx)
            n += len(idx)
        tr_loss, tr_acc = evaluate(model, seqs, y)
        rec = EpochRecord(ep, tr_loss, tr_acc)
        if val is not None and len(val[0]):
            rec.val_loss, rec.val_acc = evaluate(model, val[0], val[1])
        hist.epochs.append(rec)
        if log is not None:
            log(rec)
    return model, hist


def predict_proba(model: Model, seqs) -> np.ndarray:
    return forward(model, list(seqs))
