"""Training of the attention-pooling classifier: loss and gradients, a
central-difference gradient oracle, Adam, attention-based bag reduction
and the early-stopping training loop."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from rephop.encoding import TokenBag
from rephop.metrics import roc_auc
from rephop.model import (
    PARAM_NAMES,
    WEIGHT_NAMES,
    ModelConfig,
    attention_weights,
    backward,
    forward,
    init_params,
    zeros_like_params,
)

log = logging.getLogger(__name__)

PROB_CLAMP = 1e-12


@dataclass
class TrainConfig:
    batch_size: int = 4
    subsample_n: int = 10_000
    top_fraction: float = 0.1
    eval_interval: int = 200
    max_updates: int = 5_000
    l2_penalty: float = 0.0
    lr: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.top_fraction <= 1:
            raise ValueError("top_fraction must lie in (0, 1]")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def bce_loss(p: float, y: int) -> float:
    p = min(max(p, PROB_CLAMP), 1.0 - PROB_CLAMP)
    return -(y * math.log(p) + (1 - y) * math.log(1.0 - p))


def top_attention(weights: np.ndarray, fraction: float) -> np.ndarray:
    """Indices of the ``ceil(fraction * n)`` largest weights, in original order.

    Ties are broken towards the lower index.
    """
    n = len(weights)
    keep = max(1, math.ceil(fraction * n - 1e-9))
    order = np.argsort(-weights, kind="stable")
    return np.sort(order[:keep])


def reduce_bag(params, config: ModelConfig, bag: TokenBag, rng: np.random.Generator | None,
               phase: str = "train", subsample_n: int = 10_000, top_fraction: float = 0.1) -> np.ndarray:
    """Indices of the sequences kept for the weight update (train) or prediction (eval).

    Training first draws a uniform subsample without replacement, then both
    phases keep the top fraction by first-head attention. The ranking is a
    hard selection; no gradient flows through it.
    """
    n = len(bag)
    if phase == "train":
        if n > subsample_n:
            idx = np.sort(rng.choice(n, subsample_n, replace=False))
        else:
            idx = np.arange(n)
    elif phase == "eval":
        idx = np.arange(n)
    else:
        raise ValueError(f"phase must be 'train' or 'eval', got {phase!r}")
    if top_fraction >= 1.0:
        return idx
    w = attention_weights(params, config, bag.dense(idx))
    return idx[top_attention(w, top_fraction)]


def l2_term(params, l2: float) -> float:
    if l2 == 0:
        return 0.0
    return l2 * sum(float((params[k] ** 2).sum()) for k in WEIGHT_NAMES)


def batch_loss(params, config: ModelConfig, batch, l2: float = 0.0) -> float:
    losses = [bce_loss(forward(params, config, bag).probability, y) for bag, y in batch]
    return float(np.mean(losses)) + l2_term(params, l2)


def batch_backward(params, config: ModelConfig, batch, l2: float = 0.0):
    """Mean BCE over ``batch`` (pairs of bag and label) plus ``l2 * sum ||w||^2``,
    and its exact gradient."""
    if not batch:
        raise ValueError("empty batch")
    grads = zeros_like_params(params)
    total = 0.0
    scale = 1.0 / len(batch)
    for bag, y in batch:
        res = forward(params, config, bag)
        total += bce_loss(res.probability, y)
        # d BCE / d logit for a sigmoid output
        g = backward(params, res, scale * (res.probability - y))
        for k in PARAM_NAMES:
            grads[k] += g[k]
    if l2:
        for k in WEIGHT_NAMES:
            grads[k] += 2.0 * l2 * params[k]
    return total * scale + l2_term(params, l2), grads


def finite_diff_grad(params, loss_fn, h: float = 1e-4):
    """Central differences of ``loss_fn(params)`` for every scalar parameter."""
    grads = {}
    for name, value in params.items():
        g = np.zeros_like(value)
        flat = value.reshape(-1)
        gflat = g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            up = loss_fn(params)
            flat[j] = orig - h
            down = loss_fn(params)
            flat[j] = orig
            gflat[j] = (up - down) / (2.0 * h)
        grads[name] = g
    return grads


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-4

    @classmethod
    def for_params(cls, params, **kw) -> "AdamState":
        return cls(zeros_like_params(params), zeros_like_params(params), **kw)


def adam_step(state: AdamState, params, grads) -> None:
    """In-place bias-corrected Adam update of ``params`` and ``state``."""
    state.t += 1
    c1 = 1.0 - state.beta1**state.t
    c2 = 1.0 - state.beta2**state.t
    for k, g in grads.items():
        m = state.m[k]
        v = state.v[k]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        params[k] -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


@dataclass
class History:
    rows: list = field(default_factory=list)

    def add(self, update, train_loss, val_loss, val_auc):
        self.rows.append((update, train_loss, val_loss, val_auc))

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("update,train_loss,val_loss,val_auc\n")
            for u, tl, vl, va in self.rows:
                fh.write(f"{u},{tl!r},{vl!r},{va!r}\n")


def predict_bag(params, config: ModelConfig, bag: TokenBag, top_fraction: float = 0.1) -> float:
    idx = reduce_bag(params, config, bag, None, "eval", top_fraction=top_fraction)
    return forward(params, config, bag.dense(idx)).probability


def predict(params, config: ModelConfig, bags, top_fraction: float = 0.1) -> np.ndarray:
    return np.array([predict_bag(params, config, b, top_fraction) for b in bags])


def evaluate(params, config, bags, labels, top_fraction):
    probs = predict(params, config, bags, top_fraction)
    loss = float(np.mean([bce_loss(p, y) for p, y in zip(probs, labels)]))
    try:
        auc = roc_auc(probs, labels)
    except ValueError:
        auc = float("nan")
    return loss, auc


def train_loop(train_bags, train_labels, val_bags, val_labels, model_config: ModelConfig,
               config: TrainConfig, params=None):
    """Adam training with periodic validation; returns the parameters with the
    lowest validation loss seen and the :class:`History`."""
    if not train_bags or not val_bags:
        raise ValueError("train and validation sets must be non-empty")
    train_labels = [int(y) for y in train_labels]
    val_labels = [int(y) for y in val_labels]
    ss = np.random.SeedSequence(config.seed)
    init_ss, sample_ss = ss.spawn(2)
    if params is None:
        params = init_params(model_config, int(init_ss.generate_state(1)[0]))
    rng = np.random.default_rng(sample_ss)
    state = AdamState.for_params(params, lr=config.lr)
    history = History()

    val_loss, val_auc = evaluate(params, model_config, val_bags, val_labels, config.top_fraction)
    history.add(0, float("nan"), val_loss, val_auc)
    best = ({k: v.copy() for k, v in params.items()}, val_loss)
    running = []
    order = np.array([], dtype=int)
    for update in range(1, config.max_updates + 1):
        if len(order) < config.batch_size:
            order = np.concatenate([order, rng.permutation(len(train_bags))])
        picks, order = order[: config.batch_size], order[config.batch_size :]
        batch = []
        for i in picks:
            bag = train_bags[i]
            idx = reduce_bag(params, model_config, bag, rng, "train", config.subsample_n, config.top_fraction)
            batch.append((bag.dense(idx), train_labels[i]))
        loss, grads = batch_backward(params, model_config, batch, config.l2_penalty)
        if not np.isfinite(loss) or not all(np.isfinite(g).all() for g in grads.values()):
            raise FloatingPointError(f"non-finite loss or gradient at update {update}")
        adam_step(state, params, grads)
        running.append(loss)
        if update % config.eval_interval == 0 or update == config.max_updates:
            val_loss, val_auc = evaluate(params, model_config, val_bags, val_labels, config.top_fraction)
            history.add(update, float(np.mean(running)), val_loss, val_auc)
            log.debug("update %d train %.4f val %.4f auc %.3f", update, np.mean(running), val_loss, val_auc)
            running = []
            if val_loss < best[1]:
                best = ({k: v.copy() for k, v in params.items()}, val_loss)
    return best[0], history


def encode_bags(repertoires, model_config: ModelConfig) -> list[TokenBag]:
    return [TokenBag.from_repertoire(r, model_config.use_abundance, model_config.abundance_mode) for r in repertoires]

