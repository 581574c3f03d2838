"""Attention-pooling repertoire classifier.

Each sequence passes through a 1D convolution with SELU and a masked
global max over positions, giving its embedding ``z_i`` (the values). A
two-layer self-normalizing network maps ``z_i`` to a key; learned query
vectors pool the embeddings with softmax attention; a single dense layer
with a sigmoid maps the pooled vector to a probability.

Parameters are plain ``dict[str, ndarray]`` keyed by :data:`PARAM_NAMES`.
Gradients are computed analytically in :func:`backward`.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from rephop.encoding import N_FEATURES, EncodedBag, pad_sequences
from rephop.hopfield import softmax

SELU_LAMBDA = 1.0507009873554804934193349852946
SELU_ALPHA = 1.6732632423543772848170429916717

PARAM_NAMES = ("conv_w", "conv_b", "key_w1", "key_b1", "key_w2", "key_b2", "queries", "out_w", "out_b")
# biases are excluded from the l2 penalty
WEIGHT_NAMES = ("conv_w", "key_w1", "key_w2", "queries", "out_w")

CHECKPOINT_TAG = "rephop-checkpoint 1"


def selu(x):
    return SELU_LAMBDA * np.where(x > 0, x, SELU_ALPHA * np.expm1(np.minimum(x, 0.0)))


def selu_grad(x):
    return SELU_LAMBDA * np.where(x > 0, 1.0, SELU_ALPHA * np.exp(np.minimum(x, 0.0)))


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class ModelConfig:
    n_kernels: int = 16
    kernel_size: int = 9
    d_k: int = 32
    key_units: int = 32
    n_heads: int = 1
    # None: 1/sqrt(d_k)
    beta: Optional[float] = None
    use_abundance: bool = False
    abundance_mode: str = "log"

    def __post_init__(self):
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError(f"kernel_size must be a positive odd integer, got {self.kernel_size}")
        for name in ("n_kernels", "d_k", "key_units", "n_heads"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")

    @property
    def attention_beta(self) -> float:
        return 1.0 / math.sqrt(self.d_k) if self.beta is None else float(self.beta)

    def param_shapes(self) -> dict[str, tuple]:
        dv, ks = self.n_kernels, self.kernel_size
        return {
            "conv_w": (dv, N_FEATURES, ks),
            "conv_b": (dv,),
            "key_w1": (self.key_units, dv),
            "key_b1": (self.key_units,),
            "key_w2": (self.d_k, self.key_units),
            "key_b2": (self.d_k,),
            "queries": (self.n_heads, self.d_k),
            "out_w": (dv * self.n_heads,),
            "out_b": (1,),
        }


def init_params(config: ModelConfig, seed: int) -> dict[str, np.ndarray]:
    """Zero-mean weights with variance 1/fan_in, zero biases, queries with variance 1/d_k."""
    rng = np.random.default_rng(seed)
    shapes = config.param_shapes()
    fan_in = {
        "conv_w": N_FEATURES * config.kernel_size,
        "key_w1": config.n_kernels,
        "key_w2": config.key_units,
        "queries": config.d_k,
        "out_w": config.n_kernels * config.n_heads,
    }
    params = {}
    for name in PARAM_NAMES:
        if name in fan_in:
            params[name] = rng.standard_normal(shapes[name]) / math.sqrt(fan_in[name])
        else:
            params[name] = np.zeros(shapes[name])
    return params


def zeros_like_params(params):
    return {k: np.zeros_like(v) for k, v in params.items()}


def as_bag(bag) -> EncodedBag:
    if isinstance(bag, EncodedBag):
        return bag
    if not bag:
        raise ValueError("repertoire is empty")
    return EncodedBag(*pad_sequences(list(bag)))


def _windows(x: np.ndarray, ks: int) -> np.ndarray:
    """``(N, L, F, ks)`` view of zero-padded ``same`` convolution windows."""
    half = ks // 2
    xp = np.pad(x, ((0, 0), (half, half), (0, 0)))
    return sliding_window_view(xp, ks, axis=1)


def conv_activations(params, x: np.ndarray) -> np.ndarray:
    """Pre-activation convolution output, shape ``(N, L, d_v)``."""
    w = params["conv_w"]
    dv, nf, ks = w.shape
    n, length, _ = x.shape
    half = ks // 2
    # response of every position to every kernel offset, then shifted sums
    y = (x.reshape(n * length, nf) @ w.transpose(1, 2, 0).reshape(nf, ks * dv)).reshape(n, length, ks, dv)
    out = np.broadcast_to(params["conv_b"], (n, length, dv)).copy()
    for o in range(ks):
        shift = o - half
        lo, hi = max(0, -shift), min(length, length - shift)
        if lo < hi:
            out[:, lo:hi] += y[:, lo + shift : hi + shift, o]
    return out


def embed_bag(params, bag) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Embeddings ``(N, d_v)`` with the argmax positions and pre-activations there.

    SELU is strictly increasing, so the max is taken before the activation.
    """
    bag = as_bag(bag)
    if not bag.mask.any(axis=1).all():
        raise ValueError("a sequence has no unmasked positions")
    pre = conv_activations(params, bag.x)
    pre = np.where(bag.mask[:, :, None], pre, -np.inf)
    idx = pre.argmax(axis=1)
    pre_max = np.take_along_axis(pre, idx[:, None, :], axis=1)[:, 0, :]
    return selu(pre_max), idx, pre_max


def embed_sequence(params, encoded: np.ndarray) -> np.ndarray:
    z, _, _ = embed_bag(params, [encoded])
    return z[0]


def compute_keys(params, Z: np.ndarray) -> np.ndarray:
    Z = np.atleast_2d(Z)
    if Z.shape[1] != params["key_w1"].shape[1]:
        raise ValueError(f"embedding dim {Z.shape[1]} != key network input {params['key_w1'].shape[1]}")
    h = selu(Z @ params["key_w1"].T + params["key_b1"])
    return h @ params["key_w2"].T + params["key_b2"]


def attention_pool(queries: np.ndarray, keys: np.ndarray, Z: np.ndarray, beta: float):
    """Per-head softmax attention over the bag; returns ``(pooled, weights)``.

    ``pooled`` concatenates the heads (length ``n_heads * d_v``) and
    ``weights`` has shape ``(N, n_heads)``.
    """
    queries = np.atleast_2d(queries)
    if queries.shape[1] != keys.shape[1] or keys.shape[0] != Z.shape[0]:
        raise ValueError("shape mismatch between queries, keys and values")
    weights = softmax(beta * (keys @ queries.T), axis=0)
    return (weights.T @ Z).ravel(), weights


@dataclass
class ForwardResult:
    probability: float
    logit: float
    attention_weights: np.ndarray
    sequence_embeddings: np.ndarray
    repertoire_representation: np.ndarray
    cache: dict = field(default_factory=dict, repr=False)


def forward(params, config: ModelConfig, repertoire) -> ForwardResult:
    bag = as_bag(repertoire)
    z, idx, pre_max = embed_bag(params, bag)
    u = z @ params["key_w1"].T + params["key_b1"]
    h = selu(u)
    # key_b2 adds the same score to every sequence, which the softmax cancels;
    # leaving it out keeps that cancellation exact in floating point
    keys = h @ params["key_w2"].T
    beta = config.attention_beta
    pooled, weights = attention_pool(params["queries"], keys, z, beta)
    logit = float(params["out_w"] @ pooled + params["out_b"][0])
    cache = dict(bag=bag, z=z, idx=idx, pre_max=pre_max, u=u, h=h, keys=keys, beta=beta)
    return ForwardResult(float(sigmoid(logit)), logit, weights, z, pooled, cache)


def attention_weights(params, config: ModelConfig, repertoire, head: int = 0) -> np.ndarray:
    return forward(params, config, repertoire).attention_weights[:, head]


def backward(params, result: ForwardResult, dlogit: float, input_grad: bool = False):
    """Gradients of ``dlogit * logit`` w.r.t. all parameters (and optionally the input).

    The max over positions routes gradient to the first maximal position.
    Returns ``grads`` or ``(grads, dx)``.
    """
    c = result.cache
    z, idx, h, keys, beta = c["z"], c["idx"], c["h"], c["keys"], c["beta"]
    a = result.attention_weights
    n, dv = z.shape
    n_heads = a.shape[1]
    grads = {}

    grads["out_w"] = dlogit * result.repertoire_representation
    grads["out_b"] = np.array([dlogit])
    d_pooled = (dlogit * params["out_w"]).reshape(n_heads, dv)

    dz = a @ d_pooled
    da = z @ d_pooled.T
    ds = a * (da - (a * da).sum(axis=0, keepdims=True))
    grads["queries"] = beta * ds.T @ keys
    dkeys = beta * ds @ params["queries"]

    grads["key_w2"] = dkeys.T @ h
    grads["key_b2"] = dkeys.sum(axis=0)
    du = (dkeys @ params["key_w2"]) * selu_grad(c["u"])
    grads["key_w1"] = du.T @ z
    grads["key_b1"] = du.sum(axis=0)
    dz += du @ params["key_w1"]

    dpre = dz * selu_grad(c["pre_max"])
    ks = params["conv_w"].shape[2]
    win = _windows(c["bag"].x, ks)
    picked = win[np.arange(n)[:, None], idx]
    grads["conv_w"] = np.einsum("nk,nkfo->kfo", dpre, picked)
    grads["conv_b"] = dpre.sum(axis=0)

    if not input_grad:
        return grads
    x = c["bag"].x
    half = ks // 2
    dxp = np.zeros((n, x.shape[1] + 2 * half, x.shape[2]))
    w = params["conv_w"]
    for o in range(ks):
        contrib = dpre[:, :, None] * w[None, :, :, o]
        np.add.at(dxp, (np.arange(n)[:, None], idx + o), contrib)
    return grads, dxp[:, half : half + x.shape[1]]


def save_checkpoint(path, params, config: ModelConfig, extra: Optional[dict] = None) -> None:
    """Text header naming each tensor and its shape, then little-endian
    float64 payloads in header order."""
    lines = [CHECKPOINT_TAG, "config " + json.dumps(asdict(config), sort_keys=True)]
    if extra:
        lines.append("meta " + json.dumps(extra, sort_keys=True))
    for name in PARAM_NAMES:
        lines.append(f"tensor {name} " + " ".join(str(s) for s in params[name].shape))
    lines.append("end")
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("utf-8"))
        for name in PARAM_NAMES:
            fh.write(np.ascontiguousarray(params[name], dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[dict, ModelConfig, dict]:
    data = Path(path).read_bytes()
    pos = 0
    header = []
    while True:
        nl = data.index(b"\n", pos)
        line = data[pos:nl].decode("utf-8")
        pos = nl + 1
        if line == "end":
            break
        header.append(line)
    if not header or header[0] != CHECKPOINT_TAG:
        raise ValueError(f"{path}: not a checkpoint (expected first line {CHECKPOINT_TAG!r})")
    config, meta, shapes = None, {}, []
    for line in header[1:]:
        kind, _, rest = line.partition(" ")
        if kind == "config":
            config = ModelConfig(**json.loads(rest))
        elif kind == "meta":
            meta = json.loads(rest)
        elif kind == "tensor":
            name, *dims = rest.split()
            shapes.append((name, tuple(int(d) for d in dims)))
        else:
            raise ValueError(f"{path}: unknown header line {line!r}")
    if config is None:
        raise ValueError(f"{path}: missing config line")
    params = {}
    for name, shape in shapes:
        count = int(np.prod(shape))
        params[name] = np.frombuffer(data, dtype="<f8", count=count, offset=pos).reshape(shape).astype(float)
        pos += 8 * count
    if pos != len(data):
        raise ValueError(f"{path}: {len(data) - pos} trailing bytes after tensor payloads")
    return params, config, meta
