"""Interpretation of trained attention-pooling models: attention ranking,
Integrated Gradients on inputs and convolution kernels, and aggregation of
kernel attributions into amino-acid motifs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from rephop.encoding import N_AA, EncodedBag
from rephop.model import ModelConfig, as_bag, backward, forward
from rephop.repertoire import ALPHABET

TARGETS = ("input", "kernels")


@dataclass
class AttributionMap:
    """``values`` has shape ``(N, L, 23)`` for inputs or ``(d_v, 23, kernel_size)`` for kernels."""

    values: np.ndarray
    target: str
    output: float
    baseline_output: float
    residual: float

    @property
    def relative_residual(self) -> float:
        delta = abs(self.output - self.baseline_output)
        return self.residual / delta if delta > 0 else self.residual


def attention_ranking(params, config: ModelConfig, repertoire) -> list[tuple[int, float]]:
    """(sequence index, first-head weight) pairs, highest weight first; ties keep input order."""
    w = forward(params, config, repertoire).attention_weights[:, 0]
    order = np.argsort(-w, kind="stable")
    return [(int(i), float(w[i])) for i in order]


def path_integral(grad_fn, x, baseline, steps: int = 50) -> np.ndarray:
    """Midpoint-rule Integrated Gradients of any differentiable ``F``.

    ``grad_fn(point)`` returns ``dF/dx`` at ``point``.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    x = np.asarray(x, dtype=float)
    baseline = np.asarray(baseline, dtype=float)
    diff = x - baseline
    total = np.zeros_like(diff)
    for s in range(steps):
        total += grad_fn(baseline + (s + 0.5) / steps * diff)
    return diff * total / steps


def _output_and_grad(params, config, bag: EncodedBag, target: str):
    res = forward(params, config, bag)
    p = res.probability
    grads, dx = backward(params, res, p * (1.0 - p), input_grad=True)
    return p, (dx if target == "input" else grads["conv_w"])


def integrated_gradients(params, config: ModelConfig, repertoire, target: str = "input", steps: int = 50,
                         baseline=None, sequence: int | None = None) -> AttributionMap:
    """Midpoint-rule Integrated Gradients of the output probability.

    ``target='input'`` scales the encoded bag (or only row ``sequence``)
    from ``baseline`` to its value; ``target='kernels'`` scales the
    convolution weights with every other parameter held fixed.
    """
    if target not in TARGETS:
        raise ValueError(f"target must be one of {TARGETS}, got {target!r}")
    bag = as_bag(repertoire)
    if target == "input":
        x = bag.x
        base = np.zeros_like(x) if baseline is None else np.asarray(baseline, dtype=float)
        sel = np.zeros(x.shape[0], dtype=bool)
        sel[slice(None) if sequence is None else sequence] = True
        # rows outside the selection stay at their real value along the path
        base = np.where(sel[:, None, None], base, x)

        def at(point):
            return params, EncodedBag(point, bag.mask)
    else:
        x = params["conv_w"]
        base = np.zeros_like(x) if baseline is None else np.asarray(baseline, dtype=float)

        def at(point):
            return {**params, "conv_w": point}, bag

    def grad(point):
        prm, b = at(point)
        return _output_and_grad(prm, config, b, target)[1]

    def output(point):
        prm, b = at(point)
        return forward(prm, config, b).probability

    values = path_integral(grad, x, base, steps)
    out, base_out = output(x), output(base)
    residual = abs(values.sum() - (out - base_out))
    return AttributionMap(values, target, out, base_out, float(residual))


@dataclass
class MotifReport:
    mean_attribution: np.ndarray  # (d_v, 23, kernel_size)
    kernel_scores: np.ndarray  # total positive contribution per kernel
    ranked: list  # kernel indices above the threshold, best first
    threshold: float

    def motif(self, kernel: int) -> str:
        return kernel_motif(self.mean_attribution[kernel])

    def text(self) -> str:
        lines = [f"kernels above threshold {self.threshold:.6g}: {len(self.ranked)}"]
        for rank, k in enumerate(self.ranked, 1):
            lines.append(f"{rank}\tkernel {k}\tscore {self.kernel_scores[k]:.6g}\tmotif {self.motif(k)}")
        return "\n".join(lines) + "\n"


def kernel_motif(kernel_map: np.ndarray) -> str:
    """Highest-contributing amino acid per kernel position; ``.`` where none is positive."""
    aa = kernel_map[:N_AA]
    best = aa.argmax(axis=0)
    return "".join(ALPHABET[b] if aa[b, j] > 0 else "." for j, b in enumerate(best))


def aggregate_motifs(kernel_maps) -> MotifReport:
    """Average kernel attributions over repertoires and rank kernels.

    Kernels are scored by their summed positive contribution; those strictly
    above the mean score are reported.
    """
    maps = [m.values if isinstance(m, AttributionMap) else np.asarray(m) for m in kernel_maps]
    if not maps:
        raise ValueError("need at least one attribution map")
    mean = np.mean(maps, axis=0)
    scores = np.clip(mean, 0.0, None).reshape(mean.shape[0], -1).sum(axis=1)
    threshold = float(scores.mean())
    order = np.argsort(-scores, kind="stable")
    ranked = [int(k) for k in order if scores[k] > threshold]
    return MotifReport(mean, scores, ranked, threshold)


def contains_in_order(text: str, letters: str) -> bool:
    it = iter(text)
    return all(c in it for c in letters)
