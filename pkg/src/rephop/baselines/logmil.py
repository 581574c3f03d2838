"""Logistic multiple-instance learning on 4-mers described by Atchley factors.

Every 4-mer instance gets 4 x 5 Atchley features plus one relative
frequency feature; a logistic model scores instances and the bag score is
the maximum over its instances.
"""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

from rephop.metrics import roc_auc
from rephop.model import sigmoid
from rephop.repertoire import AA_INDEX, ALPHABET, Repertoire

REL_FREQ_MODES = ("4MER", "TCRB")
N_INSTANCE_FEATURES = 21


@lru_cache(maxsize=1)
def atchley_table() -> np.ndarray:
    """``20 x 5`` factors in alphabet order."""
    try:
        text = resources.files("rephop").joinpath("data/atchley.csv").read_text()
    except FileNotFoundError as e:
        raise FileNotFoundError("Atchley factor data file data/atchley.csv is missing") from e
    rows = {}
    for rec in csv.DictReader(line for line in text.splitlines() if not line.startswith("#")):
        rows[rec["amino_acid"]] = [float(rec[f"f{i}"]) for i in range(1, 6)]
    if set(rows) != set(ALPHABET):
        raise ValueError("Atchley table must have exactly one row per amino acid")
    return np.array([rows[a] for a in ALPHABET])


def atchley_encode(fourmer: str, rel_freq: float) -> np.ndarray:
    if len(fourmer) != 4:
        raise ValueError(f"expected a 4-mer, got {fourmer!r}")
    table = atchley_table()
    return np.concatenate([table[[AA_INDEX[c] for c in fourmer]].ravel(), [rel_freq]])


def bag_instances(rep: Repertoire, mode: str = "4MER") -> np.ndarray:
    """``(n_instances, 21)`` feature matrix of a repertoire.

    ``4MER``: one instance per distinct 4-mer, frequency = its share of all
    4-mer occurrences. ``TCRB``: one instance per 4-mer occurrence,
    frequency = abundance share of the containing sequence.
    """
    if mode not in REL_FREQ_MODES:
        raise ValueError(f"mode must be one of {REL_FREQ_MODES}, got {mode!r}")
    table = atchley_table()
    if mode == "4MER":
        counts = Counter()
        for s in rep.sequences:
            r = s.residues
            counts.update(r[i : i + 4] for i in range(len(r) - 3))
        if not counts:
            return np.zeros((0, N_INSTANCE_FEATURES))
        total = sum(counts.values())
        mers = sorted(counts)
        freqs = np.array([counts[m] / total for m in mers])
    else:
        total = sum(s.abundance for s in rep.sequences)
        mers, freqs = [], []
        for s in rep.sequences:
            r = s.residues
            for i in range(len(r) - 3):
                mers.append(r[i : i + 4])
                freqs.append(s.abundance / total)
        if not mers:
            return np.zeros((0, N_INSTANCE_FEATURES))
        freqs = np.array(freqs)
    codes = np.array([[AA_INDEX[c] for c in m] for m in mers])
    feats = table[codes].reshape(len(mers), 20)
    return np.hstack([feats, freqs[:, None]])


@dataclass
class LogMilModel:
    weights: np.ndarray
    bias: float
    mode: str = "4MER"
    epochs: int = 0

    def instance_scores(self, instances: np.ndarray) -> np.ndarray:
        return sigmoid(instances @ self.weights + self.bias)

    def bag_score(self, instances: np.ndarray) -> float:
        if len(instances) == 0:
            return float(sigmoid(self.bias))
        return float(sigmoid((instances @ self.weights).max() + self.bias))


def logistic_mil_score(model: LogMilModel, rep_or_instances) -> float:
    inst = rep_or_instances if isinstance(rep_or_instances, np.ndarray) else bag_instances(rep_or_instances, model.mode)
    return model.bag_score(inst)


def logistic_mil_fit(bags, labels, lr: float = 1e-3, batch_size: int = 8, max_epochs: int = 100,
                     mode: str = "4MER", val_bags=None, val_labels=None, seed: int = 0) -> LogMilModel:
    """Adam on bag-level BCE; the gradient flows through the max-scoring instance.

    ``bags`` are instance matrices from :func:`bag_instances`. With a
    validation set the epoch with the highest validation AUC is kept.
    """
    rng = np.random.default_rng(seed)
    y = np.asarray(labels, dtype=float)
    w = 0.01 * rng.standard_normal(N_INSTANCE_FEATURES)
    b = 0.0
    m = np.zeros(N_INSTANCE_FEATURES + 1)
    v = np.zeros_like(m)
    t = 0
    best = (LogMilModel(w.copy(), b, mode, 0), -np.inf)
    for epoch in range(1, max_epochs + 1):
        order = rng.permutation(len(bags))
        for start in range(0, len(order), batch_size):
            idx = order[start : start + batch_size]
            g = np.zeros_like(m)
            for i in idx:
                inst = bags[i]
                if len(inst) == 0:
                    continue
                s = inst @ w
                k = int(np.argmax(s))
                err = sigmoid(s[k] + b) - y[i]
                g[:-1] += err * inst[k]
                g[-1] += err
            g /= len(idx)
            t += 1
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            step = lr * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
            w -= step[:-1]
            b -= step[-1]
        if val_bags is not None:
            model = LogMilModel(w.copy(), b, mode, epoch)
            scores = [model.bag_score(inst) for inst in val_bags]
            try:
                auc = roc_auc(scores, val_labels)
            except ValueError:
                auc = 0.5
            if auc > best[1]:
                best = (model, auc)
    if val_bags is None:
        return LogMilModel(w, b, mode, max_epochs)
    return best[0]
