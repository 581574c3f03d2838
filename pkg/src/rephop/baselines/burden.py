"""Burden test: select features most associated with the positive class by
the phi coefficient and score a repertoire by how many it carries."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from rephop.baselines.kmers import kmers
from rephop.repertoire import Repertoire

FEATURE_KINDS = ("4mer", "sequence")


def features_present(rep: Repertoire, feature_kind: str) -> set[str]:
    if feature_kind == "4mer":
        out = set()
        for s in rep.sequences:
            out.update(kmers(s.residues, 4))
        return out
    if feature_kind == "sequence":
        return {s.residues for s in rep.sequences}
    raise ValueError(f"feature_kind must be one of {FEATURE_KINDS}, got {feature_kind!r}")


def phi_coefficient(n11, n10, n01, n00):
    """Phi of a 2x2 table (rows: present/absent, columns: positive/negative).

    Zero where a marginal is empty.
    """
    n11, n10, n01, n00 = (np.asarray(a, dtype=float) for a in (n11, n10, n01, n00))
    den = (n11 + n10) * (n01 + n00) * (n11 + n01) * (n10 + n00)
    with np.errstate(invalid="ignore", divide="ignore"):
        phi = (n11 * n00 - n10 * n01) / np.sqrt(den)
    return np.where(den > 0, phi, 0.0)


@dataclass
class BurdenModel:
    features: list[str]
    phi: np.ndarray
    feature_kind: str

    @property
    def J(self) -> int:
        return len(self.features)


def burden_fit(reps, labels, J: int, feature_kind: str = "4mer") -> BurdenModel:
    if J < 1:
        raise ValueError("J must be >= 1")
    labels = np.asarray(labels, dtype=int)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    pos_count: dict[str, int] = {}
    neg_count: dict[str, int] = {}
    for rep, y in zip(reps, labels):
        target = pos_count if y == 1 else neg_count
        for f in features_present(rep, feature_kind):
            target[f] = target.get(f, 0) + 1
    names = sorted(set(pos_count) | set(neg_count))
    n11 = np.array([pos_count.get(f, 0) for f in names])
    n10 = np.array([neg_count.get(f, 0) for f in names])
    phi = phi_coefficient(n11, n10, n_pos - n11, n_neg - n10)
    # stable sort keeps alphabetical order among equal phi
    top = np.argsort(-phi, kind="stable")[:J]
    return BurdenModel([names[i] for i in top], phi[top], feature_kind)


def burden_score(model: BurdenModel, rep: Repertoire) -> int:
    present = features_present(rep, model.feature_kind)
    return sum(f in present for f in model.features)
