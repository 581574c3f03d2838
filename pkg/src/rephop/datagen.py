"""Synthetic repertoire datasets with implanted motifs.

Motif notation: amino-acid letters, ``Z`` for a wildcard, ``?`` (or ``ᵈ``)
after a letter marks it as deletable with probability 0.5, and ``-`` marks
a gap of 0, 1 or 2 random residues. Examples: ``SFEN``, ``SF?EN``,
``SZZN``, ``GL-N``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence as Seq

import numpy as np

from rephop.repertoire import ALPHABET, Dataset, Implant, Repertoire, Sequence

WILDCARD = "Z"
KEEP = "."  # motif position left as the host residue
DELETION_PROB = 0.5
IMGT_ANCHOR_PROBS = (0.3, 0.35, 0.2)


@dataclass
class MotifSpec:
    letters: str
    wildcard_positions: frozenset = frozenset()
    deletion_positions: frozenset = frozenset()
    # probability that each position is written into the host sequence
    per_position_keep_prob: Optional[tuple] = None
    # categorical over positions: at most one position is replaced by a different residue
    substitution_probs: Optional[tuple] = None
    gap_position: Optional[int] = None
    gap_lengths: tuple = (0, 1, 2)

    def __post_init__(self):
        n = len(self.letters)
        for i in set(self.wildcard_positions) | set(self.deletion_positions):
            if not 0 <= i < n:
                raise ValueError(f"motif position {i} outside motif of length {n}")
        for probs in (self.per_position_keep_prob, self.substitution_probs):
            if probs is not None:
                if len(probs) != n or not all(0 <= q <= 1 for q in probs):
                    raise ValueError(f"per-position probabilities must be {n} values in [0, 1]")
        if self.substitution_probs is not None and sum(self.substitution_probs) > 1 + 1e-12:
            raise ValueError("substitution probabilities sum to more than 1")
        if self.gap_position is not None and not 0 < self.gap_position < n:
            raise ValueError("gap must sit strictly inside the motif")

    @property
    def name(self) -> str:
        out = []
        for i, c in enumerate(self.letters):
            if i == self.gap_position:
                out.append("-")
            out.append(WILDCARD if i in self.wildcard_positions else c)
            if i in self.deletion_positions:
                out.append("?")
        return "".join(out)

    @property
    def is_deterministic(self) -> bool:
        return not (self.wildcard_positions or self.deletion_positions or self.per_position_keep_prob
                    or self.substitution_probs or self.gap_position is not None)


def parse_motif(text: str, **kw) -> MotifSpec:
    letters, wild, dele = [], set(), set()
    gap = None
    for c in text.replace("ᵈ", "?"):
        if c == "?":
            if not letters:
                raise ValueError(f"deletion marker without a preceding letter in {text!r}")
            dele.add(len(letters) - 1)
        elif c == "-":
            gap = len(letters)
        elif c == WILDCARD:
            wild.add(len(letters))
            letters.append(WILDCARD)
        elif c in ALPHABET:
            letters.append(c)
        else:
            raise ValueError(f"invalid motif character {c!r} in {text!r}")
    return MotifSpec("".join(letters), frozenset(wild), frozenset(dele), gap_position=gap, **kw)


# alteration schemes of the implanted-signal datasets
def om_motifs() -> list[MotifSpec]:
    return [parse_motif("LDR", substitution_probs=(0.2, 0.6, 0.2))]


def mm_motifs() -> list[MotifSpec]:
    return [
        parse_motif("LDR", substitution_probs=(0.2, 0.6, 0.2)),
        parse_motif("CAS", substitution_probs=(0.3, 0.6, 0.0)),
        parse_motif("GL-N", substitution_probs=(0.6, 0.0, 0.0)),
    ]


def _random_aa(rng, p=None) -> str:
    return ALPHABET[rng.choice(len(ALPHABET), p=p)]


def noisy_motif_instance(spec: MotifSpec, rng: np.random.Generator) -> str:
    """Realize one motif instance.

    May contain ``.`` where a position was not implanted (host residue kept).
    Length is motif length minus deletions plus the gap length.
    """
    chars = list(spec.letters)
    for i in sorted(spec.wildcard_positions):
        chars[i] = _random_aa(rng)
    if spec.substitution_probs is not None:
        probs = np.array(spec.substitution_probs + (max(0.0, 1.0 - sum(spec.substitution_probs)),))
        pos = rng.choice(len(probs), p=probs / probs.sum())
        if pos < len(chars):
            others = [a for a in ALPHABET if a != chars[pos]]
            chars[pos] = others[rng.integers(len(others))]
    if spec.per_position_keep_prob is not None:
        for i, q in enumerate(spec.per_position_keep_prob):
            if rng.random() >= q:
                chars[i] = KEEP
    gap = ""
    if spec.gap_position is not None:
        glen = spec.gap_lengths[rng.integers(len(spec.gap_lengths))]
        gap = "".join(_random_aa(rng) for _ in range(glen))
    out = []
    for i, c in enumerate(chars):
        if i == spec.gap_position:
            out.append(gap)
        if i in spec.deletion_positions and rng.random() < DELETION_PROB:
            continue
        out.append(c)
    return "".join(out)


def overlay(host: str, instance: str, offset: int) -> str:
    if len(instance) >= len(host):
        return "".join(h if c == KEEP else c for h, c in zip(host.ljust(len(instance), "A"), instance))
    mid = "".join(h if c == KEEP else c for h, c in zip(host[offset : offset + len(instance)], instance))
    return host[:offset] + mid + host[offset + len(instance) :]


def imgt_like_offset(rng: np.random.Generator, seq_len: int, motif_len: int) -> int:
    """Center-biased implant offset: three anchors around the middle with
    probabilities 0.3/0.35/0.2, anywhere with the remaining 0.15."""
    hi = max(seq_len - motif_len, 0)
    r = rng.random()
    half = seq_len // 2
    anchors = (half - 1, half + 1, half + 4)
    cum = 0.0
    for a, q in zip(anchors, IMGT_ANCHOR_PROBS):
        cum += q
        if r < cum:
            return int(min(max(a, 0), hi))
    return int(rng.integers(hi + 1))


def implant_offset(rng, position_bias: str, seq_len: int, motif_len: int) -> int:
    hi = max(seq_len - motif_len, 0)
    if position_bias == "uniform":
        return int(rng.integers(hi + 1))
    if position_bias == "center":
        return hi // 2
    if position_bias == "imgt":
        return imgt_like_offset(rng, seq_len, motif_len)
    raise ValueError(f"unknown position bias {position_bias!r}")


@dataclass
class SimConfig:
    n_per_class: int = 2500
    seq_count_mu: float = 316_000
    seq_count_sigma: float = 132_000
    min_seqs: int = 5_000
    len_mu: float = 14.5
    len_sigma: float = 1.8
    rho: float = 0.01
    aa_frequencies: Optional[tuple] = None
    position_bias: str = "uniform"
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.rho <= 1:
            raise ValueError("rho must lie in [0, 1]")
        if self.aa_frequencies is not None:
            f = np.asarray(self.aa_frequencies, dtype=float)
            if f.shape != (len(ALPHABET),) or (f < 0).any() or not np.isclose(f.sum(), 1.0):
                raise ValueError("aa_frequencies must be 20 non-negative values summing to 1")

    def scaled(self, scale: float) -> "SimConfig":
        return replace(
            self,
            n_per_class=max(2, round(self.n_per_class * scale)),
            seq_count_mu=self.seq_count_mu * scale,
            seq_count_sigma=self.seq_count_sigma * scale,
            min_seqs=max(1, round(self.min_seqs * scale)),
        )


def sample_lengths(rng, n: int, mu: float, sigma: float) -> np.ndarray:
    out = np.rint(rng.normal(mu, sigma, n)).astype(int)
    bad = out < 1
    while bad.any():
        out[bad] = np.rint(rng.normal(mu, sigma, bad.sum())).astype(int)
        bad = out < 1
    return out


def sample_repertoire_size(rng, mu: float, sigma: float, min_seqs: int) -> int:
    while True:
        n = int(np.rint(rng.normal(mu, sigma)))
        if n >= max(min_seqs, 1):
            return n


def random_sequences(rng, n: int, len_mu: float, len_sigma: float, aa_frequencies=None) -> list[str]:
    lengths = sample_lengths(rng, n, len_mu, len_sigma)
    letters = np.array(list(ALPHABET))
    codes = rng.choice(len(ALPHABET), size=int(lengths.sum()), p=aa_frequencies)
    flat = "".join(letters[codes])
    ends = np.cumsum(lengths)
    return [flat[e - l : e] for e, l in zip(ends, lengths)]


def _build_repertoire(rep_id: str, label: int, seqs: list[str], implants: list[tuple[int, str, int]]):
    """Merge duplicate sequences into abundances; re-index implant records."""
    index: dict[str, int] = {}
    counts: list[int] = []
    row_of = []
    for s in seqs:
        if s in index:
            counts[index[s]] += 1
        else:
            index[s] = len(counts)
            counts.append(1)
        row_of.append(index[s])
    rep = Repertoire(rep_id, [Sequence(s, c) for s, c in zip(index, counts)], label)
    records = [Implant(rep_id, row_of[i], motif, off) for i, motif, off in implants]
    return rep, records


def _implant_into(rng, seqs: list[str], rho: float, motifs: Seq[MotifSpec], position_bias: str,
                  motif_probs=None):
    """Each sequence independently carries one motif instance with probability rho."""
    carriers = np.nonzero(rng.random(len(seqs)) < rho)[0]
    log = []
    for i in carriers:
        spec = motifs[rng.choice(len(motifs), p=motif_probs)] if len(motifs) > 1 else motifs[0]
        inst = noisy_motif_instance(spec, rng)
        off = implant_offset(rng, position_bias, len(seqs[i]), len(inst))
        seqs[i] = overlay(seqs[i], inst, off)
        log.append((int(i), inst, off))
    return log


def _rep_id(i: int, total: int) -> str:
    return f"rep_{i:0{max(4, len(str(total - 1)))}d}"


def generate_simulated_dataset(config: SimConfig, motif: MotifSpec | Seq[MotifSpec]) -> Dataset:
    """Random-sequence repertoires; positives carry implanted motifs at witness rate rho.

    Every repertoire draws from its own spawned RNG stream, so output does
    not depend on generation order.
    """
    motifs = [motif] if isinstance(motif, MotifSpec) else list(motif)
    total = 2 * config.n_per_class
    root = np.random.SeedSequence(config.seed)
    label_ss, *rep_ss = root.spawn(total + 1)
    labels = np.random.default_rng(label_ss).permutation(np.repeat([0, 1], config.n_per_class))
    reps, implants = [], []
    for i in range(total):
        rng = np.random.default_rng(rep_ss[i])
        n = sample_repertoire_size(rng, config.seq_count_mu, config.seq_count_sigma, config.min_seqs)
        seqs = random_sequences(rng, n, config.len_mu, config.len_sigma, config.aa_frequencies)
        log = _implant_into(rng, seqs, config.rho, motifs, config.position_bias) if labels[i] == 1 else []
        rep, records = _build_repertoire(_rep_id(i, total), int(labels[i]), seqs, log)
        reps.append(rep)
        implants.extend(records)
    meta = {
        "generator": "simulated",
        "motifs": [m.name for m in motifs],
        "rho": config.rho,
        "seed": config.seed,
        "n_per_class": config.n_per_class,
    }
    return Dataset(reps, implants, meta)


def generate_implanted_signal_dataset(kind: str, rho: float, base_sequences: Seq[str], seed: int,
                                      n_per_class: int = 750, seqs_per_repertoire: int = 10_000) -> Dataset:
    """Implant LDR (``OM``) or one of LDR/CAS/GL-N (``MM``) into sequences
    drawn from a pool of base sequences, with center-biased positions."""
    kind = kind.upper()
    if kind == "OM":
        motifs = om_motifs()
    elif kind == "MM":
        motifs = mm_motifs()
    else:
        raise ValueError(f"kind must be OM or MM, got {kind!r}")
    pool = list(base_sequences)
    if len(pool) < seqs_per_repertoire:
        raise ValueError(f"base pool has {len(pool)} sequences, need at least {seqs_per_repertoire}")
    total = 2 * n_per_class
    root = np.random.SeedSequence(seed)
    label_ss, *rep_ss = root.spawn(total + 1)
    labels = np.random.default_rng(label_ss).permutation(np.repeat([0, 1], n_per_class))
    reps, implants = [], []
    for i in range(total):
        rng = np.random.default_rng(rep_ss[i])
        seqs = [pool[j] for j in rng.choice(len(pool), seqs_per_repertoire, replace=False)]
        log = _implant_into(rng, seqs, rho, motifs, "imgt") if labels[i] == 1 else []
        rep, records = _build_repertoire(_rep_id(i, total), int(labels[i]), seqs, log)
        reps.append(rep)
        implants.extend(records)
    meta = {"generator": f"implanted-{kind}", "motifs": [m.name for m in motifs], "rho": rho, "seed": seed}
    return Dataset(reps, implants, meta)
