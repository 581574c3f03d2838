"""Numeric encoding of amino-acid sequences: one-hot residues plus three
relative-position features, abundance scaling and per-repertoire variance
normalization."""

from __future__ import annotations

import numpy as np

from rephop.repertoire import AA_INDEX, ALPHABET, Repertoire, Sequence

N_AA = len(ALPHABET)
N_POS = 3
N_FEATURES = N_AA + N_POS
ABUNDANCE_MODES = ("log", "log1p", "none")


def positional_features(length: int) -> np.ndarray:
    """Start/center/end features for each of ``length`` positions.

    Triangular ramps: the start feature falls from 1 to 0 over the first
    half, the end feature rises from 0 to 1 over the second half, and the
    center feature takes the remainder so each row sums to one.
    """
    if length < 1:
        raise ValueError(f"sequence length must be >= 1, got {length}")
    if length == 1:
        r = np.array([0.5])
    else:
        r = np.arange(length) / (length - 1)
    start = np.maximum(0.0, 1.0 - 2.0 * r)
    end = np.maximum(0.0, 2.0 * r - 1.0)
    center = 1.0 - start - end
    return np.stack([start, center, end], axis=1)


def abundance_scale(abundance: int, mode: str = "log") -> float:
    if mode == "log":
        return float(np.log(abundance))
    if mode == "log1p":
        return float(np.log1p(abundance))
    if mode == "none":
        return 1.0
    raise ValueError(f"unknown abundance mode {mode!r}; expected one of {ABUNDANCE_MODES}")


def tokenize(residues: str) -> np.ndarray:
    try:
        return np.fromiter((AA_INDEX[c] for c in residues), dtype=np.int64, count=len(residues))
    except KeyError as e:
        raise ValueError(f"character {e.args[0]!r} in {residues!r} is not an amino acid") from None


def encode_sequence(seq: Sequence | str, use_abundance: bool = False, abundance_mode: str = "log") -> np.ndarray:
    """Encode one sequence as an ``L x 23`` matrix."""
    if isinstance(seq, str):
        seq = Sequence(seq)
    tokens = tokenize(seq.residues)
    out = np.zeros((len(tokens), N_FEATURES))
    out[np.arange(len(tokens)), tokens] = 1.0
    if use_abundance:
        out[:, :N_AA] *= abundance_scale(seq.abundance, abundance_mode)
    out[:, N_AA:] = positional_features(len(tokens))
    return out


def normalize_repertoire(bag: list[np.ndarray]) -> list[np.ndarray]:
    """Scale all values of a bag to unit population variance (no centering)."""
    if not bag:
        raise ValueError("cannot normalize an empty bag")
    std = np.concatenate([b.ravel() for b in bag]).std()
    if std == 0.0:
        return [b.copy() for b in bag]
    return [b / std for b in bag]


def encode_repertoire(rep: Repertoire, use_abundance: bool = False, abundance_mode: str = "log") -> list[np.ndarray]:
    return normalize_repertoire([encode_sequence(s, use_abundance, abundance_mode) for s in rep.sequences])


def pad_sequences(seqs: list[np.ndarray], length: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Right-pad ``L_i x F`` matrices with zero rows to a common length.

    Returns ``(x, mask)`` with shapes ``(N, L, F)`` and ``(N, L)``.
    """
    lengths = [len(s) for s in seqs]
    length = max(lengths) if length is None else length
    if length < max(lengths):
        raise ValueError(f"pad length {length} shorter than longest sequence {max(lengths)}")
    n_feat = seqs[0].shape[1]
    x = np.zeros((len(seqs), length, n_feat))
    mask = np.zeros((len(seqs), length), dtype=bool)
    for i, s in enumerate(seqs):
        x[i, : len(s)] = s
        mask[i, : len(s)] = True
    return x, mask


def pad_batch(bags: list[list[np.ndarray]]) -> tuple[np.ndarray, np.ndarray]:
    """Pad a batch of bags to ``(B, N_max, L_max, F)`` with a ``(B, N_max, L_max)`` mask.

    Missing sequences of smaller bags are all-zero with an all-false mask.
    """
    if not bags or not all(bags):
        raise ValueError("pad_batch needs a non-empty list of non-empty bags")
    length = max(len(s) for bag in bags for s in bag)
    n_max = max(len(bag) for bag in bags)
    n_feat = bags[0][0].shape[1]
    x = np.zeros((len(bags), n_max, length, n_feat))
    mask = np.zeros((len(bags), n_max, length), dtype=bool)
    for b, bag in enumerate(bags):
        xb, mb = pad_sequences(bag, length)
        x[b, : len(bag)] = xb
        mask[b, : len(bag)] = mb
    return x, mask


def unpad_batch(x: np.ndarray, mask: np.ndarray) -> list[list[np.ndarray]]:
    bags = []
    for xb, mb in zip(x, mask):
        lengths = mb.sum(axis=1)
        bags.append([xb[i, :n] for i, n in enumerate(lengths) if n > 0])
    return bags


class EncodedBag:
    """A repertoire encoded into one padded ``(N, L, 23)`` tensor plus mask.

    Rows keep the order of the source sequences so attention weights and
    attributions can be mapped back to them.
    """

    def __init__(self, x: np.ndarray, mask: np.ndarray):
        self.x = x
        self.mask = mask

    @classmethod
    def from_repertoire(cls, rep: Repertoire, use_abundance: bool = False, abundance_mode: str = "log"):
        return TokenBag.from_repertoire(rep, use_abundance, abundance_mode).dense()

    def __len__(self):
        return self.x.shape[0]

    def subset(self, indices) -> "EncodedBag":
        indices = np.asarray(indices)
        mask = self.mask[indices]
        length = int(mask.sum(axis=1).max())
        return EncodedBag(self.x[indices, :length], mask[:, :length])


class TokenBag:
    """Compact integer form of an encoded repertoire.

    Holds residue indices (``-1`` for padding), per-sequence one-hot scales
    and the repertoire-wide normalization constant; ``dense()`` rebuilds
    exactly what ``normalize_repertoire(encode_sequence(...))`` produces.
    """

    def __init__(self, tokens: np.ndarray, scales: np.ndarray):
        self.tokens = tokens
        self.scales = scales
        self.lengths = (tokens >= 0).sum(axis=1)
        self.std = self._std()

    @classmethod
    def from_repertoire(cls, rep: Repertoire, use_abundance: bool = False, abundance_mode: str = "log"):
        length = max(len(s) for s in rep.sequences)
        tokens = np.full((len(rep), length), -1, dtype=np.int8)
        for i, s in enumerate(rep.sequences):
            tokens[i, : len(s)] = tokenize(s.residues)
        if use_abundance:
            scales = np.array([abundance_scale(s.abundance, abundance_mode) for s in rep.sequences])
        else:
            scales = np.ones(len(rep))
        return cls(tokens, scales)

    def __len__(self):
        return self.tokens.shape[0]

    def _std(self) -> float:
        # population std over all L_i * 23 entries of every sequence
        n_entries = self.lengths.sum() * N_FEATURES
        s1 = (self.scales * self.lengths).sum()
        s2 = (self.scales**2 * self.lengths).sum()
        for length in np.unique(self.lengths):
            pos = positional_features(int(length))
            count = (self.lengths == length).sum()
            s1 += count * pos.sum()
            s2 += count * (pos**2).sum()
        mean = s1 / n_entries
        return float(np.sqrt(max(s2 / n_entries - mean**2, 0.0)))

    def dense(self, indices=None) -> EncodedBag:
        tokens, scales, lengths = self.tokens, self.scales, self.lengths
        if indices is not None:
            tokens, scales, lengths = tokens[indices], scales[indices], lengths[indices]
            tokens = tokens[:, : lengths.max()]
        n, length = tokens.shape
        mask = tokens >= 0
        x = np.zeros((n, length, N_FEATURES))
        rows, cols = np.nonzero(mask)
        x[rows, cols, tokens[rows, cols]] = scales[rows]
        for seq_len in np.unique(lengths):
            sel = lengths == seq_len
            x[sel, :seq_len, N_AA:] = positional_features(int(seq_len))
        if self.std > 0:
            x /= self.std
        return EncodedBag(x, mask)
