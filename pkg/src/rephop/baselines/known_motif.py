"""Known-motif scorers: rank repertoires by occurrences of the implanted motif.

Only wildcards and gap positions are expanded; probabilistic alterations
and deletable positions are matched literally.
"""

from __future__ import annotations

import re
from functools import lru_cache

import numpy as np

from rephop.datagen import WILDCARD, MotifSpec, parse_motif
from rephop.repertoire import Repertoire


def _spec(motif) -> MotifSpec:
    return motif if isinstance(motif, MotifSpec) else parse_motif(motif)


def motif_variants(motif) -> list[str]:
    """Concrete patterns (``Z`` = any residue) for each allowed gap length."""
    spec = _spec(motif)
    if spec.gap_position is None:
        return [spec.letters]
    g = spec.gap_position
    return [spec.letters[:g] + WILDCARD * n + spec.letters[g:] for n in spec.gap_lengths]


@lru_cache(maxsize=64)
def _regex(motif_name: str) -> re.Pattern:
    alts = [v.replace(WILDCARD, ".") for v in motif_variants(motif_name)]
    return re.compile("(?=(?:" + "|".join(alts) + "))")


def binary_count(residues: str, motif) -> int:
    """Number of start positions where the motif occurs (overlaps allowed)."""
    return len(_regex(_spec(motif).name).findall(residues))


def continuous_overlap(residues: str, motif) -> int:
    """Best number of position-wise matching residues over all full-overlap alignments."""
    best = 0
    for v in motif_variants(motif):
        fixed = [(i, c) for i, c in enumerate(v) if c != WILDCARD]
        for off in range(len(residues) - len(v) + 1):
            hits = sum(residues[off + i] == c for i, c in fixed)
            if hits > best:
                best = hits
    return best


def known_motif_score(rep: Repertoire, motif, mode: str = "binary") -> float:
    if mode == "binary":
        return float(sum(binary_count(s.residues, motif) for s in rep.sequences))
    if mode == "continuous":
        return float(sum(continuous_overlap(s.residues, motif) for s in rep.sequences))
    raise ValueError(f"mode must be 'binary' or 'continuous', got {mode!r}")


def known_motif_scores(reps, motifs, mode: str = "binary") -> np.ndarray:
    """Scores summed over several motifs (for multi-motif signals)."""
    if isinstance(motifs, (str, MotifSpec)):
        motifs = [motifs]
    return np.array([sum(known_motif_score(r, m, mode) for m in motifs) for r in reps])
