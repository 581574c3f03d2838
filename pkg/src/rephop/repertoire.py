"""Core data containers: sequences, repertoires and labelled datasets."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

ALPHABET = "ACDEFGHIKLMNPQRSTVWY"
AA_INDEX = {aa: i for i, aa in enumerate(ALPHABET)}


class InvalidSequenceError(ValueError):
    pass


@dataclass(frozen=True)
class Sequence:
    residues: str
    abundance: int = 1

    def __post_init__(self):
        if not self.residues:
            raise InvalidSequenceError("empty sequence")
        bad = set(self.residues) - AA_INDEX.keys()
        if bad:
            raise InvalidSequenceError(
                f"sequence {self.residues!r} has characters outside the alphabet: {''.join(sorted(bad))}"
            )
        if self.abundance < 1:
            raise InvalidSequenceError(f"abundance must be >= 1, got {self.abundance}")

    def __len__(self):
        return len(self.residues)


@dataclass
class Repertoire:
    """A bag of receptor sequences with an optional bag-level label.

    ``label`` is 0, 1 or ``None`` (unknown status).
    """

    id: str
    sequences: list[Sequence]
    label: Optional[int] = None

    def __post_init__(self):
        if not self.sequences:
            raise ValueError(f"repertoire {self.id!r} has no sequences")
        if self.label not in (0, 1, None):
            raise ValueError(f"label must be 0, 1 or None, got {self.label!r}")

    def __len__(self):
        return len(self.sequences)

    @property
    def residues(self) -> list[str]:
        return [s.residues for s in self.sequences]

    def subset(self, indices) -> "Repertoire":
        return Repertoire(self.id, [self.sequences[i] for i in indices], self.label)


@dataclass
class Implant:
    """Ground-truth record of one implanted motif instance."""

    repertoire_id: str
    seq_index: int
    motif: str
    offset: int


@dataclass
class Dataset:
    repertoires: list[Repertoire]
    implants: list[Implant] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.repertoires)

    @property
    def labels(self) -> np.ndarray:
        """Integer labels with ``-1`` for unknown status."""
        return np.array([-1 if r.label is None else r.label for r in self.repertoires], dtype=int)

    @property
    def ids(self) -> list[str]:
        return [r.id for r in self.repertoires]

    def subset(self, indices) -> "Dataset":
        reps = [self.repertoires[i] for i in indices]
        keep = {r.id for r in reps}
        return Dataset(reps, [im for im in self.implants if im.repertoire_id in keep], dict(self.metadata))

    def carrier_mask(self, repertoire: Repertoire) -> np.ndarray:
        """Boolean mask over ``repertoire.sequences`` marking implanted sequences."""
        mask = np.zeros(len(repertoire), dtype=bool)
        for im in self.implants:
            if im.repertoire_id == repertoire.id:
                mask[im.seq_index] = True
        return mask
