"""On-disk dataset format.

A dataset directory holds one UTF-8 TSV per repertoire (header
``amino_acid<TAB>templates``), ``manifest.csv`` (``repertoire_file,label``
with label 0, 1 or ``unknown``), an optional ground-truth implant log
``ground_truth.csv`` (``repertoire_file,seq_index,motif,offset``) and an
optional ``metadata.json``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from rephop.repertoire import AA_INDEX, Dataset, Implant, InvalidSequenceError, Repertoire, Sequence

MANIFEST = "manifest.csv"
GROUND_TRUTH = "ground_truth.csv"
METADATA = "metadata.json"


class DatasetFormatError(ValueError):
    pass


def _label_text(label) -> str:
    return "unknown" if label is None else str(label)


def _parse_label(text: str, where: str):
    text = text.strip().lower()
    if text in ("0", "1"):
        return int(text)
    if text in ("unknown", "na", ""):
        return None
    raise DatasetFormatError(f"{where}: label must be 0, 1 or unknown, got {text!r}")


def write_dataset(dataset: Dataset, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / MANIFEST, "w", newline="") as fh:
        fh.write("repertoire_file,label\n")
        for rep in dataset.repertoires:
            fh.write(f"{rep.id}.tsv,{_label_text(rep.label)}\n")
    for rep in dataset.repertoires:
        with open(d / f"{rep.id}.tsv", "w", encoding="utf-8", newline="") as fh:
            fh.write("amino_acid\ttemplates\n")
            fh.writelines(f"{s.residues}\t{s.abundance}\n" for s in rep.sequences)
    if dataset.implants:
        with open(d / GROUND_TRUTH, "w", newline="") as fh:
            fh.write("repertoire_file,seq_index,motif,offset\n")
            for im in dataset.implants:
                fh.write(f"{im.repertoire_id}.tsv,{im.seq_index},{im.motif},{im.offset}\n")
    if dataset.metadata:
        (d / METADATA).write_text(json.dumps(dataset.metadata, sort_keys=True, indent=1) + "\n")


def read_manifest(path) -> list[tuple[str, object, int]]:
    """Rows of ``(repertoire_file, label, line_number)``."""
    path = Path(path)
    if not path.exists():
        raise DatasetFormatError(f"{path}: manifest not found")
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["repertoire_file", "label"]:
            raise DatasetFormatError(f"{path}:1: header must be 'repertoire_file,label', got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row or not any(c.strip() for c in row):
                continue
            if len(row) < 2:
                raise DatasetFormatError(f"{path}:{lineno}: missing label for {row[0]!r}")
            rows.append((row[0].strip(), _parse_label(row[1], f"{path}:{lineno}:2"), lineno))
    return rows


def read_repertoire_tsv(path, rep_id: str, label) -> Repertoire:
    path = Path(path)
    seqs = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header[:2] != ["amino_acid", "templates"]:
            raise DatasetFormatError(f"{path}:1: header must be 'amino_acid<TAB>templates', got {header}")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) < 2:
                raise DatasetFormatError(f"{path}:{lineno}: expected 2 columns, got {len(cols)}")
            try:
                count = int(cols[1])
            except ValueError:
                raise DatasetFormatError(f"{path}:{lineno}:2: templates must be an integer, got {cols[1]!r}") from None
            try:
                seqs.append(Sequence(cols[0], count))
            except InvalidSequenceError as e:
                raise DatasetFormatError(f"{path}:{lineno}:1: {e}") from None
    if not seqs:
        raise DatasetFormatError(f"{path}: no sequences")
    return Repertoire(rep_id, seqs, label)


def _rep_id(filename: str) -> str:
    return filename[:-4] if filename.endswith(".tsv") else filename


def load_dataset(directory) -> Dataset:
    d = Path(directory)
    reps = [read_repertoire_tsv(d / fn, _rep_id(fn), label) for fn, label, _ in read_manifest(d / MANIFEST)]
    implants = []
    gt = d / GROUND_TRUTH
    if gt.exists():
        with open(gt, newline="") as fh:
            reader = csv.DictReader(fh)
            for lineno, row in enumerate(reader, start=2):
                try:
                    implants.append(Implant(_rep_id(row["repertoire_file"]), int(row["seq_index"]),
                                            row["motif"], int(row["offset"])))
                except (KeyError, TypeError, ValueError) as e:
                    raise DatasetFormatError(f"{gt}:{lineno}: malformed ground-truth row ({e})") from None
    meta = json.loads((d / METADATA).read_text()) if (d / METADATA).exists() else {}
    return Dataset(reps, implants, meta)


@dataclass
class LoadTally:
    included: int = 0
    excluded_unknown_status: list = field(default_factory=list)
    excluded_unknown_abundance: list = field(default_factory=list)
    counts_replaced: int = 0
    rows_skipped: int = 0

    @property
    def excluded(self) -> int:
        return len(self.excluded_unknown_status) + len(self.excluded_unknown_abundance)


def _parse_count(text: str):
    text = text.strip()
    if not text:
        return None
    try:
        value = float(text)
    except ValueError:
        return None
    if math.isnan(value):
        return None
    return int(value)


def load_cmv_format(directory, manifest: str = MANIFEST) -> tuple[Dataset, LoadTally]:
    """Load per-repertoire TSVs that carry ``amino_acid`` and ``templates``
    columns among possibly many others.

    Repertoires with unknown status or any unknown abundance are excluded.
    Non-positive counts become 1. Rows without a valid amino-acid sequence
    (e.g. non-productive rearrangements) are skipped. Duplicate sequences
    are merged by summing counts.
    """
    d = Path(directory)
    tally = LoadTally()
    reps = []
    for fn, label, _ in read_manifest(d / manifest):
        rep_id = _rep_id(fn)
        if label is None:
            tally.excluded_unknown_status.append(rep_id)
            continue
        path = d / fn
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh, delimiter="\t")
            header = next(reader, [])
            missing = {"amino_acid", "templates"} - set(header)
            if missing:
                raise DatasetFormatError(f"{path}:1: missing column(s) {sorted(missing)}")
            aa_col, n_col = header.index("amino_acid"), header.index("templates")
            counts: dict[str, int] = {}
            unknown = False
            for row in reader:
                if len(row) <= max(aa_col, n_col):
                    tally.rows_skipped += 1
                    continue
                aa = row[aa_col].strip()
                if not aa or any(c not in AA_INDEX for c in aa):
                    tally.rows_skipped += 1
                    continue
                count = _parse_count(row[n_col])
                if count is None:
                    unknown = True
                    break
                if count <= 0:
                    count = 1
                    tally.counts_replaced += 1
                counts[aa] = counts.get(aa, 0) + count
        if unknown or not counts:
            tally.excluded_unknown_abundance.append(rep_id)
            continue
        reps.append(Repertoire(rep_id, [Sequence(s, c) for s, c in counts.items()], label))
        tally.included += 1
    return Dataset(reps, metadata={"generator": "cmv-format"}), tally
