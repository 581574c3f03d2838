"""Nested cross-validation: stratified outer folds, a single stratified
inner train/validation split for grid selection, and result tables."""

from __future__ import annotations

import ast
import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from rephop.metrics import classification_metrics, roc_auc
from rephop.methods import Method, get_method

log = logging.getLogger(__name__)

RESULTS_HEADER = "method,fold,hyperparams,auc,f1,balanced_accuracy,accuracy"


class StratificationError(ValueError):
    pass


class LeakageError(AssertionError):
    pass


@dataclass
class FoldResult:
    fold: int
    hyperparams: dict
    auc: float
    f1: float
    balanced_accuracy: float
    accuracy: float
    inner_auc: float = float("nan")
    test_indices: np.ndarray | None = field(default=None, repr=False)
    # whatever the selected Fitted carried, e.g. DeepRC (params, config, history)
    model: object = field(default=None, repr=False)


def stratified_folds(labels, k: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Partition indices into ``k`` folds, dealing each shuffled class round-robin."""
    labels = np.asarray(labels)
    folds: list[list[int]] = [[] for _ in range(k)]
    start = 0
    for cls in np.unique(labels):
        idx = rng.permutation(np.nonzero(labels == cls)[0])
        if len(idx) < k:
            raise StratificationError(f"class {cls} has {len(idx)} members, fewer than {k} folds")
        for j, i in enumerate(idx):
            folds[(start + j) % k].append(int(i))
        # continue the deal where the previous class stopped to balance fold sizes
        start = (start + len(idx)) % k
    return [np.sort(np.array(f, dtype=int)) for f in folds]


def stratified_split(indices, labels, fraction: float, rng: np.random.Generator):
    """Split ``indices`` into (train, held-out) with ``ceil(fraction * n_c)``
    of each class held out."""
    indices = np.asarray(indices)
    labels = np.asarray(labels)
    train, held = [], []
    for cls in np.unique(labels[indices]):
        idx = rng.permutation(indices[labels[indices] == cls])
        if len(idx) < 2:
            raise StratificationError(f"class {cls} has {len(idx)} members; cannot split")
        n_held = min(len(idx) - 1, max(1, math.ceil(fraction * len(idx))))
        held.extend(idx[:n_held])
        train.extend(idx[n_held:])
    return np.sort(np.array(train, dtype=int)), np.sort(np.array(held, dtype=int))


def _parse_value(text: str):
    text = text.strip()
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def parse_grid(text: str) -> dict[str, list]:
    """Parse ``name=[v1,v2,...]`` lines; ``#`` starts a comment."""
    grid: dict[str, list] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        name, sep, rest = line.partition("=")
        name, rest = name.strip(), rest.strip()
        if not sep or not name or not (rest.startswith("[") and rest.endswith("]")):
            raise ValueError(f"grid line {lineno}: expected name=[v1,...], got {raw!r}")
        if name in grid:
            raise ValueError(f"grid line {lineno}: duplicate parameter {name!r}")
        values = [_parse_value(v) for v in rest[1:-1].split(",") if v.strip()]
        if not values:
            raise ValueError(f"grid line {lineno}: empty value list for {name!r}")
        grid[name] = values
    return grid


def load_grid(path) -> dict[str, list]:
    return parse_grid(Path(path).read_text())


def grid_points(grid: dict[str, list]) -> list[dict]:
    """Cartesian product in sorted-key order."""
    keys = sorted(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def format_hyperparams(hp: dict) -> str:
    return ";".join(f"{k}={hp[k]}" for k in sorted(hp))


def _check_disjoint(dataset, *parts):
    seen: set = set()
    for part in parts:
        ids = {dataset.repertoires[i].id for i in part}
        if seen & ids:
            raise LeakageError(f"repertoire ids shared between splits: {sorted(seen & ids)[:5]}")
        seen |= ids


def _fold_seed(seed: int, fold: int, point: int) -> int:
    return int(np.random.SeedSequence([seed, fold, point]).generate_state(1)[0])


def run_fold(method: Method, dataset, fold: int, train_idx, test_idx, grid: list[dict], seed: int,
             inner_fraction: float = 0.2) -> FoldResult:
    labels = np.asarray(dataset.labels)
    rng = np.random.default_rng(np.random.SeedSequence([seed, fold]))
    inner_train, inner_val = stratified_split(train_idx, labels, inner_fraction, rng)
    _check_disjoint(dataset, inner_train, inner_val, test_idx)
    best = None
    for gi, hp in enumerate(grid):
        fitted = method.fit(dataset, inner_train, inner_val, hp, _fold_seed(seed, fold, gi))
        val_scores = fitted.score(dataset, inner_val)
        try:
            val_auc = roc_auc(val_scores, labels[inner_val])
        except ValueError:
            val_auc = float("nan")
        log.info("fold %d grid %s inner AUC %.4f", fold, format_hyperparams(hp), val_auc)
        # strict improvement keeps the first grid point on ties
        if best is None or (not math.isnan(val_auc) and (math.isnan(best[0]) or val_auc > best[0])):
            best = (val_auc, hp, fitted)
    val_auc, hp, fitted = best
    scores = np.asarray(fitted.score(dataset, test_idx), dtype=float)
    y_test = labels[test_idx]
    auc = roc_auc(scores, y_test)
    f1, bacc, acc = classification_metrics(scores, y_test, fitted.threshold)
    return FoldResult(fold, hp, auc, f1, bacc, acc, val_auc, np.asarray(test_idx), fitted.model)


def nested_cv(dataset, method, grid: dict[str, list] | None = None, outer_k: int = 5, seed: int = 0,
              threads: int = 1) -> list[FoldResult]:
    """Outer stratified ``outer_k``-fold CV; the grid point with the best
    inner-validation AUC is scored on the outer test fold."""
    if isinstance(method, str):
        method = get_method(method)
    if (np.asarray(dataset.labels) < 0).any():
        raise ValueError("nested_cv needs every repertoire labelled")
    points = grid_points(grid if grid is not None else method.default_grid)
    if not points:
        raise ValueError("empty hyperparameter grid")
    labels = np.asarray(dataset.labels)
    folds = stratified_folds(labels, outer_k, np.random.default_rng(np.random.SeedSequence([seed])))
    all_idx = np.arange(len(labels))
    jobs = []
    for f, test_idx in enumerate(folds):
        train_idx = np.setdiff1d(all_idx, test_idx)
        _check_disjoint(dataset, train_idx, test_idx)
        jobs.append((f, train_idx, test_idx))
    method.prepare(dataset)

    def job(args):
        f, train_idx, test_idx = args
        return run_fold(method, dataset, f, train_idx, test_idx, points, seed)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(job, jobs))
    return [job(j) for j in jobs]


def _fmt(x: float) -> str:
    return repr(float(x))


def results_csv(method_name: str, results: list[FoldResult]) -> str:
    lines = [RESULTS_HEADER]
    for r in sorted(results, key=lambda r: r.fold):
        lines.append(",".join([method_name, str(r.fold), format_hyperparams(r.hyperparams), _fmt(r.auc),
                               _fmt(r.f1), _fmt(r.balanced_accuracy), _fmt(r.accuracy)]))
    return "\n".join(lines) + "\n"


def write_results(path, method_name: str, results: list[FoldResult]) -> None:
    Path(path).write_text(results_csv(method_name, results))


def mean_auc(results: list[FoldResult]) -> float:
    return float(np.mean([r.auc for r in results]))
