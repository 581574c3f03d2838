"""Command-line entry point: generate, train, evaluate, baseline, capacity, interpret.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import ast
import datetime as _dt
import hashlib
import json
import logging
import os
import sys
import zlib
from dataclasses import replace
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from rephop import __version__

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
MANIFEST_NAME = "run_manifest.json"

log = logging.getLogger("rephop")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def stream_seed(seed: int, name: str) -> int:
    """Independent, named sub-stream of the master seed."""
    return int(np.random.SeedSequence([seed, zlib.crc32(name.encode())]).generate_state(1)[0])


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def hash_inputs(paths) -> dict[str, str]:
    out = {}
    for p in paths:
        if p is None:
            continue
        p = Path(p)
        files = sorted(f for f in p.rglob("*") if f.is_file()) if p.is_dir() else [p]
        for f in files:
            if f.exists() and f.name != MANIFEST_NAME:
                out[str(f)] = _sha256(f)
    return out


class RunManifest:
    def __init__(self, path: Path, args: argparse.Namespace, inputs):
        self.path = path
        flags = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
        self.data = {
            "subcommand": args.command,
            "flags": json.loads(json.dumps(flags, default=str)),
            "seed": getattr(args, "seed", None),
            "version": __version__,
            "input_hashes": hash_inputs(inputs),
            "started": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "finished": None,
            "exit_code": None,
        }
        self._write()

    def _write(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps(self.data, indent=1, sort_keys=True) + "\n")

    def finalize(self, code: int, outputs=()):
        self.data["finished"] = _dt.datetime.now(_dt.timezone.utc).isoformat()
        self.data["exit_code"] = code
        self.data["output_hashes"] = hash_inputs(outputs)
        self._write()


def parse_config(text: str) -> dict:
    """``name=value`` lines with Python literal values; ``#`` comments."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        name, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"config line {lineno}: expected name=value, got {raw!r}")
        value = value.strip()
        try:
            out[name.strip()] = ast.literal_eval(value)
        except (ValueError, SyntaxError):
            out[name.strip()] = value
    return out


# subcommand handlers return the list of output paths


def cmd_generate(args):
    from rephop.dataio import write_dataset
    from rephop.datagen import SimConfig, generate_implanted_signal_dataset, generate_simulated_dataset, parse_motif

    seed = stream_seed(args.seed, "dataset")
    if args.kind == "simulated":
        cfg = SimConfig(rho=args.rho, seed=seed, position_bias=args.position_bias).scaled(args.scale)
        if args.n_per_class is not None:
            cfg = replace(cfg, n_per_class=args.n_per_class)
        if args.seqs is not None:
            cfg = replace(cfg, seq_count_mu=args.seqs, seq_count_sigma=0.0, min_seqs=1)
        ds = generate_simulated_dataset(cfg, [parse_motif(m) for m in args.motif])
    else:
        if args.base_pool is None:
            raise UsageError(f"--kind {args.kind} needs --base-pool FILE (one sequence per line)")
        pool = [line.strip() for line in Path(args.base_pool).read_text().splitlines() if line.strip()]
        ds = generate_implanted_signal_dataset(args.kind, args.rho, pool, seed,
                                               n_per_class=args.n_per_class or 750,
                                               seqs_per_repertoire=args.seqs or 10_000)
    write_dataset(ds, args.out)
    print(f"wrote {len(ds.repertoires)} repertoires to {args.out}")
    return [args.out]


def cmd_train(args):
    from rephop.cv import stratified_split
    from rephop.dataio import load_dataset
    from rephop.methods import MODEL_KEYS, TRAIN_KEYS
    from rephop.model import ModelConfig, save_checkpoint
    from rephop.train import TrainConfig, encode_bags, train_loop

    cfg = parse_config(Path(args.config).read_text()) if args.config else {}
    unknown = set(cfg) - set(MODEL_KEYS) - set(TRAIN_KEYS) - {"val_fraction"}
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    ds = load_dataset(args.data)
    labels = ds.labels
    rng = np.random.default_rng(stream_seed(args.seed, "split"))
    tr, va = stratified_split(np.nonzero(labels >= 0)[0], labels, float(cfg.get("val_fraction", 0.2)), rng)
    mc = ModelConfig(**{k: cfg[k] for k in MODEL_KEYS if k in cfg})
    tc = TrainConfig(seed=stream_seed(args.seed, "train"), **{k: cfg[k] for k in TRAIN_KEYS if k in cfg})
    bags = encode_bags(ds.repertoires, mc)
    params, history = train_loop([bags[i] for i in tr], labels[tr], [bags[i] for i in va], labels[va], mc, tc)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt, hist = out / "model.ckpt", out / "history.csv"
    save_checkpoint(ckpt, params, mc, {"train_ids": [ds.repertoires[i].id for i in tr],
                                       "val_ids": [ds.repertoires[i].id for i in va],
                                       "top_fraction": tc.top_fraction})
    history.to_csv(hist)
    print(f"best validation loss {min(r[2] for r in history.rows):.6f}; checkpoint {ckpt}")
    return [ckpt, hist]


def _run_cv(args, method_name: str, out_file: Path):
    from rephop.cv import load_grid, mean_auc, nested_cv, write_results
    from rephop.dataio import load_dataset
    from rephop.methods import get_method

    method = get_method(method_name)
    grid = load_grid(args.grid) if args.grid else None
    ds = load_dataset(args.data)
    results = nested_cv(ds, method, grid, outer_k=args.folds, seed=stream_seed(args.seed, "cv"),
                        threads=args.threads)
    out_file.parent.mkdir(parents=True, exist_ok=True)
    write_results(out_file, method_name, results)
    print(f"{method_name}: mean AUC {mean_auc(results):.4f} over {len(results)} folds -> {out_file}")
    return [out_file]


def cmd_evaluate(args):
    return _run_cv(args, args.method, Path(args.out))


def cmd_baseline(args):
    return _run_cv(args, args.method, Path(args.out) / "results.csv")


def cmd_capacity(args):
    from rephop.hopfield import capacity_bound, empirical_capacity_experiment

    bound = capacity_bound(args.beta, args.k, args.d, args.p)
    header = ["a", "b", "c", "n_bound", "feasible"]
    row = [repr(bound.a), repr(bound.b), repr(bound.c), repr(bound.n_bound), str(bound.feasible).lower()]
    if args.empirical:
        if args.n is None:
            raise UsageError("--empirical needs --n (number of stored patterns)")
        rate = empirical_capacity_experiment(args.d, args.n, args.k, args.beta, args.noise, args.trials,
                                             stream_seed(args.seed, "capacity"), threads=args.threads)
        header.append("success_rate")
        row.append(repr(rate))
    text = ",".join(header) + "\n" + ",".join(row) + "\n"
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text)
        return [args.out]
    return []


def cmd_interpret(args):
    from rephop.dataio import load_dataset
    from rephop.encoding import TokenBag
    from rephop.interpret import aggregate_motifs, attention_ranking, integrated_gradients
    from rephop.model import load_checkpoint
    from rephop.repertoire import ALPHABET

    params, mc, meta = load_checkpoint(args.model)
    ds = load_dataset(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    maps = []
    train_ids = set(meta.get("train_ids", ()))
    att_path = out / "attention.tsv"
    with open(att_path, "w") as fh:
        fh.write("repertoire\trank\tseq_index\tamino_acid\tweight\n")
        for rep in ds.repertoires:
            bag = TokenBag.from_repertoire(rep, mc.use_abundance, mc.abundance_mode).dense()
            for rank, (i, w) in enumerate(attention_ranking(params, mc, bag)[: args.top], 1):
                fh.write(f"{rep.id}\t{rank}\t{i}\t{rep.sequences[i].residues}\t{w!r}\n")
            # kernel attributions pool the repertoires the model was not fitted on
            if rep.id not in train_ids:
                maps.append(integrated_gradients(params, mc, bag, "kernels", args.steps))
    if not maps:
        raise ValueError("every repertoire in --data was used for training; nothing to attribute")
    report = aggregate_motifs(maps)
    features = list(ALPHABET) + ["pos_start", "pos_center", "pos_end"]
    outputs = [att_path]
    ks = report.mean_attribution.shape[2]
    for k in range(report.mean_attribution.shape[0]):
        path = out / f"kernel_{k:03d}.csv"
        lines = ["feature," + ",".join(f"p{j}" for j in range(ks))]
        for f, name in enumerate(features):
            lines.append(name + "," + ",".join(repr(float(v)) for v in report.mean_attribution[k, f]))
        path.write_text("\n".join(lines) + "\n")
        outputs.append(path)
    motif_path = out / "motifs.txt"
    worst = max(m.relative_residual for m in maps)
    motif_path.write_text(report.text() + f"max relative completeness residual {worst:.3g}\n")
    outputs.append(motif_path)
    print(report.text(), end="")
    return outputs


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rephop", description="Modern Hopfield networks and attention-based repertoire classification.")
    p.add_argument("--version", action="version", version=f"rephop {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, seed=True):
        if seed:
            sp.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
        sp.add_argument("--threads", type=int, default=None, help="worker cap (default: $RH_THREADS or 1)")
        sp.add_argument("--manifest", help="run manifest path")
        sp.add_argument("-v", "--verbose", action="store_true")

    g = sub.add_parser("generate", help="write a synthetic dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--kind", choices=["simulated", "om", "mm"], default="simulated")
    g.add_argument("--scale", type=float, default=0.001, help="fraction of the full simulated size")
    g.add_argument("--motif", action="append", default=None, help="motif, repeatable (default SFEN)")
    g.add_argument("--rho", type=float, default=0.01, help="witness rate")
    g.add_argument("--n-per-class", type=int)
    g.add_argument("--seqs", type=int, help="fixed sequences per repertoire")
    g.add_argument("--position-bias", choices=["uniform", "center", "imgt"], default="uniform")
    g.add_argument("--base-pool", help="base sequences for --kind om/mm")
    common(g)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train the attention-pooling classifier")
    t.add_argument("--data", required=True)
    t.add_argument("--config", help="name=value file of model and training settings")
    t.add_argument("--out", required=True)
    common(t)
    t.set_defaults(func=cmd_train)

    from rephop.methods import BASELINE_METHODS, METHODS

    e = sub.add_parser("evaluate", help="nested cross-validation of one method")
    e.add_argument("--data", required=True)
    e.add_argument("--method", required=True, choices=sorted(METHODS))
    e.add_argument("--grid")
    e.add_argument("--folds", type=int, default=5)
    e.add_argument("--out", required=True, help="results CSV")
    common(e)
    e.set_defaults(func=cmd_evaluate)

    b = sub.add_parser("baseline", help="nested cross-validation of a baseline method")
    b.add_argument("--method", required=True, choices=list(BASELINE_METHODS))
    b.add_argument("--data", required=True)
    b.add_argument("--grid")
    b.add_argument("--folds", type=int, default=5)
    b.add_argument("--out", required=True, help="output directory")
    common(b)
    b.set_defaults(func=cmd_baseline)

    c = sub.add_parser("capacity", help="storage-capacity bound and optional retrieval experiment")
    c.add_argument("--beta", type=float, required=True)
    c.add_argument("--k", type=float, required=True, help="pattern norm scale K")
    c.add_argument("--d", type=int, required=True)
    c.add_argument("--p", type=float, required=True, help="failure probability")
    c.add_argument("--empirical", action="store_true")
    c.add_argument("--n", type=int, help="patterns stored in the empirical run")
    c.add_argument("--noise", type=float, default=0.1, help="start radius as a fraction of M")
    c.add_argument("--trials", type=int, default=1000)
    c.add_argument("--out", help="also write the CSV here")
    common(c)
    c.set_defaults(func=cmd_capacity)

    i = sub.add_parser("interpret", help="attention ranking and Integrated Gradients motifs")
    i.add_argument("--model", required=True)
    i.add_argument("--data", required=True)
    i.add_argument("--steps", type=int, default=50)
    i.add_argument("--top", type=int, default=10, help="sequences listed per repertoire")
    i.add_argument("--out", required=True)
    common(i)
    i.set_defaults(func=cmd_interpret)
    return p


def _manifest_path(args) -> Path:
    if args.manifest:
        return Path(args.manifest)
    out = getattr(args, "out", None)
    if out is None:
        return Path(MANIFEST_NAME)
    out = Path(out)
    if args.command in ("evaluate", "capacity"):
        # --out names a file for these commands
        return out.with_name(out.stem + "." + MANIFEST_NAME)
    return out / MANIFEST_NAME


def _inputs(args):
    return [getattr(args, k, None) for k in ("data", "config", "grid", "model", "base_pool")]


def main(argv=None) -> int:
    from rephop.baselines.svm import SvmConvergenceError
    from rephop.cv import StratificationError
    from rephop.dataio import DatasetFormatError

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_help())
        if args.threads is None:
            args.threads = int(os.environ.get("RH_THREADS", "1"))
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        if getattr(args, "motif", "absent") is None:
            args.motif = ["SFEN"]
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except ValueError as e:
        print(f"rephop: error: {e}", file=sys.stderr)
        return EXIT_USAGE

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    manifest = RunManifest(_manifest_path(args), args, _inputs(args))
    code, outputs = EXIT_OK, []
    try:
        with threadpool_limits(limits=args.threads):
            outputs = args.func(args)
    except UsageError as e:
        print(f"rephop {args.command}: {e}", file=sys.stderr)
        code = EXIT_USAGE
    except (DatasetFormatError, StratificationError, FileNotFoundError, json.JSONDecodeError) as e:
        print(f"rephop {args.command}: data error: {e}", file=sys.stderr)
        code = EXIT_DATA
    except (FloatingPointError, SvmConvergenceError, np.linalg.LinAlgError) as e:
        print(f"rephop {args.command}: numerical failure: {e}", file=sys.stderr)
        code = EXIT_NUMERIC
    except ValueError as e:
        print(f"rephop {args.command}: data error: {e}", file=sys.stderr)
        code = EXIT_DATA
    manifest.finalize(code, outputs)
    return code


if __name__ == "__main__":
    sys.exit(main())
