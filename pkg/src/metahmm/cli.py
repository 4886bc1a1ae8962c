"""Command-line entry point for the whole pipeline.

Subcommands: ``env size|dump``, ``split``, ``gen``, ``oracle``, ``mc``,
``baseline``, ``eval``, ``plot``. Every command is a pure function of its
inputs and seeds: repeated invocations with identical flags produce
byte-identical outputs, and worker count never changes results because
parallelism only distributes whole sequences.

Exit codes: 0 success, 2 validation/configuration error, 3 file or format
error, 4 numerical failure (e.g. impossible evidence).
"""

from __future__ import annotations

import argparse
import os
import sys
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from . import __version__
from .bank import generate_bank
from .baseline import constant_predictions, unigram_probabilities
from .codes import environment_size, index_to_code, slot_radices
from .config import EnvironmentConfig
from .dataio import (
    PredictionWriter,
    generate_dataset,
    iter_predictions,
    iter_sequences,
    make_split,
    prediction_vocabulary,
    read_manifest,
    read_split,
    write_split,
)
from .errors import (
    AlignmentError,
    ConfigError,
    FormatError,
    MetahmmError,
    NumericalError,
    ValidationError,
)
from .metrics import DivCurve, evaluate, summarize, write_summary
from .oracle import advance, build_ensemble, mc_predict, oracle_init, oracle_scan

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


def _workers_default() -> int:
    return int(os.environ.get("METAHMM_WORKERS", "1"))


def _load_config(args) -> EnvironmentConfig:
    cfg = EnvironmentConfig.from_file(args.config)
    if getattr(args, "seed", None) is not None and args.bank_seed_override:
        cfg = cfg.with_seed(args.seed).validate()
    return cfg


def _resolve_subset(args, env_size: int) -> tuple[np.ndarray | None, str]:
    """--subset: all | train | validation | comma-separated indices."""
    label = args.subset
    if label == "all":
        return None, "all"
    if label in ("train", "validation"):
        if not args.split:
            raise ValidationError(f"--subset {label} requires --split")
        train, validation = read_split(args.split)
        return (train if label == "train" else validation), label
    try:
        indices = np.array([int(x) for x in label.split(",") if x != ""], dtype=np.int64)
    except ValueError as exc:
        raise ValidationError(
            f"--subset must be all|train|validation or comma-separated indices, got {label!r}"
        ) from exc
    if indices.size == 0:
        raise ValidationError("--subset index list is empty")
    if np.any(indices < 0) or np.any(indices >= env_size):
        raise ValidationError(f"--subset indices must lie in [0, {env_size})")
    if len(np.unique(indices)) != len(indices):
        raise ValidationError("--subset index list contains duplicates")
    return indices, "explicit"


def _require_exists(path: str | None, flag: str) -> None:
    if path is not None and not Path(path).exists():
        raise ValidationError(f"{flag}: no such file: {path}")


def _require_writable(path: str | None, flag: str) -> None:
    if path is not None and not Path(path).resolve().parent.is_dir():
        raise ValidationError(f"{flag}: parent directory does not exist: {path}")


# ---------------------------------------------------------------------------
# Per-sequence workers (fork-shared read-only payload)
# ---------------------------------------------------------------------------

_WORK: dict = {}


def _oracle_one(task: tuple[int, np.ndarray]):
    seq_id, symbols = task
    ens = _WORK["ensemble"]
    preds = np.empty((len(symbols), ens.n_symbols), dtype=np.float32)
    entropy = np.empty(len(symbols))
    for t, snap in enumerate(oracle_scan(ens, symbols)):
        preds[t] = snap.predictive
        entropy[t] = snap.entropy_nats
    return seq_id, preds, entropy


def _mc_one(task: tuple[int, np.ndarray]):
    seq_id, symbols = task
    ens = _WORK["ensemble"]
    samples = _WORK["samples"]
    seed = _WORK["seed"]
    state = oracle_init(ens)
    preds = np.empty((len(symbols), ens.n_symbols), dtype=np.float32)
    for t, symbol in enumerate(symbols):
        preds[t] = mc_predict(state, samples, (seed, seq_id, t))
        state = advance(state, int(symbol))
    return seq_id, preds


def _map_sequences(fn, tasks: list, workers: int):
    """Run ``fn`` over per-sequence tasks, in order, with optional fork pool."""
    if workers <= 1 or len(tasks) <= 1:
        for task in tasks:
            yield fn(task)
        return
    ctx = get_context("fork")
    with ctx.Pool(processes=workers) as pool:
        yield from pool.imap(fn, tasks, chunksize=1)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_env(args) -> int:
    cfg = _load_config(args)
    if args.env_command == "size":
        size = environment_size(cfg)
        if args.enumerate:
            radices = slot_radices(cfg)
            enumerated = sum(1 for i in range(size) if index_to_code(radices, i) is not None)
            if enumerated != size:
                raise NumericalError(
                    f"enumerated {enumerated} codes, size formula says {size}"
                )
        print(size)
        return EXIT_OK
    bank = generate_bank(cfg)
    payload = bank.to_json() + "\n"
    if args.out:
        Path(args.out).write_text(payload, encoding="utf-8")
    else:
        sys.stdout.write(payload)
    return EXIT_OK


def cmd_split(args) -> int:
    cfg = _load_config(args)
    _require_writable(args.out, "--out")
    size = environment_size(cfg)
    seed = args.seed if args.seed is not None else cfg.seed
    train, validation = make_split(size, args.holdout, seed)
    write_split(args.out, train, validation)
    print(f"train={len(train)} validation={len(validation)} -> {args.out}")
    return EXIT_OK


def cmd_gen(args) -> int:
    cfg = _load_config(args)
    _require_writable(args.out, "--out")
    bank = generate_bank(cfg)
    size = environment_size(cfg)
    subset, label = _resolve_subset(args, size)
    tasks = np.arange(size, dtype=np.int64) if subset is None else subset
    seed = args.seed if args.seed is not None else cfg.seed
    split_sizes = None
    if args.split:
        train, validation = read_split(args.split)
        split_sizes = (len(train), len(validation))
    manifest = generate_dataset(
        bank,
        tasks,
        args.out,
        length=args.length,
        seed=seed,
        per_task=args.per_task,
        total=args.total,
        length_mode=args.lengths,
        subset_label=label,
        split_sizes=split_sizes,
    )
    print(f"{manifest['sequences']} sequences -> {args.out}")
    return EXIT_OK


def _prepare_filter_run(args):
    cfg = _load_config(args)
    _require_exists(args.sequences, "--sequences")
    manifest = read_manifest(args.sequences)
    if manifest["config_hash"] != cfg.content_hash():
        raise ValidationError(
            "--sequences was generated under a different configuration "
            f"(manifest hash {manifest['config_hash']}, config hash {cfg.content_hash()})"
        )
    bank = generate_bank(cfg)
    subset, label = _resolve_subset(args, environment_size(cfg))
    ensemble = build_ensemble(bank, subset)
    sequences = list(iter_sequences(args.sequences))
    tasks = [(rec.id, rec.symbols) for rec in sequences]
    return cfg, ensemble, tasks, label


def cmd_oracle(args) -> int:
    _require_writable(args.out, "--out")
    _require_writable(args.entropy_out, "--entropy-out")
    cfg, ensemble, tasks, _ = _prepare_filter_run(args)
    _WORK["ensemble"] = ensemble
    entropy_fh = None
    if args.entropy_out:
        entropy_fh = open(args.entropy_out, "w", encoding="utf-8")
        entropy_fh.write("sequence_id,t,entropy_nats\n")
    try:
        with PredictionWriter(args.out, cfg.symbols, args.format) as writer:
            for seq_id, preds, entropy in _map_sequences(_oracle_one, tasks, args.workers):
                for t in range(preds.shape[0]):
                    writer.write(seq_id, t, preds[t])
                    if entropy_fh:
                        entropy_fh.write(f"{seq_id},{t},{float(entropy[t])!r}\n")
    finally:
        if entropy_fh:
            entropy_fh.close()
    print(f"{len(tasks)} sequences filtered -> {args.out}")
    return EXIT_OK


def _parse_samples(raw: str) -> int | None:
    if raw in ("exact", "inf"):
        return None
    try:
        samples = int(raw)
    except ValueError as exc:
        raise ValidationError(f"--samples must be a positive integer or 'exact', got {raw!r}") from exc
    if samples < 1:
        raise ValidationError(f"--samples must be >= 1, got {samples}")
    return samples


def cmd_mc(args) -> int:
    _require_writable(args.out, "--out")
    _WORK["samples"] = _parse_samples(args.samples)
    cfg, ensemble, tasks, _ = _prepare_filter_run(args)
    _WORK["ensemble"] = ensemble
    _WORK["seed"] = args.seed if args.seed is not None else cfg.seed
    with PredictionWriter(args.out, cfg.symbols, args.format) as writer:
        for seq_id, preds in _map_sequences(_mc_one, tasks, args.workers):
            for t in range(preds.shape[0]):
                writer.write(seq_id, t, preds[t])
    print(f"{len(tasks)} sequences predicted -> {args.out}")
    return EXIT_OK


def cmd_baseline(args) -> int:
    _require_exists(args.train_sequences, "--train-sequences")
    _require_exists(args.sequences, "--sequences")
    _require_writable(args.out, "--out")
    manifest = read_manifest(args.sequences)
    n_symbols = int(manifest["n_symbols"])
    vector = unigram_probabilities(iter_sequences(args.train_sequences), n_symbols)
    with PredictionWriter(args.out, n_symbols, args.format) as writer:
        for rec in constant_predictions(vector, iter_sequences(args.sequences)):
            writer.write(rec.sequence_id, rec.t, rec.probabilities)
    print(f"unigram predictions -> {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    _require_exists(args.predictions, "--predictions")
    _require_exists(args.reference, "--reference")
    _require_writable(args.out_csv, "--out-csv")
    _require_writable(args.out_summary, "--out-summary")
    window = None
    if args.window:
        try:
            lo, hi = args.window.split(":")
            window = (int(lo), int(hi))
        except ValueError as exc:
            raise ValidationError(f"--window must be lo:hi, got {args.window!r}") from exc
    v_pred = prediction_vocabulary(args.predictions)
    v_ref = prediction_vocabulary(args.reference)
    if v_pred != v_ref:
        raise ValidationError(
            f"vocabulary mismatch: predictions have {v_pred} symbols, reference {v_ref}"
        )
    curve = evaluate(iter_predictions(args.predictions), iter_predictions(args.reference))
    curve.to_csv(args.out_csv)
    summary = summarize(curve, window)
    if args.out_summary:
        write_summary(args.out_summary, summary, args.subset_label)
    print(
        f"mean={summary.mean_div:.6f} peak={summary.peak_div:.6f} "
        f"at t={summary.peak_position} over {summary.positions} positions"
    )
    return EXIT_OK


def cmd_plot(args) -> int:
    from .plotting import plot_div_curve, plot_entropy

    _require_writable(args.out, "--out")
    if args.entropy:
        _require_exists(args.entropy, "--entropy")
        plot_entropy(args.entropy, args.out)
    else:
        if not args.curves:
            raise ValidationError("plot needs --curves or --entropy")
        for c in args.curves:
            _require_exists(c, "--curves")
        plot_div_curve(args.curves, args.out, labels=args.labels)
    print(f"wrote {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_config_flags(p: argparse.ArgumentParser, bank_seed_override: bool) -> None:
    p.add_argument("--config", required=True, help="environment config (JSON or TOML)")
    p.add_argument("--seed", type=int, default=None, help="seed override")
    p.set_defaults(bank_seed_override=bank_seed_override)


def _add_subset_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--subset",
        default="all",
        help="task subset: all | train | validation | comma-separated indices",
    )
    p.add_argument("--split", default=None, help="split file for train/validation subsets")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="metahmm",
        description="Compositional HMM meta-learning benchmark with an exact Bayesian oracle.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_env = sub.add_parser("env", help="inspect an environment")
    env_sub = p_env.add_subparsers(dest="env_command", required=True)
    p_size = env_sub.add_parser("size", help="print the number of tasks")
    _add_config_flags(p_size, bank_seed_override=True)
    p_size.add_argument(
        "--enumerate", action="store_true", help="also count codes exhaustively"
    )
    p_size.set_defaults(func=cmd_env)
    p_dump = env_sub.add_parser("dump", help="dump the building-block bank as JSON")
    _add_config_flags(p_dump, bank_seed_override=True)
    p_dump.add_argument("--out", default=None, help="output path (stdout when omitted)")
    p_dump.set_defaults(func=cmd_env)

    p_split = sub.add_parser("split", help="hold out validation tasks")
    _add_config_flags(p_split, bank_seed_override=False)
    p_split.add_argument("--holdout", type=int, required=True, help="validation task count")
    p_split.add_argument("--out", required=True, help="split JSON output path")
    p_split.set_defaults(func=cmd_split)

    p_gen = sub.add_parser("gen", help="sample a sequence dataset")
    _add_config_flags(p_gen, bank_seed_override=False)
    _add_subset_flags(p_gen)
    group = p_gen.add_mutually_exclusive_group(required=True)
    group.add_argument("--per-task", type=int, default=None, help="sequences per task")
    group.add_argument("--total", type=int, default=None, help="total sequences")
    p_gen.add_argument("--length", type=int, default=200, help="sequence length T")
    p_gen.add_argument(
        "--lengths", choices=["fixed", "uniform"], default="fixed", help="length distribution"
    )
    p_gen.add_argument("--out", required=True, help="sequence JSONL output path")
    p_gen.set_defaults(func=cmd_gen)

    p_oracle = sub.add_parser("oracle", help="run the exact posterior predictive")
    _add_config_flags(p_oracle, bank_seed_override=False)
    _add_subset_flags(p_oracle)
    p_oracle.add_argument("--sequences", required=True, help="sequence JSONL input")
    p_oracle.add_argument("--out", required=True, help="prediction file output path")
    p_oracle.add_argument("--entropy-out", default=None, help="per-position entropy CSV")
    p_oracle.add_argument("--format", choices=["bin", "jsonl"], default="bin")
    p_oracle.add_argument(
        "--workers", type=int, default=_workers_default(), help="parallel sequence workers"
    )
    p_oracle.set_defaults(func=cmd_oracle)

    p_mc = sub.add_parser("mc", help="Monte Carlo posterior predictive")
    _add_config_flags(p_mc, bank_seed_override=False)
    _add_subset_flags(p_mc)
    p_mc.add_argument("--sequences", required=True, help="sequence JSONL input")
    p_mc.add_argument(
        "--samples", default="1", help="posterior samples per position, or 'exact'"
    )
    p_mc.add_argument("--out", required=True, help="prediction file output path")
    p_mc.add_argument("--format", choices=["bin", "jsonl"], default="bin")
    p_mc.add_argument(
        "--workers", type=int, default=_workers_default(), help="parallel sequence workers"
    )
    p_mc.set_defaults(func=cmd_mc)

    p_base = sub.add_parser("baseline", help="unigram baseline predictions")
    p_base.add_argument("--train-sequences", required=True, help="sequences to fit on")
    p_base.add_argument("--sequences", required=True, help="sequences to predict")
    p_base.add_argument("--out", required=True, help="prediction file output path")
    p_base.add_argument("--format", choices=["bin", "jsonl"], default="bin")
    p_base.set_defaults(func=cmd_baseline)

    p_eval = sub.add_parser("eval", help="divergence of predictions from a reference")
    p_eval.add_argument("--predictions", required=True, help="prediction file to score")
    p_eval.add_argument("--reference", required=True, help="reference prediction file")
    p_eval.add_argument("--out-csv", required=True, help="per-position curve CSV")
    p_eval.add_argument("--out-summary", default=None, help="summary JSON path")
    p_eval.add_argument("--window", default=None, help="summary position window lo:hi")
    p_eval.add_argument(
        "--subset-label", default=None, help="task-subset identifier echoed into the summary"
    )
    p_eval.set_defaults(func=cmd_eval)

    p_plot = sub.add_parser("plot", help="render curves from exported CSV")
    p_plot.add_argument("--curves", nargs="*", default=None, help="divergence curve CSVs")
    p_plot.add_argument("--labels", nargs="*", default=None, help="legend labels")
    p_plot.add_argument("--entropy", default=None, help="entropy CSV from the oracle")
    p_plot.add_argument("--out", required=True, help="output image (.png or .svg)")
    p_plot.set_defaults(func=cmd_plot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValidationError, AlignmentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except MetahmmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
