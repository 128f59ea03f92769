"""Command-line entry point: train, eval, parse, make-incomplete, probe-reorder, report.

Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime/model error.
Each run writes ``manifest.txt`` (``key=value`` lines) into its output
directory; passing that file back through ``--config`` repeats the run.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DataError, ModelError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_MODEL = 0, 1, 2, 3

logger = logging.getLogger("addrtag")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _csv_ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _csv_strs(text: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in text.split(",") if x.strip())


def _bool(text: str) -> bool:
    if text.lower() in ("true", "1", "yes"):
        return True
    if text.lower() in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {text!r}")


# ---------------------------------------------------------------------------
# parser


def _add_common(p: argparse.ArgumentParser, command: str) -> None:
    p.add_argument("--config", help="key=value file overriding defaults (a run manifest works)")
    p.add_argument("--out-dir", default=f"runs/{command}", help="output directory (default: %(default)s)")


def _add_embeddings(p: argparse.ArgumentParser, default: str | None = "fallback") -> None:
    p.add_argument("--embeddings", choices=("word_subword", "bpe_combined", "fallback"), default=default)
    p.add_argument("--vectors", help="pretrained vector file (text 'count dim' header, or .bin)")


def build_parser() -> _Parser:
    parser = _Parser(prog="addrtag", description="Multinational address parsing.")
    parser.add_argument("--version", action="version", version=f"addrtag {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train one model per seed")
    _add_common(p, "train")
    p.add_argument("--train", dest="train_path", required=False, help="training records (JSON lines)")
    p.add_argument("--val", dest="val_path", help="validation records; default: split from --train")
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--variant", choices=("base", "attention"), default=None)
    p.add_argument("--adversarial", action="store_true", default=False)
    _add_embeddings(p)
    p.add_argument("--hidden-dim", type=int, default=1024)
    p.add_argument("--tag-dim", type=int, default=32)
    p.add_argument("--attention-dim", type=int, default=0, help="0 means hidden-dim")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=0, help="0 means 512, or 256 with --adversarial")
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--lr-decay-factor", type=float, default=0.1)
    p.add_argument("--lr-patience", type=int, default=10)
    p.add_argument("--early-stop-patience", type=int, default=15)
    p.add_argument("--seed", type=int, default=None, help="single seed (overrides --seeds)")
    p.add_argument("--seeds", type=_csv_ints, default=(5, 10, 15, 20, 25))
    p.add_argument("--retry-seed", type=int, default=30)
    p.add_argument("--grl-lambda", type=float, default=1.0)
    p.add_argument("--nonconvergence-threshold", type=float, default=0.80)
    p.add_argument("--optimizer", choices=("sgd",), default="sgd")
    p.add_argument("--loss", choices=("cross_entropy",), default="cross_entropy")

    p = sub.add_parser("eval", help="per-country accuracy of one or more checkpoints")
    _add_common(p, "eval")
    p.add_argument("--suite", choices=("holdout", "zero_shot", "incomplete"), required=False)
    p.add_argument("--data", nargs="+", default=None, help="dataset files (JSON lines)")
    p.add_argument("--model", nargs="+", default=None, help="checkpoints, one per seed")
    p.add_argument("--countries", type=_csv_strs, default=())
    _add_embeddings(p, default=None)

    p = sub.add_parser("parse", help="tag addresses with a trained model")
    _add_common(p, "parse")
    p.add_argument("--model", required=False)
    _add_embeddings(p, default=None)
    p.add_argument("--attention-figure", action="store_true", help="also save attention heat maps")
    p.add_argument("address", nargs="*", help="addresses to parse; '-' reads lines from stdin")

    p = sub.add_parser("make-incomplete", help="synthesize the incomplete-address dataset")
    _add_common(p, "make-incomplete")
    p.add_argument("--input", dest="input_path")
    p.add_argument("--train-n", type=int, default=50_000)
    p.add_argument("--holdout-n", type=int, default=25_000)
    p.add_argument("--min-dropped", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("probe-reorder", help="reorder addresses into two patterns (optionally score a model)")
    _add_common(p, "probe-reorder")
    p.add_argument("--input", dest="input_path")
    p.add_argument("--pattern-a", help="comma-separated tag order, e.g. StreetNumber,StreetName,Municipality")
    p.add_argument("--pattern-b")
    p.add_argument("--country", default=None, help="only use records from this country")
    p.add_argument("-n", "--max-samples", type=int, default=6000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--model", nargs="*", default=())
    _add_embeddings(p, default=None)

    p = sub.add_parser("report", help="render figures and tables from report CSVs and training logs")
    _add_common(p, "report")
    p.add_argument("--reports", nargs="*", default=(), help="report CSV files")
    p.add_argument("--labels", type=_csv_strs, default=(), help="one label per report file")
    p.add_argument("--logs", nargs="*", default=(), help="train_log.jsonl files")
    p.add_argument("--baseline", type=float, default=None, help="draw a random-baseline line (percent)")
    p.add_argument("--title", default="")
    return parser


# ---------------------------------------------------------------------------
# config files and manifests

_NOT_CONFIGURABLE = {"command", "config", "verbose"}


def read_kv(path) -> dict[str, str]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{n}: expected key=value")
            key, value = line.split("=", 1)
            out[key.strip().replace("-", "_")] = value.strip()
    return out


def _subparser(parser: argparse.ArgumentParser, command: str) -> argparse.ArgumentParser:
    for action in parser._subparsers._group_actions:
        if command in action.choices:
            return action.choices[command]
    raise UsageError(f"unknown command {command!r}")


def _convert(action: argparse.Action, text: str):
    if isinstance(action, argparse._StoreTrueAction):
        return _bool(text)
    if action.nargs in ("+", "*"):
        items = [x for x in text.split(",") if x]
        return [action.type(x) if action.type else x for x in items]
    if text == "" and action.default is None:
        return None
    value = action.type(text) if action.type else text
    if action.choices is not None and value not in action.choices:
        raise UsageError(f"config value {text!r} not allowed for {action.dest}")
    return value


def parse_args(argv) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        sub = _subparser(parser, args.command)
        actions = {a.dest: a for a in sub._actions if a.dest not in ("help",)}
        explicit = _explicit_dests(sub, argv)
        for key, text in read_kv(args.config).items():
            if key in _NOT_CONFIGURABLE:
                continue
            if key not in actions:
                raise UsageError(f"{args.config}: unknown option {key!r}")
            if key in explicit:
                continue
            try:
                setattr(args, key, _convert(actions[key], text))
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise UsageError(f"{args.config}: {key}: {exc}") from None
    return args


def _explicit_dests(sub: argparse.ArgumentParser, argv) -> set[str]:
    """Destinations given on the command line (they win over --config)."""
    flags = {}
    for action in sub._actions:
        for opt in action.option_strings:
            flags[opt] = action.dest
    found = set()
    for tok in argv:
        name = tok.split("=", 1)[0]
        if name in flags:
            found.add(flags[name])
    if any(not a.option_strings and a.dest != "help" for a in sub._actions):
        positional = [a.dest for a in sub._actions if not a.option_strings]
        found.update(positional)
    return found


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return ""
    if isinstance(value, (list, tuple)):
        return ",".join(_fmt(v) for v in value)
    return str(value)


def write_manifest(out_dir, args: argparse.Namespace, extra: dict[str, str] | None = None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = [f"# addrtag {__version__} {args.command}"]
    for key in sorted(vars(args)):
        if key in _NOT_CONFIGURABLE:
            continue
        lines.append(f"{key}={_fmt(getattr(args, key))}")
    path = out / "manifest.txt"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    if extra:
        (out / "results.txt").write_text("".join(f"{k}={v}\n" for k, v in sorted(extra.items())), encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# commands


def _provider(kind, vectors):
    from .embeddings import make_provider

    return make_provider(kind, vectors)


def _require(args, *names):
    missing = [n for n in names if not getattr(args, n)]
    if missing:
        flags = ", ".join("--" + n.replace("_path", "").replace("_", "-") for n in missing)
        raise UsageError(f"{args.command}: missing required option(s): {flags}")


def cmd_train(args) -> int:
    from .data import load_dataset, save_dataset
    from .plotting import plot_training_curves
    from .tagger import ModelConfig
    from .training import TrainConfig, multi_seed_run

    if args.adversarial and args.variant == "attention":
        raise UsageError("--adversarial builds the adversarial model family; it cannot be combined with --variant attention")
    args.variant = args.variant or "base"
    _require(args, "train_path")
    seeds = (args.seed,) if args.seed is not None else tuple(args.seeds)
    config = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        lr_decay_factor=args.lr_decay_factor,
        lr_patience=args.lr_patience,
        early_stop_patience=args.early_stop_patience,
        seeds=seeds,
        retry_seed=args.retry_seed,
        optimizer=args.optimizer,
        loss=args.loss,
        grl_lambda=args.grl_lambda,
        nonconvergence_threshold=args.nonconvergence_threshold,
    )
    provider = _provider(args.embeddings, args.vectors)
    model_config = ModelConfig(
        variant=args.variant,
        adversarial=args.adversarial,
        embeddings=provider.kind,
        input_dim=provider.dimension,
        hidden_dim=args.hidden_dim,
        tag_dim=args.tag_dim,
        attention_dim=args.attention_dim,
    )
    train_data = load_dataset(args.train_path)
    if args.val_path:
        val_data = load_dataset(args.val_path)
    else:
        if not 0 < args.val_fraction < 1:
            raise UsageError("--val-fraction must be in (0, 1)")
        order = np.random.default_rng(0).permutation(len(train_data))
        n_val = max(1, int(round(args.val_fraction * len(train_data))))
        val_data = [train_data[i] for i in sorted(order[:n_val])]
        train_data = [train_data[i] for i in sorted(order[n_val:])]
    if not train_data or not val_data:
        raise DataError("training and validation sets must both be non-empty")

    out = Path(args.out_dir)
    runs = multi_seed_run(config, model_config, provider, train_data, val_data)
    from .checkpoint import save_checkpoint

    results = {}
    for run in runs:
        run_dir = out / f"seed_{run.requested_seed}"
        run_dir.mkdir(parents=True, exist_ok=True)
        save_checkpoint(run.checkpoint, run_dir / "model.ckpt")
        run.log.write(run_dir / "train_log.jsonl")
        key = f"seed.{run.requested_seed}"
        results[f"{key}.trained_seed"] = str(run.seed)
        results[f"{key}.converged"] = _fmt(run.converged)
        results[f"{key}.best_epoch"] = str(run.log.best_epoch)
        results[f"{key}.best_val_loss"] = repr(run.log.best_val_loss)
        results[f"{key}.best_val_accuracy"] = repr(run.log.best_val_accuracy)
        print(
            f"seed {run.requested_seed}: trained with seed {run.seed}, best epoch {run.log.best_epoch}, "
            f"val loss {run.log.best_val_loss:.4f}, val token accuracy {100 * run.log.best_val_accuracy:.2f}%"
            + ("" if run.converged else " (did not converge)")
        )
    plot_training_curves({f"seed {r.requested_seed}": r.log for r in runs}, out / "training_curves.png")
    write_manifest(out, args, results)
    return EXIT_OK


def _load_models(paths):
    from .checkpoint import load_checkpoint

    return [load_checkpoint(p) for p in paths]


def _provider_for(ckpt, kind, vectors):
    model_kind = ckpt.manifest.get("embeddings")
    if kind is not None and kind != model_kind:
        raise ModelError(f"checkpoint was trained with {model_kind} embeddings, not {kind}")
    return _provider(model_kind, vectors)


def cmd_eval(args) -> int:
    from .evaluation import EvalSuite, report_csv, report_text, run_suite
    from .plotting import plot_country_accuracy

    _require(args, "suite")
    suite = EvalSuite(args.suite, tuple(args.countries), tuple(args.data or ()))
    _require(args, "model", "data")
    ckpts = _load_models(args.model)
    provider = _provider_for(ckpts[0], args.embeddings, args.vectors)
    result = run_suite(suite, ckpts, provider)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(report_csv(result.rows), encoding="utf-8")
    text = report_text(result.rows, title=f"{suite.kind} suite, {len(ckpts)} checkpoint(s)")
    (out / "report.txt").write_text(text, encoding="utf-8")
    plot_country_accuracy({suite.kind: result.rows}, out / "accuracy.png")
    write_manifest(out, args, result.manifest)
    sys.stdout.write(text)
    return EXIT_OK


def _read_addresses(items):
    for item in items:
        if item == "-":
            yield from (line.strip() for line in sys.stdin if line.strip())
        else:
            yield item


def cmd_parse(args) -> int:
    import torch

    from .core import AddressSample, Tag
    from .data import collate
    from .plotting import plot_attention
    from .tagger import greedy_parse

    _require(args, "model", "address")
    ckpt = _load_models([args.model])[0]
    provider = _provider_for(ckpt, args.embeddings, args.vectors)
    model = ckpt.build_model()
    model.bind(provider)
    out = Path(args.out_dir)
    blocks = []
    for k, address in enumerate(_read_addresses(args.address)):
        tokens = address.split()
        if not tokens:
            raise DataError("cannot parse an empty address")
        tags = greedy_parse(model, provider, tokens)
        blocks.append("\n".join(f"{tok}\t{tag.name}" for tok, tag in zip(tokens, tags)))
        if args.attention_figure and model.attention is not None:
            batch = collate([AddressSample(tuple(tokens), (Tag.StreetNumber,) * len(tokens))])
            with torch.no_grad():
                x, lengths = model.embed_batch(provider, batch)
                _, alpha = model(x, lengths, return_attention=True)
            plot_attention(alpha[0].numpy(), tokens, [t.name for t in tags], out / f"attention_{k}.png")
    print("\n\n".join(blocks))
    write_manifest(out, args)
    return EXIT_OK


def cmd_make_incomplete(args) -> int:
    from .data import IncompletePolicy, build_incomplete_dataset, load_dataset, save_dataset

    _require(args, "input_path")
    policy = IncompletePolicy(min_dropped=args.min_dropped, rng_seed=args.seed)
    build = build_incomplete_dataset(load_dataset(args.input_path), policy, args.train_n, args.holdout_n)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_dataset(build.train, out / "incomplete_train.jsonl")
    save_dataset(build.holdout, out / "incomplete_holdout.jsonl")
    write_manifest(out, args, build.manifest())
    print(f"wrote {len(build.train)} train and {len(build.holdout)} holdout records to {out}")
    return EXIT_OK


def cmd_probe_reorder(args) -> int:
    from .data import load_dataset, parse_pattern, reorder_probe, save_dataset
    from .evaluation import random_baseline, reorder_probe_eval

    _require(args, "input_path", "pattern_a", "pattern_b")
    try:
        pattern_a, pattern_b = parse_pattern(args.pattern_a), parse_pattern(args.pattern_b)
    except DataError as exc:
        raise UsageError(str(exc)) from None
    samples = load_dataset(args.input_path)
    if args.country:
        samples = [s for s in samples if s.country == args.country]
    if not samples:
        raise DataError("no records to reorder")
    if len(samples) > args.max_samples:
        keep = np.sort(np.random.default_rng(args.seed).choice(len(samples), args.max_samples, replace=False))
        samples = [samples[i] for i in keep]
    probe = reorder_probe(samples, pattern_a, pattern_b, args.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_dataset(probe, out / "probe.jsonl")
    results = {"n_samples": str(len(probe)), "random_baseline": repr(random_baseline(probe, args.seed))}
    print(f"reordered {len(probe)} addresses; random-tag baseline {float(results['random_baseline']):.2f}%")
    for path in args.model:
        ckpt = _load_models([path])[0]
        acc = reorder_probe_eval(ckpt, _provider_for(ckpt, args.embeddings, args.vectors), probe)
        results[f"accuracy.{path}"] = repr(acc)
        print(f"{path}: {acc:.2f}% on the reordered probe")
    write_manifest(out, args, results)
    return EXIT_OK


def cmd_report(args) -> int:
    from .evaluation import read_report_csv, report_text
    from .plotting import plot_country_accuracy, plot_training_curves
    from .training import TrainLog

    if not args.reports and not args.logs:
        raise UsageError("report: give --reports and/or --logs")
    labels = list(args.labels) or [Path(p).parent.name or Path(p).stem for p in args.reports]
    if len(labels) != len(args.reports):
        raise UsageError("--labels needs one label per report file")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tables = {label: read_report_csv(p) for label, p in zip(labels, args.reports)}
    text = "".join(report_text(rows, title=label) + "\n" for label, rows in tables.items())
    if tables:
        (out / "summary.txt").write_text(text, encoding="utf-8")
        plot_country_accuracy(tables, out / "accuracy_by_country.png", baseline=args.baseline, title=args.title)
        sys.stdout.write(text)
    if args.logs:
        logs = {str(Path(p).parent.name or p): TrainLog.read(p) for p in args.logs}
        plot_training_curves(logs, out / "training_curves.png")
    write_manifest(out, args)
    print(f"figures written to {out}")
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "parse": cmd_parse,
    "make-incomplete": cmd_make_incomplete,
    "probe-reorder": cmd_probe_reorder,
    "report": cmd_report,
}


def run_cli(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
        logging.basicConfig(
            level=logging.WARNING - 10 * min(args.verbose, 2),
            format="%(levelname)s %(name)s: %(message)s",
            stream=sys.stderr,
        )
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"addrtag: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"addrtag: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ModelError, RuntimeError, OSError, ValueError) as exc:
        print(f"addrtag: error: {exc}", file=sys.stderr)
        return EXIT_MODEL


def main() -> None:
    raise SystemExit(run_cli())


if __name__ == "__main__":
    main()
