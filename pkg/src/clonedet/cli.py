"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

from clonedet.extractor import DEFAULT_MIN_TOKENS, extract_corpus
from clonedet.features import featurize, read_records, write_records
from clonedet.model import ModelLoadError, load, save
from clonedet.pipeline import (
    RunConfig,
    detect,
    eval_recall,
    format_recall,
    load_corpus,
    read_report,
    read_truth,
    sample_for_precision,
    write_precision_sample,
    write_report,
)
from clonedet.sharder import ConfigError
from clonedet.trainer import TrainConfig, TrainingError, curate, evaluate, train, write_roc_csv

log = logging.getLogger("clonedet")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse exits 2 by default; usage is 1 here
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def read_config(path: str) -> dict[str, str]:
    """Line-oriented key=value settings; '#' starts a comment."""
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def _setting(args: argparse.Namespace, config: dict[str, str], name: str, default: Any, cast=str) -> Any:
    value = getattr(args, name, None)
    if value is not None:
        return value
    if name in config:
        try:
            return cast(config[name])
        except ValueError:
            raise UsageError(f"config value for {name!r} is invalid: {config[name]!r}") from None
    return default


def _bool(text: str) -> bool:
    if text.lower() in ("1", "true", "yes", "on"):
        return True
    if text.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(text)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="clonedet", description="Metric-based Java clone detector")
    p.add_argument("--config", help="key=value settings file (flags override)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    ex = sub.add_parser("extract", help="extract and featurize methods from a Java corpus")
    ex.add_argument("corpus")
    ex.add_argument("-o", "--output", required=True)
    ex.add_argument("--min-tokens", type=int, dest="min_tokens")
    ex.add_argument("--jobs", type=int)

    tr = sub.add_parser("train", help="curate oracle-labeled pairs and train the classifier")
    tr.add_argument("records")
    tr.add_argument("-o", "--output", required=True)
    tr.add_argument("--pairs", type=int)
    tr.add_argument("--seed", type=int)
    tr.add_argument("--epochs", type=int)
    tr.add_argument("--lr", type=float)
    tr.add_argument("--oracle-threshold", type=float, dest="oracle_threshold")
    tr.add_argument("--report", help="per-epoch JSONL training report")
    tr.add_argument("--roc", help="test-split ROC points as CSV")

    de = sub.add_parser("detect", help="detect clone pairs")
    de.add_argument("input", help="corpus directory or records file")
    de.add_argument("--model")
    de.add_argument("-o", "--output", required=True)
    de.add_argument("--theta", type=float)
    de.add_argument("--gamma", type=float)
    de.add_argument("--partitions", type=int)
    de.add_argument("--min-tokens", type=int, dest="min_tokens")
    de.add_argument("--shard-capacity", type=int, dest="shard_capacity")
    de.add_argument("--jobs", type=int)
    de.add_argument("--stats", action="store_true", default=None, help="print the candidate funnel")
    de.add_argument("--dump-partitions", dest="dump_partitions", help="write the partition plan as JSONL")

    ev = sub.add_parser("eval-recall", help="per-category recall of a report against a truth file")
    ev.add_argument("report")
    ev.add_argument("truth")

    sp = sub.add_parser("sample-precision", help="sample report rows for manual precision judging")
    sp.add_argument("report")
    sp.add_argument("--n", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--root", default=".", help="corpus root the report paths are relative to")
    sp.add_argument("-o", "--output", required=True)
    return p


def _cmd_extract(args, cfg) -> int:
    min_tokens = _setting(args, cfg, "min_tokens", DEFAULT_MIN_TOKENS, int)
    result = extract_corpus(args.corpus, min_tokens=min_tokens, jobs=_setting(args, cfg, "jobs", 1, int))
    for path, reason in result.skipped:
        log.warning("skipped %s: %s", path, reason)
    records = featurize(result.methods)
    write_records(records, args.output)
    print(f"{len(records)} methods, {len(result.skipped)} files skipped")
    return EXIT_OK


def _cmd_train(args, cfg) -> int:
    records = read_records(args.records)
    seed = _setting(args, cfg, "seed", 0, int)
    dataset = curate(
        records,
        target_pairs=_setting(args, cfg, "pairs", 200_000, int),
        seed=seed,
        threshold=_setting(args, cfg, "oracle_threshold", 0.7, float),
    )
    tc = TrainConfig(
        epochs=_setting(args, cfg, "epochs", 50, int),
        base_lr=_setting(args, cfg, "lr", TrainConfig.base_lr, float),
    )
    model, report = train(dataset, tc, seed)
    result = evaluate(model, dataset)
    save(model, args.output)
    if args.report:
        report.write_jsonl(args.report, result.summary())
    if args.roc:
        write_roc_csv(result.roc_points, args.roc)
    print(json.dumps(result.summary(), sort_keys=True))
    return EXIT_OK


def _cmd_detect(args, cfg) -> int:
    model_path = _setting(args, cfg, "model", None)
    if not model_path:
        raise UsageError("detect needs --model")
    if not Path(model_path).is_file():
        raise UsageError(f"model file not found: {model_path}")
    config = RunConfig(
        min_tokens=_setting(args, cfg, "min_tokens", DEFAULT_MIN_TOKENS, int),
        action_threshold=_setting(args, cfg, "theta", 0.55, float),
        partition_threshold=_setting(args, cfg, "gamma", 0.60, float),
        partitions=_setting(args, cfg, "partitions", 6, int),
        shard_capacity=_setting(args, cfg, "shard_capacity", 100_000, int),
        model_path=model_path,
        jobs=_setting(args, cfg, "jobs", 1, int),
    )
    config.validate()
    model = load(model_path)
    source = Path(args.input)
    skipped = 0
    if source.is_dir():
        records, skipped = load_corpus(source, config)
    else:
        records = [r for r in read_records(source) if r.token_count >= config.min_tokens]
    pairs, stats = detect(records, config, model, dump_path=_setting(args, cfg, "dump_partitions", None))
    stats.skipped_files = skipped
    write_report(pairs, args.output)
    if _setting(args, cfg, "stats", False, _bool):
        for key, value in stats.to_dict().items():
            print(f"{key}: {value}")
    else:
        print(f"{len(pairs)} clone pairs")
    return EXIT_OK


def _cmd_eval_recall(args, cfg) -> int:
    truth, bad = read_truth(args.truth)
    table = eval_recall(read_report(args.report), truth)
    print(format_recall(table))
    if bad:
        print(f"malformed truth rows skipped: {bad}")
    return EXIT_OK


def _cmd_sample(args, cfg) -> int:
    sample = sample_for_precision(
        read_report(args.report), n=_setting(args, cfg, "n", 400, int), seed=_setting(args, cfg, "seed", 0, int)
    )
    write_precision_sample(sample, args.root, args.output)
    print(f"sampled {len(sample)} pairs")
    return EXIT_OK


_COMMANDS = {
    "extract": _cmd_extract,
    "train": _cmd_train,
    "detect": _cmd_detect,
    "eval-recall": _cmd_eval_recall,
    "sample-precision": _cmd_sample,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = read_config(args.config) if args.config else {}
        return _COMMANDS[args.command](args, cfg)
    except (UsageError, ConfigError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ModelLoadError, TrainingError, ValueError, KeyError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
