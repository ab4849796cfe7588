"""End-to-end clone detection and the recall-evaluation harness.

Detection runs extract -> featurize -> size partitions -> per-shard inverted
index -> action filter -> metric-hash shortcut -> model prediction, and
writes a sorted, deduplicated clone report.
"""

from __future__ import annotations

import csv
import logging
import math
import os
import random
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from clonedet.extractor import (
    DEFAULT_MIN_TOKENS,
    IDENTIFIER,
    LITERAL_KINDS,
    SourceToken,
    extract_corpus,
)
from clonedet.features import MethodRecord, featurize
from clonedet.index import build_index, query_candidates
from clonedet.model import SiameseModel, canonical_order, predict_proba
from clonedet.sharder import (
    ConfigError,
    check_threshold,
    count_size_compatible_pairs,
    dump_partitions,
    plan_partitions,
    shard_candidates,
    size_compatible,
)

log = logging.getLogger(__name__)

HASH = "hash"
MODEL = "model"
CATEGORIES = ("T1", "T2", "VST3", "ST3", "MT3", "WT3/T4")
MIN_TRUTH_LINES = 6
MIN_TRUTH_TOKENS = 50
SUBSUMPTION = 0.7
PREDICT_BATCH = 4096


@dataclass
class RunConfig:
    min_tokens: int = DEFAULT_MIN_TOKENS
    action_threshold: float = 0.55
    partition_threshold: float = 0.60
    partitions: int = 6
    shard_capacity: int = 100_000
    model_path: str | None = None
    seed: int = 0
    jobs: int = 1
    action_filter: bool = True

    def validate(self) -> None:
        check_threshold(self.action_threshold, "action threshold")
        check_threshold(self.partition_threshold, "partition threshold")
        if self.min_tokens < 1:
            raise ConfigError(f"min_tokens must be >= 1, got {self.min_tokens}")
        if self.partitions < 1:
            raise ConfigError(f"partitions must be >= 1, got {self.partitions}")
        if self.shard_capacity < 1:
            raise ConfigError(f"shard capacity must be >= 1, got {self.shard_capacity}")


@dataclass(frozen=True, order=True)
class ClonePair:
    path_a: str
    start_a: int
    end_a: int
    path_b: str
    start_b: int
    end_b: int
    provenance: str
    score: float
    id_a: int = field(default=-1, compare=False)
    id_b: int = field(default=-1, compare=False)

    def row(self) -> list[str]:
        return [
            self.path_a,
            str(self.start_a),
            str(self.end_a),
            self.path_b,
            str(self.start_b),
            str(self.end_b),
            self.provenance,
            repr(float(self.score)),
        ]


@dataclass
class RunStats:
    methods: int = 0
    total_pairs: int = 0
    size_filtered_pairs: int = 0
    action_filtered_pairs: int = 0
    hash_hits: int = 0
    model_hits: int = 0
    hash_collisions: int = 0
    empty_action_methods: int = 0
    skipped_files: int = 0

    @property
    def emitted(self) -> int:
        return self.hash_hits + self.model_hits

    def to_dict(self) -> dict:
        out = asdict(self)
        out["emitted"] = self.emitted
        return out


def make_pair(a: MethodRecord, b: MethodRecord, provenance: str, score: float) -> ClonePair:
    if (b.file_path, b.start_line, b.end_line) < (a.file_path, a.start_line, a.end_line):
        a, b = b, a
    return ClonePair(
        a.file_path, a.start_line, a.end_line, b.file_path, b.start_line, b.end_line,
        provenance, float(score), a.id, b.id,
    )


def detect(
    records: Sequence[MethodRecord],
    config: RunConfig,
    model: SiameseModel | None,
    dump_path: str | None = None,
) -> tuple[list[ClonePair], RunStats]:
    """Run the retrieval funnel over featurized records and classify survivors."""
    config.validate()
    if model is None:
        raise ConfigError("detection needs a trained model (--model)")
    stats = RunStats(methods=len(records))
    n = len(records)
    stats.total_pairs = n * (n - 1) // 2
    if n < 2:
        return [], stats
    gamma = config.partition_threshold
    stats.size_filtered_pairs = count_size_compatible_pairs([r.token_count for r in records], gamma)
    stats.empty_action_methods = sum(1 for r in records if not r.actions.total)
    by_id = {r.id: r for r in records}
    if len(by_id) != n:
        raise ConfigError("record ids are not unique")
    sizes = {r.id: r.token_count for r in records}
    specs = plan_partitions(records, config.partitions, gamma)
    if dump_path:
        dump_partitions(specs, dump_path)

    hits: list[ClonePair] = []
    pending: list[tuple[MethodRecord, MethodRecord]] = []
    for spec in specs:
        for shard in shard_candidates(spec, config.shard_capacity, sizes):
            members = [by_id[i] for i in shard.candidate_ids]
            idx = build_index(members) if config.action_filter else None
            for q in spec.query_ids:
                qr = by_id[q]
                if idx is not None:
                    cands = [c for c, _ in query_candidates(qr, idx, config.action_threshold)]
                else:
                    cands = shard.candidate_ids
                for c in cands:
                    if c <= q:
                        continue
                    cr = by_id[c]
                    if not size_compatible(qr.token_count, cr.token_count, gamma):
                        continue
                    stats.action_filtered_pairs += 1
                    if qr.metric_hash == cr.metric_hash:
                        if qr.metrics == cr.metrics:
                            hits.append(make_pair(qr, cr, HASH, 1.0))
                            continue
                        stats.hash_collisions += 1
                        log.warning("metric hash collision between methods %d and %d", q, c)
                    pending.append(canonical_order(qr, cr))
    stats.hash_hits = len(hits)
    for start in range(0, len(pending), PREDICT_BATCH):
        chunk = pending[start : start + PREDICT_BATCH]
        xa = np.stack([a.metrics.as_features() for a, _ in chunk])
        xb = np.stack([b.metrics.as_features() for _, b in chunk])
        probs = predict_proba(model, xa, xb)
        for (a, b), p in zip(chunk, probs):
            if p > 0.5:
                hits.append(make_pair(a, b, MODEL, float(p)))
                stats.model_hits += 1
    return sorted(set(hits)), stats


def load_corpus(root: str | os.PathLike[str], config: RunConfig) -> tuple[list[MethodRecord], int]:
    """Extract and featurize a corpus; returns records and the skipped-file count."""
    result = extract_corpus(root, min_tokens=config.min_tokens, jobs=config.jobs)
    for path, reason in result.skipped:
        log.warning("skipped %s: %s", path, reason)
    return featurize(result.methods), len(result.skipped)


def detect_corpus(
    root: str | os.PathLike[str], config: RunConfig, model: SiameseModel | None
) -> tuple[list[ClonePair], RunStats, list[MethodRecord]]:
    records, skipped = load_corpus(root, config)
    pairs, stats = detect(records, config, model)
    stats.skipped_files = skipped
    return pairs, stats, records


def write_report(pairs: Iterable[ClonePair], path: str | os.PathLike[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for pair in sorted(set(pairs)):
            writer.writerow(pair.row())


def read_report(path: str | os.PathLike[str]) -> list[ClonePair]:
    pairs = []
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row:
                continue
            if len(row) != 8:
                raise ValueError(f"{path}:{lineno}: expected 8 fields, got {len(row)}")
            pairs.append(
                ClonePair(row[0], int(row[1]), int(row[2]), row[3], int(row[4]), int(row[5]),
                          row[6], float(row[7]))
            )
    return pairs


# -- recall evaluation -------------------------------------------------------


@dataclass(frozen=True)
class Span:
    path: str
    start: int
    end: int

    @property
    def lines(self) -> int:
        return self.end - self.start + 1


@dataclass(frozen=True)
class TruthPair:
    a: Span
    b: Span
    category: str
    tokens_a: int | None = None
    tokens_b: int | None = None

    def eligible(self) -> bool:
        if min(self.a.lines, self.b.lines) < MIN_TRUTH_LINES:
            return False
        if self.tokens_a is not None and self.tokens_a < MIN_TRUTH_TOKENS:
            return False
        if self.tokens_b is not None and self.tokens_b < MIN_TRUTH_TOKENS:
            return False
        return True

    def row(self) -> list[str]:
        out = [self.a.path, str(self.a.start), str(self.a.end),
               self.b.path, str(self.b.start), str(self.b.end), self.category]
        if self.tokens_a is not None and self.tokens_b is not None:
            out += [str(self.tokens_a), str(self.tokens_b)]
        return out


def read_truth(path: str | os.PathLike[str]) -> tuple[list[TruthPair], int]:
    """Parse a truth CSV; returns (pairs, malformed row count)."""
    rows, bad = [], 0
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.reader(fh):
            if not row:
                continue
            try:
                if len(row) not in (7, 9) or row[6] not in CATEGORIES:
                    raise ValueError(row)
                a = Span(row[0], int(row[1]), int(row[2]))
                b = Span(row[3], int(row[4]), int(row[5]))
                if a.start > a.end or b.start > b.end or min(a.start, b.start) < 1:
                    raise ValueError(row)
                toks = (int(row[7]), int(row[8])) if len(row) == 9 else (None, None)
                rows.append(TruthPair(a, b, row[6], *toks))
            except ValueError:
                bad += 1
    if bad:
        log.warning("%s: skipped %d malformed truth rows", path, bad)
    return rows, bad


def write_truth(pairs: Iterable[TruthPair], path: str | os.PathLike[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for pair in pairs:
            writer.writerow(pair.row())


def coverage(reported: Span, truth: Span) -> float:
    """Fraction of the truth span's lines covered by the reported span."""
    if reported.path != truth.path:
        return 0.0
    overlap = min(reported.end, truth.end) - max(reported.start, truth.start) + 1
    return max(overlap, 0) / truth.lines


def _matches(pair: ClonePair, truth: TruthPair, threshold: float) -> bool:
    ra = Span(pair.path_a, pair.start_a, pair.end_a)
    rb = Span(pair.path_b, pair.start_b, pair.end_b)
    return (coverage(ra, truth.a) >= threshold and coverage(rb, truth.b) >= threshold) or (
        coverage(ra, truth.b) >= threshold and coverage(rb, truth.a) >= threshold
    )


@dataclass
class RecallRow:
    category: str
    detected: int
    total: int

    @property
    def recall(self) -> float | None:
        return self.detected / self.total if self.total else None


def matched_truth(
    report: Sequence[ClonePair], truth: Sequence[TruthPair], threshold: float = SUBSUMPTION
) -> list[bool]:
    """Per truth pair: is it subsumed by some reported pair?"""
    by_files: dict[tuple[str, str], list[ClonePair]] = defaultdict(list)
    for pair in report:
        by_files[tuple(sorted((pair.path_a, pair.path_b)))].append(pair)
    out = []
    for t in truth:
        key = tuple(sorted((t.a.path, t.b.path)))
        out.append(any(_matches(p, t, threshold) for p in by_files.get(key, ())))
    return out


def eval_recall(
    report: Sequence[ClonePair], truth: Sequence[TruthPair], threshold: float = SUBSUMPTION
) -> dict[str, RecallRow]:
    eligible = [t for t in truth if t.eligible()]
    table = {c: RecallRow(c, 0, 0) for c in CATEGORIES}
    for t, hit in zip(eligible, matched_truth(report, eligible, threshold)):
        row = table.setdefault(t.category, RecallRow(t.category, 0, 0))
        row.total += 1
        row.detected += int(hit)
    return table


def format_recall(table: dict[str, RecallRow]) -> str:
    lines = [f"{'category':<8} {'detected':>9} {'total':>7} {'recall':>8}"]
    for row in table.values():
        r = "n/a" if row.recall is None else f"{100 * row.recall:.1f}%"
        lines.append(f"{row.category:<8} {row.detected:>9} {row.total:>7} {r:>8}")
    return "\n".join(lines)


# -- similarity binning ------------------------------------------------------


def normalized_texts(tokens: Sequence[SourceToken]) -> list[str]:
    """Token texts with identifiers and literal values blinded."""
    out = []
    for tok in tokens:
        if tok.kind == IDENTIFIER:
            out.append("ID")
        elif tok.kind in LITERAL_KINDS:
            out.append(f"<{tok.kind}>")
        else:
            out.append(tok.text)
    return out


def normalized_similarity(a: Sequence[SourceToken], b: Sequence[SourceToken]) -> float:
    ba, bb = Counter(normalized_texts(a)), Counter(normalized_texts(b))
    denom = max(sum(ba.values()), sum(bb.values()))
    if not denom:
        return 1.0
    return sum((ba & bb).values()) / denom


def category_for_ratio(ratio: float) -> str:
    if ratio >= 0.9:
        return "VST3"
    if ratio >= 0.7:
        return "ST3"
    if ratio >= 0.5:
        return "MT3"
    return "WT3/T4"


def bin_tokens(a: Sequence[SourceToken], b: Sequence[SourceToken]) -> str:
    if [(t.kind, t.text) for t in a] == [(t.kind, t.text) for t in b]:
        return "T1"
    if normalized_texts(a) == normalized_texts(b):
        return "T2"
    return category_for_ratio(normalized_similarity(a, b))


def bin_similarity(a: MethodRecord, b: MethodRecord) -> str:
    return bin_tokens(a.tokens, b.tokens)


# -- precision sampling ------------------------------------------------------


def sample_for_precision(
    report: Sequence[ClonePair], n: int = 400, seed: int = 0
) -> list[ClonePair]:
    """Uniform sample without replacement, kept in report order."""
    if not report:
        raise ValueError("cannot sample from an empty report")
    pairs = sorted(set(report))
    if len(pairs) <= n:
        return pairs
    picked = sorted(random.Random(seed).sample(range(len(pairs)), n))
    return [pairs[i] for i in picked]


def _excerpt(root: Path, path: str, start: int, end: int) -> str:
    try:
        lines = (root / path).read_text(encoding="utf-8", errors="replace").splitlines()
    except OSError as exc:
        return f"<unreadable: {exc}>"
    return "\n".join(lines[start - 1 : end])


def write_precision_sample(
    sample: Sequence[ClonePair], root: str | os.PathLike[str], out: str | os.PathLike[str]
) -> None:
    """Render each sampled pair with both source spans for manual judging."""
    root = Path(root)
    with open(out, "w", encoding="utf-8") as fh:
        for k, p in enumerate(sample, 1):
            fh.write(f"=== pair {k}: {p.provenance} score={p.score!r}\n")
            fh.write(f"--- {p.path_a}:{p.start_a}-{p.end_a}\n")
            fh.write(_excerpt(root, p.path_a, p.start_a, p.end_a) + "\n")
            fh.write(f"--- {p.path_b}:{p.start_b}-{p.end_b}\n")
            fh.write(_excerpt(root, p.path_b, p.start_b, p.end_b) + "\n")
            fh.write("verdict: \n\n")


def funnel_reduction(stats: RunStats) -> float:
    """Fraction of all possible pairs removed before classification."""
    if not stats.total_pairs:
        return math.nan
    return 1.0 - stats.action_filtered_pairs / stats.total_pairs
