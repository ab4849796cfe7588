"""Dataset curation with a token-overlap oracle, training loop, and evaluation."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import random
import time
from bisect import bisect_left, bisect_right
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from clonedet.extractor import TRAINING_MIN_TOKENS
from clonedet.features import MethodRecord
from clonedet.index import min_overlap, overlap_join, overlap_similarity
from clonedet.model import (
    COMPARATOR_DIMS,
    DEFAULT_DROPOUT,
    SUBNET_DIMS,
    SiameseModel,
    backward,
    canonical_order,
    forward_batch,
    init,
    learning_rate,
    loss,
    sgd_step,
)
from clonedet.sharder import check_threshold, plan_partitions, size_range

log = logging.getLogger(__name__)

ORACLE_THRESHOLD = 0.7
TRAIN, VALIDATION, TEST = 0, 1, 2


class TrainingError(RuntimeError):
    pass


def oracle_label(a: MethodRecord, b: MethodRecord, threshold: float = ORACLE_THRESHOLD) -> bool:
    """Bag-of-tokens clone oracle over the size-token bags of both methods."""
    ta, tb = sum(a.size_bag.values()), sum(b.size_bag.values())
    need = min_overlap(threshold, ta, tb)
    if need == 0:
        return ta == tb == 0
    return overlap_similarity(a.size_bag, b.size_bag) >= need


@dataclass
class LabeledDataset:
    pair_ids: np.ndarray  # (M, 2) method ids, canonical order
    x_a: np.ndarray  # (M, F) raw features of the first method
    x_b: np.ndarray
    labels: np.ndarray  # (M,) 0/1
    split: np.ndarray  # (M,) TRAIN / VALIDATION / TEST
    mean: np.ndarray
    std: np.ndarray
    balance: float
    oracle_clone_pairs: int = 0

    def part(self, which: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        sel = self.split == which
        return self.x_a[sel], self.x_b[sel], self.labels[sel]

    def __len__(self) -> int:
        return len(self.labels)


def oracle_clone_pairs(
    records: Sequence[MethodRecord], threshold: float = ORACLE_THRESHOLD, partitions: int = 6
) -> list[tuple[int, int]]:
    """All oracle-clone pairs, found partition by partition over size-compatible methods."""
    bags = {r.id: r.size_bag for r in records}
    found: set[tuple[int, int]] = set()
    for spec in plan_partitions(records, partitions, threshold):
        for a, b, _ in overlap_join(bags, threshold, spec.query_ids, spec.candidate_ids):
            found.add((a, b))
    return sorted(found)


def _sample_negatives(
    records: Sequence[MethodRecord],
    count: int,
    threshold: float,
    exclude: set[tuple[int, int]],
    rng: random.Random,
) -> list[tuple[int, int]]:
    by_size = sorted(records, key=lambda r: (r.token_count, r.id))
    sizes = [r.token_count for r in by_size]
    chosen: set[tuple[int, int]] = set()
    attempts = 0
    limit = 50 * count + 1000
    while len(chosen) < count and attempts < limit:
        attempts += 1
        a = by_size[rng.randrange(len(by_size))]
        lo, hi = size_range(a.token_count, threshold)
        i, j = bisect_left(sizes, lo), bisect_right(sizes, hi)
        b = by_size[rng.randrange(i, j)]
        if a.id == b.id:
            continue
        key = (min(a.id, b.id), max(a.id, b.id))
        if key in chosen or key in exclude or oracle_label(a, b, threshold):
            continue
        chosen.add(key)
    if len(chosen) < count:
        log.warning("found only %d of %d non-clone pairs", len(chosen), count)
    return sorted(chosen)


def normalization_stats(*blocks: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    rows = np.concatenate(blocks, axis=0)
    return rows.mean(axis=0), rows.std(axis=0)


def curate(
    records: Sequence[MethodRecord],
    target_pairs: int = 200_000,
    seed: int = 0,
    threshold: float = ORACLE_THRESHOLD,
    min_tokens: int = TRAINING_MIN_TOKENS,
    partitions: int = 6,
    test_fraction: float = 0.2,
    validation_fraction: float = 0.1,
) -> LabeledDataset:
    """Balanced oracle-labeled pairs with a train/validation/test split."""
    check_threshold(threshold, "oracle threshold")
    pool = [r for r in records if r.token_count >= min_tokens]
    if len(pool) < 2:
        raise ValueError(f"need at least two methods with >= {min_tokens} tokens")
    rng = random.Random(seed)
    positives = oracle_clone_pairs(pool, threshold, partitions)
    half = target_pairs // 2
    if len(positives) < half:
        log.warning("only %d oracle clone pairs for a target of %d; dataset will be unbalanced", len(positives), half)
        pos = list(positives)
    else:
        pos = rng.sample(positives, half)
    neg = _sample_negatives(pool, target_pairs - half, threshold, set(positives), rng)
    by_id = {r.id: r for r in pool}
    pairs = [(a, b, 1) for a, b in pos] + [(a, b, 0) for a, b in neg]
    rng.shuffle(pairs)
    m = len(pairs)
    pair_ids = np.empty((m, 2), dtype=np.int64)
    x_a = np.empty((m, len(by_id[pairs[0][0]].metrics.as_features())))
    x_b = np.empty_like(x_a)
    labels = np.empty(m, dtype=np.int64)
    for k, (a, b, y) in enumerate(pairs):
        first, second = canonical_order(by_id[a], by_id[b])
        pair_ids[k] = (first.id, second.id)
        x_a[k] = first.metrics.as_features()
        x_b[k] = second.metrics.as_features()
        labels[k] = y
    split = np.full(m, TRAIN, dtype=np.int64)
    n_test = int(round(m * test_fraction))
    split[m - n_test :] = TEST
    n_val = int(round((m - n_test) * validation_fraction))
    split[m - n_test - n_val : m - n_test] = VALIDATION
    train_sel = split == TRAIN
    mean, std = normalization_stats(x_a[train_sel], x_b[train_sel])
    balance = float(labels.mean()) if m else 0.0
    log.info("curated %d pairs (%d clone, balance %.3f) from %d oracle clones", m, int(labels.sum()), balance, len(positives))
    return LabeledDataset(pair_ids, x_a, x_b, labels, split, mean, std, balance, len(positives))


# -- training ----------------------------------------------------------------


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 1000
    base_lr: float = 1e-4
    lr_decay: float = 0.03
    dropout: float = DEFAULT_DROPOUT
    patience: int = 2
    subnet_dims: tuple[int, ...] = SUBNET_DIMS
    comparator_dims: tuple[int, ...] = COMPARATOR_DIMS


@dataclass
class EpochRow:
    epoch: int
    lr: float
    train_loss: float
    train_accuracy: float
    validation_loss: float
    validation_accuracy: float
    seconds: float


@dataclass
class TrainingReport:
    epochs: list[EpochRow] = field(default_factory=list)
    best_epoch: int = -1
    stopped_early: bool = False
    parameters: int = 0

    def write_jsonl(self, path: str | os.PathLike[str], final: dict | None = None) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for row in self.epochs:
                fh.write(json.dumps(asdict(row)) + "\n")
            summary = {"best_epoch": self.best_epoch, "stopped_early": self.stopped_early,
                       "parameters": self.parameters}
            if final:
                summary.update(final)
            fh.write(json.dumps({"final": summary}) + "\n")


def _snapshot(m: SiameseModel) -> list[np.ndarray]:
    return [p.copy() for p in m.params()]


def _restore(m: SiameseModel, saved: list[np.ndarray]) -> None:
    for p, s in zip(m.params(), saved):
        p[...] = s


def _infer_loss_acc(m: SiameseModel, xa: np.ndarray, xb: np.ndarray, y: np.ndarray, chunk: int = 8192) -> tuple[float, float]:
    if not len(y):
        return math.nan, math.nan
    probs = np.concatenate([forward_batch(m, xa[s : s + chunk], xb[s : s + chunk])[0] for s in range(0, len(y), chunk)])
    return float(np.mean(loss(probs, y))), float(np.mean((probs > 0.5) == (y == 1)))


def train(
    dataset: LabeledDataset, config: TrainConfig | None = None, seed: int = 0
) -> tuple[SiameseModel, TrainingReport]:
    """Minibatch SGD on both pair orders with early stopping on validation loss."""
    cfg = config or TrainConfig()
    m = init(seed, cfg.subnet_dims, cfg.comparator_dims, cfg.dropout)
    m.set_normalization(dataset.mean, dataset.std)
    m.hyperparams = {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(cfg).items()}
    xa, xb, y = dataset.part(TRAIN)
    if not len(y):
        raise TrainingError("empty training split")
    na, nb = m.normalize(xa), m.normalize(xb)
    left = np.concatenate([na, nb])
    right = np.concatenate([nb, na])
    target = np.concatenate([y, y]).astype(np.float64)
    va, vb, vy = dataset.part(VALIDATION)
    nva, nvb = m.normalize(va), m.normalize(vb)
    rng = np.random.default_rng(seed + 1)
    batch = min(cfg.batch_size, len(target))
    report = TrainingReport(parameters=m.parameter_count())
    best_loss, best_params, stale = math.inf, _snapshot(m), 0
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        order = rng.permutation(len(target))
        loss_sum = correct = 0.0
        for s in range(0, len(order), batch):
            idx = order[s : s + batch]
            probs, cache = forward_batch(m, left[idx], right[idx], train=True, rng=rng)
            batch_loss = loss(probs, target[idx])
            if not np.all(np.isfinite(batch_loss)) or not np.all(np.isfinite(probs)):
                raise TrainingError(f"loss diverged in epoch {epoch}")
            loss_sum += float(np.sum(batch_loss))
            correct += float(np.sum((probs > 0.5) == (target[idx] == 1)))
            sgd_step(m, backward(m, cache, target[idx]), epoch, cfg.base_lr, cfg.lr_decay)
        if len(vy):
            v_loss, v_acc = _infer_loss_acc(m, nva, nvb, vy)
        else:
            v_loss, v_acc = loss_sum / len(target), correct / len(target)
        if not math.isfinite(v_loss):
            raise TrainingError(f"validation loss is not finite in epoch {epoch}")
        row = EpochRow(epoch, learning_rate(epoch, cfg.base_lr, cfg.lr_decay), loss_sum / len(target),
                       correct / len(target), v_loss, v_acc, time.perf_counter() - t0)
        report.epochs.append(row)
        log.info("epoch %d: train loss %.4f acc %.4f | val loss %.4f acc %.4f (%.1fs)", epoch,
                 row.train_loss, row.train_accuracy, v_loss, v_acc, row.seconds)
        if v_loss < best_loss:
            best_loss, best_params, stale = v_loss, _snapshot(m), 0
            report.best_epoch = epoch
        else:
            stale += 1
            if stale >= cfg.patience:
                report.stopped_early = True
                break
    _restore(m, best_params)
    return m, report


# -- evaluation --------------------------------------------------------------


@dataclass
class Evaluation:
    accuracy: float
    precision: float | None
    recall: float | None
    auc: float | None
    roc_points: list[tuple[float, float]]
    positives: int
    negatives: int

    def summary(self) -> dict:
        return {k: v for k, v in asdict(self).items() if k != "roc_points"}


def roc_curve(scores: np.ndarray, labels: np.ndarray) -> list[tuple[float, float]]:
    """(FPR, TPR) points sweeping the threshold down through the scores.

    Equal scores are taken together as a single step.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    pos, neg = int(labels.sum()), int((~labels).sum())
    if not pos or not neg:
        return []
    order = np.argsort(-scores, kind="mergesort")
    s, l = scores[order], labels[order]
    last = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    tp = np.cumsum(l)[last]
    fp = np.cumsum(~l)[last]
    return [(0.0, 0.0)] + [(f / neg, t / pos) for f, t in zip(fp.tolist(), tp.tolist())]


def auc_trapezoid(points: Sequence[tuple[float, float]]) -> float | None:
    if not points:
        return None
    x = np.array([p[0] for p in points])
    y = np.array([p[1] for p in points])
    return float(np.sum((x[1:] - x[:-1]) * (y[1:] + y[:-1]) / 2.0))


def classification_metrics(scores: np.ndarray, labels: np.ndarray, threshold: float = 0.5) -> Evaluation:
    scores = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    if not len(y):
        raise ValueError("evaluation set is empty")
    pred = scores > threshold
    tp = int(np.sum(pred & y))
    fp = int(np.sum(pred & ~y))
    fn = int(np.sum(~pred & y))
    pos, neg = int(y.sum()), int((~y).sum())
    points = roc_curve(scores, y)
    return Evaluation(
        accuracy=float(np.mean(pred == y)),
        precision=tp / (tp + fp) if pos and tp + fp else None,
        recall=tp / (tp + fn) if pos else None,
        auc=auc_trapezoid(points) if pos and neg else None,
        roc_points=points,
        positives=pos,
        negatives=neg,
    )


def evaluate(m: SiameseModel, dataset: LabeledDataset, which: int = TEST) -> Evaluation:
    xa, xb, y = dataset.part(which)
    if not len(y):
        raise ValueError("evaluation split is empty")
    na, nb = m.normalize(xa), m.normalize(xb)
    probs = np.concatenate([forward_batch(m, na[s : s + 8192], nb[s : s + 8192])[0] for s in range(0, len(y), 8192)])
    return classification_metrics(probs, y)


def write_roc_csv(points: Sequence[tuple[float, float]], path: str | os.PathLike[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["fpr", "tpr"])
        for fpr, tpr in points:
            writer.writerow([repr(fpr), repr(tpr)])
