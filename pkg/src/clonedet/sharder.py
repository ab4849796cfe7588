"""Size-similarity sharding.

Methods are split into query partitions by token count. Each partition's
candidate set is every method whose size is compatible with some query size
in the partition, so no size-compatible pair is lost. Boundaries are chosen
such that a method is a candidate in at most two partitions.
"""

from __future__ import annotations

import json
import logging
import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Protocol, Sequence

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


class Sized(Protocol):
    id: int
    token_count: int


def _exact(threshold: float | Fraction) -> Fraction:
    """Decimal value of a threshold (0.6 means 3/5, not the nearest binary float)."""
    if isinstance(threshold, Fraction):
        return threshold
    return Fraction(repr(float(threshold)))


def check_threshold(threshold: float | Fraction, name: str = "threshold") -> Fraction:
    value = _exact(threshold)
    if not (0 < value <= 1):
        raise ConfigError(f"{name} must be in (0, 1], got {float(threshold)}")
    return value


def size_range(x: int, threshold: float | Fraction) -> tuple[int, int]:
    """Inclusive token-count range of possible clones of an x-token method."""
    t = check_threshold(threshold)
    if x < 1:
        raise ConfigError(f"token count must be >= 1, got {x}")
    return math.ceil(x * t), math.floor(x / t)


def size_compatible(a: int, b: int, threshold: float | Fraction) -> bool:
    lo, hi = size_range(a, threshold)
    return lo <= b <= hi


@dataclass
class PartitionSpec:
    index: int
    q_lo: int
    q_hi: int  # exclusive
    c_lo: int
    c_hi: int  # inclusive
    query_ids: list[int] = field(default_factory=list)
    candidate_ids: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "query_range": [self.q_lo, self.q_hi],
            "candidate_range": [self.c_lo, self.c_hi],
            "queries": len(self.query_ids),
            "candidates": len(self.candidate_ids),
        }


@dataclass
class IndexShard:
    partition: int
    candidate_ids: list[int]
    max_methods: int


def _boundaries_ok(b: Sequence[int], g2: Fraction) -> int | None:
    """Index k of the first violation of b[k+2] * g^2 > b[k+1], or None."""
    for k in range(len(b) - 2):
        if b[k + 2] * g2 <= b[k + 1]:
            return k
    return None


def plan_boundaries(sizes: Sequence[int], partitions: int, gamma: float | Fraction) -> list[int]:
    """Query boundaries b_0 < ... < b_P; partition k holds sizes in [b_k, b_k+1)."""
    g = check_threshold(gamma, "partition threshold")
    if partitions < 1:
        raise ConfigError(f"partition count must be >= 1, got {partitions}")
    ordered = sorted(sizes)
    distinct = sorted(set(ordered))
    if partitions > len(distinct):
        log.warning(
            "requested %d partitions but only %d distinct sizes", partitions, len(distinct)
        )
        partitions = len(distinct)
    b = [distinct[0]]
    for k in range(1, partitions):
        q = ordered[(k * len(ordered)) // partitions]
        if q > b[-1]:
            b.append(q)
    b.append(distinct[-1] + 1)
    g2 = g * g
    while (k := _boundaries_ok(b, g2)) is not None:
        del b[k + 1]
    return b


def plan_partitions(
    records: Sequence[Sized], partitions: int = 6, gamma: float | Fraction = 0.6
) -> list[PartitionSpec]:
    if not records:
        raise ConfigError("cannot partition an empty corpus")
    g = check_threshold(gamma, "partition threshold")
    b = plan_boundaries([r.token_count for r in records], partitions, g)
    by_size = sorted(records, key=lambda r: (r.token_count, r.id))
    sizes = [r.token_count for r in by_size]
    specs = []
    for k in range(len(b) - 1):
        q_lo, q_hi = b[k], b[k + 1]
        c_lo = math.ceil(q_lo * g)
        c_hi = math.floor((q_hi - 1) / g)
        queries = by_size[bisect_left(sizes, q_lo) : bisect_left(sizes, q_hi)]
        cands = by_size[bisect_left(sizes, c_lo) : bisect_right(sizes, c_hi)]
        specs.append(
            PartitionSpec(
                index=k,
                q_lo=q_lo,
                q_hi=q_hi,
                c_lo=c_lo,
                c_hi=c_hi,
                query_ids=[r.id for r in queries],
                candidate_ids=[r.id for r in cands],
            )
        )
    return specs


def shard_candidates(
    partition: PartitionSpec, max_methods: int, sizes: dict[int, int] | None = None
) -> list[IndexShard]:
    """Split a partition's candidates into consecutive shards of at most max_methods.

    Candidates are ordered by (token_count, id); ``sizes`` maps id to token
    count and defaults to the partition's existing order.
    """
    if max_methods < 1:
        raise ConfigError(f"shard capacity must be >= 1, got {max_methods}")
    ids = list(partition.candidate_ids)
    if sizes is not None:
        ids.sort(key=lambda i: (sizes[i], i))
    return [
        IndexShard(partition.index, ids[s : s + max_methods], max_methods)
        for s in range(0, len(ids), max_methods)
    ]


def count_size_compatible_pairs(sizes: Sequence[int], gamma: float | Fraction) -> int:
    """Unordered pairs of distinct methods whose sizes satisfy the size range."""
    g = check_threshold(gamma, "partition threshold")
    ordered = sorted(sizes)
    total = 0
    for x in ordered:
        lo, hi = math.ceil(x * g), math.floor(x / g)
        total += bisect_right(ordered, hi) - bisect_left(ordered, lo)
    return (total - len(ordered)) // 2


def dump_partitions(specs: Sequence[PartitionSpec], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for spec in specs:
            fh.write(json.dumps(spec.to_dict()) + "\n")
