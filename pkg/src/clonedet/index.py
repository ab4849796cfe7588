"""Inverted index over token bags and overlap-similarity retrieval."""

from __future__ import annotations

import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping

from clonedet.features import ActionBag, MethodRecord
from clonedet.sharder import check_threshold

log = logging.getLogger(__name__)

Bag = Mapping[str, int]


def _entries(bag: ActionBag | Bag) -> Mapping[str, int]:
    return bag.entries if isinstance(bag, ActionBag) else bag


def _total(bag: ActionBag | Bag) -> int:
    return bag.total if isinstance(bag, ActionBag) else sum(bag.values())


def overlap_similarity(a: ActionBag | Bag, b: ActionBag | Bag) -> int:
    """Multiset intersection size: sum over tokens of the smaller frequency."""
    ea, eb = _entries(a), _entries(b)
    if len(ea) > len(eb):
        ea, eb = eb, ea
    return sum(min(freq, eb[t]) for t, freq in ea.items() if t in eb)


def min_overlap(threshold: float | Fraction, total_a: int, total_b: int) -> int:
    """Smallest overlap that passes the threshold for bags of the given sizes."""
    return math.ceil(check_threshold(threshold) * max(total_a, total_b))


@dataclass
class InvertedIndex:
    postings: dict[str, list[tuple[int, int]]] = field(default_factory=dict)
    doc_totals: dict[int, int] = field(default_factory=dict)
    unreachable: list[int] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.doc_totals)


def build_index(records: Iterable[MethodRecord]) -> InvertedIndex:
    postings: dict[str, list[tuple[int, int]]] = defaultdict(list)
    totals: dict[int, int] = {}
    unreachable = []
    for rec in sorted(records, key=lambda r: r.id):
        totals[rec.id] = rec.actions.total
        if not rec.actions.total:
            unreachable.append(rec.id)
        for token, freq in rec.actions.items():
            postings[token].append((rec.id, freq))
    if unreachable:
        log.debug("%d methods without action tokens are unreachable", len(unreachable))
    return InvertedIndex(dict(postings), totals, unreachable)


def query_candidates(
    query: MethodRecord, idx: InvertedIndex, threshold: float | Fraction = 0.55
) -> list[tuple[int, int]]:
    """Candidates whose overlap with the query's bag passes the threshold.

    Returns (candidate id, overlap) pairs sorted by id; the query itself is
    never returned.
    """
    theta = check_threshold(threshold)
    acc: dict[int, int] = defaultdict(int)
    for token, qf in query.actions.items():
        for doc, df in idx.postings.get(token, ()):
            acc[doc] += qf if qf < df else df
    q_total = query.actions.total
    out = []
    for doc, sim in acc.items():
        if doc == query.id:
            continue
        if sim >= math.ceil(theta * max(q_total, idx.doc_totals[doc])):
            out.append((doc, sim))
    out.sort()
    return out


def overlap_join(
    bags: Mapping[int, Bag],
    threshold: float | Fraction,
    queries: Iterable[int] | None = None,
    candidates: Iterable[int] | None = None,
) -> list[tuple[int, int, int]]:
    """All pairs (a, b, overlap), a < b, with overlap >= ceil(threshold * max size).

    Exact prefix-filtered similarity join: every bag is expanded into distinct
    elements (token, k) for k up to its frequency, elements are ordered by
    global rarity, and two bags can only pass if their short prefixes share an
    element. Candidates from the prefix probe are then verified exactly.
    """
    theta = check_threshold(threshold)
    q_ids = sorted(bags) if queries is None else sorted(set(queries))
    c_ids = sorted(bags) if candidates is None else sorted(set(candidates))
    doc_freq: Counter = Counter()
    for i in set(q_ids) | set(c_ids):
        for token, freq in bags[i].items():
            for k in range(freq):
                doc_freq[(token, k)] += 1
    totals = {i: sum(bags[i].values()) for i in set(q_ids) | set(c_ids)}

    def prefix(i: int) -> list[tuple[str, int]]:
        elems = [(t, k) for t, f in bags[i].items() for k in range(f)]
        elems.sort(key=lambda e: (doc_freq[e], e))
        n = totals[i]
        keep = n - math.ceil(theta * n) + 1
        return elems[: max(keep, 0)]

    index: dict[tuple[str, int], list[int]] = defaultdict(list)
    for i in c_ids:
        for e in prefix(i):
            index[e].append(i)
    seen: set[tuple[int, int]] = set()
    out = []
    for q in q_ids:
        probe: set[int] = set()
        for e in prefix(q):
            probe.update(index.get(e, ()))
        probe.discard(q)
        for c in probe:
            key = (q, c) if q < c else (c, q)
            if key in seen:
                continue
            seen.add(key)
            need = math.ceil(theta * max(totals[q], totals[c]))
            if need == 0:
                continue
            sim = overlap_similarity(bags[q], bags[c])
            if sim >= need:
                out.append((key[0], key[1], sim))
    out.sort()
    return out
