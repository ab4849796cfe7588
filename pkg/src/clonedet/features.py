"""Per-method software metrics, action tokens and the metric hash.

All metric definitions live in :class:`_Analyzer`; they are computed from the
token stream of a :class:`~clonedet.extractor.RawMethod` plus a light
statement-level parse of its body. Identifier spelling and literal values are
never read (except to count distinct operands), so consistent renaming leaves
every metric unchanged.

Metric rules:

=========  ==================================================================
XMET       calls whose name is not declared as a method in the same file
LMET       calls whose name is declared as a method in the same file
VREF       identifier occurrences that are not call names, type names,
           declaration sites, labels or annotation names
VDEC       local variable declarators, for-init/for-each variables, catch
           parameters, try resources
NOS        ``;``-terminated statements + control statements + case labels
NOPR/NAND  Halstead N1/N2 (total operators/operands)
NOA        formal parameters
NEXP       expression statements, control conditions, for-updates,
           return/throw values, initializers, call and constructor arguments
MDN        deepest nesting of control-structure bodies (method body = 0)
LOOP       for, for-each, while and do-while loops
HVOC       n1 + n2
HDIF       (n1 / 2) * (N2 / n2)
HEFF       HDIF * (N1 + N2) * log2(n1 + n2)
EXCT       throw statements + types in the ``throws`` clause
EXCR       exception types named in catch clauses
CREF       distinct capitalized type names referenced
COMP       1 + if, for, while, do, case, catch, ``?:``, ``&&``, ``||``
CAST       cast expressions
N*LTRL     literal counts by kind
=========  ==================================================================

Halstead counts cover the method body only. Operands are identifiers,
literals and primitive type keywords; operators are operator tokens,
separators other than ``; { }``, and control keywords.
"""

from __future__ import annotations

import json
import math
import os
from collections import Counter
from dataclasses import asdict, dataclass, field, fields
from typing import Iterable, Iterator, Mapping

import numpy as np

from clonedet.extractor import (
    IDENTIFIER,
    KEYWORD,
    LIT_BOOL,
    LIT_CHAR,
    LIT_NULL,
    LIT_NUMBER,
    LIT_STRING,
    LITERAL_KINDS,
    OPERATOR,
    SEPARATOR,
    RawMethod,
    SourceToken,
    size_token_texts,
)

METRIC_NAMES: tuple[str, ...] = (
    "XMET", "VREF", "VDEC", "NOS", "NOPR", "NOA", "NEXP", "NAND", "MDN",
    "LOOP", "LMET", "HVOC", "HEFF", "HDIF", "EXCT", "EXCR", "CREF", "COMP",
    "CAST", "NBLTRL", "NCLTRL", "NSLTRL", "NNLTRL", "NNULLTRL",
)  # fmt: skip
FLOAT_METRICS = frozenset({"HEFF", "HDIF"})
BASE_COUNTS: tuple[str, ...] = ("n1", "n2", "N1", "N2")
# HVOC is n1 + n2, already covered by the base counts.
HASH_FIELDS: tuple[str, ...] = tuple(
    m for m in METRIC_NAMES if m not in FLOAT_METRICS and m != "HVOC"
) + BASE_COUNTS

PRIMITIVE_TYPES = frozenset(
    {"boolean", "byte", "char", "short", "int", "long", "float", "double", "void"}
)
CONTROL_KEYWORDS = frozenset(
    """
    if else for while do switch case return throw try catch finally break
    continue new instanceof
    """.split()
)
ARRAY_ACCESS = "ArrayAccess"
ARRAY_ACCESS_BINARY = "ArrayAccessBinary"


@dataclass(frozen=True)
class MetricsVector:
    XMET: int = 0
    VREF: int = 0
    VDEC: int = 0
    NOS: int = 0
    NOPR: int = 0
    NOA: int = 0
    NEXP: int = 0
    NAND: int = 0
    MDN: int = 0
    LOOP: int = 0
    LMET: int = 0
    HVOC: int = 0
    HEFF: float = 0.0
    HDIF: float = 0.0
    EXCT: int = 0
    EXCR: int = 0
    CREF: int = 0
    COMP: int = 1
    CAST: int = 0
    NBLTRL: int = 0
    NCLTRL: int = 0
    NSLTRL: int = 0
    NNLTRL: int = 0
    NNULLTRL: int = 0
    n1: int = 0
    n2: int = 0
    N1: int = 0
    N2: int = 0

    def as_features(self) -> np.ndarray:
        """The 24 metrics in table order as float64."""
        return np.array([float(getattr(self, name)) for name in METRIC_NAMES])

    def to_dict(self) -> dict[str, int | float]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, int | float]) -> MetricsVector:
        kwargs = {}
        for f in fields(cls):
            value = data[f.name]
            kwargs[f.name] = float(value) if f.name in FLOAT_METRICS else int(value)
        return cls(**kwargs)


class ActionBag:
    """Multiset of action tokens (token -> positive frequency)."""

    __slots__ = ("entries", "total")

    def __init__(self, entries: Mapping[str, int] | Iterable[str] = ()):
        counts = Counter(entries)
        self.entries: dict[str, int] = {t: c for t, c in sorted(counts.items()) if c > 0}
        self.total: int = sum(self.entries.values())

    def __eq__(self, other: object) -> bool:
        if isinstance(other, ActionBag):
            return self.entries == other.entries
        if isinstance(other, Mapping):
            return self.entries == dict(other)
        return NotImplemented

    def __hash__(self) -> int:
        return hash(tuple(self.entries.items()))

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[str]:
        return iter(self.entries)

    def __getitem__(self, token: str) -> int:
        return self.entries.get(token, 0)

    def items(self):
        return self.entries.items()

    def __repr__(self) -> str:
        return f"ActionBag({self.entries!r})"


@dataclass
class MethodRecord:
    id: int
    file_path: str
    start_line: int
    end_line: int
    name: str
    token_count: int
    metrics: MetricsVector
    actions: ActionBag
    metric_hash: int
    size_bag: Counter = field(default_factory=Counter)
    tokens: list[SourceToken] = field(default_factory=list, repr=False)


def _is_sep(tok: SourceToken, text: str) -> bool:
    return tok.kind == SEPARATOR and tok.text == text


def _capitalized(name: str) -> bool:
    return name[:1].isupper()


def _static_qualifier(name: str) -> bool:
    # Integer.parseInt, Math.max; excludes CONSTANT.field
    return name[:1].isupper() and any(c.islower() for c in name)


_CAST_FOLLOW_KINDS = frozenset({IDENTIFIER}) | LITERAL_KINDS
_CAST_FOLLOW_WORDS = frozenset({"this", "super", "new", "(", "!", "~"})
_PRIM_CAST_FOLLOW = frozenset({"+", "-", "++", "--"})
_NO_CAST_PREV_WORDS = frozenset(
    {"if", "while", "for", "switch", "catch", "synchronized", "this", "super", "assert"}
)
_WILDCARD_NEXT = frozenset({">", ">>", ">>>", ",", "extends", "super"})
_ANGLE_DELTA = {"<": 1, ">": -1, ">>": -2, ">>>": -3}
_TYPE_ARG_OK = frozenset({",", "?", ".", "[", "]", "&", "@", "extends", "super"})


class _Analyzer:
    """One-shot metric and action analysis of a single method token stream."""

    def __init__(self, tokens: list[SourceToken], declared_methods: frozenset[str] = frozenset()):
        self.t = tokens
        self.n = len(tokens)
        self.declared = declared_methods
        self.pairs = self._pairs()
        self.type_idx: set[int] = set()
        self.decl_idx: set[int] = set()
        self.call_idx: set[int] = set()
        self.skip_idx: set[int] = set()  # labels, annotations, member refs, inner decl names
        self.ctor_idx: set[int] = set()
        self.dim_brackets: set[int] = set()
        self.nos = self.nexp = self.vdec = self.noa = 0
        self.mdn = self.loops = self.branches = 0
        self.exct = self.excr = self.casts = 0
        self._scan_expressions()
        self._scan_signature()
        if self.body_open is not None:
            self._block(self.body_open, 0)

    # -- bracket helpers -------------------------------------------------
    def _pairs(self) -> dict[int, int]:
        pairs: dict[int, int] = {}
        stack: list[int] = []
        match = {")": "(", "]": "[", "}": "{"}
        for i, tok in enumerate(self.t):
            if tok.kind != SEPARATOR:
                continue
            if tok.text in ("(", "[", "{"):
                stack.append(i)
            elif tok.text in match:
                # tolerate imbalance: pop to the nearest matching opener
                while stack and self.t[stack[-1]].text != match[tok.text]:
                    stack.pop()
                if stack:
                    pairs[stack.pop()] = i
        return pairs

    def _close(self, i: int) -> int:
        return self.pairs.get(i, self.n - 1)

    def _text(self, i: int) -> str:
        return self.t[i].text if 0 <= i < self.n else ""

    def _kind(self, i: int) -> str:
        return self.t[i].kind if 0 <= i < self.n else ""

    def _is_ident(self, i: int) -> bool:
        return self._kind(i) == IDENTIFIER

    def _skip_angles(self, i: int, mark: bool) -> int | None:
        """From a '<' at i, return the index after the matching '>' of a type argument list."""
        depth = 0
        j = i
        while j < self.n:
            tok = self.t[j]
            if tok.kind == OPERATOR and tok.text in _ANGLE_DELTA:
                depth += _ANGLE_DELTA[tok.text]
                if depth <= 0:
                    return j + 1 if depth == 0 else None
            elif tok.kind == IDENTIFIER:
                if mark:
                    self.type_idx.add(j)
            elif tok.kind == KEYWORD and (tok.text in PRIMITIVE_TYPES or tok.text in _TYPE_ARG_OK):
                pass
            elif tok.text in _TYPE_ARG_OK:
                pass
            else:
                return None
            j += 1
        return None

    def _parse_type(self, i: int, mark: bool = True) -> int | None:
        """Return the index after a type starting at i, or None."""
        j = i
        if self._kind(j) == KEYWORD and self._text(j) in PRIMITIVE_TYPES:
            idents = []
            j += 1
        elif self._is_ident(j):
            idents = [j]
            j += 1
            while _is_sep_at(self, j, ".") and self._is_ident(j + 1):
                idents.append(j + 1)
                j += 2
            if self._text(j) == "<" and self._kind(j) == OPERATOR:
                end = self._skip_angles(j, mark=False)
                if end is None:
                    return None
                if mark:
                    self._skip_angles(j, mark=True)
                j = end
                # Outer<T>.Inner
                while _is_sep_at(self, j, ".") and self._is_ident(j + 1):
                    idents.append(j + 1)
                    j += 2
        else:
            return None
        while _is_sep_at(self, j, "[") and _is_sep_at(self, j + 1, "]"):
            j += 2
        if _is_sep_at(self, j, "..."):
            j += 1
        if mark:
            self.type_idx.update(idents)
        return j

    def _skip_annotations(self, i: int) -> int:
        while _is_sep_at(self, i, "@") and self._is_ident(i + 1):
            self.skip_idx.add(i + 1)
            i += 2
            while _is_sep_at(self, i, ".") and self._is_ident(i + 1):
                self.skip_idx.add(i + 1)
                i += 2
            if _is_sep_at(self, i, "("):
                i = self._close(i) + 1
        return i

    # -- token-level expression patterns ---------------------------------
    def _count_args(self, open_idx: int) -> None:
        close = self._close(open_idx)
        if close == open_idx + 1:
            return
        args = 1
        j = open_idx + 1
        while j < close:
            tok = self.t[j]
            if tok.kind == SEPARATOR and tok.text in "([{":
                j = self._close(j) + 1
                continue
            if _is_sep(tok, ","):
                args += 1
            j += 1
        self.nexp += args

    def _params(self, open_idx: int) -> int:
        """Mark a formal parameter list; return the parameter count."""
        close = self._close(open_idx)
        if close == open_idx + 1:
            return 0
        segments: list[list[int]] = [[]]
        depth = 0
        j = open_idx + 1
        while j < close:
            tok = self.t[j]
            if tok.kind == SEPARATOR and tok.text in "([{":
                segments[-1].extend(range(j, self._close(j) + 1))
                j = self._close(j) + 1
                continue
            if tok.kind == OPERATOR and tok.text in _ANGLE_DELTA:
                depth += _ANGLE_DELTA[tok.text]
            if _is_sep(tok, ",") and depth <= 0:
                segments.append([])
            else:
                segments[-1].append(j)
            j += 1
        for seg in segments:
            k = self._skip_annotations(seg[0]) if seg else 0
            idents = [x for x in seg if x >= k and self.t[x].kind == IDENTIFIER and x not in self.skip_idx]
            if not idents:
                continue
            self.decl_idx.add(idents[-1])
            self.type_idx.update(idents[:-1])
        return sum(1 for seg in segments if seg)

    def _scan_expressions(self) -> None:
        t = self.t
        i = 0
        while i < self.n:
            tok = t[i]
            kind, text = tok.kind, tok.text
            if kind == SEPARATOR and text == "@" and self._is_ident(i + 1):
                self._skip_annotations(i)
            elif kind == KEYWORD and text == "new":
                self._new_expression(i)
            elif kind == KEYWORD and text in ("this", "super") and _is_sep_at(self, i + 1, "("):
                self._count_args(i + 1)
            elif kind == KEYWORD and text == "instanceof":
                j = self._skip_final(i + 1)
                end = self._parse_type(j)
                if end is not None and self._is_ident(end):
                    self.decl_idx.add(end)
            elif kind == IDENTIFIER:
                self._identifier(i)
            elif kind == SEPARATOR and text == "(":
                self._maybe_cast_or_lambda(i)
            elif kind == SEPARATOR and text == "::":
                if self._is_ident(i + 1):
                    self.skip_idx.add(i + 1)
                if self._is_ident(i - 1) and _static_qualifier(self._text(i - 1)):
                    self.type_idx.add(i - 1)
            elif kind == OPERATOR and text == "?" and not self._wildcard(i):
                self.branches += 1
            elif kind == OPERATOR and text in ("&&", "||"):
                self.branches += 1
            i += 1

    def _skip_final(self, i: int) -> int:
        while self._text(i) == "final" and self._kind(i) == KEYWORD:
            i += 1
        return self._skip_annotations(i)

    def _wildcard(self, i: int) -> bool:
        return self._text(i + 1) in _WILDCARD_NEXT or self._text(i - 1) == "<"

    def _new_expression(self, i: int) -> None:
        j = self._skip_annotations(i + 1)
        if self._kind(j) == KEYWORD and self._text(j) in PRIMITIVE_TYPES:
            j += 1
        else:
            while self._is_ident(j):
                self.type_idx.add(j)
                self.ctor_idx.add(j)
                if _is_sep_at(self, j + 1, ".") and self._is_ident(j + 2):
                    j += 2
                    continue
                j += 1
                break
            if self._text(j) == "<":
                end = self._skip_angles(j, mark=True)
                j = end if end is not None else j + 1
        if _is_sep_at(self, j, "("):
            self._count_args(j)
        else:
            while _is_sep_at(self, j, "["):
                self.dim_brackets.add(j)
                j = self._close(j) + 1

    def _identifier(self, i: int) -> None:
        prev, nxt = self._text(i - 1), self._text(i + 1)
        if i in self.ctor_idx or i in self.skip_idx:
            return
        if nxt == "(" and self._kind(i + 1) == SEPARATOR:
            if prev == "@":
                return
            after = self._close(i + 1) + 1
            if _is_sep_at(self, after, "{") or (
                self._text(after) == "throws" and self._kind(after) == KEYWORD
            ):
                # method declaration inside an anonymous or local class
                self.skip_idx.add(i)
                self._params(i + 1)
                return
            self.call_idx.add(i)
            self._count_args(i + 1)
            return
        if nxt == "->":
            self.decl_idx.add(i)
            return
        if nxt == "." and prev != "." and _static_qualifier(self.t[i].text):
            self.type_idx.add(i)

    def _maybe_cast_or_lambda(self, i: int) -> None:
        close = self._close(i)
        if self._text(close + 1) == "->":
            # (a, b) -> ... or (Type a) -> ...
            self._params(i)
            return
        prev_kind, prev_text = self._kind(i - 1), self._text(i - 1)
        if prev_kind in (IDENTIFIER,) or prev_kind in LITERAL_KINDS:
            return
        if prev_text in (")", "]") or prev_text in _NO_CAST_PREV_WORDS:
            return
        if prev_text in ("class", "interface", "enum"):
            return
        primitive = self._kind(i + 1) == KEYWORD and self._text(i + 1) in PRIMITIVE_TYPES
        end = self._parse_type(i + 1, mark=False)
        if end is None:
            return
        while self._text(end) == "&" and end < close:
            nxt = self._parse_type(end + 1, mark=False)
            if nxt is None:
                return
            end = nxt
        if end != close:
            return
        fk, ft = self._kind(close + 1), self._text(close + 1)
        ok = fk in _CAST_FOLLOW_KINDS or ft in _CAST_FOLLOW_WORDS
        if primitive and ft in _PRIM_CAST_FOLLOW:
            ok = True
        if not ok:
            return
        self.casts += 1
        j = i + 1
        while j < close:
            nxt = self._parse_type(j)
            j = (nxt or j + 1) + 1

    # -- signature ---------------------------------------------------------
    def _scan_signature(self) -> None:
        self.body_open = None
        if not self.n or not _is_sep_at(self, 0, "("):
            # degenerate stream: treat everything as a body
            return
        self.noa = self._params(0)
        j = self._close(0) + 1
        while _is_sep_at(self, j, "[") and _is_sep_at(self, j + 1, "]"):
            j += 2
        if self._text(j) == "throws" and self._kind(j) == KEYWORD:
            j += 1
            while j < self.n and not _is_sep_at(self, j, "{"):
                end = self._parse_type(j)
                if end is None:
                    j += 1
                    continue
                self.exct += 1
                j = end
                if _is_sep_at(self, j, ","):
                    j += 1
        if _is_sep_at(self, j, "{"):
            self.body_open = j

    # -- statements ----------------------------------------------------------
    def _block(self, i: int, depth: int) -> int:
        """Parse the block opened at i; return the index after its '}'."""
        end = self._close(i)
        j = i + 1
        while j < end:
            nxt = self._statement(j, depth, end)
            j = nxt if nxt > j else j + 1
        return end + 1

    def _body(self, i: int, depth: int, end: int) -> int:
        """A control-structure body one level deeper."""
        self.mdn = max(self.mdn, depth + 1)
        return self._statement(i, depth + 1, end)

    def _skip_expr(self, i: int, stops: frozenset[str] | set[str], end: int) -> int:
        j = i
        while j < end:
            tok = self.t[j]
            if tok.kind == SEPARATOR:
                if tok.text in stops:
                    return j
                if tok.text in "([{":
                    j = self._close(j) + 1
                    continue
                if tok.text in ")]}":
                    return j
            j += 1
        return end

    def _paren_condition(self, j: int) -> int:
        """Count the parenthesised condition at j; return index after ')'."""
        if not _is_sep_at(self, j, "("):
            return j
        if self._close(j) > j + 1:
            self.nexp += 1
        return self._close(j) + 1

    def _statement(self, i: int, depth: int, end: int) -> int:
        tok = self.t[i]
        kind, text = tok.kind, tok.text
        if kind == SEPARATOR:
            if text == "{":
                return self._block(i, depth)
            if text == ";":
                return i + 1
            if text == "}":
                return i + 1
            if text == "@":
                return self._statement_after_modifiers(i, depth, end)
        if kind == KEYWORD:
            handler = _STATEMENT_HANDLERS.get(text)
            if handler is not None:
                return handler(self, i, depth, end)
            if text in ("final", "abstract", "static", "strictfp"):
                return self._statement_after_modifiers(i, depth, end)
            if text in ("class", "interface", "enum"):
                return self._local_class(i, end)
            if text in PRIMITIVE_TYPES:
                decl = self._declaration(i, end)
                if decl is not None:
                    return decl
        if kind == IDENTIFIER:
            if self._text(i + 1) == ":" and self._kind(i + 1) == OPERATOR:
                self.skip_idx.add(i)
                return self._statement(i + 2, depth, end) if i + 2 < end else i + 2
            if text == "record" and self._is_ident(i + 1) and _is_sep_at(self, i + 2, "("):
                return self._local_class(i, end)
            decl = self._declaration(i, end)
            if decl is not None:
                return decl
        return self._expression_statement(i, end)

    def _statement_after_modifiers(self, i: int, depth: int, end: int) -> int:
        j = i
        while j < end:
            j = self._skip_annotations(j)
            if self._kind(j) == KEYWORD and self._text(j) in ("final", "abstract", "static", "strictfp"):
                j += 1
                continue
            break
        if self._text(j) in ("class", "interface", "enum") or (
            self._text(j) == "record" and self._is_ident(j + 1)
        ):
            return self._local_class(j, end)
        decl = self._declaration(j, end)
        if decl is not None:
            return decl
        return self._expression_statement(j, end)

    def _local_class(self, i: int, end: int) -> int:
        self.nos += 1
        j = i + 1
        while j < end and not _is_sep_at(self, j, "{"):
            if _is_sep_at(self, j, "("):
                j = self._close(j)
            j += 1
        if j >= end:
            return end
        return self._close(j) + 1

    def _declaration(self, i: int, end: int, in_header: bool = False) -> int | None:
        """Parse a local variable declaration at i; None if it is not one."""
        type_end = self._parse_type(i, mark=False)
        if type_end is None or not self._is_ident(type_end):
            return None
        follow = self._text(type_end + 1)
        allowed = ("=", ";", ",", "[", ":") if in_header else ("=", ";", ",", "[")
        if follow not in allowed:
            return None
        self._parse_type(i, mark=True)
        stops = {",", ";"}
        j = type_end
        if not in_header:
            self.nos += 1
        while j < end and self._is_ident(j):
            self.decl_idx.add(j)
            self.vdec += 1
            j += 1
            while _is_sep_at(self, j, "[") and _is_sep_at(self, j + 1, "]"):
                j += 2
            if self._text(j) == "=" and self._kind(j) == OPERATOR:
                self.nexp += 1
                j = self._skip_expr(j + 1, stops, end)
            if _is_sep_at(self, j, ","):
                j += 1
                continue
            break
        if in_header:
            return j
        if _is_sep_at(self, j, ";"):
            return j + 1
        return j

    def _expression_statement(self, i: int, end: int) -> int:
        self.nos += 1
        self.nexp += 1
        j = self._skip_expr(i, {";"}, end)
        if j < end and _is_sep_at(self, j, ";"):
            return j + 1
        return max(j, i + 1)

    def _st_if(self, i: int, depth: int, end: int) -> int:
        self.nos += 1
        self.branches += 1
        j = self._paren_condition(i + 1)
        j = self._body(j, depth, end) if j < end else j
        if j < end and self._text(j) == "else" and self._kind(j) == KEYWORD:
            if self._text(j + 1) == "if":
                return self._statement(j + 1, depth, end)
            return self._body(j + 1, depth, end) if j + 1 < end else j + 1
        return j

    def _st_while(self, i: int, depth: int, end: int) -> int:
        self.nos += 1
        self.loops += 1
        self.branches += 1
        j = self._paren_condition(i + 1)
        return self._body(j, depth, end) if j < end else j

    def _st_do(self, i: int, depth: int, end: int) -> int:
        self.nos += 1
        self.loops += 1
        self.branches += 1
        j = self._body(i + 1, depth, end) if i + 1 < end else i + 1
        if self._text(j) == "while" and self._kind(j) == KEYWORD:
            j = self._paren_condition(j + 1)
        if _is_sep_at(self, j, ";"):
            j += 1
        return j

    def _st_for(self, i: int, depth: int, end: int) -> int:
        self.nos += 1
        self.loops += 1
        self.branches += 1
        open_idx = i + 1
        if not _is_sep_at(self, open_idx, "("):
            return i + 1
        close = self._close(open_idx)
        # split header on top-level ';'
        parts: list[tuple[int, int]] = []
        start = open_idx + 1
        j = start
        enhanced_colon = None
        while j < close:
            tok = self.t[j]
            if tok.kind == SEPARATOR and tok.text in "([{":
                j = self._close(j) + 1
                continue
            if _is_sep(tok, ";"):
                parts.append((start, j))
                start = j + 1
            elif tok.kind == OPERATOR and tok.text == ":" and enhanced_colon is None:
                enhanced_colon = j
            j += 1
        parts.append((start, close))
        if len(parts) == 1 and enhanced_colon is not None:
            k = self._skip_final(open_idx + 1)
            type_end = self._parse_type(k)
            if type_end is not None and self._is_ident(type_end):
                self.decl_idx.add(type_end)
                self.vdec += 1
            self.nexp += 1
        else:
            init, cond, update = (parts + [(close, close)] * 3)[:3]
            if init[1] > init[0]:
                k = self._skip_final(init[0])
                if self._declaration(k, init[1], in_header=True) is None:
                    self._expression_list(init[0], init[1])
            if cond[1] > cond[0]:
                self.nexp += 1
            if update[1] > update[0]:
                self._expression_list(update[0], update[1])
        return self._body(close + 1, depth, end) if close + 1 < end else close + 1

    def _expression_list(self, lo: int, hi: int) -> None:
        j = lo
        count = 1
        while j < hi:
            if _is_sep_at(self, j, ","):
                count += 1
            elif self._kind(j) == SEPARATOR and self._text(j) in "([{":
                j = self._close(j)
            j += 1
        self.nexp += count

    def _st_switch(self, i: int, depth: int, end: int) -> int:
        self.nos += 1
        j = self._paren_condition(i + 1)
        if not _is_sep_at(self, j, "{"):
            return j
        close = self._close(j)
        self.mdn = max(self.mdn, depth + 1)
        k = j + 1
        while k < close:
            word = self._text(k)
            if self._kind(k) == KEYWORD and word in ("case", "default"):
                self.nos += 1
                if word == "case":
                    self.branches += 1
                k += 1
                while k < close and self._text(k) not in (":", "->"):
                    if self._kind(k) == SEPARATOR and self._text(k) in "([{":
                        k = self._close(k)
                    k += 1
                k += 1
                continue
            nxt = self._statement(k, depth + 1, close)
            k = nxt if nxt > k else k + 1
        return close + 1

    def _st_try(self, i: int, depth: int, end: int) -> int:
        self.nos += 1
        j = i + 1
        if _is_sep_at(self, j, "("):
            close = self._close(j)
            start = j + 1
            k = start
            while k <= close:
                if k == close or _is_sep_at(self, k, ";"):
                    if k > start:
                        s = self._skip_final(start)
                        if self._declaration(s, k, in_header=True) is None:
                            self.nexp += 1
                    start = k + 1
                elif self._kind(k) == SEPARATOR and self._text(k) in "([{":
                    k = self._close(k)
                k += 1
            j = close + 1
        if _is_sep_at(self, j, "{"):
            self.mdn = max(self.mdn, depth + 1)
            j = self._block(j, depth + 1)
        while self._text(j) == "catch" and self._kind(j) == KEYWORD:
            self.branches += 1
            if _is_sep_at(self, j + 1, "("):
                close = self._close(j + 1)
                k = self._skip_final(j + 2)
                while k < close:
                    type_end = self._parse_type(k)
                    if type_end is None:
                        break
                    self.excr += 1
                    k = type_end
                    if self._text(k) == "|":
                        k += 1
                        continue
                    break
                if self._is_ident(k):
                    self.decl_idx.add(k)
                    self.vdec += 1
                j = close + 1
            else:
                j += 1
            if _is_sep_at(self, j, "{"):
                self.mdn = max(self.mdn, depth + 1)
                j = self._block(j, depth + 1)
        if self._text(j) == "finally" and _is_sep_at(self, j + 1, "{"):
            self.mdn = max(self.mdn, depth + 1)
            j = self._block(j + 1, depth + 1)
        return j

    def _st_simple(self, i: int, depth: int, end: int) -> int:
        """return / throw / break / continue / assert / yield-like statements."""
        self.nos += 1
        word = self._text(i)
        if word == "throw":
            self.exct += 1
        j = i + 1
        if word in ("return", "throw", "assert") and j < end and not _is_sep_at(self, j, ";"):
            self.nexp += 1
            j = self._skip_expr(j, {";"}, end)
        else:
            j = self._skip_expr(j, {";"}, end)
        return j + 1 if _is_sep_at(self, j, ";") else max(j, i + 1)

    def _st_synchronized(self, i: int, depth: int, end: int) -> int:
        self.nos += 1
        j = self._paren_condition(i + 1)
        if _is_sep_at(self, j, "{"):
            self.mdn = max(self.mdn, depth + 1)
            return self._block(j, depth + 1)
        return j

    def _st_stray(self, i: int, depth: int, end: int) -> int:
        # 'else' / 'catch' / 'finally' without a head: skip the keyword
        return i + 1

    # -- results -------------------------------------------------------------
    def metrics(self) -> MetricsVector:
        t = self.t
        operators: Counter = Counter()
        operands: Counter = Counter()
        literal_counts = Counter()
        start = self.body_open if self.body_open is not None else 0
        for tok in t[start:]:
            kind = tok.kind
            if kind == OPERATOR or (kind == SEPARATOR and tok.text not in (";", "{", "}")):
                operators[tok.text] += 1
            elif kind == KEYWORD:
                if tok.text in CONTROL_KEYWORDS:
                    operators[tok.text] += 1
                elif tok.text in PRIMITIVE_TYPES:
                    operands[("name", tok.text)] += 1
            elif kind == IDENTIFIER:
                operands[("name", tok.text)] += 1
            elif kind in LITERAL_KINDS:
                operands[(kind, tok.text)] += 1
                literal_counts[kind] += 1
        n1, n2 = len(operators), len(operands)
        N1, N2 = sum(operators.values()), sum(operands.values())
        hdif = (n1 / 2.0) * (N2 / n2) if n2 > 0 else 0.0
        vocab = n1 + n2
        heff = hdif * (N1 + N2) * math.log2(vocab) if vocab > 0 else 0.0

        xmet = lmet = 0
        for i in self.call_idx:
            if t[i].text in self.declared:
                lmet += 1
            else:
                xmet += 1
        excluded = self.type_idx | self.decl_idx | self.call_idx | self.skip_idx | self.ctor_idx
        vref = sum(
            1
            for i in range(start, self.n)
            if t[i].kind == IDENTIFIER and i not in excluded
        )
        cref = len({t[i].text for i in self.type_idx if _capitalized(t[i].text)})
        return MetricsVector(
            XMET=xmet,
            VREF=vref,
            VDEC=self.vdec,
            NOS=self.nos,
            NOPR=N1,
            NOA=self.noa,
            NEXP=self.nexp,
            NAND=N2,
            MDN=self.mdn,
            LOOP=self.loops,
            LMET=lmet,
            HVOC=vocab,
            HEFF=heff,
            HDIF=hdif,
            EXCT=self.exct,
            EXCR=self.excr,
            CREF=cref,
            COMP=1 + self.branches,
            CAST=self.casts,
            NBLTRL=literal_counts[LIT_BOOL],
            NCLTRL=literal_counts[LIT_CHAR],
            NSLTRL=literal_counts[LIT_STRING],
            NNLTRL=literal_counts[LIT_NUMBER],
            NNULLTRL=literal_counts[LIT_NULL],
            n1=n1,
            n2=n2,
            N1=N1,
            N2=N2,
        )

    def actions(self) -> ActionBag:
        t = self.t
        bag: Counter = Counter()
        for i, tok in enumerate(t):
            if tok.kind == IDENTIFIER:
                if i in self.call_idx:
                    bag[tok.text + "()"] += 1
                elif (
                    self._text(i - 1) == "."
                    and self._kind(i - 1) == SEPARATOR
                    and i not in self.type_idx
                    and i not in self.skip_idx
                    and i not in self.ctor_idx
                ):
                    bag[tok.text] += 1
            elif _is_sep(tok, "[") and i not in self.dim_brackets:
                close = self._close(i)
                if close <= i + 1:
                    continue
                prev = t[i - 1] if i > 0 else None
                if prev is None or not (
                    prev.kind == IDENTIFIER or prev.text in (")", "]")
                ):
                    continue
                binary = any(t[k].kind == OPERATOR for k in range(i + 1, close))
                bag[ARRAY_ACCESS_BINARY if binary else ARRAY_ACCESS] += 1
        return ActionBag(bag)


def _is_sep_at(a: _Analyzer, i: int, text: str) -> bool:
    return 0 <= i < a.n and a.t[i].kind == SEPARATOR and a.t[i].text == text


_STATEMENT_HANDLERS = {
    "if": _Analyzer._st_if,
    "while": _Analyzer._st_while,
    "do": _Analyzer._st_do,
    "for": _Analyzer._st_for,
    "switch": _Analyzer._st_switch,
    "try": _Analyzer._st_try,
    "return": _Analyzer._st_simple,
    "throw": _Analyzer._st_simple,
    "break": _Analyzer._st_simple,
    "continue": _Analyzer._st_simple,
    "assert": _Analyzer._st_simple,
    "synchronized": _Analyzer._st_synchronized,
    "else": _Analyzer._st_stray,
    "catch": _Analyzer._st_stray,
    "finally": _Analyzer._st_stray,
}


def _tokens_of(method: RawMethod | list[SourceToken]) -> tuple[list[SourceToken], frozenset[str]]:
    if isinstance(method, RawMethod):
        return method.tokens, method.declared_methods
    return list(method), frozenset()


def compute_metrics(method: RawMethod | list[SourceToken]) -> MetricsVector:
    tokens, declared = _tokens_of(method)
    return _Analyzer(tokens, declared).metrics()


def extract_actions(method: RawMethod | list[SourceToken]) -> ActionBag:
    """Action tokens: call names with "()", field names, and array subscripts."""
    tokens, declared = _tokens_of(method)
    return _Analyzer(tokens, declared).actions()


def analyze(method: RawMethod) -> tuple[MetricsVector, ActionBag]:
    analyzer = _Analyzer(method.tokens, method.declared_methods)
    return analyzer.metrics(), analyzer.actions()


FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3


def fnv1a_64(data: bytes) -> int:
    h = FNV64_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV64_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def metric_hash(metrics: MetricsVector) -> int:
    """FNV-1a 64 over the integer metrics and Halstead base counts."""
    text = ",".join(str(int(getattr(metrics, name))) for name in HASH_FIELDS)
    return fnv1a_64(text.encode("ascii"))


def featurize(methods: Iterable[RawMethod], start_id: int = 0) -> list[MethodRecord]:
    """Turn raw methods into records, assigning dense ids in input order."""
    records = []
    for offset, method in enumerate(methods):
        metrics, actions = analyze(method)
        records.append(
            MethodRecord(
                id=start_id + offset,
                file_path=method.file_path,
                start_line=method.start_line,
                end_line=method.end_line,
                name=method.name,
                token_count=method.token_count,
                metrics=metrics,
                actions=actions,
                metric_hash=metric_hash(metrics),
                size_bag=Counter(size_token_texts(method.tokens)),
                tokens=method.tokens,
            )
        )
    return records


def record_to_json(record: MethodRecord) -> str:
    row = {
        "id": record.id,
        "file_path": record.file_path,
        "start_line": record.start_line,
        "end_line": record.end_line,
        "name": record.name,
        "token_count": record.token_count,
        "metrics": record.metrics.to_dict(),
        "actions": record.actions.entries,
        "metric_hash": str(record.metric_hash),
        "size_bag": dict(sorted(record.size_bag.items())),
    }
    return json.dumps(row, separators=(",", ":"))


def record_from_json(line: str) -> MethodRecord:
    row = json.loads(line)
    return MethodRecord(
        id=int(row["id"]),
        file_path=row["file_path"],
        start_line=int(row["start_line"]),
        end_line=int(row["end_line"]),
        name=row["name"],
        token_count=int(row["token_count"]),
        metrics=MetricsVector.from_dict(row["metrics"]),
        actions=ActionBag(row["actions"]),
        metric_hash=int(row["metric_hash"]),
        size_bag=Counter(row.get("size_bag", {})),
    )


def write_records(records: Iterable[MethodRecord], path: str | os.PathLike[str]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(record_to_json(record))
            fh.write("\n")


def read_records(path: str | os.PathLike[str]) -> list[MethodRecord]:
    with open(path, encoding="utf-8") as fh:
        return [record_from_json(line) for line in fh if line.strip()]
