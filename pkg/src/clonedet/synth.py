"""Synthetic Java corpora and clone mutants for desk-scale experiments.

Methods are generated as small statement trees over a large pseudo-API
vocabulary (many unrelated "library" types, each with its own methods and
fields). The tree form makes the classic clone mutations exact:

* T1 re-renders the same tokens with different layout and comments.
* T2 renames locals, parameters and the method (fresh, injective names) and
  swaps literal values through a bijection within each literal kind.
* T3 inserts, deletes and reorders statements until the blinded token-bag
  similarity to the original falls in a requested band.
"""

from __future__ import annotations

import copy
import logging
import math
import random
import string
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from clonedet.extractor import JAVA_KEYWORDS, RawMethod, extract_methods
from clonedet.pipeline import Span, TruthPair, bin_tokens, normalized_similarity

log = logging.getLogger(__name__)

N_DOMAINS = 160
_VOCAB_SEED = 20240

_ONSETS = ["b", "c", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "tr", "pl", "st", "gr"]
_VOWELS = ["a", "e", "i", "o", "u", "ai", "ou"]
_TYPE_SUFFIX = ["Buffer", "Store", "Client", "Engine", "Table", "Codec", "Queue", "Graph", "Parser", "Cache",
                "Channel", "Ledger", "Matrix", "Session", "Index", "Router"]
_VERBS = ["get", "set", "read", "write", "load", "put", "find", "open", "close", "scan", "emit", "push",
          "pop", "merge", "split", "apply", "check", "build", "parse", "flush", "reset", "mark", "seek"]
_EXCEPTIONS = ["IOException", "IllegalStateException", "IllegalArgumentException", "RuntimeException",
               "NumberFormatException"]
_COMMON_CALLS = ["toString", "equals", "hashCode", "isEmpty", "size", "append", "trim", "close"]
# tiny same-class helpers: declared in every generated class, below any size minimum
_HELPERS = ("logEvent", "ensureOpen", "notifyChange", "trace")


def _word(rng: random.Random, syllables: int) -> str:
    return "".join(rng.choice(_ONSETS) + rng.choice(_VOWELS) for _ in range(syllables))


@dataclass(frozen=True)
class Domain:
    type_name: str
    methods: tuple[str, ...]
    fields: tuple[str, ...]


def _build_vocabulary() -> tuple[list[Domain], frozenset[str]]:
    rng = random.Random(_VOCAB_SEED)
    used: set[str] = set()

    def fresh(make) -> str:
        while True:
            w = make()
            if w not in used and w not in JAVA_KEYWORDS:
                used.add(w)
                return w

    domains = []
    for _ in range(N_DOMAINS):
        tname = fresh(lambda: _word(rng, 2).capitalize() + rng.choice(_TYPE_SUFFIX))
        methods = tuple(fresh(lambda: rng.choice(_VERBS) + _word(rng, 2).capitalize()) for _ in range(12))
        fields = tuple(fresh(lambda: _word(rng, 2)) for _ in range(4))
        domains.append(Domain(tname, methods, fields))
    return domains, frozenset(used | set(_COMMON_CALLS) | set(_HELPERS) | {"length", "max", "min", "abs", "charAt"})


DOMAINS, API_NAMES = _build_vocabulary()


@dataclass(frozen=True)
class Var:
    key: int


@dataclass(frozen=True)
class Lit:
    key: int


@dataclass
class Stmt:
    head: list  # full simple statement, or the header of a compound one
    body: list["Stmt"] | None = None
    alt_head: list | None = None
    alt_body: list["Stmt"] | None = None
    tail: list | None = None  # trailer after the body (do-while condition)


@dataclass
class MethodTree:
    name: str
    modifiers: list[str]
    ret: str
    params: list[tuple[str, Var]]
    throws: list[str]
    body: list[Stmt]
    names: dict[int, str]
    lits: dict[int, tuple[str, str]]  # key -> (kind, source text)
    domain: int

    def clone(self) -> "MethodTree":
        return copy.deepcopy(self)


@dataclass
class Style:
    indent: str = "    "
    brace_newline: bool = False
    spaced: bool = True
    comment_prob: float = 0.0
    blank_prob: float = 0.0

    @classmethod
    def random(cls, rng: random.Random) -> "Style":
        return cls(
            indent=rng.choice(["    ", "  ", "\t"]),
            brace_newline=rng.random() < 0.3,
            spaced=rng.random() < 0.7,
            comment_prob=rng.choice([0.0, 0.1, 0.3]),
            blank_prob=rng.choice([0.0, 0.1]),
        )


# -- rendering ---------------------------------------------------------------

_WORDY = set(string.ascii_letters + string.digits + "_$\"'")


def _piece_text(p, m: MethodTree) -> str:
    if isinstance(p, Var):
        return m.names[p.key]
    if isinstance(p, Lit):
        return m.lits[p.key][1]
    return p


def _join(pieces: Sequence, m: MethodTree, spaced: bool) -> str:
    texts = [_piece_text(p, m) for p in pieces]
    if spaced:
        return " ".join(texts)
    out = ""
    for t in texts:
        if out and (out[-1] in _WORDY and t[0] in _WORDY or not (out[-1].isalnum() or t[0].isalnum())):
            out += " "
        out += t
    return out


def _comment(rng: random.Random) -> str:
    words = " ".join(_word(rng, 2) for _ in range(rng.randint(1, 4)))
    return f"// {words}" if rng.random() < 0.6 else f"/* {words} */"


def _render_block(stmts: list[Stmt], m: MethodTree, st: Style, depth: int, rng: random.Random) -> list[str]:
    lines: list[str] = []
    pad = st.indent * depth
    for s in stmts:
        if st.comment_prob and rng.random() < st.comment_prob:
            lines.append(pad + _comment(rng))
        if st.blank_prob and rng.random() < st.blank_prob:
            lines.append("")
        if s.body is None:
            lines.append(pad + _join(s.head, m, st.spaced))
            continue
        lines.extend(_open(pad, _join(s.head, m, st.spaced), st))
        lines.extend(_render_block(s.body, m, st, depth + 1, rng))
        if s.alt_head is not None:
            alt = _join(s.alt_head, m, st.spaced)
            if st.brace_newline:
                lines.append(pad + "}")
                lines.extend(_open(pad, alt, st))
            else:
                lines.append(pad + "} " + alt + " {")
            lines.extend(_render_block(s.alt_body or [], m, st, depth + 1, rng))
        if s.tail is not None:
            lines.append(pad + "} " + _join(s.tail, m, st.spaced))
        else:
            lines.append(pad + "}")
    return lines


def _open(pad: str, header: str, st: Style) -> list[str]:
    if st.brace_newline:
        return [pad + header, pad + "{"]
    return [pad + header + " {"]


def render_method(m: MethodTree, style: Style | None = None, seed: int = 0, depth: int = 1) -> list[str]:
    st = style or Style()
    rng = random.Random(seed)
    params = ", ".join(f"{t} {m.names[v.key]}" for t, v in m.params)
    sig = " ".join(m.modifiers + [m.ret, f"{m.name}({params})"])
    if m.throws:
        sig += " throws " + ", ".join(m.throws)
    pad = st.indent * depth
    lines = _open(pad, sig, st)
    lines.extend(_render_block(m.body, m, st, depth + 1, rng))
    lines.append(pad + "}")
    return lines


def render_class(name: str, methods: Sequence[MethodTree], styles: Sequence[Style] | None = None, seed: int = 0) -> str:
    rng = random.Random(seed)
    out = [f"public class {name} {{"]
    out += [f"    private void {h}(Object o) {{ }}" for h in _HELPERS]
    for k, m in enumerate(methods):
        out.append("")
        out.extend(render_method(m, styles[k] if styles else None, rng.randrange(1 << 30)))
    out.append("}")
    return "\n".join(out) + "\n"


def method_tokens(m: MethodTree) -> RawMethod:
    """Extract the rendered method back through the real extractor."""
    text = render_class("Probe", [m])
    found = [r for r in extract_methods("Probe.java", text, min_tokens=0) if r.name == m.name]
    if len(found) != 1:
        raise RuntimeError(f"rendered method did not round-trip ({len(found)} methods)")
    return found[0]


# -- generation --------------------------------------------------------------


class _Gen:
    def __init__(self, rng: random.Random, m: MethodTree, names: "NamePool"):
        self.rng = rng
        self.m = m
        self.names = names
        self.dom = DOMAINS[m.domain]
        self.alt = DOMAINS[(m.domain + 1 + rng.randrange(N_DOMAINS - 1)) % N_DOMAINS]
        self.vars: dict[str, list[Var]] = {}
        self.api = rng.sample(self.dom.methods, rng.randint(3, 6))
        self.fields = rng.sample(self.dom.fields, rng.randint(1, 3))
        for t, v in m.params:
            self.vars.setdefault(t, []).append(v)

    # naming
    def new_var(self, t: str) -> Var:
        key = len(self.m.names)
        while key in self.m.names:
            key += 1
        self.m.names[key] = self.names.fresh()
        v = Var(key)
        self.vars.setdefault(t, []).append(v)
        return v

    def lit(self, kind: str) -> Lit:
        key = len(self.m.lits)
        while key in self.m.lits:
            key += 1
        r = self.rng
        if kind == "number":
            text = str(r.choice([0, 1, 1, 2, 10, r.randint(0, 999)]))
        elif kind == "double":
            text = f"{r.randint(0, 99)}.{r.randint(1, 9)}"
        elif kind == "string":
            text = '"' + " ".join(_word(r, r.randint(1, 2)) for _ in range(r.randint(1, 3))) + '"'
        elif kind == "char":
            text = "'" + r.choice(string.ascii_lowercase) + "'"
        elif kind == "bool":
            text = r.choice(["true", "false"])
        else:
            text = "null"
        self.m.lits[key] = (kind, text)
        return Lit(key)

    def var(self, t: str) -> Var | None:
        vs = self.vars.get(t)
        return self.rng.choice(vs) if vs else None

    def obj(self) -> list:
        v = self.var(self.dom.type_name)
        if v is None or self.rng.random() < 0.1:
            return ["new", self.dom.type_name, "(", ")"] if v is None else [v]
        return [v]

    # expressions
    def call(self, d: int) -> list:
        r = self.rng.random()
        if r < 0.7:
            return self.obj() + [".", self.rng.choice(self.api), "("] + self.args(d) + [")"]
        if r < 0.8:
            return [self.dom.type_name, ".", self.rng.choice(self.api), "("] + self.args(d) + [")"]
        if r < 0.9:
            return [self.alt.type_name, ".", self.rng.choice(self.alt.methods), "("] + self.args(d) + [")"]
        o = self.var("String")
        base = [o] if o is not None else self.obj()
        return base + [".", self.rng.choice(_COMMON_CALLS), "(", ")"]

    def args(self, d: int) -> list:
        out: list = []
        for k in range(self.rng.choice([0, 1, 1, 2, 2, 3])):
            if k:
                out.append(",")
            out += self.expr(self.rng.choice(["int", "int", "String", "bool", "double"]), d - 1)
        return out

    def expr(self, t: str, d: int = 2) -> list:
        r = self.rng.random()
        if d <= 0:
            r *= 0.4
        if t == "bool":
            return self.cond(d)
        if t == "String":
            v = self.var("String")
            if r < 0.3 or (v is None and r < 0.6):
                return [self.lit("string")]
            if r < 0.6:
                return [v]
            if r < 0.72:
                return [v or self.lit("string"), "+"] + self.expr("int", d - 1)
            if r < 0.8:
                return [v or self.lit("string"), "+", self.lit("char")]
            return self.call(d)
        if t == "double":
            v = self.var("double")
            if r < 0.4:
                return [v] if v is not None else [self.lit("double")]
            if r < 0.6:
                return [self.lit("double")]
            if r < 0.8:
                return self.expr("double", d - 1) + [self.rng.choice(["*", "/", "+"])] + self.expr("int", d - 1)
            return ["Math", ".", self.rng.choice(["max", "min"]), "("] + self.expr("double", d - 1) + [","] + self.expr("double", d - 1) + [")"]
        # int / long
        v = self.var("int") or self.var("long")
        if r < 0.25:
            return [v] if v is not None else [self.lit("number")]
        if r < 0.4:
            return [self.lit("number")]
        if r < 0.6:
            return self.expr("int", d - 1) + [self.rng.choice(["+", "-", "*", "/", "%"])] + self.expr("int", d - 1)
        if r < 0.75:
            return self.call(d)
        if r < 0.83:
            return self.obj() + [".", self.rng.choice(self.fields)]
        a = self.var("int[]")
        if a is not None:
            roll = self.rng.random()
            if roll < 0.3:
                return [a, ".", "length"]
            idx = [v or self.lit("number")]
            if roll > 0.7:
                idx += [self.rng.choice(["+", "-"]), self.lit("number")]
            return [a, "["] + idx + ["]"]
        if r < 0.9:
            return ["(", "int", ")"] + self.expr("double", d - 1)
        return ["Math", ".", "abs", "("] + self.expr("int", d - 1) + [")"]

    def cond(self, d: int) -> list:
        r = self.rng.random()
        if d <= 0:
            r *= 0.5
        if r < 0.35:
            return self.expr("int", d - 1) + [self.rng.choice(["<", ">", "<=", ">=", "==", "!="])] + self.expr("int", d - 1)
        if r < 0.5:
            b = self.var("boolean")
            return ["!", b] if b is not None and r < 0.42 else ([b] if b is not None else [self.lit("bool")])
        if r < 0.65:
            o = self.var("String") or self.var(self.dom.type_name)
            return [o if o is not None else self.lit("string"), self.rng.choice(["==", "!="]), self.lit("null")]
        if r < 0.72:
            return self.obj() + [".", self.rng.choice(self.api), "("] + self.args(d - 1) + [")"]
        if r < 0.8:
            s = self.var("String")
            if s is not None:
                return [s, ".", "charAt", "("] + self.expr("int", 0) + [")", "==", self.lit("char")]
            return self.obj() + [".", self.rng.choice(self.api), "("] + self.args(d - 1) + [")"]
        return self.cond(d - 1) + [self.rng.choice(["&&", "||"])] + self.cond(d - 1)

    # statements
    def simple(self, d: int) -> Stmt:
        r = self.rng.random()
        if r < 0.35:
            t = self.rng.choice(["int", "int", "long", "double", "boolean", "String", "OBJ", "ARR"])
            if t == "OBJ":
                v = self.new_var(self.dom.type_name)
                init = ["new", self.dom.type_name, "("] + self.args(d) + [")"] if self.rng.random() < 0.5 else self.call(d)
                return Stmt([self.dom.type_name, v, "="] + init + [";"])
            if t == "ARR":
                v = self.new_var("int[]")
                return Stmt(["int", "[", "]", v, "=", "new", "int", "["] + self.expr("int", 1) + ["]", ";"])
            key = {"boolean": "bool"}.get(t, t)
            v = self.new_var(t if t != "long" else "int")
            return Stmt([t, v, "="] + self.expr("int" if key == "long" else key, d) + [";"])
        if r < 0.55:
            v = self.var("int")
            if v is not None:
                roll = self.rng.random()
                if roll < 0.3:
                    return Stmt([v, self.rng.choice(["++", "--"]), ";"])
                return Stmt([v, self.rng.choice(["=", "+=", "-=", "*="])] + self.expr("int", d) + [";"])
        if r < 0.65:
            s = self.var("String")
            if s is not None:
                return Stmt([s, "="] + self.expr("String", d) + [";"])
        if r < 0.73:
            a = self.var("int[]")
            if a is not None:
                return Stmt([a, "["] + self.expr("int", 0) + ["]", "="] + self.expr("int", d) + [";"])
        if r < 0.78:
            return Stmt(["System", ".", "out", ".", "println", "("] + self.expr("String", d) + [")", ";"])
        if r < 0.82:
            return Stmt([self.rng.choice(_HELPERS), "("] + self.expr("String", 0) + [")", ";"])
        return Stmt(self.call(d) + [";"])

    def block(self, d: int, n: int | None = None) -> list[Stmt]:
        n = n if n is not None else self.rng.randint(1, 3)
        return [self.statement(d) for _ in range(n)]

    def statement(self, d: int = 2) -> Stmt:
        r = self.rng.random()
        if d <= 0 or r < 0.62:
            return self.simple(1)
        d -= 1
        if r < 0.74:
            s = Stmt(["if", "("] + self.cond(1) + [")"], self.block(d))
            if self.rng.random() < 0.35:
                s.alt_head, s.alt_body = ["else"], self.block(d)
            elif self.rng.random() < 0.15:
                exc = self.rng.choice(_EXCEPTIONS)
                s.body.append(Stmt(["throw", "new", exc, "(", self.lit("string"), ")", ";"]))
            return s
        if r < 0.83:
            i = self.new_var("int")
            bound = self.expr("int", 1)
            return Stmt(["for", "(", "int", i, "=", self.lit("number"), ";", i, "<"] + bound + [";", i, "++", ")"],
                        self.block(d))
        if r < 0.88:
            x = self.new_var(self.dom.type_name)
            src = self.obj() + [".", self.rng.choice(self.api), "(", ")"]
            return Stmt(["for", "(", self.dom.type_name, x, ":"] + src + [")"], self.block(d))
        if r < 0.92:
            if self.rng.random() < 0.6:
                return Stmt(["while", "("] + self.cond(1) + [")"], self.block(d))
            return Stmt(["do"], self.block(d), tail=["while", "("] + self.cond(1) + [")", ";"])
        if r < 0.96:
            exc = self.rng.choice(_EXCEPTIONS)
            e = self.new_var(exc)
            return Stmt(["try"], self.block(d), ["catch", "(", exc, e, ")"], self.block(d, self.rng.randint(0, 2)))
        v = self.var("int")
        subject = [v] if v is not None else self.call(0)
        body: list[Stmt] = []
        for _ in range(self.rng.randint(1, 3)):
            body.append(Stmt(["case", self.lit("number"), ":"]))
            body.extend(self.block(0, self.rng.randint(1, 2)))
            body.append(Stmt(["break", ";"]))
        body.append(Stmt(["default", ":"]))
        body.append(self.simple(1))
        return Stmt(["switch", "("] + subject + [")"], body)


class NamePool:
    """Fresh lowercase identifiers that never collide with the API vocabulary."""

    def __init__(self, rng: random.Random):
        self.rng = rng
        self.used: set[str] = set()

    def fresh(self) -> str:
        while True:
            w = _word(self.rng, self.rng.choice([1, 2, 2, 3]))
            if w not in self.used and w not in API_NAMES and w not in JAVA_KEYWORDS:
                self.used.add(w)
                return w

    def method_name(self) -> str:
        while True:
            w = self.rng.choice(["do", "calc", "handle", "run", "make", "to"]) + _word(self.rng, 2).capitalize()
            if w not in self.used and w not in API_NAMES:
                self.used.add(w)
                return w


def _size_estimate(stmts: Iterable[Stmt], m: MethodTree) -> int:
    total = 0

    def count(pieces):
        n = 0
        for p in pieces or ():
            if isinstance(p, Var):
                n += 1
            elif isinstance(p, Lit):
                kind, text = m.lits[p.key]
                n += max(1, len(text.strip('"').split())) if kind == "string" else 1
            elif p[0].isalnum() or p[0] == "_":
                n += 1
        return n

    for s in stmts:
        total += count(s.head) + count(s.alt_head) + count(s.tail)
        total += _size_estimate(s.body or [], m) + _size_estimate(s.alt_body or [], m)
    return total


def generate_method(rng: random.Random, names: NamePool, target_tokens: int, domain: int | None = None) -> MethodTree:
    dom_idx = rng.randrange(N_DOMAINS) if domain is None else domain
    dom = DOMAINS[dom_idx]
    m = MethodTree(
        name=names.method_name(),
        modifiers=rng.choice([["public"], ["private"], ["public", "static"], ["protected"], []]),
        ret="void",
        params=[],
        throws=[],
        body=[],
        names={},
        lits={},
        domain=dom_idx,
    )
    g = _Gen(rng, m, names)
    ptypes = [dom.type_name] + rng.sample(["int", "String", "int[]", "double", "boolean", "long"], rng.randint(0, 3))
    if rng.random() < 0.2:
        ptypes = ptypes[1:] or ["int"]
    for t in ptypes:
        v = g.new_var("int" if t == "long" else t)
        m.params.append((t, v))
    if rng.random() < 0.15:
        m.throws = [rng.choice(_EXCEPTIONS)]
    ret = rng.choice(["void", "void", "int", "String", "boolean", dom.type_name])
    m.ret = ret
    # at least one call so the method has an action signature
    m.body.append(Stmt(g.call(1) + [";"]) if rng.random() < 0.5 else g.simple(1))
    budget = target_tokens - (6 if ret != "void" else 0)
    while _size_estimate(m.body, m) + 2 * len(m.params) < budget:
        m.body.append(g.statement(2))
    if not any(isinstance(p, str) and p == "(" for s in m.body for p in s.head):
        m.body.insert(0, Stmt(g.call(1) + [";"]))
    if ret != "void":
        key = {"int": "int", "String": "String", "boolean": "bool"}.get(ret)
        value = g.expr(key, 1) if key else g.obj()
        m.body.append(Stmt(["return"] + value + [";"]))
    return m


def _target_size(rng: random.Random, lo: int, hi: int, median: float = 90.0) -> int:
    return int(min(hi, max(lo, rng.lognormvariate(math.log(median), 0.5))))


def generate_methods(n: int, seed: int, lo: int = 20, hi: int = 300, median: float = 90.0) -> list[MethodTree]:
    rng = random.Random(seed)
    names = NamePool(rng)
    return [generate_method(rng, names, _target_size(rng, lo, hi, median)) for _ in range(n)]


# -- mutation ----------------------------------------------------------------


def _all_blocks(stmts: list[Stmt], top: bool = True) -> list[list[Stmt]]:
    out = [stmts]
    for s in stmts:
        if s.body is not None and not (s.head and s.head[0] == "switch"):
            out += _all_blocks(s.body, False)
        if s.alt_body is not None:
            out += _all_blocks(s.alt_body, False)
    return out


def _is_return(s: Stmt) -> bool:
    return s.body is None and bool(s.head) and s.head[0] == "return"


def mutate_t1(m: MethodTree) -> MethodTree:
    """Same tree; T1 differences come from rendering with another style."""
    return m.clone()


def mutate_t2(m: MethodTree, rng: random.Random, names: NamePool) -> MethodTree:
    out = m.clone()
    out.name = names.method_name()
    out.names = {k: names.fresh() for k in m.names}
    by_kind: dict[str, list[str]] = {}
    for kind, text in m.lits.values():
        by_kind.setdefault(kind, [])
        if text not in by_kind[kind]:
            by_kind[kind].append(text)
    mapping: dict[tuple[str, str], str] = {}
    for kind, values in by_kind.items():
        if kind == "bool":
            swap = rng.random() < 0.5
            for v in values:
                mapping[(kind, v)] = {"true": "false", "false": "true"}[v] if swap else v
            continue
        if kind == "null":
            for v in values:
                mapping[(kind, v)] = v
            continue
        taken = set(values)
        for v in values:
            while True:
                if kind == "number":
                    new = str(rng.randint(0, 9999))
                elif kind == "double":
                    new = f"{rng.randint(0, 999)}.{rng.randint(1, 9)}"
                elif kind == "char":
                    new = "'" + rng.choice(string.ascii_letters) + "'"
                else:
                    words = len(v.strip('"').split())
                    new = '"' + " ".join(_word(rng, 2) for _ in range(words)) + '"'
                if new not in taken:
                    taken.add(new)
                    mapping[(kind, v)] = new
                    break
    out.lits = {k: (kind, mapping[(kind, text)]) for k, (kind, text) in m.lits.items()}
    return out


class _Editor:
    def __init__(self, m: MethodTree, rng: random.Random, names: NamePool):
        self.m = m
        self.rng = rng
        self.gen = _Gen(rng, m, names)
        self._index_vars(m.body)

    def _index_vars(self, stmts: list[Stmt]) -> None:
        # reuse every declared variable so inserted code reads like the method's own
        for s in stmts:
            pieces = s.head
            if len(pieces) >= 3 and isinstance(pieces[1], Var) and isinstance(pieces[0], str) and pieces[2] == "=":
                t = {"long": "int", "boolean": "boolean"}.get(pieces[0], pieces[0])
                self.gen.vars.setdefault(t, []).append(pieces[1])
            self._index_vars(s.body or [])
            self._index_vars(s.alt_body or [])

    def insert(self) -> None:
        block = self.rng.choice(_all_blocks(self.m.body))
        limit = len(block) - (1 if block is self.m.body and block and _is_return(block[-1]) else 0)
        block.insert(self.rng.randint(0, max(limit, 0)), self.gen.statement(self.rng.choice([0, 1, 1, 2])))

    def delete(self) -> bool:
        blocks = [b for b in _all_blocks(self.m.body) if len(b) > 1]
        if not blocks:
            return False
        block = self.rng.choice(blocks)
        choices = [i for i, s in enumerate(block) if not _is_return(s) and s.head[0] not in ("case", "default", "break")]
        if not choices:
            return False
        del block[self.rng.choice(choices)]
        return True

    def reorder(self) -> bool:
        blocks = [b for b in _all_blocks(self.m.body) if len(b) > 2]
        if not blocks:
            return False
        block = self.rng.choice(blocks)
        limit = len(block) - (1 if _is_return(block[-1]) else 0)
        if limit < 2:
            return False
        i = self.rng.randrange(limit - 1)
        block[i], block[i + 1] = block[i + 1], block[i]
        return True

    def step(self) -> None:
        r = self.rng.random()
        if r < 0.45:
            self.insert()
        elif r < 0.85:
            if not self.delete():
                self.insert()
        elif not self.reorder():
            self.insert()


def mutate_t3(
    m: MethodTree,
    rng: random.Random,
    names: NamePool,
    band: tuple[float, float] = (0.5, 0.7),
    attempts: int = 40,
    max_steps: int = 60,
) -> MethodTree | None:
    """Statement-level edits until blinded bag similarity is in [lo, hi)."""
    base = method_tokens(m).tokens
    lo, hi = band
    for _ in range(attempts):
        mut = m.clone()
        editor = _Editor(mut, rng, names)
        for _ in range(max_steps):
            editor.step()
            sim = normalized_similarity(base, method_tokens(mut).tokens)
            if lo <= sim < hi:
                return mut
            if sim < lo:
                break
    return None


def mutate_edits(m: MethodTree, rng: random.Random, names: NamePool, edits: int) -> MethodTree:
    mut = m.clone()
    editor = _Editor(mut, rng, names)
    for _ in range(edits):
        editor.step()
    return mut


# -- corpora -----------------------------------------------------------------


def write_corpus(
    root: str | Path,
    methods: Sequence[MethodTree],
    per_file: int = 20,
    seed: int = 0,
    prefix: str = "src",
) -> list[Path]:
    """Write methods into class files of ``per_file`` methods each (random styles)."""
    root = Path(root)
    rng = random.Random(seed)
    paths = []
    for f, start in enumerate(range(0, len(methods), per_file)):
        chunk = methods[start : start + per_file]
        pkg = root / prefix / f"p{f // 100:03d}"
        pkg.mkdir(parents=True, exist_ok=True)
        name = f"Gen{f:05d}"
        styles = [Style.random(rng) for _ in chunk]
        path = pkg / f"{name}.java"
        path.write_text(render_class(name, chunk, styles, rng.randrange(1 << 30)), encoding="utf-8")
        paths.append(path)
    return paths


def training_families(
    families: int, family_size: int, seed: int, lo: int = 55, hi: int = 300
) -> list[MethodTree]:
    """Families of related methods with mixed mutation strength, shuffled."""
    rng = random.Random(seed)
    names = NamePool(rng)
    out = []
    for _ in range(families):
        base = generate_method(rng, names, _target_size(rng, lo, hi))
        out.append(base)
        for _ in range(family_size - 1):
            v = base
            if rng.random() < 0.3:
                v = mutate_t2(v, rng, names)
            edits = rng.choice([0, 1, 1, 2, 2, 3, 4, 5, 6, 8, 10])
            v = mutate_edits(v, rng, names, edits) if edits else v.clone()
            if v is base:
                v = base.clone()
            out.append(v)
    rng.shuffle(out)
    return out


@dataclass
class Benchmark:
    truth: list[TruthPair]
    files: int
    failed_mutations: int = 0


def _write_single(path: Path, m: MethodTree, style: Style, seed: int) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_class(path.stem, [m], [style], seed), encoding="utf-8")


def _span(path: Path, root: Path, name: str) -> tuple[Span, int, RawMethod]:
    rel = path.relative_to(root).as_posix()
    found = [r for r in extract_methods(rel, path.read_text(encoding="utf-8"), min_tokens=0) if r.name == name]
    if len(found) != 1:
        raise RuntimeError(f"{rel}: expected one method, found {len(found)}")
    raw = found[0]
    return Span(rel, raw.start_line, raw.end_line), raw.token_count, raw


def make_benchmark(
    root: str | Path,
    counts: dict[str, int],
    seed: int,
    distractors: int = 0,
    lo: int = 60,
    hi: int = 300,
) -> Benchmark:
    """Originals plus injected mutants (one method per file) and a truth list.

    ``counts`` maps a clone type (T1, T2, MT3) to the number of mutants.
    Each truth row carries the category measured on the rendered pair.
    """
    root = Path(root)
    rng = random.Random(seed)
    names = NamePool(rng)
    truth: list[TruthPair] = []
    failed = 0
    serial = 0
    for kind, n in counts.items():
        made = 0
        while made < n:
            base = generate_method(rng, names, _target_size(rng, lo, hi))
            if kind == "T1":
                mut = mutate_t1(base)
            elif kind == "T2":
                mut = mutate_t2(base, rng, names)
            elif kind == "MT3":
                mut = mutate_t3(base, rng, names, (0.5, 0.7))
            else:
                raise ValueError(f"unsupported mutant kind {kind!r}")
            if mut is None:
                failed += 1
                continue
            tag = kind.replace("/", "_")
            a_path = root / "orig" / f"Orig{tag}{serial:04d}.java"
            b_path = root / "mut" / f"Mut{tag}{serial:04d}.java"
            _write_single(a_path, base, Style.random(rng), rng.randrange(1 << 30))
            _write_single(b_path, mut, Style.random(rng), rng.randrange(1 << 30))
            sa, ta, ra = _span(a_path, root, base.name)
            sb, tb, rb = _span(b_path, root, mut.name)
            category = bin_tokens(ra.tokens, rb.tokens)
            if category != kind:
                # layout-only mutants can coincide by chance; regenerate rather than mislabel
                failed += 1
                a_path.unlink()
                b_path.unlink()
                continue
            truth.append(TruthPair(sa, sb, category, ta, tb))
            serial += 1
            made += 1
    files = 2 * serial
    if distractors:
        noise = [generate_method(rng, names, _target_size(rng, 20, hi)) for _ in range(distractors)]
        files += len(write_corpus(root, noise, per_file=10, seed=rng.randrange(1 << 30), prefix="noise"))
    return Benchmark(truth, files, failed)
