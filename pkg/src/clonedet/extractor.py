"""Java lexing and method-boundary extraction.

The extractor works on a flat token stream plus brace matching; it does not
build a Java AST. A method unit spans from the opening parenthesis of its
parameter list to the closing brace of its body.
"""

from __future__ import annotations

import logging
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

log = logging.getLogger(__name__)

KEYWORD = "keyword"
IDENTIFIER = "identifier"
LIT_BOOL = "literal-bool"
LIT_CHAR = "literal-char"
LIT_STRING = "literal-string"
LIT_NUMBER = "literal-number"
LIT_NULL = "literal-null"
OPERATOR = "operator"
SEPARATOR = "separator"

TOKEN_KINDS = (
    KEYWORD,
    IDENTIFIER,
    LIT_BOOL,
    LIT_CHAR,
    LIT_STRING,
    LIT_NUMBER,
    LIT_NULL,
    OPERATOR,
    SEPARATOR,
)
LITERAL_KINDS = frozenset({LIT_BOOL, LIT_CHAR, LIT_STRING, LIT_NUMBER, LIT_NULL})

JAVA_KEYWORDS = frozenset(
    """
    abstract assert boolean break byte case catch char class const continue
    default do double else enum extends final finally float for goto if
    implements import instanceof int interface long native new package private
    protected public return short static strictfp super switch synchronized
    this throw throws transient try void volatile while
    """.split()
)

DEFAULT_MIN_TOKENS = 15
TRAINING_MIN_TOKENS = 50


class LexError(ValueError):
    """Unterminated literal/comment or an unlexable character."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ExtractionError(ValueError):
    """A file whose structure cannot be brace-matched."""


@dataclass(frozen=True, slots=True)
class SourceToken:
    kind: str
    text: str
    line: int


@dataclass
class RawMethod:
    file_path: str
    start_line: int
    end_line: int
    name: str
    tokens: list[SourceToken]
    token_count: int = -1
    declared_methods: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        if self.token_count < 0:
            self.token_count = count_size_tokens(self.tokens)


# Longest alternatives first: the regex engine takes the first that matches.
_OPERATORS = sorted(
    """
    >>>= <<= >>= >>> -> == >= <= != && || ++ -- += -= *= /= &= |= ^= %= << >>
    = > < ! ~ ? : + - * / & | ^ %
    """.split(),
    key=len,
    reverse=True,
)
_SEPARATORS = ["...", "::", "(", ")", "{", "}", "[", "]", ";", ",", ".", "@"]

_NUMBER = (
    r"0[xX][0-9a-fA-F_]*\.?[0-9a-fA-F_]*(?:[pP][+-]?\d+)?[lLfFdD]?"
    r"|0[bB][01_]+[lL]?"
    r"|\d[\d_]*\.[\d_]*(?:[eE][+-]?\d[\d_]*)?[fFdD]?"
    r"|\.\d[\d_]*(?:[eE][+-]?\d[\d_]*)?[fFdD]?"
    r"|\d[\d_]*(?:[eE][+-]?\d[\d_]*)?[fFdDlL]?"
)

_MASTER = re.compile(
    r"(?P<ws>\s+)"
    r"|(?P<line_comment>//[^\n]*)"
    r"|(?P<block_comment>/\*)"
    r'|(?P<text_block>""")'
    r'|(?P<string>")'
    r"|(?P<char>')"
    rf"|(?P<number>{_NUMBER})"
    r"|(?P<word>(?:[^\W\d]|\$)(?:\w|\$)*)"
    "|(?P<sep>" + "|".join(re.escape(s) for s in _SEPARATORS) + ")"
    "|(?P<op>" + "|".join(re.escape(o) for o in _OPERATORS) + ")"
)
# Separators are tried before operators so "..." and "::" win over ":" and ".".

_STRING_BODY = re.compile(r'(?:[^"\\\n]|\\.)*"')
_CHAR_BODY = re.compile(r"(?:[^'\\\n]|\\.)*'")


def tokenize(source_text: str) -> list[SourceToken]:
    """Lex Java source into classified tokens, dropping whitespace and comments.

    String and character literal texts keep their raw content (escapes are not
    interpreted) without the surrounding quotes.

    Raises:
        LexError: on an unterminated string, char, text block or comment, or a
            character that starts no Java token.
    """
    tokens: list[SourceToken] = []
    pos = 0
    line = 1
    n = len(source_text)
    while pos < n:
        m = _MASTER.match(source_text, pos)
        if m is None:
            raise LexError(f"unexpected character {source_text[pos]!r}", line)
        group = m.lastgroup
        end = m.end()
        if group == "ws" or group == "line_comment":
            line += source_text.count("\n", pos, end)
            pos = end
            continue
        if group == "block_comment":
            close = source_text.find("*/", end)
            if close < 0:
                raise LexError("unterminated comment", line)
            line += source_text.count("\n", pos, close + 2)
            pos = close + 2
            continue
        if group == "text_block":
            close = end
            while True:
                close = source_text.find('"""', close)
                if close < 0:
                    raise LexError("unterminated text block", line)
                # an escaped quote run does not terminate the block
                backslashes = 0
                j = close - 1
                while j >= end and source_text[j] == "\\":
                    backslashes += 1
                    j -= 1
                if backslashes % 2 == 0:
                    break
                close += 1
            tokens.append(SourceToken(LIT_STRING, source_text[end:close], line))
            line += source_text.count("\n", pos, close + 3)
            pos = close + 3
            continue
        if group == "string" or group == "char":
            body = (_STRING_BODY if group == "string" else _CHAR_BODY).match(source_text, end)
            if body is None:
                what = "string" if group == "string" else "character"
                raise LexError(f"unterminated {what} literal", line)
            kind = LIT_STRING if group == "string" else LIT_CHAR
            tokens.append(SourceToken(kind, source_text[end : body.end() - 1], line))
            pos = body.end()
            continue
        text = m.group()
        if group == "number":
            kind = LIT_NUMBER
        elif group == "word":
            if text in ("true", "false"):
                kind = LIT_BOOL
            elif text == "null":
                kind = LIT_NULL
            elif text in JAVA_KEYWORDS:
                kind = KEYWORD
            else:
                kind = IDENTIFIER
        elif group == "sep":
            kind = SEPARATOR
        else:
            kind = OPERATOR
        tokens.append(SourceToken(kind, text, line))
        pos = end
    return tokens


def size_token_texts(tokens: Iterable[SourceToken]) -> list[str]:
    """Texts of the tokens that count towards method size.

    Keywords, identifiers and literals count; each string literal is split on
    whitespace and contributes one entry per word (at least one).
    """
    out: list[str] = []
    for tok in tokens:
        if tok.kind == LIT_STRING:
            words = tok.text.split()
            out.extend(words if words else [""])
        elif tok.kind in (KEYWORD, IDENTIFIER) or tok.kind in LITERAL_KINDS:
            out.append(tok.text)
    return out


def count_size_tokens(tokens: Iterable[SourceToken]) -> int:
    count = 0
    for tok in tokens:
        if tok.kind == LIT_STRING:
            count += max(1, len(tok.text.split()))
        elif tok.kind in (KEYWORD, IDENTIFIER) or tok.kind in LITERAL_KINDS:
            count += 1
    return count


_TYPE_DECL_WORDS = frozenset({"class", "interface", "enum"})
_NOT_DECL_PREV = frozenset({"new", ".", "@", "=", "return", "throw"})


def _match_brackets(tokens: list[SourceToken]) -> dict[int, int]:
    """Map each opening (, [ and { index to its closing index."""
    pairs: dict[int, int] = {}
    stack: list[int] = []
    closers = {")": "(", "]": "[", "}": "{"}
    for i, tok in enumerate(tokens):
        if tok.kind != SEPARATOR:
            continue
        if tok.text in "([{":
            stack.append(i)
        elif tok.text in closers:
            if not stack or tokens[stack[-1]].text != closers[tok.text]:
                raise ExtractionError(f"unbalanced {tok.text!r} at line {tok.line}")
            pairs[stack.pop()] = i
    if stack:
        tok = tokens[stack[-1]]
        raise ExtractionError(f"unclosed {tok.text!r} from line {tok.line}")
    return pairs


def _is(tok: SourceToken, text: str) -> bool:
    return tok.text == text and tok.kind in (SEPARATOR, OPERATOR, KEYWORD)


class _MemberScanner:
    """Walk class-member level tokens and collect method declarations."""

    def __init__(self, tokens: list[SourceToken], pairs: dict[int, int]):
        self.tokens = tokens
        self.pairs = pairs
        # (decl_start, name_idx, paren_idx, body_open_idx)
        self.found: list[tuple[int, int, int, int]] = []
        self.declared: set[str] = set()

    def scan(self, lo: int, hi: int, enum_body: bool = False) -> None:
        """Scan member-level tokens in [lo, hi)."""
        toks = self.tokens
        i = lo
        decl_start = lo
        if enum_body:
            # enum constants run until the first top-level ';'
            while i < hi and not _is(toks[i], ";"):
                if toks[i].kind == SEPARATOR and toks[i].text in "([{":
                    i = self.pairs[i]
                i += 1
            i += 1
            decl_start = i
        while i < hi:
            tok = toks[i]
            if tok.kind == SEPARATOR and tok.text in (";", "}"):
                i += 1
                decl_start = i
                continue
            if tok.kind == SEPARATOR and tok.text == "{":
                # initializer block or a brace we do not understand
                i = self.pairs[i] + 1
                decl_start = i
                continue
            if tok.kind == SEPARATOR and tok.text in ("(", "["):
                i = self.pairs[i] + 1
                continue
            if _is(tok, "=") :
                i = self._skip_initializer(i, hi)
                decl_start = i
                continue
            if (tok.kind == KEYWORD and tok.text in _TYPE_DECL_WORDS) or (
                tok.kind == IDENTIFIER
                and tok.text == "record"
                and i + 2 < hi
                and toks[i + 1].kind == IDENTIFIER
            ):
                if i > lo and _is(toks[i - 1], "."):
                    i += 1  # Foo.class literal
                    continue
                body = self._find_body_open(i, hi)
                if body is None:
                    i += 1
                    continue
                self.scan(body + 1, self.pairs[body], enum_body=tok.text == "enum")
                i = self.pairs[body] + 1
                decl_start = i
                continue
            if (
                tok.kind == IDENTIFIER
                and i + 1 < hi
                and _is(toks[i + 1], "(")
                and not (i > lo and toks[i - 1].text in _NOT_DECL_PREV)
            ):
                close = self.pairs[i + 1]
                j = close + 1
                while j < hi and _is(toks[j], "[") :
                    j = self.pairs[j] + 1
                if j < hi and _is(toks[j], "throws"):
                    while j < hi and not (toks[j].kind == SEPARATOR and toks[j].text in "{;"):
                        j += 1
                self.declared.add(tok.text)
                if j < hi and _is(toks[j], "{"):
                    self.found.append((decl_start, i, i + 1, j))
                    i = self.pairs[j] + 1
                    decl_start = i
                    continue
                if j < hi and _is(toks[j], "default"):
                    i = j
                    continue
                i = j
                continue
            i += 1

    def _skip_initializer(self, i: int, hi: int) -> int:
        toks = self.tokens
        while i < hi:
            tok = toks[i]
            if tok.kind == SEPARATOR:
                if tok.text in "([{":
                    i = self.pairs[i] + 1
                    continue
                if tok.text in (";", "}"):
                    return i + 1 if tok.text == ";" else i
            i += 1
        return i

    def _find_body_open(self, i: int, hi: int) -> int | None:
        toks = self.tokens
        j = i + 1
        while j < hi:
            tok = toks[j]
            if tok.kind == SEPARATOR:
                if tok.text == "{":
                    return j
                if tok.text == "(":
                    j = self.pairs[j] + 1
                    continue
                if tok.text == ";":
                    return None
            j += 1
        return None


def extract_methods(
    file: str | os.PathLike[str],
    source_text: str,
    min_tokens: int = DEFAULT_MIN_TOKENS,
    tokens: list[SourceToken] | None = None,
) -> list[RawMethod]:
    """Extract one RawMethod per method or constructor declaration with a body.

    Methods nested in anonymous or local classes stay part of their enclosing
    method. Methods smaller than ``min_tokens`` size tokens are dropped.

    Raises:
        LexError: if the source cannot be tokenized.
        ExtractionError: on unbalanced brackets.
    """
    if tokens is None:
        tokens = tokenize(source_text)
    pairs = _match_brackets(tokens)
    scanner = _MemberScanner(tokens, pairs)
    scanner.scan(0, len(tokens))
    declared = frozenset(scanner.declared)
    methods: list[RawMethod] = []
    for decl_start, name_idx, paren_idx, body_open in scanner.found:
        body_close = pairs[body_open]
        body = tokens[paren_idx : body_close + 1]
        method = RawMethod(
            file_path=str(file),
            start_line=tokens[decl_start].line,
            end_line=tokens[body_close].line,
            name=tokens[name_idx].text,
            tokens=body,
            declared_methods=declared,
        )
        if method.token_count >= min_tokens:
            methods.append(method)
    return methods


@dataclass
class ExtractionResult:
    methods: list[RawMethod]
    skipped: list[tuple[str, str]]  # (path, reason)


def iter_java_files(root: str | os.PathLike[str]) -> Iterator[Path]:
    root = Path(root)
    yield from sorted(p for p in root.rglob("*.java") if p.is_file())


def _extract_file(args: tuple[str, str, int]) -> tuple[str, list[RawMethod] | None, str]:
    path, rel, min_tokens = args
    try:
        text = Path(path).read_bytes().decode("utf-8", errors="replace")
        return rel, extract_methods(rel, text, min_tokens=min_tokens), ""
    except (LexError, ExtractionError, OSError) as exc:
        return rel, None, str(exc)


def extract_corpus(
    root: str | os.PathLike[str],
    min_tokens: int = DEFAULT_MIN_TOKENS,
    jobs: int = 1,
) -> ExtractionResult:
    """Extract methods from every ``*.java`` file under ``root``.

    Files that fail to lex or brace-match are skipped and reported. Results are
    ordered by corpus-relative path regardless of ``jobs``.
    """
    root = Path(root)
    work = [
        (str(p), p.relative_to(root).as_posix(), min_tokens) for p in iter_java_files(root)
    ]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_extract_file, work, chunksize=64))
    else:
        results = [_extract_file(w) for w in work]
    methods: list[RawMethod] = []
    skipped: list[tuple[str, str]] = []
    for rel, found, reason in sorted(results, key=lambda r: r[0]):
        if found is None:
            log.warning("skipping %s: %s", rel, reason)
            skipped.append((rel, reason))
        else:
            methods.extend(found)
    return ExtractionResult(methods, skipped)
