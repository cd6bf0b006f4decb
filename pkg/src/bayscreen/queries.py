"""Boolean search query language: parsing, dialect rendering and record scoring.

The query grammar accepts OR / AND / NOT operators (case-insensitive),
round brackets for grouping and double-quoted phrases.  Adjacent bare words
(e.g. ``(network patient)``) are treated as a phrase.  Operator precedence
is NOT > AND > OR; a NOT following a term binds as ``And(term, Not(x))``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Union

__all__ = [
    "Term", "Phrase", "Not", "And", "Or", "Node",
    "QueryParseError", "parse_query", "render_query",
    "YearFilter", "parse_year_filter",
    "score_record", "order_by_query_match", "positive_terms",
    "DIALECTS",
]

DIALECTS = ("pubmed", "wos", "ieee", "scopus", "embase")


@dataclass(frozen=True)
class Term:
    word: str


@dataclass(frozen=True)
class Phrase:
    words: tuple[str, ...]


@dataclass(frozen=True)
class Not:
    child: "Node"


@dataclass(frozen=True)
class And:
    children: tuple["Node", ...]

    def __post_init__(self):
        if len(self.children) < 2:
            raise ValueError("And requires >=2 children")


@dataclass(frozen=True)
class Or:
    children: tuple["Node", ...]

    def __post_init__(self):
        if len(self.children) < 2:
            raise ValueError("Or requires >=2 children")


Node = Union[Term, Phrase, Not, And, Or]


class QueryParseError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


_TOKEN_RE = re.compile(r'\s*(?:(?P<lparen>\()|(?P<rparen>\))|"(?P<quoted>[^"]*)"|(?P<word>[^\s()"]+))')

# Field-tag wrappers produced by the WOS / IEEE renderers; stripped before parsing.
_FIELD_TAG_RES = (
    re.compile(r"^\s*TS=\((?P<inner>.*)\)\s*$", re.DOTALL),
    re.compile(r'^\s*\("All Metadata":(?P<inner>.*)\)\s*$', re.DOTALL),
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            rest = text[pos:]
            if rest.strip():
                raise QueryParseError(f"unexpected input {rest.strip()[:10]!r}", pos)
            break
        if m.group("lparen"):
            tokens.append(("(", "(", m.start()))
        elif m.group("rparen"):
            tokens.append((")", ")", m.start()))
        elif m.group("quoted") is not None:
            tokens.append(("quoted", m.group("quoted"), m.start()))
        else:
            word = m.group("word")
            upper = word.upper()
            if upper in ("AND", "OR", "NOT"):
                tokens.append((upper, upper, m.start()))
            else:
                tokens.append(("word", word, m.start()))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, tokens: list[tuple[str, str, int]], length: int):
        self.tokens = tokens
        self.i = 0
        self.length = length

    def peek(self) -> str | None:
        return self.tokens[self.i][0] if self.i < len(self.tokens) else None

    def pos(self) -> int:
        return self.tokens[self.i][2] if self.i < len(self.tokens) else self.length

    def next(self) -> tuple[str, str, int]:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def parse_or(self) -> Node:
        parts = [self.parse_and()]
        while self.peek() == "OR":
            self.next()
            parts.append(self.parse_and())
        return parts[0] if len(parts) == 1 else Or(tuple(parts))

    def parse_and(self) -> Node:
        parts = [self.parse_item()]
        while self.peek() in ("AND", "NOT"):
            if self.peek() == "AND":
                self.next()
            # a bare NOT in operator position binds as And(..., Not(x))
            parts.append(self.parse_item())
        return parts[0] if len(parts) == 1 else And(tuple(parts))

    def parse_item(self) -> Node:
        if self.peek() == "NOT":
            self.next()
            if self.peek() is None:
                raise QueryParseError("dangling NOT", self.pos())
            return Not(self.parse_item())
        return self.parse_atom()

    def parse_atom(self) -> Node:
        kind = self.peek()
        if kind is None:
            raise QueryParseError("unexpected end of query", self.pos())
        if kind == "(":
            self.next()
            if self.peek() == ")":
                raise QueryParseError("empty group", self.pos())
            inner = self.parse_or()
            if self.peek() != ")":
                raise QueryParseError("unbalanced brackets", self.pos())
            self.next()
            return inner
        if kind in ("AND", "OR"):
            raise QueryParseError(f"dangling operator {kind}", self.pos())
        if kind == ")":
            raise QueryParseError("unbalanced brackets", self.pos())
        # run of adjacent words / quoted strings
        words: list[str] = []
        saw_quoted = False
        n_atoms = 0
        while self.peek() in ("word", "quoted"):
            kind2, value, _ = self.next()
            n_atoms += 1
            if kind2 == "quoted":
                saw_quoted = True
                words.extend(value.split())
            else:
                words.append(value)
        if not words:
            raise QueryParseError("empty term", self.pos())
        if n_atoms == 1 and not saw_quoted and len(words) == 1:
            return Term(words[0])
        return Phrase(tuple(words))


def parse_query(text: str) -> Node:
    """Parse a boolean query string into an AST."""
    if not text or not text.strip():
        raise QueryParseError("empty query", 0)
    for tag_re in _FIELD_TAG_RES:
        m = tag_re.match(text)
        if m:
            text = m.group("inner")
            break
    tokens = _tokenize(text)
    if not tokens:
        raise QueryParseError("empty query", 0)
    parser = _Parser(tokens, len(text))
    node = parser.parse_or()
    if parser.peek() is not None:
        raise QueryParseError("trailing input", parser.pos())
    return node


@dataclass(frozen=True)
class YearFilter:
    kind: str  # exact | range | cmp
    low: int | None = None
    high: int | None = None
    op: str | None = None  # for cmp: < <= > >=

    def __post_init__(self):
        if self.kind == "range" and self.low > self.high:
            raise ValueError("range lower bound exceeds upper bound")

    def __str__(self) -> str:
        if self.kind == "exact":
            return str(self.low)
        if self.kind == "range":
            return f"{self.low}-{self.high}"
        return f"{self.op}{self.high if self.op in ('<', '<=') else self.low}"

    def matches(self, year: int) -> bool:
        if self.kind == "exact":
            return year == self.low
        if self.kind == "range":
            return self.low <= year <= self.high
        if self.op == "<":
            return year < self.high
        if self.op == "<=":
            return year <= self.high
        if self.op == ">":
            return year > self.low
        return year >= self.low


_YEAR_RANGE_RE = re.compile(r"^\s*(\d{4})\s*-\s*(\d{4})\s*$")
_YEAR_CMP_RE = re.compile(r"^\s*(<=|>=|<|>)\s*(\d{4})\s*$")
_YEAR_EXACT_RE = re.compile(r"^\s*(\d{4})\s*$")


def parse_year_filter(text: str) -> YearFilter:
    """Parse a year filter: ``2013``, ``2010-2020`` (inclusive) or ``<=2015``."""
    m = _YEAR_RANGE_RE.match(text)
    if m:
        return YearFilter("range", int(m.group(1)), int(m.group(2)))
    m = _YEAR_CMP_RE.match(text)
    if m:
        op, year = m.group(1), int(m.group(2))
        if op in ("<", "<="):
            return YearFilter("cmp", None, year, op)
        return YearFilter("cmp", year, None, op)
    m = _YEAR_EXACT_RE.match(text)
    if m:
        y = int(m.group(1))
        return YearFilter("exact", y, y)
    raise ValueError(f"malformed year filter: {text!r}")


def _render_node(node: Node, dialect: str, *, first_in_and: bool = False) -> str:
    if isinstance(node, Term):
        return node.word
    if isinstance(node, Phrase):
        return '"' + " ".join(node.words) + '"'
    if isinstance(node, Not):
        if dialect == "scopus":
            # scopus requires NOT only as a non-first conjunct, as AND NOT
            raise ValueError("scopus dialect cannot render NOT outside a conjunction")
        return "NOT " + _render_node(node.child, dialect)
    if isinstance(node, Or):
        return "(" + " OR ".join(_render_node(c, dialect) for c in node.children) + ")"
    if isinstance(node, And):
        parts = []
        for i, child in enumerate(node.children):
            if isinstance(child, Not) and i > 0:
                op = "AND NOT" if dialect == "scopus" else "NOT"
                parts.append(f"{op} " + _render_node(child.child, dialect))
            else:
                joined = _render_node(child, dialect)
                if i > 0:
                    joined = "AND " + joined
                parts.append(joined)
        return "(" + " ".join(parts) + ")"
    raise TypeError(f"unknown node type: {node!r}")


def _render_year(year: YearFilter, dialect: str) -> str:
    low = year.low
    high = year.high
    if year.kind == "cmp":
        low = low if low is not None else 1000
        high = high if high is not None else 3000
        if year.op in ("<", ">"):
            if year.op == "<":
                high -= 1
            else:
                low += 1
    elif year.kind == "exact":
        low = high = year.low
    if dialect == "pubmed":
        return f'AND ("{low}"[Date - Publication] : "{high}"[Date - Publication])'
    if dialect == "wos":
        return f"AND PY=({low}-{high})"
    if dialect == "scopus":
        return f"AND PUBYEAR AFT {low - 1} AND PUBYEAR BEF {high + 1}"
    # ieee / embase: year constraints travel as API parameters, not query text
    return ""


def render_query(ast: Node, dialect: str, year: YearFilter | None = None) -> str:
    """Render an AST into a database-specific query string.

    Every non-leaf node is parenthesized so the output is unambiguous and
    re-parseable.  Scopus renders each NOT as ``AND NOT``; WOS and IEEE wrap
    the query in their respective field tags.
    """
    if dialect not in DIALECTS:
        raise ValueError(f"unknown dialect: {dialect!r}")
    body = _render_node(ast, dialect)
    if year is not None:
        suffix = _render_year(year, dialect)
        if suffix:
            body = f"{body} {suffix}" if not isinstance(ast, (Term, Phrase)) else f"({body}) {suffix}"
    if dialect == "wos":
        return f"TS=({body})"
    if dialect == "ieee":
        return f'("All Metadata":{body})'
    return body


def tokenize_text(text: str) -> list[str]:
    """Lowercased letter/digit runs; hyphens split tokens."""
    return re.findall(r"[a-z0-9]+", text.lower())


def positive_terms(ast: Node) -> list[tuple[str, ...]]:
    """All Term/Phrase token sequences not under any NOT, in AST order."""
    out: list[tuple[str, ...]] = []

    def walk(node: Node, negated: bool):
        if isinstance(node, Term):
            if not negated:
                out.append(tuple(tokenize_text(node.word)))
        elif isinstance(node, Phrase):
            if not negated:
                out.append(tuple(w for word in node.words for w in tokenize_text(word)))
        elif isinstance(node, Not):
            walk(node.child, True)
        else:
            for child in node.children:
                walk(child, negated)

    walk(ast, False)
    return [t for t in out if t]


def _count_subsequence(tokens: list[str], needle: tuple[str, ...]) -> int:
    if len(needle) == 1:
        return tokens.count(needle[0])
    n = len(needle)
    return sum(1 for i in range(len(tokens) - n + 1) if tuple(tokens[i:i + n]) == needle)


def score_record(ast: Node, record) -> float:
    """Relative frequency of positive query terms in the record's title+abstract."""
    text = f"{getattr(record, 'title', '') or ''} {getattr(record, 'abstract', '') or ''}"
    tokens = tokenize_text(text)
    if not tokens:
        return 0.0
    total = sum(_count_subsequence(tokens, term) for term in positive_terms(ast))
    return total / len(tokens)


def order_by_query_match(records: Iterable, ast: Node) -> list:
    """Order records by descending query score; ties broken by record_id."""
    return sorted(records, key=lambda r: (-score_record(ast, r), r.record_id))
