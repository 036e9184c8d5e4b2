"""Minimal s-expression reader that keeps source spans on every node.

Atoms are symbols, numbers, or double-quoted strings. ``;`` starts a line
comment. Every node records the span it was read from so that later stages
can report errors pointing at the offending token.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Union


@dataclass(frozen=True)
class SourceSpan:
    file: str
    line: int
    column: int
    start: int
    end: int

    def __post_init__(self):
        if self.start > self.end:
            raise ValueError("span start after end")
        if self.line < 1 or self.column < 1:
            raise ValueError("line/column are 1-based")

    def __str__(self):
        return f"{self.file}:{self.line}:{self.column}"


class ParseError(Exception):
    """Raised for any syntactic or structural problem in an input document."""

    def __init__(self, span: SourceSpan, expected: str, found: str):
        self.span = span
        self.expected = expected
        self.found = found
        super().__init__(self.render())

    def render(self) -> str:
        return f"{self.span}: expected {self.expected}, found {self.found!r}"


@dataclass(frozen=True)
class Atom:
    value: Union[str, float]
    span: SourceSpan
    quoted: bool = False

    @property
    def is_number(self) -> bool:
        return isinstance(self.value, float)

    @property
    def is_symbol(self) -> bool:
        return isinstance(self.value, str) and not self.quoted

    @property
    def lexeme(self) -> str:
        return self.value if isinstance(self.value, str) else repr(self.value)


@dataclass(frozen=True)
class SList:
    items: tuple = field(default=())
    span: SourceSpan = None

    @property
    def head(self) -> str | None:
        if self.items and isinstance(self.items[0], Atom) and self.items[0].is_symbol:
            return self.items[0].value
        return None

    @property
    def tail(self) -> tuple:
        return self.items[1:]

    def __len__(self):
        return len(self.items)

    def __iter__(self) -> Iterator:
        return iter(self.items)


Node = Union[Atom, SList]

_DELIMS = set("();\"")


def _parse_number(text: str) -> float | None:
    if not text or text[0] not in "+-.0123456789":
        return None
    try:
        value = float(text)
    except ValueError:
        return None
    if value != value or value in (float("inf"), float("-inf")):
        return None
    return value


class _Reader:
    def __init__(self, text: str, file: str):
        self.text = text
        self.file = file
        self.pos = 0
        self.line = 1
        self.col = 1

    def span_here(self, length: int = 1) -> SourceSpan:
        end = min(self.pos + max(length, 0), len(self.text))
        return SourceSpan(self.file, self.line, self.col, self.pos, max(end, self.pos))

    def advance(self, n: int = 1):
        for _ in range(n):
            if self.pos >= len(self.text):
                return
            if self.text[self.pos] == "\n":
                self.line += 1
                self.col = 1
            else:
                self.col += 1
            self.pos += 1

    def skip_ws(self):
        while self.pos < len(self.text):
            ch = self.text[self.pos]
            if ch.isspace():
                self.advance()
            elif ch == ";":
                while self.pos < len(self.text) and self.text[self.pos] != "\n":
                    self.advance()
            else:
                return

    def read(self) -> Node:
        self.skip_ws()
        if self.pos >= len(self.text):
            raise ParseError(self.span_here(0), "expression", "<eof>")
        ch = self.text[self.pos]
        if ch == "(":
            return self.read_list()
        if ch == ")":
            raise ParseError(self.span_here(), "expression", ")")
        if ch == '"':
            return self.read_string()
        return self.read_atom()

    def read_list(self) -> SList:
        start = self.span_here()
        self.advance()
        items = []
        while True:
            self.skip_ws()
            if self.pos >= len(self.text):
                raise ParseError(start, "')' closing this list", "<eof>")
            if self.text[self.pos] == ")":
                self.advance()
                span = SourceSpan(self.file, start.line, start.column, start.start, self.pos)
                return SList(tuple(items), span)
            items.append(self.read())

    def read_string(self) -> Atom:
        start = self.span_here()
        self.advance()
        chars = []
        while True:
            if self.pos >= len(self.text):
                raise ParseError(start, "closing '\"'", "<eof>")
            ch = self.text[self.pos]
            if ch == '"':
                self.advance()
                break
            if ch == "\\" and self.pos + 1 < len(self.text):
                self.advance()
                ch = self.text[self.pos]
            chars.append(ch)
            self.advance()
        span = SourceSpan(self.file, start.line, start.column, start.start, self.pos)
        return Atom("".join(chars), span, quoted=True)

    def read_atom(self) -> Atom:
        line, col, begin = self.line, self.col, self.pos
        while self.pos < len(self.text):
            ch = self.text[self.pos]
            if ch.isspace() or ch in _DELIMS:
                break
            self.advance()
        lexeme = self.text[begin:self.pos]
        span = SourceSpan(self.file, line, col, begin, self.pos)
        number = _parse_number(lexeme)
        if number is not None:
            return Atom(number, span)
        return Atom(lexeme.lower(), span)


def _decode(data) -> str:
    if isinstance(data, (bytes, bytearray)):
        try:
            return bytes(data).decode("utf-8")
        except UnicodeDecodeError as exc:
            span = SourceSpan("<input>", 1, 1, exc.start, exc.end)
            raise ParseError(span, "UTF-8 text", repr(bytes(data[exc.start:exc.end]))) from None
    return data


def read_all(text, file: str = "<input>") -> list[Node]:
    """Read every top-level expression in ``text`` (str or UTF-8 bytes)."""
    reader = _Reader(_decode(text), file)
    nodes = []
    while True:
        reader.skip_ws()
        if reader.pos >= len(reader.text):
            return nodes
        nodes.append(reader.read())


def read_one(text, file: str = "<input>") -> Node:
    nodes = read_all(text, file)
    if not nodes:
        raise ParseError(SourceSpan(file, 1, 1, 0, 0), "one expression", "<eof>")
    if len(nodes) > 1:
        extra = nodes[1]
        raise ParseError(extra.span, "end of input", _lexeme(extra))
    return nodes[0]


def _lexeme(node: Node) -> str:
    if isinstance(node, Atom):
        return node.lexeme
    return node.head and f"({node.head} ...)" or "(...)"


def lexeme(node: Node) -> str:
    return _lexeme(node)


def fmt_number(x: float) -> str:
    """Shortest text that parses back to exactly ``x``."""
    x = float(x)
    if x == 0.0:
        return "0" if str(x)[0] != "-" else "-0.0"
    if x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(x)
