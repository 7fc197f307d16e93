"""Tokenizer shared by the expression grammar and the scene grammar."""
from __future__ import annotations

from dataclasses import dataclass

__all__ = ["Token", "ParseError", "tokenize"]

_PUNCT = set("+-*/^(),;|{}=.")


class ParseError(Exception):
    """Syntax error carrying a 1-based line and column."""

    def __init__(self, msg: str, line: int | None = None, col: int | None = None):
        self.msg = msg
        self.line = line
        self.col = col
        if line is not None:
            msg = f"line {line}, column {col}: {msg}"
        super().__init__(msg)


@dataclass(frozen=True)
class Token:
    kind: str  # "num", "name", "op", "eof"
    text: str
    line: int
    col: int

    @property
    def pos(self) -> tuple[int, int]:
        return self.line, self.col


def _scan_number(text: str, i: int) -> int:
    n = len(text)
    j = i
    while j < n and text[j].isdigit():
        j += 1
    if j < n and text[j] == "." and j + 1 < n and text[j + 1].isdigit():
        j += 1
        while j < n and text[j].isdigit():
            j += 1
    elif j < n and text[j] == "." and j > i and not (j + 1 < n and text[j + 1] == "."):
        # trailing dot as in "2." but never the range operator ".."
        j += 1
    if j < n and text[j] in "eE":
        k = j + 1
        if k < n and text[k] in "+-":
            k += 1
        if k < n and text[k].isdigit():
            while k < n and text[k].isdigit():
                k += 1
            j = k
    return j


def tokenize(text: str, line: int = 1, col: int = 1) -> list[Token]:
    """Split ``text`` into tokens; ``#`` starts a comment running to end of line.

    ``line``/``col`` give the position of ``text[0]`` so that embedded
    fragments report positions in the enclosing document.
    """
    toks: list[Token] = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if ch.isspace():
            i += 1
            col += 1
            continue
        if ch == "#":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if ch.isdigit() or (ch == "." and i + 1 < n and text[i + 1].isdigit()):
            j = _scan_number(text, i)
            toks.append(Token("num", text[i:j], line, col))
            col += j - i
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            toks.append(Token("name", text[i:j], line, col))
            col += j - i
            i = j
            continue
        if ch == "." and i + 1 < n and text[i + 1] == ".":
            toks.append(Token("op", "..", line, col))
            i += 2
            col += 2
            continue
        if ch in _PUNCT:
            toks.append(Token("op", ch, line, col))
            i += 1
            col += 1
            continue
        raise ParseError(f"unexpected character {ch!r}", line, col)
    toks.append(Token("eof", "", line, col))
    return toks
