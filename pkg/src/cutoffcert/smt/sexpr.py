"""Minimal s-expression reader for solver output."""

from __future__ import annotations

from typing import Union

SExpr = Union[str, int, list]


class SExprError(Exception):
    pass


def tokenize(text: str) -> list[str]:
    out: list[str] = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif c in "()":
            out.append(c)
            i += 1
        elif c.isspace():
            i += 1
        elif c == "|":
            j = text.index("|", i + 1)
            out.append(text[i:j + 1])
            i = j + 1
        elif c == '"':
            j = i + 1
            while j < n and text[j] != '"':
                j += 1
            out.append(text[i:j + 1])
            i = j + 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in "();":
                j += 1
            out.append(text[i:j])
            i = j
    return out


def parse_all(text: str) -> list[SExpr]:
    toks = tokenize(text)
    pos = 0

    def read() -> SExpr:
        nonlocal pos
        if pos >= len(toks):
            raise SExprError("unexpected end of input")
        t = toks[pos]
        pos += 1
        if t == "(":
            items = []
            while pos < len(toks) and toks[pos] != ")":
                items.append(read())
            if pos >= len(toks):
                raise SExprError("missing ')'")
            pos += 1
            return items
        if t == ")":
            raise SExprError("unexpected ')'")
        if t.lstrip("-").isdigit() and t not in ("-",):
            return int(t)
        return t

    out = []
    while pos < len(toks):
        out.append(read())
    return out
