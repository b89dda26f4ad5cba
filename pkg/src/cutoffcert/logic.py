"""Many-sorted first-order logic: vocabularies, terms, formulas, tagging.

Sorts are either uninterpreted finite-but-unbounded, uninterpreted with a
declared size bound, or the interpreted integer sort.  Symbols are relations
and functions (constants are 0-ary functions) and carry a mutability flag.
Formulas over a two-state vocabulary refer to the post-state through the
``primed`` flag on atoms; copies of the vocabulary used in verification
conditions are selected with a :class:`Tag` on each symbol occurrence.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Optional, Sequence, Union


class SortKind(enum.Enum):
    FINITE = "finite"        # uninterpreted, finite-domain semantics
    BOUNDED = "bounded"      # uninterpreted, size capped by a declared bound
    INT = "int"              # interpreted integers


@dataclass(frozen=True)
class Sort:
    name: str
    kind: SortKind = SortKind.FINITE
    bound: Optional[int] = None

    def __post_init__(self) -> None:
        if self.kind is SortKind.BOUNDED and (self.bound is None or self.bound < 1):
            raise IllFormed(f"bounded sort {self.name} needs a bound >= 1")

    @property
    def is_int(self) -> bool:
        return self.kind is SortKind.INT

    def __str__(self) -> str:
        return self.name


INT = Sort("int", SortKind.INT)


class IllFormed(Exception):
    """Ill-formed input: sort mismatch, unknown symbol, bad arity, ..."""


class Tag(enum.Enum):
    """Which copy of the vocabulary a symbol occurrence refers to."""

    PLAIN = ""
    H = "__h"
    L = "__l"
    HP = "__hp"
    LP = "__lp"

    def __repr__(self) -> str:
        return f"Tag.{self.name}"


def smt_name(name: str, tag: Tag, primed: bool = False) -> str:
    """Canonical flat name of one symbol copy (also the SMT-LIB name)."""
    if primed:
        if tag is Tag.PLAIN:
            return name + "__p"
        if tag is Tag.H:
            return name + Tag.HP.value
        if tag is Tag.L:
            return name + Tag.LP.value
        raise IllFormed(f"primed occurrence of already-primed copy {tag}")
    return name + tag.value


RESERVED_SUFFIXES = ("__h", "__l", "__hp", "__lp", "__p")

#: Variable name reserved for the deleted element in high-low updates.
DELETION_VAR = "z"


@dataclass(frozen=True)
class SymbolDecl:
    name: str
    arg_sorts: tuple[Sort, ...]
    result_sort: Optional[Sort]  # None for relations
    mutable: bool = True

    @property
    def is_relation(self) -> bool:
        return self.result_sort is None

    @property
    def is_function(self) -> bool:
        return self.result_sort is not None

    @property
    def is_constant(self) -> bool:
        return self.result_sort is not None and not self.arg_sorts

    @property
    def arity(self) -> int:
        return len(self.arg_sorts)

    def __str__(self) -> str:
        mut = "mutable" if self.mutable else "immutable"
        args = ", ".join(s.name for s in self.arg_sorts)
        if self.is_relation:
            return f"{mut} relation {self.name}({args})"
        if self.is_constant:
            return f"{mut} constant {self.name} : {self.result_sort}"
        return f"{mut} function {self.name}({args}) : {self.result_sort}"


class Vocabulary:
    """Sorts plus symbol declarations, with unique names."""

    def __init__(self, sorts: Sequence[Sort] = (), symbols: Sequence[SymbolDecl] = ()):
        self.sorts: dict[str, Sort] = {}
        self.symbols: dict[str, SymbolDecl] = {}
        for s in sorts:
            self.add_sort(s)
        for d in symbols:
            self.add_symbol(d)

    def add_sort(self, sort: Sort) -> Sort:
        if sort.name in self.sorts:
            raise IllFormed(f"duplicate sort {sort.name}")
        self.sorts[sort.name] = sort
        return sort

    def add_symbol(self, decl: SymbolDecl) -> SymbolDecl:
        if decl.name in self.symbols:
            raise IllFormed(f"duplicate symbol {decl.name}")
        for s in decl.arg_sorts + ((decl.result_sort,) if decl.result_sort else ()):
            if s.name not in self.sorts or self.sorts[s.name] != s:
                raise IllFormed(f"symbol {decl.name} uses undeclared sort {s.name}")
        self.symbols[decl.name] = decl
        return decl

    def decl(self, name: str) -> SymbolDecl:
        try:
            return self.symbols[name]
        except KeyError:
            raise IllFormed(f"unknown symbol {name}") from None

    @property
    def relations(self) -> list[SymbolDecl]:
        return [d for d in self.symbols.values() if d.is_relation]

    @property
    def functions(self) -> list[SymbolDecl]:
        return [d for d in self.symbols.values() if d.is_function]

    def mutables(self) -> list[SymbolDecl]:
        return [d for d in self.symbols.values() if d.mutable]

    def finite_sorts(self) -> list[Sort]:
        return [s for s in self.sorts.values() if s.kind is SortKind.FINITE]

    def copy(self) -> "Vocabulary":
        return Vocabulary(list(self.sorts.values()), list(self.symbols.values()))


# --- terms ------------------------------------------------------------------

@dataclass(frozen=True)
class Var:
    name: str
    sort: Sort


@dataclass(frozen=True)
class App:
    """Function/constant application; constants have no arguments."""

    sym: str
    args: tuple["Term", ...] = ()
    tag: Tag = Tag.PLAIN
    primed: bool = False


@dataclass(frozen=True)
class IntLit:
    value: int


@dataclass(frozen=True)
class IntOp:
    """Linear integer arithmetic term: op in {+, -, neg}."""

    op: str
    args: tuple["Term", ...]


@dataclass(frozen=True)
class Ite:
    cond: "Formula"
    then: "Term"
    other: "Term"


Term = Union[Var, App, IntLit, IntOp, Ite]


# --- formulas ---------------------------------------------------------------

@dataclass(frozen=True)
class Lit:
    value: bool


TRUE = Lit(True)
FALSE = Lit(False)


@dataclass(frozen=True)
class Eq:
    lhs: Term
    rhs: Term


@dataclass(frozen=True)
class IntCmp:
    """op in {<=, <}; >= and > are parsed into these with swapped sides."""

    op: str
    lhs: Term
    rhs: Term


@dataclass(frozen=True)
class Rel:
    sym: str
    args: tuple[Term, ...] = ()
    tag: Tag = Tag.PLAIN
    primed: bool = False


@dataclass(frozen=True)
class Not:
    body: "Formula"


@dataclass(frozen=True)
class And:
    parts: tuple["Formula", ...]


@dataclass(frozen=True)
class Or:
    parts: tuple["Formula", ...]


@dataclass(frozen=True)
class Implies:
    lhs: "Formula"
    rhs: "Formula"


@dataclass(frozen=True)
class Iff:
    lhs: "Formula"
    rhs: "Formula"


@dataclass(frozen=True)
class Quant:
    kind: str  # 'forall' | 'exists'
    var: str
    sort: Sort
    body: "Formula"


Formula = Union[Lit, Eq, IntCmp, Rel, Not, And, Or, Implies, Iff, Quant]


def conj(parts: Sequence[Formula]) -> Formula:
    parts = tuple(p for p in parts if p != TRUE)
    if any(p == FALSE for p in parts):
        return FALSE
    if not parts:
        return TRUE
    if len(parts) == 1:
        return parts[0]
    return And(parts)


def disj(parts: Sequence[Formula]) -> Formula:
    parts = tuple(p for p in parts if p != FALSE)
    if any(p == TRUE for p in parts):
        return TRUE
    if not parts:
        return FALSE
    if len(parts) == 1:
        return parts[0]
    return Or(parts)


def neq(lhs: Term, rhs: Term) -> Formula:
    return Not(Eq(lhs, rhs))


def forall(vars_: Sequence[Var], body: Formula) -> Formula:
    for v in reversed(vars_):
        body = Quant("forall", v.name, v.sort, body)
    return body


def exists(vars_: Sequence[Var], body: Formula) -> Formula:
    for v in reversed(vars_):
        body = Quant("exists", v.name, v.sort, body)
    return body


# --- traversals -------------------------------------------------------------

def subterms(t: Term) -> Iterator[Term]:
    yield t
    if isinstance(t, App):
        for a in t.args:
            yield from subterms(a)
    elif isinstance(t, IntOp):
        for a in t.args:
            yield from subterms(a)
    elif isinstance(t, Ite):
        yield from subterms(t.then)
        yield from subterms(t.other)
        # cond handled by the formula traversal of callers that need it


def term_free_vars(t: Term, out: set[str]) -> None:
    if isinstance(t, Var):
        out.add(t.name)
    elif isinstance(t, (App, IntOp)):
        for a in t.args:
            term_free_vars(a, out)
    elif isinstance(t, Ite):
        out |= free_vars(t.cond)
        term_free_vars(t.then, out)
        term_free_vars(t.other, out)


def free_vars(f: Formula) -> set[str]:
    if isinstance(f, Lit):
        return set()
    if isinstance(f, (Eq, IntCmp)):
        out: set[str] = set()
        term_free_vars(f.lhs, out)
        term_free_vars(f.rhs, out)
        return out
    if isinstance(f, Rel):
        out = set()
        for a in f.args:
            term_free_vars(a, out)
        return out
    if isinstance(f, Not):
        return free_vars(f.body)
    if isinstance(f, (And, Or)):
        out = set()
        for p in f.parts:
            out |= free_vars(p)
        return out
    if isinstance(f, (Implies, Iff)):
        return free_vars(f.lhs) | free_vars(f.rhs)
    if isinstance(f, Quant):
        return free_vars(f.body) - {f.var}
    raise IllFormed(f"not a formula: {f!r}")


def all_vars(f: Formula) -> set[str]:
    """Free and bound variable names."""
    if isinstance(f, Quant):
        return all_vars(f.body) | {f.var}
    if isinstance(f, Not):
        return all_vars(f.body)
    if isinstance(f, (And, Or)):
        out: set[str] = set()
        for p in f.parts:
            out |= all_vars(p)
        return out
    if isinstance(f, (Implies, Iff)):
        return all_vars(f.lhs) | all_vars(f.rhs)
    return free_vars(f)


def map_terms(f: Formula, fn) -> Formula:
    if isinstance(f, Lit):
        return f
    if isinstance(f, Eq):
        return Eq(fn(f.lhs), fn(f.rhs))
    if isinstance(f, IntCmp):
        return IntCmp(f.op, fn(f.lhs), fn(f.rhs))
    if isinstance(f, Rel):
        return Rel(f.sym, tuple(fn(a) for a in f.args), f.tag, f.primed)
    if isinstance(f, Not):
        return Not(map_terms(f.body, fn))
    if isinstance(f, And):
        return And(tuple(map_terms(p, fn) for p in f.parts))
    if isinstance(f, Or):
        return Or(tuple(map_terms(p, fn) for p in f.parts))
    if isinstance(f, Implies):
        return Implies(map_terms(f.lhs, fn), map_terms(f.rhs, fn))
    if isinstance(f, Iff):
        return Iff(map_terms(f.lhs, fn), map_terms(f.rhs, fn))
    if isinstance(f, Quant):
        return Quant(f.kind, f.var, f.sort, map_terms(f.body, fn))
    raise IllFormed(f"not a formula: {f!r}")


def atoms(f: Formula) -> Iterator[Formula]:
    if isinstance(f, (Lit, Eq, IntCmp, Rel)):
        yield f
    elif isinstance(f, Not):
        yield from atoms(f.body)
    elif isinstance(f, (And, Or)):
        for p in f.parts:
            yield from atoms(p)
    elif isinstance(f, (Implies, Iff)):
        yield from atoms(f.lhs)
        yield from atoms(f.rhs)
    elif isinstance(f, Quant):
        yield from atoms(f.body)


def symbol_occurrences(f: Formula) -> Iterator[tuple[str, Tag, bool]]:
    """All (symbol, tag, primed) occurrences, including inside terms."""

    def from_term(t: Term) -> Iterator[tuple[str, Tag, bool]]:
        if isinstance(t, App):
            yield (t.sym, t.tag, t.primed)
            for a in t.args:
                yield from from_term(a)
        elif isinstance(t, IntOp):
            for a in t.args:
                yield from from_term(a)
        elif isinstance(t, Ite):
            yield from symbol_occurrences(t.cond)
            yield from from_term(t.then)
            yield from from_term(t.other)

    for a in atoms(f):
        if isinstance(a, Rel):
            yield (a.sym, a.tag, a.primed)
            for t in a.args:
                yield from from_term(t)
        elif isinstance(a, Eq):
            yield from from_term(a.lhs)
            yield from from_term(a.rhs)
        elif isinstance(a, IntCmp):
            yield from from_term(a.lhs)
            yield from from_term(a.rhs)
        # Lit: nothing, but Ite conditions inside Eq/IntCmp are covered above
