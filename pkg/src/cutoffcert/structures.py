"""Finite structures and reference evaluation.

A structure fixes a finite domain per uninterpreted sort and interprets each
symbol copy.  Interpretation keys are ``(symbol, tag, primed)`` triples so the
same machinery evaluates plain formulas, two-state transition formulas, and
verification conditions over the tagged copies.  Integer-sorted positions hold
plain Python ints; quantifiers over the integer sort range over a window
``[-W, W]`` fixed per structure (semantics is window-relative by design).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Optional, Union

from .logic import (
    And, App, Eq, FALSE, Formula, Iff, IllFormed, Implies, IntCmp, IntLit,
    IntOp, Ite, Lit, Not, Or, Quant, Rel, Sort, SortKind, SymbolDecl, Tag,
    Term, TRUE, Var, Vocabulary, smt_name,
)

SymKey = tuple[str, Tag, bool]


def key(name: str, tag: Tag = Tag.PLAIN, primed: bool = False) -> SymKey:
    return (name, tag, primed)


RelInterp = frozenset  # of argument tuples
FunInterp = dict       # argument tuple -> element (constants: key ())


class NotClosed(Exception):
    """Restricting a function lost totality: some surviving tuple maps to the
    removed element."""

    def __init__(self, symbol: SymKey, args: tuple):
        self.symbol = symbol
        self.args = args
        super().__init__(f"{symbol[0]}{args} maps into the removed element")


class DomainCollapse(Exception):
    """Removal would empty a domain; domains must stay nonempty."""


@dataclass
class Structure:
    vocabulary: Vocabulary
    domains: dict[str, tuple[int, ...]]
    interps: dict[SymKey, Any]
    int_window: int = 3

    def domain(self, sort: Sort) -> tuple[int, ...]:
        if sort.is_int:
            return tuple(range(-self.int_window, self.int_window + 1))
        try:
            return self.domains[sort.name]
        except KeyError:
            raise IllFormed(f"no domain for sort {sort.name}") from None

    def rel(self, k: SymKey) -> frozenset:
        try:
            return self.interps[k]
        except KeyError:
            raise IllFormed(f"no interpretation for relation {smt_name(*k)}") from None

    def fun(self, k: SymKey) -> dict:
        try:
            return self.interps[k]
        except KeyError:
            raise IllFormed(f"no interpretation for function {smt_name(*k)}") from None

    def size(self, sort: Sort) -> int:
        return len(self.domain(sort))

    def copy(self) -> "Structure":
        return Structure(self.vocabulary, dict(self.domains),
                         dict(self.interps), self.int_window)

    def validate(self) -> None:
        """Check totality and domain membership of every interpretation."""
        for (name, tag, primed), interp in self.interps.items():
            decl = self.vocabulary.decl(name)
            doms = [self.domain(s) for s in decl.arg_sorts]
            if decl.is_relation:
                for tup in interp:
                    if len(tup) != decl.arity or any(
                            e not in d for e, d in zip(tup, doms)):
                        raise IllFormed(f"tuple {tup} outside domains of {name}")
            else:
                res = decl.result_sort
                assert res is not None
                import itertools
                for args in itertools.product(*doms):
                    if args not in interp:
                        raise IllFormed(f"{name} not total: missing {args}")
                    v = interp[args]
                    if not res.is_int and v not in self.domain(res):
                        raise IllFormed(f"{name}{args} = {v} outside {res.name}")


Assignment = Mapping[str, Any]


def eval_term(s: Structure, asg: Assignment, t: Term) -> Any:
    if isinstance(t, Var):
        try:
            return asg[t.name]
        except KeyError:
            raise IllFormed(f"unassigned free variable {t.name}") from None
    if isinstance(t, App):
        f = s.fun((t.sym, t.tag, t.primed))
        args = tuple(eval_term(s, asg, a) for a in t.args)
        return f[args]
    if isinstance(t, IntLit):
        return t.value
    if isinstance(t, IntOp):
        vals = [eval_term(s, asg, a) for a in t.args]
        if t.op == "+":
            return sum(vals)
        if t.op == "-":
            return vals[0] - vals[1]
        if t.op == "neg":
            return -vals[0]
        raise IllFormed(f"unknown integer operator {t.op}")
    if isinstance(t, Ite):
        return eval_term(s, asg, t.then if evaluate(s, asg, t.cond) else t.other)
    raise IllFormed(f"not a term: {t!r}")


def evaluate(s: Structure, asg: Assignment, f: Formula) -> bool:
    """Tarskian satisfaction: s, asg |= f.  Reference implementation."""
    if isinstance(f, Lit):
        return f.value
    if isinstance(f, Eq):
        return eval_term(s, asg, f.lhs) == eval_term(s, asg, f.rhs)
    if isinstance(f, IntCmp):
        a, b = eval_term(s, asg, f.lhs), eval_term(s, asg, f.rhs)
        return a <= b if f.op == "<=" else a < b
    if isinstance(f, Rel):
        r = s.rel((f.sym, f.tag, f.primed))
        return tuple(eval_term(s, asg, a) for a in f.args) in r
    if isinstance(f, Not):
        return not evaluate(s, asg, f.body)
    if isinstance(f, And):
        return all(evaluate(s, asg, p) for p in f.parts)
    if isinstance(f, Or):
        return any(evaluate(s, asg, p) for p in f.parts)
    if isinstance(f, Implies):
        return (not evaluate(s, asg, f.lhs)) or evaluate(s, asg, f.rhs)
    if isinstance(f, Iff):
        return evaluate(s, asg, f.lhs) == evaluate(s, asg, f.rhs)
    if isinstance(f, Quant):
        dom = s.domain(f.sort)
        inner = dict(asg)
        if f.kind == "forall":
            for d in dom:
                inner[f.var] = d
                if not evaluate(s, inner, f.body):
                    return False
            return True
        for d in dom:
            inner[f.var] = d
            if evaluate(s, inner, f.body):
                return True
        return False
    raise IllFormed(f"not a formula: {f!r}")


def substructure(s: Structure, sort: Sort, removed: int) -> Structure:
    """Restrict to domain(sort) minus ``removed``.

    Relations are intersected with the surviving tuples and functions are
    restricted; raises :class:`NotClosed` if a restricted function maps a
    surviving tuple to ``removed``, and :class:`DomainCollapse` if the domain
    would become empty.
    """
    dom = s.domain(sort)
    if removed not in dom:
        raise IllFormed(f"{removed} not in domain of {sort.name}")
    if len(dom) < 2:
        raise DomainCollapse(f"cannot remove the last {sort.name} element")
    new_dom = tuple(e for e in dom if e != removed)
    doms = dict(s.domains)
    doms[sort.name] = new_dom

    def survives(decl: SymbolDecl, tup: tuple) -> bool:
        return all(e != removed or not srt == sort
                   for e, srt in zip(tup, decl.arg_sorts))

    interps: dict[SymKey, Any] = {}
    for k, interp in s.interps.items():
        decl = s.vocabulary.decl(k[0])
        if decl.is_relation:
            interps[k] = frozenset(t for t in interp if survives(decl, t))
        else:
            res = decl.result_sort
            assert res is not None
            out = {}
            for args, v in interp.items():
                if not survives(decl, args):
                    continue
                if res == sort and v == removed:
                    raise NotClosed(k, args)
                out[args] = v
            interps[k] = out
    return Structure(s.vocabulary, doms, interps, s.int_window)


def is_substructure(small: Structure, big: Structure) -> bool:
    """Verbatim substructure check: domains included, relations intersected,
    functions restricted."""
    import itertools
    for name, dom in small.domains.items():
        if not set(dom) <= set(big.domains[name]):
            return False
    for k, interp in small.interps.items():
        decl = small.vocabulary.decl(k[0])
        doms = [small.domain(srt) for srt in decl.arg_sorts]
        if decl.is_relation:
            expected = frozenset(
                t for t in big.interps[k]
                if all(e in d for e, d in zip(t, doms)))
            if interp != expected:
                return False
        else:
            for args in itertools.product(*doms):
                if args not in interp or interp[args] != big.interps[k][args]:
                    return False
    return True
