"""Formula transformations: tagging, substitution, NNF, sort checking."""

from __future__ import annotations

from typing import Callable, Mapping, Optional

from .logic import (
    And, App, Eq, Formula, Iff, IllFormed, Implies, IntCmp, IntLit, IntOp,
    Ite, Lit, Not, Or, Quant, Rel, Sort, SymbolDecl, Tag, Term, Var,
    Vocabulary, free_vars, term_free_vars,
)

TagFn = Callable[[str, Tag, bool], tuple[Tag, bool]]


def map_symbols(f: Formula, fn: TagFn) -> Formula:
    """Rewrite every symbol occurrence's (tag, primed) pair."""

    def on_term(t: Term) -> Term:
        if isinstance(t, Var) or isinstance(t, IntLit):
            return t
        if isinstance(t, App):
            tag, primed = fn(t.sym, t.tag, t.primed)
            return App(t.sym, tuple(on_term(a) for a in t.args), tag, primed)
        if isinstance(t, IntOp):
            return IntOp(t.op, tuple(on_term(a) for a in t.args))
        if isinstance(t, Ite):
            return Ite(go(t.cond), on_term(t.then), on_term(t.other))
        raise IllFormed(f"not a term: {t!r}")

    def go(f: Formula) -> Formula:
        if isinstance(f, Lit):
            return f
        if isinstance(f, Eq):
            return Eq(on_term(f.lhs), on_term(f.rhs))
        if isinstance(f, IntCmp):
            return IntCmp(f.op, on_term(f.lhs), on_term(f.rhs))
        if isinstance(f, Rel):
            tag, primed = fn(f.sym, f.tag, f.primed)
            return Rel(f.sym, tuple(on_term(a) for a in f.args), tag, primed)
        if isinstance(f, Not):
            return Not(go(f.body))
        if isinstance(f, And):
            return And(tuple(go(p) for p in f.parts))
        if isinstance(f, Or):
            return Or(tuple(go(p) for p in f.parts))
        if isinstance(f, Implies):
            return Implies(go(f.lhs), go(f.rhs))
        if isinstance(f, Iff):
            return Iff(go(f.lhs), go(f.rhs))
        if isinstance(f, Quant):
            return Quant(f.kind, f.var, f.sort, go(f.body))
        raise IllFormed(f"not a formula: {f!r}")

    return go(f)


def retag(f: Formula, from_tag: Tag, to_tag: Tag) -> Formula:
    """Replace every symbol occurrence's tag; input must be uniformly tagged."""

    def fn(sym: str, tag: Tag, primed: bool) -> tuple[Tag, bool]:
        if tag is not from_tag:
            raise IllFormed(f"mixed tags: {sym} carries {tag}, expected {from_tag}")
        return (to_tag, primed)

    return map_symbols(f, fn)


def retag_two_state(f: Formula, vocab: Vocabulary, cur: Tag, nxt: Tag) -> Formula:
    """Send unprimed occurrences to ``cur`` and primed mutable occurrences to
    ``nxt``.  Immutable symbols have a single time copy, so their primed
    occurrences also land on ``cur``."""

    def fn(sym: str, tag: Tag, primed: bool) -> tuple[Tag, bool]:
        if tag is not Tag.PLAIN:
            raise IllFormed(f"{sym} already tagged {tag}")
        if primed and vocab.decl(sym).mutable:
            return (nxt, False)
        return (cur, False)

    return map_symbols(f, fn)


_fresh_counter = 0


def fresh_name(base: str, avoid: set[str]) -> str:
    if base not in avoid:
        return base
    i = 1
    while f"{base}_{i}" in avoid:
        i += 1
    return f"{base}_{i}"


def substitute(f: Formula, binding: Mapping[str, Term]) -> Formula:
    """Capture-avoiding substitution of terms for free variables."""
    if not binding:
        return f
    clash: set[str] = set()
    for t in binding.values():
        term_free_vars(t, clash)

    def on_term(t: Term, bind: Mapping[str, Term]) -> Term:
        if isinstance(t, Var):
            return bind.get(t.name, t)
        if isinstance(t, App):
            return App(t.sym, tuple(on_term(a, bind) for a in t.args),
                       t.tag, t.primed)
        if isinstance(t, IntLit):
            return t
        if isinstance(t, IntOp):
            return IntOp(t.op, tuple(on_term(a, bind) for a in t.args))
        if isinstance(t, Ite):
            return Ite(go(t.cond, bind), on_term(t.then, bind),
                       on_term(t.other, bind))
        raise IllFormed(f"not a term: {t!r}")

    def go(f: Formula, bind: Mapping[str, Term]) -> Formula:
        if isinstance(f, Lit):
            return f
        if isinstance(f, Eq):
            return Eq(on_term(f.lhs, bind), on_term(f.rhs, bind))
        if isinstance(f, IntCmp):
            return IntCmp(f.op, on_term(f.lhs, bind), on_term(f.rhs, bind))
        if isinstance(f, Rel):
            return Rel(f.sym, tuple(on_term(a, bind) for a in f.args),
                       f.tag, f.primed)
        if isinstance(f, Not):
            return Not(go(f.body, bind))
        if isinstance(f, And):
            return And(tuple(go(p, bind) for p in f.parts))
        if isinstance(f, Or):
            return Or(tuple(go(p, bind) for p in f.parts))
        if isinstance(f, Implies):
            return Implies(go(f.lhs, bind), go(f.rhs, bind))
        if isinstance(f, Iff):
            return Iff(go(f.lhs, bind), go(f.rhs, bind))
        if isinstance(f, Quant):
            bind = {k: v for k, v in bind.items() if k != f.var}
            if not bind:
                return f
            if f.var in clash:
                new = fresh_name(f.var, clash | set(bind) | free_vars(f.body))
                renamed = go(f.body, {f.var: Var(new, f.sort)})
                return Quant(f.kind, new, f.sort, go(renamed, bind))
            return Quant(f.kind, f.var, f.sort, go(f.body, bind))
        raise IllFormed(f"not a formula: {f!r}")

    return go(f, dict(binding))


def nnf(f: Formula, negate: bool = False) -> Formula:
    """Negation normal form of ``f`` (or of its negation)."""
    if isinstance(f, Lit):
        return Lit(f.value != negate)
    if isinstance(f, (Eq, IntCmp, Rel)):
        return Not(f) if negate else f
    if isinstance(f, Not):
        return nnf(f.body, not negate)
    if isinstance(f, And):
        parts = tuple(nnf(p, negate) for p in f.parts)
        return Or(parts) if negate else And(parts)
    if isinstance(f, Or):
        parts = tuple(nnf(p, negate) for p in f.parts)
        return And(parts) if negate else Or(parts)
    if isinstance(f, Implies):
        if negate:
            return And((nnf(f.lhs), nnf(f.rhs, True)))
        return Or((nnf(f.lhs, True), nnf(f.rhs)))
    if isinstance(f, Iff):
        # keep <-> intact; its polarity does not affect the quantifier prefix
        # when it contains no quantifiers, which is checked by callers
        if negate:
            return Not(Iff(nnf(f.lhs), nnf(f.rhs)))
        return Iff(nnf(f.lhs), nnf(f.rhs))
    if isinstance(f, Quant):
        kind = f.kind
        if negate:
            kind = "exists" if kind == "forall" else "forall"
        return Quant(kind, f.var, f.sort, nnf(f.body, negate))
    raise IllFormed(f"not a formula: {f!r}")


def term_sort(t: Term, vocab: Vocabulary, env: Mapping[str, Sort]) -> Sort:
    from .logic import INT
    if isinstance(t, Var):
        if t.name in env and env[t.name] != t.sort:
            raise IllFormed(f"variable {t.name} used at sort {t.sort.name}, "
                            f"bound at {env[t.name].name}")
        return t.sort
    if isinstance(t, App):
        decl = vocab.decl(t.sym)
        if decl.is_relation:
            raise IllFormed(f"relation {t.sym} used as a term")
        if len(t.args) != decl.arity:
            raise IllFormed(f"{t.sym} expects {decl.arity} arguments, "
                            f"got {len(t.args)}")
        for a, s in zip(t.args, decl.arg_sorts):
            if term_sort(a, vocab, env) != s:
                raise IllFormed(f"argument of {t.sym} has wrong sort")
        assert decl.result_sort is not None
        return decl.result_sort
    if isinstance(t, IntLit):
        return INT
    if isinstance(t, IntOp):
        for a in t.args:
            if not term_sort(a, vocab, env).is_int:
                raise IllFormed(f"integer operator {t.op} over non-integers")
        return INT
    if isinstance(t, Ite):
        sort_check(t.cond, vocab, env)
        s1 = term_sort(t.then, vocab, env)
        s2 = term_sort(t.other, vocab, env)
        if s1 != s2:
            raise IllFormed("ite branches have different sorts")
        return s1
    raise IllFormed(f"not a term: {t!r}")


def sort_check(f: Formula, vocab: Vocabulary, env: Optional[Mapping[str, Sort]] = None) -> None:
    """Raise IllFormed unless ``f`` is well-sorted over ``vocab``."""
    env = dict(env) if env else {}

    def go(f: Formula, env: dict[str, Sort]) -> None:
        if isinstance(f, Lit):
            return
        if isinstance(f, Eq):
            s1 = term_sort(f.lhs, vocab, env)
            s2 = term_sort(f.rhs, vocab, env)
            if s1 != s2:
                raise IllFormed(f"equality between {s1.name} and {s2.name}")
            return
        if isinstance(f, IntCmp):
            for t in (f.lhs, f.rhs):
                if not term_sort(t, vocab, env).is_int:
                    raise IllFormed("integer comparison over non-integers")
            return
        if isinstance(f, Rel):
            decl = vocab.decl(f.sym)
            if not decl.is_relation:
                raise IllFormed(f"function {f.sym} used as a relation")
            if len(f.args) != decl.arity:
                raise IllFormed(f"{f.sym} expects {decl.arity} arguments, "
                                f"got {len(f.args)}")
            for a, s in zip(f.args, decl.arg_sorts):
                if term_sort(a, vocab, env) != s:
                    raise IllFormed(f"argument of {f.sym} has wrong sort")
            return
        if isinstance(f, Not):
            go(f.body, env)
        elif isinstance(f, (And, Or)):
            for p in f.parts:
                go(p, env)
        elif isinstance(f, (Implies, Iff)):
            go(f.lhs, env)
            go(f.rhs, env)
        elif isinstance(f, Quant):
            inner = dict(env)
            inner[f.var] = f.sort
            go(f.body, inner)
        else:
            raise IllFormed(f"not a formula: {f!r}")

    go(f, env)
