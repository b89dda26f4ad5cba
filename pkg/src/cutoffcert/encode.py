"""Constructions used by the verification conditions.

``z_exclude`` rewrites a formula so that evaluating it on a full structure
with ``z`` assigned to some element agrees with evaluating the original on
the substructure that deletes that element.  ``build_eta`` assembles the
relation between high and low states from a deletion condition and per-symbol
update formulas/terms.  ``idle_formula`` encodes a stutter, ``closure_formula``
the totality of restricted functions, and ``size_gt``/``size_le`` the
cardinality constraints.
"""

from __future__ import annotations

from dataclasses import dataclass

from .logic import (
    And, App, DELETION_VAR, Eq, Formula, Iff, IllFormed, Implies, IntCmp,
    Lit, Not, Or, Quant, Rel, Sort, SymbolDecl, Tag, Term, TRUE, Var,
    Vocabulary, all_vars, conj, disj, exists, forall, free_vars, neq,
)
from .transforms import map_symbols


def z_exclude(f: Formula, z: Var) -> Formula:
    """Guard every quantifier over ``z.sort`` with distinctness from ``z``.

    Atoms are unchanged, connectives are pushed through (including ``<->``),
    and only quantifiers over the deleted element's sort are guarded.
    """
    if z.name in all_vars(f):
        raise IllFormed(f"variable {z.name} already occurs; rename first")

    def go(f: Formula) -> Formula:
        if isinstance(f, (Lit, Eq, IntCmp, Rel)):
            return f
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
            body = go(f.body)
            if f.sort != z.sort:
                return Quant(f.kind, f.var, f.sort, body)
            guard = neq(Var(f.var, f.sort), z)
            if f.kind == "forall":
                return Quant(f.kind, f.var, f.sort, Implies(guard, body))
            return Quant(f.kind, f.var, f.sort, And((guard, body)))
        raise IllFormed(f"not a formula: {f!r}")

    return go(f)


@dataclass(frozen=True)
class EtaFormula:
    """The assembled high/low relation with back-references to its pieces."""

    formula: Formula            # over the h- and l-tagged copies
    condition: Formula          # theta(z), h-tagged
    relation_updates: dict
    function_updates: dict
    z: Var

    def __iter__(self):
        yield self.formula


def update_vars(decl: SymbolDecl, z: Var) -> list[Var]:
    return [Var(f"x{i}", s) for i, s in enumerate(decl.arg_sorts)] + [z]


def build_eta(condition: Formula, rel_updates: dict, fun_updates: dict,
              vocab: Vocabulary, z: Var) -> EtaFormula:
    """Assemble theta(z) /\\ per-symbol update equations.

    ``rel_updates`` maps relation name -> update formula over the h-copy with
    free variables x0..x(m-1), z; ``fun_updates`` likewise maps function name
    -> update term.  Every symbol of the vocabulary must have an entry.
    """
    parts: list[Formula] = [condition]
    for decl in vocab.relations:
        xs = update_vars(decl, z)[:-1]
        rhs = rel_updates[decl.name]
        lhs: Formula = Rel(decl.name, tuple(xs), Tag.L)
        parts.append(forall(xs, Iff(lhs, rhs)))
    for decl in vocab.functions:
        xs = update_vars(decl, z)[:-1]
        rhs_t = fun_updates[decl.name]
        lhs_t: Term = App(decl.name, tuple(xs), Tag.L)
        parts.append(forall(xs, Eq(lhs_t, rhs_t)))
    eta = conj(parts)
    fv = free_vars(eta)
    if fv - {z.name}:
        raise IllFormed(f"update equations leak free variables {fv - {z.name}}")
    return EtaFormula(eta, condition, dict(rel_updates), dict(fun_updates), z)


def idle_formula(vocab: Vocabulary) -> Formula:
    """Stutter: every mutable symbol keeps its interpretation."""
    parts: list[Formula] = []
    for decl in vocab.symbols.values():
        if not decl.mutable:
            continue
        xs = [Var(f"x{i}", s) for i, s in enumerate(decl.arg_sorts)]
        if decl.is_relation:
            parts.append(forall(xs, Iff(Rel(decl.name, tuple(xs), primed=True),
                                        Rel(decl.name, tuple(xs)))))
        else:
            parts.append(forall(xs, Eq(App(decl.name, tuple(xs), primed=True),
                                       App(decl.name, tuple(xs)))))
    return conj(parts)


def closure_formula(vocab: Vocabulary, z: Var) -> Formula:
    """Restricted functions stay total: for every function whose result sort
    is the deleted sort, arguments away from z are mapped away from z."""
    parts: list[Formula] = []
    for decl in vocab.functions:
        if decl.result_sort != z.sort:
            continue
        xs = [Var(f"x{i}", s) for i, s in enumerate(decl.arg_sorts)]
        guards = [neq(x, z) for x in xs if x.sort == z.sort]
        concl = neq(App(decl.name, tuple(xs)), z)
        body = Implies(conj(guards), concl) if guards else concl
        parts.append(forall(xs, body))
    return conj(parts)


def size_gt(sort: Sort, k: int) -> Formula:
    """There are more than k elements: k+1 pairwise-distinct witnesses."""
    if k < 0:
        raise IllFormed("size_gt needs k >= 0")
    xs = [Var(f"x{i + 1}", sort) for i in range(k + 1)]
    distinct = [neq(xs[i], xs[j])
                for i in range(len(xs)) for j in range(i + 1, len(xs))]
    return exists(xs, conj(distinct))


def size_le(sort: Sort, k: int) -> Formula:
    """There are at most k elements: everything equals one of k witnesses."""
    if k < 1:
        raise IllFormed("size_le needs k >= 1")
    xs = [Var(f"x{i + 1}", sort) for i in range(k)]
    y = Var("x0", sort)
    body = forall([y], disj([Eq(y, x) for x in xs]))
    return exists(xs, body)
