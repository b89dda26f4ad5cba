"""Deterministic SMT-LIB 2.6 emission of verification conditions.

The query asserts hypothesis and negated conclusion, with the obligation's
free variables declared as constants: unsatisfiable means the obligation is
valid.  Identical inputs yield identical bytes (golden-file testable); no
logic is declared, leaving the solver on full defaults.
"""

from __future__ import annotations

from typing import Iterable

from ..logic import (
    And, App, Eq, Formula, Iff, Implies, IntCmp, IntLit, IntOp, Ite, Lit,
    Not, Or, Quant, Rel, Sort, SymbolDecl, Tag, Term, Var, Vocabulary,
    smt_name, symbol_occurrences,
)
from ..vcgen import VerificationCondition


def sort_ref(s: Sort) -> str:
    return "Int" if s.is_int else s.name


def term_sexpr(t: Term) -> str:
    if isinstance(t, Var):
        return t.name
    if isinstance(t, App):
        name = smt_name(t.sym, t.tag, t.primed)
        if not t.args:
            return name
        return f"({name} {' '.join(term_sexpr(a) for a in t.args)})"
    if isinstance(t, IntLit):
        return str(t.value) if t.value >= 0 else f"(- {-t.value})"
    if isinstance(t, IntOp):
        if t.op == "neg":
            return f"(- {term_sexpr(t.args[0])})"
        return f"({t.op} {' '.join(term_sexpr(a) for a in t.args)})"
    if isinstance(t, Ite):
        return (f"(ite {formula_sexpr(t.cond)} {term_sexpr(t.then)} "
                f"{term_sexpr(t.other)})")
    raise ValueError(f"not a term: {t!r}")


def formula_sexpr(f: Formula) -> str:
    if isinstance(f, Lit):
        return "true" if f.value else "false"
    if isinstance(f, Eq):
        return f"(= {term_sexpr(f.lhs)} {term_sexpr(f.rhs)})"
    if isinstance(f, IntCmp):
        return f"({f.op} {term_sexpr(f.lhs)} {term_sexpr(f.rhs)})"
    if isinstance(f, Rel):
        name = smt_name(f.sym, f.tag, f.primed)
        if not f.args:
            return name
        return f"({name} {' '.join(term_sexpr(a) for a in f.args)})"
    if isinstance(f, Not):
        return f"(not {formula_sexpr(f.body)})"
    if isinstance(f, And):
        if not f.parts:
            return "true"
        return f"(and {' '.join(formula_sexpr(p) for p in f.parts)})"
    if isinstance(f, Or):
        if not f.parts:
            return "false"
        return f"(or {' '.join(formula_sexpr(p) for p in f.parts)})"
    if isinstance(f, Implies):
        return f"(=> {formula_sexpr(f.lhs)} {formula_sexpr(f.rhs)})"
    if isinstance(f, Iff):
        return f"(= {formula_sexpr(f.lhs)} {formula_sexpr(f.rhs)})"
    if isinstance(f, Quant):
        binders = [(f.var, f.sort)]
        body = f.body
        while isinstance(body, Quant) and body.kind == f.kind:
            binders.append((body.var, body.sort))
            body = body.body
        bs = " ".join(f"({v} {sort_ref(s)})" for v, s in binders)
        return f"({f.kind} ({bs}) {formula_sexpr(body)})"
    raise ValueError(f"not a formula: {f!r}")


def emit_query(vc: VerificationCondition, vocab: Vocabulary) -> str:
    """SMT-LIB text deciding the obligation (unsat = valid)."""
    negated, frees = vc.negation()
    used = sorted(set(symbol_occurrences(negated)),
                  key=lambda k: smt_name(*k))
    used_sorts: set[str] = set()
    for name, _, _ in used:
        decl = vocab.decl(name)
        for s in decl.arg_sorts + ((decl.result_sort,)
                                   if decl.result_sort else ()):
            if not s.is_int:
                used_sorts.add(s.name)
    for v in frees:
        if not v.sort.is_int:
            used_sorts.add(v.sort.name)
    for s in _quantified_sorts(negated):
        if not s.is_int:
            used_sorts.add(s.name)

    lines = [
        f"; cutoffcert obligation {vc.vc_id} (sort {vc.stage})",
        "(set-option :produce-models true)",
        "(set-option :smt.macro-finder true)",  # rewrites definitional
        # iff-axioms (like list successors) that otherwise stall the solver
    ]
    for s in sorted(used_sorts):
        lines.append(f"(declare-sort {s} 0)")
    for name, tag, primed in used:
        decl = vocab.decl(name)
        args = " ".join(sort_ref(s) for s in decl.arg_sorts)
        res = "Bool" if decl.is_relation else sort_ref(decl.result_sort)
        lines.append(f"(declare-fun {smt_name(name, tag, primed)} "
                     f"({args}) {res})")
    for v in frees:
        lines.append(f"(declare-fun {v.name} () {sort_ref(v.sort)})")
    lines.append(f"(assert {formula_sexpr(vc.hypothesis)})")
    lines.append(f"(assert (not {formula_sexpr(vc.conclusion)}))")
    lines.append("(check-sat)")
    lines.append("(get-model)")
    return "\n".join(lines) + "\n"


def _quantified_sorts(f: Formula) -> set[Sort]:
    out: set[Sort] = set()

    def go(f):
        if isinstance(f, Quant):
            out.add(f.sort)
            go(f.body)
        elif isinstance(f, Not):
            go(f.body)
        elif isinstance(f, (And, Or)):
            for p in f.parts:
                go(p)
        elif isinstance(f, (Implies, Iff)):
            go(f.lhs)
            go(f.rhs)
        elif isinstance(f, (Eq, IntCmp)):
            for t in (f.lhs, f.rhs):
                if isinstance(t, Ite):
                    go(t.cond)

    go(f)
    return out
