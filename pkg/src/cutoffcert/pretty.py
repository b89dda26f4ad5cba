"""Render formulas and specs back to the surface syntax."""

from __future__ import annotations

from typing import Union

from .logic import (
    And, App, Eq, Formula, Iff, Implies, IntCmp, IntLit, IntOp, Ite, Lit,
    Not, Or, Quant, Rel, Sort, SortKind, Tag, Term, Var, smt_name,
)

_PREC_IFF = 1
_PREC_IMPL = 2
_PREC_OR = 3
_PREC_AND = 4
_PREC_NOT = 5
_PREC_ATOM = 6


def term_str(t: Term) -> str:
    if isinstance(t, Var):
        return t.name
    if isinstance(t, App):
        name = smt_name(t.sym, t.tag, t.primed) if t.tag is not Tag.PLAIN \
            else (t.sym + "'" if t.primed else t.sym)
        if not t.args:
            return name
        return f"{name}({', '.join(term_str(a) for a in t.args)})"
    if isinstance(t, IntLit):
        return str(t.value)
    if isinstance(t, IntOp):
        if t.op == "neg":
            return f"-({term_str(t.args[0])})"
        lhs, rhs = t.args
        rs = term_str(rhs)
        if isinstance(rhs, IntOp) and rhs.op != "neg":
            rs = f"({rs})"
        return f"{term_str(lhs)} {t.op} {rs}"
    if isinstance(t, Ite):
        return f"ite({fmt(t.cond)}, {term_str(t.then)}, {term_str(t.other)})"
    raise ValueError(f"not a term: {t!r}")


def fmt(f: Formula, prec: int = 0) -> str:
    def wrap(s: str, mine: int) -> str:
        return f"({s})" if mine < prec else s

    if isinstance(f, Lit):
        return "true" if f.value else "false"
    if isinstance(f, Eq):
        return wrap(f"{term_str(f.lhs)} = {term_str(f.rhs)}", _PREC_ATOM)
    if isinstance(f, IntCmp):
        return wrap(f"{term_str(f.lhs)} {f.op} {term_str(f.rhs)}", _PREC_ATOM)
    if isinstance(f, Rel):
        name = smt_name(f.sym, f.tag, f.primed) if f.tag is not Tag.PLAIN \
            else (f.sym + "'" if f.primed else f.sym)
        if not f.args:
            return name
        return f"{name}({', '.join(term_str(a) for a in f.args)})"
    if isinstance(f, Not):
        if isinstance(f.body, Eq):
            return wrap(f"{term_str(f.body.lhs)} != {term_str(f.body.rhs)}",
                        _PREC_ATOM)
        return wrap("!" + fmt(f.body, _PREC_NOT + 1), _PREC_NOT)
    if isinstance(f, And):
        return wrap(" & ".join(fmt(p, _PREC_AND + 1) for p in f.parts),
                    _PREC_AND)
    if isinstance(f, Or):
        return wrap(" | ".join(fmt(p, _PREC_OR + 1) for p in f.parts),
                    _PREC_OR)
    if isinstance(f, Implies):
        return wrap(f"{fmt(f.lhs, _PREC_IMPL + 1)} -> {fmt(f.rhs, _PREC_IMPL)}",
                    _PREC_IMPL)
    if isinstance(f, Iff):
        return wrap(f"{fmt(f.lhs, _PREC_IFF + 1)} <-> {fmt(f.rhs, _PREC_IFF + 1)}",
                    _PREC_IFF)
    if isinstance(f, Quant):
        binders = [(f.var, f.sort)]
        body = f.body
        while isinstance(body, Quant) and body.kind == f.kind:
            binders.append((body.var, body.sort))
            body = body.body
        bs = ", ".join(f"{v}: {s.name}" for v, s in binders)
        return wrap(f"{f.kind} {bs}. {fmt(body)}", 0)
    raise ValueError(f"not a formula: {f!r}")


def spec_str(spec, task=None) -> str:
    """Surface-syntax text for a resolved spec (+ optional cutoff task)."""
    from .speclang import CutoffTask, ProtocolSpec  # local: avoid cycle

    out: list[str] = []
    for sort in spec.vocabulary.sorts.values():
        if sort.kind is SortKind.INT:
            out.append("sort int")
        elif sort.kind is SortKind.BOUNDED:
            out.append(f"sort {sort.name} bounded {sort.bound}")
        else:
            out.append(f"sort {sort.name}")
    for d in spec.vocabulary.symbols.values():
        out.append(str(d))
    for d in spec.definitions.values():
        ps = ", ".join(f"{p.name}: {p.sort.name}" for p in d.params)
        out.append(f"def {d.name}({ps}) := {fmt(d.body)}")
    for a in spec.axioms:
        out.append(f"axiom {fmt(a)}")
    for i in spec.inits:
        out.append(f"init {fmt(i)}")
    for t in spec.transitions:
        ps = ", ".join(f"{p.name}: {p.sort.name}" for p in t.params)
        out.append(f"transition {t.name}({ps})")
        for c, is_assume in zip(t.conjuncts,
                                _assume_mask(t)):
            out.append(("  assume " if is_assume else "  ") + fmt(c))
    out.append(f"safety {fmt(spec.safety)}")
    if task is not None:
        for stage in task.stages:
            out.append("")
            if stage.bound is not None:
                out.append(f"bound {stage.sort.name} {stage.bound}")
            if stage.condition is not None:
                out.append(f"condition(z: {stage.sort.name}) = "
                           f"{fmt(stage.condition)}")
            for book in (stage.rel_updates, stage.fun_updates):
                for name, rule in book.items():
                    ps = ", ".join(f"{p.name}: {p.sort.name}"
                                   for p in rule.params)
                    rhs = fmt(rule.rhs) if not _is_term(rule.rhs) \
                        else term_str(rule.rhs)
                    out.append(f"update {name}({ps}) = {rhs}")
            for h in stage.hints.values():
                ps = ", ".join(f"{p.name}: {p.sort.name}"
                               for p in h.high_params + h.low_params
                               + (h.z,))
                arrow = f" -> {h.target}" if h.target != h.transition else ""
                out.append(f"hint {h.transition}({ps}){arrow} = {fmt(h.body)}")
            for inv in stage.invariants:
                out.append(f"invariant {fmt(inv)}")
    return "\n".join(out) + "\n"


def _is_term(x) -> bool:
    return isinstance(x, (Var, App, IntLit, IntOp, Ite))


def _assume_mask(t) -> list[bool]:
    mask = []
    assumes = list(t.assumes)
    for c in t.conjuncts:
        if assumes and c == assumes[0]:
            mask.append(True)
            assumes.pop(0)
        else:
            mask.append(False)
    return mask
