"""Brute-force validity of verification conditions on small instances.

The negated obligation is evaluated over every structure of the tagged
vocabulary within the size bounds.  Low copies are not independent: the
update equations in the hypothesis force them pointwise from the high copies
and z, and for a split obligation the functional transition body forces the
high post-state from the pre-state and the transition arguments.  Those
copies are therefore computed instead of enumerated, which keeps the search
space at (high pre-state) x (assignment) without losing completeness.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from ..kernel import (
    Program, StructBuf, SymTable, compile_formula, eval_program,
)
from ..logic import (
    Eq, Formula, Sort, Tag, Term, Var, Vocabulary, conj, smt_name,
    symbol_occurrences,
)
from ..speclang import HighLowUpdate, ProtocolSpec
from ..structures import Structure, SymKey
from ..transforms import map_symbols, retag, substitute
from ..vcgen import VerificationCondition, _prime_eta
from .enumerate import DEFAULT_CEILING, GuardrailExceeded, cell_space, size_combos
from .transition import eval_result, extract_functional


@dataclass
class OracleCounter:
    structure: Structure
    assignment: dict[str, int]


@dataclass
class ValidityResult:
    valid: bool
    counter: Optional[OracleCounter] = None
    cases: int = 0

    def __bool__(self) -> bool:
        return self.valid


@dataclass
class _Derivation:
    key: SymKey
    is_relation: bool
    arg_vars: tuple[Var, ...]
    env_vars: tuple[Var, ...]     # assignment variables the rhs depends on
    rhs: Union[Formula, Term]


def _update_rhs(update: HighLowUpdate, name: str, is_relation: bool,
                primed: bool):
    """The l (or l') defining formula/term for one symbol, over h (or h')."""
    book = update.rel_updates if is_relation else update.fun_updates
    rule = book[name]
    xs = tuple(Var(f"x{i}", p.sort) for i, p in enumerate(rule.params[:-1]))
    binding = {p.name: x for p, x in zip(rule.params, xs + (update.z,))}
    if is_relation:
        rhs: Union[Formula, Term] = retag(substitute(rule.rhs, binding),
                                          Tag.PLAIN, Tag.H)
    else:
        rhs = substitute(Eq(rule.rhs, rule.rhs), binding).lhs
        rhs = map_symbols(Eq(rhs, rhs), lambda s, t, p: (Tag.H, p)).lhs
    return xs, rhs


def _derivations(vc: VerificationCondition, spec: ProtocolSpec,
                 update: Optional[HighLowUpdate],
                 needed: Sequence[SymKey],
                 frees: Sequence[Var]) -> tuple[list[_Derivation], list[Var]]:
    vocab = spec.vocabulary
    derivs: list[_Derivation] = []
    extra: list[Var] = []
    free_names = {v.name for v in frees}

    # high post-state from the (functional) transition named in the part
    tname = vc.part.split(":")[0] if vc.part else ""
    hp_done: set[str] = set()
    if tname:
        t = spec.transition(tname)
        fb = extract_functional(t, vocab)
        if fb is not None:
            if vc.part != tname and ":" in vc.part:
                hint = update.hints.get(tname) if update else None
                params = list(hint.high_params) if hint else list(t.params)
            else:
                params = list(t.params)
            for p in params:
                if p.name not in free_names:
                    extra.append(p)
            pbind = {q.name: p for q, p in zip(t.params, params)}
            for u in fb.updates:
                key = (u.key[0], Tag.HP, False)
                if key not in needed:
                    continue
                if u.is_relation:
                    rhs: Union[Formula, Term] = retag(
                        substitute(u.rhs, pbind), Tag.PLAIN, Tag.H)
                else:
                    rhs = substitute(Eq(u.rhs, u.rhs), pbind).lhs
                    rhs = map_symbols(Eq(rhs, rhs),
                                      lambda s, t_, p: (Tag.H, p)).lhs
                derivs.append(_Derivation(key, u.is_relation, u.arg_vars,
                                          tuple(params), rhs))
                hp_done.add(u.key[0])

    if update is not None:
        z = update.z
        for key in needed:
            name, tag, primed = key
            if tag not in (Tag.L, Tag.LP) or primed:
                continue
            decl = vocab.decl(name)
            xs, rhs = _update_rhs(update, name, decl.is_relation,
                                  tag is Tag.LP)
            if tag is Tag.LP:
                rhs = _prime_eta(rhs, vocab) if decl.is_relation else \
                    map_symbols(Eq(rhs, rhs),
                                lambda s, t_, p:
                                (Tag.HP if vocab.decl(s).mutable and
                                 t_ is Tag.H else t_, p)).lhs
            derivs.append(_Derivation(key, decl.is_relation, xs, (z,), rhs))

    # order: hp first (depends only on h + params), then l, then lp
    rank = {Tag.HP: 0, Tag.L: 1, Tag.LP: 2}
    derivs.sort(key=lambda d: (rank[d.key[1]], smt_name(*d.key)))
    derived_names = {d.key for d in derivs}
    # an hp copy that is needed but not derivable must be enumerated; that is
    # handled by leaving it out of derived_names
    return derivs, extra


def bounded_validity_check(vc: VerificationCondition, spec: ProtocolSpec,
                           bounds: dict[str, int],
                           update: Optional[HighLowUpdate] = None,
                           int_window: int = 3,
                           ceiling: int = DEFAULT_CEILING) -> ValidityResult:
    """First countermodel within bounds, or valid-up-to-bounds."""
    vocab = spec.vocabulary
    negated, frees = vc.negation()
    needed = sorted(set(symbol_occurrences(negated)),
                    key=lambda k: smt_name(*k))
    derivs, extra = _derivations(vc, spec, update, needed, frees)
    derived_keys = {d.key for d in derivs}
    enum_keys = [k for k in needed if k not in derived_keys]
    assign_vars = list(frees) + extra

    table = SymTable.build(vocab, needed)
    neg_prog = compile_formula(negated, table, free=assign_vars)
    slot_of = {v.name: i for i, v in enumerate(assign_vars)}

    deriv_progs = []
    for d in derivs:
        fv = list(d.arg_vars) + list(d.env_vars)
        if d.is_relation:
            prog = compile_formula(d.rhs, table, free=fv)
        else:
            prog = compile_formula(Eq(d.rhs, d.rhs), table, free=fv)
        deriv_progs.append((d, prog))

    finite = [s for s in vocab.sorts.values() if not s.is_int]
    result = ValidityResult(True)
    for sizes in size_combos(finite, bounds):
        buf = StructBuf.layout(table, sizes, int_window)
        space = cell_space(buf, enum_keys)

        def var_domain(v: Var):
            if v.sort.is_int:
                return range(-int_window, int_window + 1)
            return range(sizes[v.sort.name])

        assignments = list(itertools.product(
            *(var_domain(v) for v in assign_vars)))
        total = space.count * max(1, len(assignments))
        if total > ceiling:
            raise GuardrailExceeded(total, ceiling)

        space.first(buf)
        while True:
            for assign in assignments:
                env = dict(enumerate(assign))
                for d, prog in deriv_progs:
                    _write_derived(d, prog, table, buf, assign, slot_of)
                result.cases += 1
                if eval_program(neg_prog, buf, env):
                    structure = buf.to_structure()
                    structure.interps = {
                        k: v for k, v in structure.interps.items()
                        if k in set(needed)}
                    result.valid = False
                    result.counter = OracleCounter(
                        structure,
                        {v.name: a for v, a in zip(assign_vars, assign)})
                    return result
            if not space.next(buf):
                break
    return result


def _write_derived(d: _Derivation, prog: Program, table: SymTable,
                   buf: StructBuf, assign, slot_of) -> None:
    sid = table.sym_ids[d.key]
    off = int(buf.sym_offset[sid])
    so = int(buf.stride_off[sid])
    decl = table.sym_decls[sid]
    arg_sizes = [int(buf.sizes[table.sort_ids[s.name]])
                 for s in decl.arg_sorts]
    nargs = len(arg_sizes)
    env_vals = [assign[slot_of[v.name]] for v in d.env_vars]
    for idxs in itertools.product(*(range(n) for n in arg_sizes)):
        env = dict(enumerate(idxs + tuple(env_vals)))
        val = eval_result(prog, buf, env, d.is_relation)
        addr = off + sum(i * int(buf.strides[so + j])
                         for j, i in enumerate(idxs))
        buf.data[addr] = val
