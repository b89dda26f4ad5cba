"""Successor computation for explicit-state exploration.

Transition bodies in the corpus shape pin every mutable symbol's post-state
pointwise (``forall xs. r'(xs) <-> rhs`` / ``f'(xs) = rhs``); those are
extracted into per-cell programs so successors are computed directly instead
of enumerating candidate post-states.  Bodies outside this shape fall back to
guarded enumeration of the post space (guardrail applies).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

import numpy as np

from ..kernel import Program, StructBuf, SymTable, compile_formula, eval_program
from ..logic import (
    And, App, Eq, Formula, Iff, Not, Or, Quant, Rel, Sort, Tag, Term, Var,
    Vocabulary, conj,
)
from ..speclang import TransitionDef
from ..structures import SymKey
from ..transforms import map_symbols
from .enumerate import CellSpace, cell_space


def prime_mutables(f: Formula, vocab: Vocabulary) -> Formula:
    """View a single-state formula as a constraint on the post state."""

    def fn(sym: str, tag: Tag, primed: bool):
        return (tag, True) if vocab.decl(sym).mutable else (tag, primed)

    return map_symbols(f, fn)


@dataclass
class CellUpdate:
    key: SymKey                 # primed symbol copy being written
    is_relation: bool
    arg_vars: tuple[Var, ...]   # one per argument position
    rhs: object                 # Formula (relations) or Term (functions)


@dataclass
class FunctionalBody:
    transition: TransitionDef
    guards: tuple[Formula, ...]
    updates: tuple[CellUpdate, ...]


def extract_functional(t: TransitionDef, vocab: Vocabulary
                       ) -> Optional[FunctionalBody]:
    from ..logic import symbol_occurrences

    guards: list[Formula] = []
    updates: list[CellUpdate] = []
    seen: set[str] = set()
    for c in t.conjuncts:
        if not any(p for _, _, p in symbol_occurrences(c)):
            guards.append(c)
            continue
        upd = _match_update(c, vocab)
        if upd is None or upd.key[0] in seen:
            return None
        seen.add(upd.key[0])
        updates.append(upd)
    for decl in vocab.mutables():
        if decl.name not in seen:
            return None
    return FunctionalBody(t, tuple(guards), tuple(updates))


def _match_update(c: Formula, vocab: Vocabulary) -> Optional[CellUpdate]:
    from ..logic import symbol_occurrences

    binders: list[Var] = []
    while isinstance(c, Quant) and c.kind == "forall":
        binders.append(Var(c.var, c.sort))
        c = c.body
    lhs = rhs = None
    if isinstance(c, Iff):
        lhs, rhs = c.lhs, c.rhs
        if not _is_primed_atom(lhs):
            lhs, rhs = rhs, lhs
        if not isinstance(lhs, Rel):
            return None
    elif isinstance(c, Eq):
        lhs, rhs = c.lhs, c.rhs
        if not _is_primed_atom(lhs):
            lhs, rhs = rhs, lhs
        if not isinstance(lhs, App):
            return None
    else:
        return None
    if not _is_primed_atom(lhs):
        return None
    args = lhs.args
    if len(args) != len(binders) or any(
            not isinstance(a, Var) for a in args):
        return None
    if [a.name for a in args] != [b.name for b in binders]:
        return None
    decl = vocab.decl(lhs.sym)
    rhs_occurrences = (_term_occurrences(rhs) if not decl.is_relation
                       else symbol_occurrences(rhs))
    if any(p for _, _, p in rhs_occurrences):
        return None
    return CellUpdate((lhs.sym, Tag.PLAIN, True), decl.is_relation,
                      tuple(binders), rhs)


def _term_occurrences(t: Term):
    from ..logic import Eq as _Eq, symbol_occurrences
    return symbol_occurrences(_Eq(t, t))


def _is_primed_atom(x) -> bool:
    return isinstance(x, (Rel, App)) and x.primed and x.tag is Tag.PLAIN


class Stepper:
    """Computes successors of packed states for one vocabulary/sizes."""

    def __init__(self, spec, table: SymTable, buf: StructBuf):
        self.spec = spec
        self.vocab = spec.vocabulary
        self.table = table
        self.buf = buf
        self.mut_plain = cell_space(buf, [
            (d.name, Tag.PLAIN, False) for d in self.vocab.mutables()])
        self.mut_primed = cell_space(buf, [
            (d.name, Tag.PLAIN, True) for d in self.vocab.mutables()])
        gamma_post = conj([prime_mutables(a, self.vocab)
                           for a in spec.axioms])
        self.gamma_post_prog = compile_formula(gamma_post, table)
        self.plans = []
        for t in spec.transitions:
            fb = extract_functional(t, self.vocab)
            self.plans.append(self._compile_plan(t, fb))

    def _compile_plan(self, t: TransitionDef, fb: Optional[FunctionalBody]):
        params = list(t.params)
        if fb is None:
            body_prog = compile_formula(t.body, self.table, free=params)
            return ("brute", t, body_prog)
        guard_prog = compile_formula(conj(fb.guards), self.table,
                                     free=params)
        cell_progs = []
        for u in fb.updates:
            frees = list(u.arg_vars) + params
            if u.is_relation:
                prog = compile_formula(u.rhs, self.table, free=frees)
            else:
                prog = compile_formula(Eq(u.rhs, u.rhs), self.table,
                                       free=frees)
                # evaluate the term by wrapping: cheaper to compile rhs = x?
            cell_progs.append((u, prog))
        return ("fun", t, guard_prog, cell_progs)

    def param_space(self, t: TransitionDef) -> list[tuple[int, ...]]:
        doms = []
        for p in t.params:
            if p.sort.is_int:
                doms.append(range(-self.buf.int_window,
                                  self.buf.int_window + 1))
            else:
                doms.append(range(
                    int(self.buf.sizes[self.table.sort_ids[p.sort.name]])))
        return list(itertools.product(*doms))

    def load(self, state: bytes) -> None:
        self.buf.data[self.mut_plain.offsets] = np.frombuffer(
            state, dtype=np.int64)

    def store_pre(self) -> bytes:
        return self.buf.data[self.mut_plain.offsets].tobytes()

    def successors(self, state: bytes) -> Iterator[
            tuple[str, tuple[int, ...], bytes]]:
        """(transition, params, post-state) triples; post satisfies the
        axioms."""
        for plan in self.plans:
            if plan[0] == "fun":
                yield from self._fun_successors(state, plan)
            else:
                yield from self._brute_successors(state, plan)

    def _fun_successors(self, state: bytes, plan):
        _, t, guard_prog, cell_progs = plan
        buf = self.buf
        table = self.table
        for params in self.param_space(t):
            self.load(state)
            if not eval_program(guard_prog, buf, dict(enumerate(params))):
                continue
            ok = True
            for u, prog in cell_progs:
                sid = table.sym_ids[u.key]
                off = int(buf.sym_offset[sid])
                so = int(buf.stride_off[sid])
                arg_sizes = []
                for s in table.sym_decls[sid].arg_sorts:
                    arg_sizes.append(
                        int(buf.sizes[table.sort_ids[s.name]]))
                for idxs in itertools.product(*(range(n)
                                                for n in arg_sizes)):
                    envc = dict(enumerate(idxs + params))
                    val = eval_result(prog, buf, envc, u.is_relation)
                    addr = off + sum(i * int(buf.strides[so + j])
                                     for j, i in enumerate(idxs))
                    buf.data[addr] = val
            if not eval_program(self.gamma_post_prog, buf):
                continue
            post = buf.data[self.mut_primed.offsets].tobytes()
            yield (t.name, params, post)

    def _brute_successors(self, state: bytes, plan):
        _, t, body_prog = plan
        buf = self.buf
        for params in self.param_space(t):
            space = self.mut_primed
            space.first(buf)
            while True:
                self.load(state)
                if eval_program(body_prog, buf, dict(enumerate(params))) \
                        and eval_program(self.gamma_post_prog, buf):
                    yield (t.name, params,
                           buf.data[space.offsets].tobytes())
                if not space.next(buf):
                    break


def eval_result(prog: Program, buf: StructBuf, env: dict, is_relation: bool
                ) -> int:
    if is_relation:
        return 1 if eval_program(prog, buf, env) else 0
    # prog was compiled from Eq(t, t): interpret its left child as a value
    lhs_node = int(prog.ops[prog.root][1])
    sub = Program(prog.ops, prog.children, prog.nslots, lhs_node,
                  prog.free_slots)
    return eval_value(sub, buf, env)


def eval_value(prog: Program, buf: StructBuf, env: dict) -> int:
    """Interpret a program whose root is a term node; returns its value."""
    from ..kernel.pure import _buf_lists, _prog_lists

    ops, children = _prog_lists(prog)
    sym_offset, stride_off, strides, sizes = _buf_lists(buf)
    data = buf.data
    slots = [0] * max(prog.nslots, 1)
    for k, v in env.items():
        slots[k] = v

    from ..kernel.compile import (
        INT_SORT_ID, OP_ADD, OP_AND, OP_APP, OP_EQ, OP_EXISTS, OP_FORALL,
        OP_IFF, OP_IMPLIES, OP_INTLIT, OP_ITE, OP_LE, OP_LIT, OP_LT, OP_NEG,
        OP_NOT, OP_OR, OP_REL, OP_SUB, OP_VAR,
    )

    def node(i: int) -> int:
        op, a, b, c = ops[i]
        if op == OP_VAR:
            return slots[a]
        if op == OP_APP or op == OP_REL:
            addr = sym_offset[a]
            so = stride_off[a]
            for j in range(c):
                addr += node(children[b + j]) * strides[so + j]
            v = int(data[addr])
            return (1 if v else 0) if op == OP_REL else v
        if op == OP_LIT or op == OP_INTLIT:
            return a
        if op == OP_ITE:
            return node(b) if node(a) else node(c)
        if op == OP_ADD:
            return node(a) + node(b)
        if op == OP_SUB:
            return node(a) - node(b)
        if op == OP_NEG:
            return -node(a)
        if op == OP_EQ:
            return 1 if node(a) == node(b) else 0
        if op == OP_LE:
            return 1 if node(a) <= node(b) else 0
        if op == OP_LT:
            return 1 if node(a) < node(b) else 0
        if op == OP_NOT:
            return 0 if node(a) else 1
        if op == OP_AND:
            for j in range(c):
                if not node(children[b + j]):
                    return 0
            return 1
        if op == OP_OR:
            for j in range(c):
                if node(children[b + j]):
                    return 1
            return 0
        if op == OP_IMPLIES:
            return node(b) if node(a) else 1
        if op == OP_IFF:
            return 1 if bool(node(a)) == bool(node(b)) else 0
        if op == OP_FORALL or op == OP_EXISTS:
            if c == INT_SORT_ID:
                lo, hi = -buf.int_window, buf.int_window
            else:
                lo, hi = 0, sizes[c] - 1
            want = 0 if op == OP_FORALL else 1
            for d in range(lo, hi + 1):
                slots[a] = d
                if node(b) == want:
                    return want
            return 1 - want
        raise ValueError(f"bad opcode {op}")

    return node(prog.root)
