"""Compile formulas and structures into flat arrays for the eval kernels.

The brute-force checks evaluate small formulas over millions of enumerated
structures, so both are lowered once into integer arrays: a ``Program`` is an
opcode table over a node array, a ``StructBuf`` packs all interpretations of
one structure into a single int64 data vector with per-symbol offsets and
strides.  Both the compiled backend and the pure-Python fallback interpret
exactly this representation.

Kernel restriction: symbols must not take integer-sorted arguments (none of
ours do); integer-sorted quantifiers range over the structure's window.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Optional, Sequence

import numpy as np

from ..logic import (
    And, App, Eq, Formula, Iff, IllFormed, Implies, IntCmp, IntLit, IntOp,
    Ite, Lit, Not, Or, Quant, Rel, Sort, SortKind, SymbolDecl, Tag, Term,
    Var, Vocabulary, smt_name,
)
from ..structures import Structure, SymKey

OP_LIT = 0
OP_VAR = 1
OP_INTLIT = 2
OP_APP = 3
OP_REL = 4
OP_EQ = 5
OP_LE = 6
OP_LT = 7
OP_ADD = 8
OP_SUB = 9
OP_NEG = 10
OP_ITE = 11
OP_NOT = 12
OP_AND = 13
OP_OR = 14
OP_IMPLIES = 15
OP_IFF = 16
OP_FORALL = 17
OP_EXISTS = 18

INT_SORT_ID = -1


class KernelUnsupported(Exception):
    """Formula/structure outside the kernel fragment; use the reference
    evaluator instead."""


@dataclass
class SymTable:
    """Stable numbering of sorts and symbol copies."""

    vocabulary: Vocabulary
    sort_ids: dict[str, int]
    sym_ids: dict[SymKey, int]
    sym_decls: list[SymbolDecl]
    sym_keys: list[SymKey]

    @classmethod
    def build(cls, vocab: Vocabulary, keys: Iterable[SymKey]) -> "SymTable":
        sort_ids = {}
        for s in vocab.sorts.values():
            if not s.is_int:
                sort_ids[s.name] = len(sort_ids)
        sym_ids: dict[SymKey, int] = {}
        decls: list[SymbolDecl] = []
        ordered: list[SymKey] = []
        for k in sorted(set(keys), key=lambda k: smt_name(*k)):
            decl = vocab.decl(k[0])
            if any(s.is_int for s in decl.arg_sorts):
                raise KernelUnsupported(f"{k[0]} has integer-sorted arguments")
            sym_ids[k] = len(ordered)
            ordered.append(k)
            decls.append(decl)
        return cls(vocab, sort_ids, sym_ids, decls, ordered)

    def sort_id(self, sort: Sort) -> int:
        if sort.is_int:
            return INT_SORT_ID
        return self.sort_ids[sort.name]


@dataclass
class Program:
    ops: np.ndarray        # (n, 4) int64: opcode, a, b, c
    children: np.ndarray   # flat int64 argument-list pool
    nslots: int            # environment size
    root: int
    free_slots: dict[str, int]  # free variable name -> env slot


def compile_formula(f: Formula, table: SymTable,
                    free: Sequence[Var] = ()) -> Program:
    ops: list[tuple[int, int, int, int]] = []
    children: list[int] = []
    scope: dict[str, list[int]] = {}
    next_slot = 0
    free_slots: dict[str, int] = {}

    for v in free:
        scope.setdefault(v.name, []).append(next_slot)
        free_slots[v.name] = next_slot
        next_slot += 1

    def emit(op: int, a: int = 0, b: int = 0, c: int = 0) -> int:
        ops.append((op, a, b, c))
        return len(ops) - 1

    def args_block(args: Sequence[int]) -> tuple[int, int]:
        off = len(children)
        children.extend(args)
        return off, len(args)

    def on_term(t: Term) -> int:
        nonlocal next_slot
        if isinstance(t, Var):
            if t.name not in scope or not scope[t.name]:
                raise IllFormed(f"unbound variable {t.name}")
            return emit(OP_VAR, scope[t.name][-1])
        if isinstance(t, App):
            k = (t.sym, t.tag, t.primed)
            if k not in table.sym_ids:
                raise IllFormed(f"symbol copy {smt_name(*k)} not in table")
            arg_nodes = [on_term(a) for a in t.args]
            off, n = args_block(arg_nodes)
            return emit(OP_APP, table.sym_ids[k], off, n)
        if isinstance(t, IntLit):
            return emit(OP_INTLIT, t.value)
        if isinstance(t, IntOp):
            if t.op == "+":
                node = on_term(t.args[0])
                for a in t.args[1:]:
                    node = emit(OP_ADD, node, on_term(a))
                return node
            if t.op == "-":
                return emit(OP_SUB, on_term(t.args[0]), on_term(t.args[1]))
            if t.op == "neg":
                return emit(OP_NEG, on_term(t.args[0]))
            raise IllFormed(f"unknown integer operator {t.op}")
        if isinstance(t, Ite):
            return emit(OP_ITE, go(t.cond), on_term(t.then), on_term(t.other))
        raise IllFormed(f"not a term: {t!r}")

    def go(f: Formula) -> int:
        nonlocal next_slot
        if isinstance(f, Lit):
            return emit(OP_LIT, int(f.value))
        if isinstance(f, Eq):
            return emit(OP_EQ, on_term(f.lhs), on_term(f.rhs))
        if isinstance(f, IntCmp):
            op = OP_LE if f.op == "<=" else OP_LT
            return emit(op, on_term(f.lhs), on_term(f.rhs))
        if isinstance(f, Rel):
            k = (f.sym, f.tag, f.primed)
            if k not in table.sym_ids:
                raise IllFormed(f"symbol copy {smt_name(*k)} not in table")
            arg_nodes = [on_term(a) for a in f.args]
            off, n = args_block(arg_nodes)
            return emit(OP_REL, table.sym_ids[k], off, n)
        if isinstance(f, Not):
            return emit(OP_NOT, go(f.body))
        if isinstance(f, (And, Or)):
            nodes = [go(p) for p in f.parts]
            off, n = args_block(nodes)
            return emit(OP_AND if isinstance(f, And) else OP_OR, 0, off, n)
        if isinstance(f, Implies):
            return emit(OP_IMPLIES, go(f.lhs), go(f.rhs))
        if isinstance(f, Iff):
            return emit(OP_IFF, go(f.lhs), go(f.rhs))
        if isinstance(f, Quant):
            slot = next_slot
            next_slot += 1
            scope.setdefault(f.var, []).append(slot)
            body = go(f.body)
            scope[f.var].pop()
            op = OP_FORALL if f.kind == "forall" else OP_EXISTS
            return emit(op, slot, body, table.sort_id(f.sort))
        raise IllFormed(f"not a formula: {f!r}")

    root = go(f)
    return Program(np.array(ops, dtype=np.int64).reshape(len(ops), 4),
                   np.array(children, dtype=np.int64),
                   next_slot, root, free_slots)


@dataclass
class StructBuf:
    """One structure, packed: ``data[sym_offset[s] + sum(args*strides)]``."""

    table: SymTable
    sizes: np.ndarray       # int64 per sort id
    int_window: int
    data: np.ndarray        # int64
    sym_offset: np.ndarray  # int64 per symbol
    sym_len: np.ndarray     # int64 per symbol
    strides: np.ndarray     # flat int64
    stride_off: np.ndarray  # int64 per symbol
    sym_is_rel: np.ndarray  # int8 per symbol

    @classmethod
    def layout(cls, table: SymTable, sizes_by_sort: Mapping[str, int],
               int_window: int = 3) -> "StructBuf":
        nsorts = len(table.sort_ids)
        sizes = np.zeros(nsorts, dtype=np.int64)
        for name, sid in table.sort_ids.items():
            sizes[sid] = sizes_by_sort[name]
        offsets, lens, stride_off, strides, is_rel = [], [], [], [], []
        total = 0
        for decl in table.sym_decls:
            arg_sizes = [sizes[table.sort_ids[s.name]] for s in decl.arg_sorts]
            n = 1
            sym_strides = []
            for sz in reversed(arg_sizes):
                sym_strides.append(n)
                n *= int(sz)
            sym_strides.reverse()
            offsets.append(total)
            lens.append(n)
            stride_off.append(len(strides))
            strides.extend(sym_strides)
            is_rel.append(1 if decl.is_relation else 0)
            total += n
        return cls(table, sizes, int_window,
                   np.zeros(total, dtype=np.int64),
                   np.array(offsets, dtype=np.int64),
                   np.array(lens, dtype=np.int64),
                   np.array(strides if strides else [0], dtype=np.int64),
                   np.array(stride_off, dtype=np.int64),
                   np.array(is_rel, dtype=np.int8))

    def clone(self) -> "StructBuf":
        out = StructBuf(self.table, self.sizes, self.int_window,
                        self.data.copy(), self.sym_offset, self.sym_len,
                        self.strides, self.stride_off, self.sym_is_rel)
        return out

    # -- conversions ---------------------------------------------------------

    @classmethod
    def from_structure(cls, table: SymTable, s: Structure) -> "StructBuf":
        """Pack a structure; domain elements are relabelled to 0..n-1 in the
        order of ``s.domains`` tuples."""
        sizes = {name: len(dom) for name, dom in s.domains.items()}
        buf = cls.layout(table, sizes, s.int_window)
        pos = {name: {e: i for i, e in enumerate(dom)}
               for name, dom in s.domains.items()}
        for k, sid in table.sym_ids.items():
            decl = table.sym_decls[sid]
            interp = s.interps.get(k)
            if interp is None:
                raise IllFormed(f"structure lacks {smt_name(*k)}")
            off = int(buf.sym_offset[sid])
            so = int(buf.stride_off[sid])
            if decl.is_relation:
                for tup in interp:
                    addr = off
                    for i, (e, srt) in enumerate(zip(tup, decl.arg_sorts)):
                        addr += pos[srt.name][e] * int(buf.strides[so + i])
                    buf.data[addr] = 1
            else:
                res = decl.result_sort
                for tup, v in interp.items():
                    addr = off
                    for i, (e, srt) in enumerate(zip(tup, decl.arg_sorts)):
                        addr += pos[srt.name][e] * int(buf.strides[so + i])
                    buf.data[addr] = v if res.is_int else pos[res.name][v]
        return buf

    def to_structure(self, domains: Optional[dict[str, tuple[int, ...]]] = None
                     ) -> Structure:
        """Unpack into a structure on canonical domains 0..n-1 (or the given
        element tuples)."""
        table = self.table
        if domains is None:
            domains = {name: tuple(range(int(self.sizes[sid])))
                       for name, sid in table.sort_ids.items()}
        elems = {name: tuple(dom) for name, dom in domains.items()}
        interps: dict[SymKey, Any] = {}
        for k, sid in table.sym_ids.items():
            decl = table.sym_decls[sid]
            doms = [elems[s.name] for s in decl.arg_sorts]
            off = int(self.sym_offset[sid])
            so = int(self.stride_off[sid])
            if decl.is_relation:
                tuples = []
                for idxs in itertools.product(*(range(len(d)) for d in doms)):
                    addr = off + sum(i * int(self.strides[so + j])
                                     for j, i in enumerate(idxs))
                    if self.data[addr]:
                        tuples.append(tuple(d[i] for d, i in zip(doms, idxs)))
                interps[k] = frozenset(tuples)
            else:
                res = decl.result_sort
                out = {}
                for idxs in itertools.product(*(range(len(d)) for d in doms)):
                    addr = off + sum(i * int(self.strides[so + j])
                                     for j, i in enumerate(idxs))
                    v = int(self.data[addr])
                    out[tuple(d[i] for d, i in zip(doms, idxs))] = (
                        v if res.is_int else elems[res.name][v])
                interps[k] = out
        return Structure(table.vocabulary, dict(elems), interps,
                         self.int_window)
