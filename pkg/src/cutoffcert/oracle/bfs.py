"""Breadth-first reachability over every bounded instance.

An instance fixes finite domains and the immutable part of the
interpretation; its states are the axiom-satisfying interpretations of the
mutable symbols.  The check explores each instance's reachable states from
its initial states and reports the first (minimal-length) safety violation.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from ..kernel import StructBuf, SymTable, compile_formula, eval_program
from ..logic import Formula, Not, Tag, Vocabulary, conj
from ..speclang import ProtocolSpec
from ..structures import Structure
from .enumerate import (
    DEFAULT_CEILING, GuardrailExceeded, cell_space, iter_bufs, size_combos,
)
from .transition import Stepper, prime_mutables

from ..logic import symbol_occurrences


@dataclass
class TraceStep:
    transition: str
    params: tuple[int, ...]
    state: Structure


@dataclass
class Trace:
    initial: Structure
    steps: list[TraceStep]

    def __len__(self) -> int:
        return len(self.steps)


@dataclass
class SafetyResult:
    safe: bool
    trace: Optional[Trace] = None
    states_explored: int = 0
    instances: int = 0
    int_clipped: bool = False   # some successor left the integer window

    def __bool__(self) -> bool:
        return self.safe


def _mentions_mutable(f: Formula, vocab: Vocabulary) -> bool:
    return any(vocab.decl(s).mutable for s, _, _ in symbol_occurrences(f))


def bounded_safety_check(spec: ProtocolSpec, bounds: dict[str, int],
                         int_window: int = 3,
                         ceiling: int = DEFAULT_CEILING) -> SafetyResult:
    """SAFE or a minimal violating trace, over all instances within bounds.

    Expects the original (non-Skolemized) spec with definitions expanded.
    """
    vocab = spec.vocabulary
    keys = [(d.name, Tag.PLAIN, False) for d in vocab.symbols.values()]
    keys += [(d.name, Tag.PLAIN, True) for d in vocab.mutables()]
    table = SymTable.build(vocab, keys)

    imm_keys = [(d.name, Tag.PLAIN, False) for d in vocab.symbols.values()
                if not d.mutable]
    mut_keys = [(d.name, Tag.PLAIN, False) for d in vocab.mutables()]

    imm_axioms = [a for a in spec.axioms if not _mentions_mutable(a, vocab)]
    state_axioms = [a for a in spec.axioms if _mentions_mutable(a, vocab)]

    finite = [s for s in vocab.sorts.values() if not s.is_int]
    result = SafetyResult(True)
    for sizes in size_combos(finite, bounds):
        base = StructBuf.layout(table, sizes, int_window)
        imm_prog = compile_formula(conj(imm_axioms), table)
        init_prog = compile_formula(conj(state_axioms + list(spec.inits)),
                                    table)
        state_prog = compile_formula(conj(state_axioms), table)
        bad_prog = compile_formula(Not(spec.safety), table)

        imm_space = cell_space(base, imm_keys)
        mut_space = cell_space(base, mut_keys)
        if max(imm_space.count, mut_space.count) > ceiling:
            raise GuardrailExceeded(max(imm_space.count, mut_space.count),
                                    ceiling)

        imm_space.first(base)
        while True:
            if eval_program(imm_prog, base):
                result.instances += 1
                _explore_instance(spec, table, base, mut_space, init_prog,
                                  state_prog, bad_prog, sizes, result)
                if not result.safe:
                    return result
            if not imm_space.next(base):
                break
    return result


def _explore_instance(spec, table, buf, mut_space, init_prog, state_prog,
                      bad_prog, sizes, result) -> None:
    stepper = Stepper(spec, table, buf)
    window = buf.int_window
    int_mask = mut_space.lows < 0

    # initial states: every mutable interpretation satisfying axioms + init,
    # enumerating only the cells that the init clauses do not pin outright
    pins, free_cells = _pin_inits(spec, table, buf)
    inits: list[bytes] = []
    for off, val in pins:
        buf.data[off] = val
    free_cells.first(buf)
    while True:
        if eval_program(init_prog, buf):
            inits.append(buf.data[mut_space.offsets].tobytes())
        if not free_cells.next(buf):
            break

    parent: dict[bytes, Optional[tuple[bytes, str, tuple[int, ...]]]] = {}
    queue: deque[bytes] = deque()
    for st in inits:
        if st not in parent:
            parent[st] = None
            queue.append(st)

    def as_structure(state: bytes) -> Structure:
        stepper.load(state)
        full = buf.to_structure()
        # drop the primed copies from the snapshot
        full.interps = {k: v for k, v in full.interps.items() if not k[2]}
        return full

    while queue:
        state = queue.popleft()
        result.states_explored += 1
        stepper.load(state)
        if eval_program(bad_prog, buf):
            steps = []
            cur = state
            while parent[cur] is not None:
                prev, tname, params = parent[cur]
                steps.append(TraceStep(tname, params, as_structure(cur)))
                cur = prev
            steps.reverse()
            result.safe = False
            result.trace = Trace(as_structure(cur), steps)
            return
        for tname, params, post in stepper.successors(state):
            if post in parent:
                continue
            if int_mask.any():
                arr = np.frombuffer(post, dtype=np.int64)
                if np.any(np.abs(arr[int_mask]) > window):
                    result.int_clipped = True
                    continue
            parent[post] = (state, tname, params)
            queue.append(post)


def _pin_inits(spec: ProtocolSpec, table: SymTable, buf: StructBuf
               ) -> tuple[list[tuple[int, int]], "object"]:
    """Pin cells fully determined by init clauses of the common shapes
    ``forall xs. r(xs)``, ``forall xs. !r(xs)`` and ``c = <literal>``; the
    remaining mutable cells are enumerated."""
    from ..logic import And, App, Eq, IntLit, Not as _Not, Quant, Rel, Var

    vocab = spec.vocabulary
    pinned: dict[str, int] = {}
    conjuncts: list = []
    for clause in spec.inits:
        conjuncts.extend(clause.parts if isinstance(clause, And)
                         else (clause,))
    for c in conjuncts:
        body = c
        binders: list[str] = []
        while isinstance(body, Quant) and body.kind == "forall":
            binders.append(body.var)
            body = body.body
        val, atom = None, body
        if isinstance(body, _Not) and isinstance(body.body, Rel):
            val, atom = 0, body.body
        elif isinstance(body, Rel):
            val = 1
        if val is not None and isinstance(atom, Rel) and not atom.primed \
                and atom.sym in vocab.symbols \
                and vocab.decl(atom.sym).mutable \
                and all(isinstance(a, Var) for a in atom.args) \
                and sorted(a.name for a in atom.args) == sorted(binders) \
                and len({a.name for a in atom.args}) == len(atom.args):
            pinned[atom.sym] = val
            continue
        if isinstance(body, Eq) and not binders \
                and isinstance(body.lhs, App) and not body.lhs.args \
                and isinstance(body.rhs, IntLit) \
                and vocab.decl(body.lhs.sym).mutable:
            pinned[body.lhs.sym] = body.rhs.value

    writes: list[tuple[int, int]] = []
    free_keys = []
    for decl in vocab.mutables():
        sid = table.sym_ids[(decl.name, Tag.PLAIN, False)]
        if decl.name in pinned:
            off = int(buf.sym_offset[sid])
            for i in range(int(buf.sym_len[sid])):
                writes.append((off + i, pinned[decl.name]))
        else:
            free_keys.append((decl.name, Tag.PLAIN, False))
    return writes, cell_space(buf, free_keys)
