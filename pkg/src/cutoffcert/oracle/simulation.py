"""Direct exhaustive check of the simulation definitions on bounded universes.

Pairs of the size-reducing relation are materialized constructively: for a
state satisfying the deletion condition at z = d0, the low interpretation is
computed from the update equations (this is exactly how totality is proved)
and the element d0 is then deleted; the pair exists when the deletion keeps
functions total and the result still satisfies the axioms.

The five strong items and the two weaker existential items are then checked
by exhaustive quantification over states, pairs, and transitions.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from ..kernel import StructBuf, SymTable, compile_formula, eval_program
from ..logic import Eq, Not, Sort, Tag, Var, conj
from ..speclang import HighLowUpdate, ProtocolSpec
from ..structures import Structure
from .bfs import _mentions_mutable
from .enumerate import (
    DEFAULT_CEILING, GuardrailExceeded, cell_space, size_combos,
)
from .transition import Stepper, eval_result
from .validity import _update_rhs


@dataclass
class ItemResult:
    holds: bool = True
    witness: str = ""

    def fail(self, witness: str) -> None:
        if self.holds:
            self.holds = False
            self.witness = witness


@dataclass
class SimulationReport:
    strong: dict[str, ItemResult]
    weak: dict[str, ItemResult]
    pairs: int = 0
    states: int = 0

    def all_strong(self) -> bool:
        return all(r.holds for r in self.strong.values())

    def all_weak(self) -> bool:
        return all(r.holds for r in self.weak.values())


class _LowBuilder:
    """Computes the low partner of a high state for a given deleted element."""

    def __init__(self, spec: ProtocolSpec, update: HighLowUpdate,
                 table: SymTable, buf: StructBuf):
        self.spec = spec
        self.update = update
        self.table = table
        self.buf = buf
        self.sort = update.sort
        self.sort_id = table.sort_ids[self.sort.name]
        vocab = spec.vocabulary
        self.z = update.z
        self.cond_prog = compile_formula(update.condition, table,
                                         free=[self.z])
        self.rules = []
        for decl in vocab.symbols.values():
            xs, rhs = _plain_update_rhs(update, decl.name, decl.is_relation)
            fv = list(xs) + [self.z]
            prog = compile_formula(rhs if decl.is_relation else Eq(rhs, rhs),
                                   table, free=fv)
            self.rules.append((decl, prog))

    def low_sizes(self) -> dict[str, int]:
        sizes = {name: int(self.buf.sizes[sid])
                 for name, sid in self.table.sort_ids.items()}
        sizes[self.sort.name] -= 1
        return sizes

    def condition_holds(self, d0: int) -> bool:
        return eval_program(self.cond_prog, self.buf, {0: d0})

    def build(self, d0: int, out: StructBuf) -> bool:
        """Write the low state (domain element d0 removed, later elements
        shifted down) into ``out``; False when the deletion is not closed."""
        table = self.table
        buf = self.buf
        tsid = self.sort_id

        def relabel(sort_name: str, v: int) -> int:
            if table.sort_ids.get(sort_name) != tsid:
                return v
            return v - 1 if v > d0 else v

        for decl, prog in self.rules:
            sid = table.sym_ids[(decl.name, Tag.PLAIN, False)]
            off_out = int(out.sym_offset[sid])
            so_out = int(out.stride_off[sid])
            arg_sids = [table.sort_ids[s.name] for s in decl.arg_sorts]
            arg_sizes = [int(buf.sizes[i]) for i in arg_sids]
            for idxs in itertools.product(*(range(n) for n in arg_sizes)):
                if any(sid_ == tsid and v == d0
                       for sid_, v in zip(arg_sids, idxs)):
                    continue
                env = dict(enumerate(idxs + (d0,)))
                val = eval_result(prog, buf, env, decl.is_relation)
                if not decl.is_relation:
                    res = decl.result_sort
                    if not res.is_int and table.sort_ids[res.name] == tsid:
                        if val == d0:
                            return False
                        val = relabel(res.name, val)
                    elif not res.is_int:
                        pass
                addr = off_out + sum(
                    relabel(decl.arg_sorts[j].name, v)
                    * int(out.strides[so_out + j])
                    for j, v in enumerate(idxs))
                out.data[addr] = val
        return True


def _plain_update_rhs(update: HighLowUpdate, name: str, is_relation: bool):
    book = update.rel_updates if is_relation else update.fun_updates
    rule = book[name]
    xs = tuple(Var(f"x{i}", p.sort) for i, p in enumerate(rule.params[:-1]))
    binding = {p.name: x for p, x in zip(rule.params, xs + (update.z,))}
    if is_relation:
        from ..transforms import substitute
        return xs, substitute(rule.rhs, binding)
    from ..transforms import substitute
    rhs = substitute(Eq(rule.rhs, rule.rhs), binding).lhs
    return xs, rhs


def check_strong_simulation(spec: ProtocolSpec, update: HighLowUpdate,
                            k: int, bounds: dict[str, int],
                            int_window: int = 3,
                            ceiling: int = DEFAULT_CEILING
                            ) -> SimulationReport:
    """Exhaustively check the five strong items and the two weak items of the
    simulation definitions on every instance within bounds."""
    vocab = spec.vocabulary
    keys = [(d.name, Tag.PLAIN, False) for d in vocab.symbols.values()]
    keys += [(d.name, Tag.PLAIN, True) for d in vocab.mutables()]
    table = SymTable.build(vocab, keys)

    imm_keys = [(d.name, Tag.PLAIN, False) for d in vocab.symbols.values()
                if not d.mutable]
    mut_keys = [(d.name, Tag.PLAIN, False) for d in vocab.mutables()]
    imm_axioms = [a for a in spec.axioms if not _mentions_mutable(a, vocab)]
    state_axioms = [a for a in spec.axioms if _mentions_mutable(a, vocab)]

    report = SimulationReport(
        strong={name: ItemResult() for name in (
            "size-reduction", "strong-initiation", "strong-simulation",
            "fault-preservation", "inductive-totality")},
        weak={name: ItemResult() for name in ("initiation", "simulation")},
    )

    finite = [s for s in vocab.sorts.values() if not s.is_int]
    target = update.sort
    for sizes in size_combos(finite, bounds):
        if sizes[target.name] < 2:
            continue  # deletion requires at least two elements
        _check_sizes(spec, update, k, sizes, table, imm_keys, mut_keys,
                     imm_axioms, state_axioms, int_window, ceiling, report)
    return report


def _check_sizes(spec, update, k, sizes, table, imm_keys, mut_keys,
                 imm_axioms, state_axioms, int_window, ceiling, report):
    buf = StructBuf.layout(table, sizes, int_window)
    imm_prog = compile_formula(conj(imm_axioms), table)
    state_prog = compile_formula(conj(state_axioms), table)
    init_prog = compile_formula(conj(state_axioms + list(spec.inits)), table)
    bad_prog = compile_formula(Not(spec.safety), table)

    imm_space = cell_space(buf, imm_keys)
    mut_space = cell_space(buf, mut_keys)
    if max(imm_space.count, mut_space.count) > ceiling:
        raise GuardrailExceeded(max(imm_space.count, mut_space.count),
                                ceiling)

    ntarget = sizes[update.sort.name]
    size_big = ntarget > k

    imm_space.first(buf)
    while True:
        if eval_program(imm_prog, buf):
            _check_instance(spec, update, sizes, table, buf, mut_space,
                            state_prog, init_prog, bad_prog, size_big,
                            int_window, report)
        if not imm_space.next(buf):
            break


def _check_instance(spec, update, sizes, table, buf, mut_space, state_prog,
                    init_prog, bad_prog, size_big, int_window, report):
    builder = _LowBuilder(spec, update, table, buf)
    low_sizes = builder.low_sizes()
    low_buf = StructBuf.layout(table, low_sizes, int_window)
    low_state_prog = compile_formula(
        conj([a for a in spec.axioms]), table)  # re-eval on low buffer
    low_init_prog = compile_formula(
        conj(list(spec.axioms) + list(spec.inits)), table)
    low_bad_prog = compile_formula(Not(spec.safety), table)

    stepper = Stepper(spec, table, buf)
    ntarget = sizes[update.sort.name]

    # collect all states of this instance
    states: list[bytes] = []
    mut_space.first(buf)
    while True:
        if eval_program(state_prog, buf):
            states.append(buf.data[mut_space.offsets].tobytes())
        if not mut_space.next(buf):
            break
    report.states += len(states)

    low_mut_space = cell_space(low_buf, [
        (d.name, Tag.PLAIN, False) for d in spec.vocabulary.mutables()])
    low_imm_space = cell_space(low_buf, [
        (d.name, Tag.PLAIN, False) for d in spec.vocabulary.symbols.values()
        if not d.mutable])

    low_steppers: dict[bytes, Stepper] = {}
    low_reach: dict[tuple[bytes, bytes], set[bytes]] = {}
    low_succ_cache: dict[tuple[bytes, bytes], set[bytes]] = {}

    def pair_of(state: bytes, d0: int) -> Optional[tuple[bytes, bytes]]:
        """(low immutable part, low mutable state) or None."""
        stepper.load(state)
        if not builder.condition_holds(d0):
            return None
        if not builder.build(d0, low_buf):
            return None
        if not eval_program(low_state_prog, low_buf):
            return None
        return (low_buf.data[low_imm_space.offsets].tobytes(),
                low_buf.data[low_mut_space.offsets].tobytes())

    def low_stepper(imm: bytes) -> Stepper:
        st = low_steppers.get(imm)
        if st is None:
            fresh = StructBuf.layout(table, low_sizes, int_window)
            fresh.data[low_imm_space.offsets] = np.frombuffer(
                imm, dtype=np.int64)
            st = Stepper(spec, table, fresh)
            low_steppers[imm] = st
        return st

    def low_successors(imm: bytes, st: bytes) -> set[bytes]:
        key = (imm, st)
        if key not in low_succ_cache:
            stp = low_stepper(imm)
            low_succ_cache[key] = {post for _, _, post
                                   in stp.successors(st)}
        return low_succ_cache[key]

    def low_reachable(imm: bytes, src: bytes) -> set[bytes]:
        key = (imm, src)
        if key not in low_reach:
            seen = {src}
            frontier = [src]
            while frontier:
                cur = frontier.pop()
                for nxt in low_successors(imm, cur):
                    if nxt not in seen:
                        seen.add(nxt)
                        frontier.append(nxt)
            low_reach[key] = seen
        return low_reach[key]

    def render(state: bytes, d0: Optional[int] = None) -> str:
        stepper.load(state)
        s = f"sizes={sizes}"
        return s + (f", z={d0}" if d0 is not None else "")

    # materialize pairs and check the pointwise items; size reduction holds
    # by construction (exactly one element is deleted)
    pairs: dict[bytes, list[tuple[int, bytes, bytes]]] = {}
    for state in states:
        plist = []
        for d0 in range(ntarget):
            p = pair_of(state, d0)
            if p is None:
                continue
            plist.append((d0, p[0], p[1]))
        pairs[state] = plist
        report.pairs += len(plist)

        stepper.load(state)
        is_init = eval_program(init_prog, buf)
        is_bad = eval_program(bad_prog, buf)
        for d0, imm, low in plist:
            fresh = low_stepper(imm).buf
            fresh.data[low_mut_space.offsets] = np.frombuffer(
                low, dtype=np.int64)
            if is_init and not eval_program(low_init_prog, fresh):
                report.strong["strong-initiation"].fail(render(state, d0))
            if is_bad and not eval_program(low_bad_prog, fresh):
                report.strong["fault-preservation"].fail(render(state, d0))

    # inductive totality (initial) and weak initiation
    if size_big:
        for state in states:
            stepper.load(state)
            if not eval_program(init_prog, buf):
                continue
            plist = pairs[state]
            if not plist:
                report.strong["inductive-totality"].fail(render(state))
            ok_weak = False
            for d0, imm, low in plist:
                fresh = low_stepper(imm).buf
                fresh.data[low_mut_space.offsets] = np.frombuffer(
                    low, dtype=np.int64)
                if eval_program(low_init_prog, fresh):
                    ok_weak = True
                    break
            if not ok_weak:
                report.weak["initiation"].fail(render(state))

    # transition items
    for state in states:
        plist = pairs[state]
        for tname, params, post in stepper.successors(state):
            post_pairs = pairs.get(post)
            if post_pairs is None:
                continue  # post outside the state set (should not happen)
            post_by_d0 = {d0: (imm, low) for d0, imm, low in post_pairs}
            for d0, imm, low in plist:
                cand = post_by_d0.get(d0)
                if cand is None:
                    # totality across the step: the same element must stay
                    # deletable so the low domain is preserved
                    report.strong["inductive-totality"].fail(
                        render(state, d0) + f" --{tname}--> (no pair at z)")
                    report.weak["simulation"].fail(
                        render(state, d0) + f" --{tname}-->")
                    continue
                imm2, low2 = cand
                # strong: same-domain low partners step or coincide
                if low2 != low and low2 not in low_successors(imm, low):
                    report.strong["strong-simulation"].fail(
                        render(state, d0) + f" --{tname}-->")
                # weak: some partner of the post state reachable from low
                if low2 not in low_reachable(imm, low):
                    report.weak["simulation"].fail(
                        render(state, d0) + f" --{tname}-->")
