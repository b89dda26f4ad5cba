"""Exhaustive enumeration of finite structures.

Structures are generated directly in the packed kernel representation: an
odometer walks every interpretation cell (relation cells over {0,1}, function
cells over the result domain or the integer window).  A guardrail refuses
enumerations whose raw candidate count exceeds a configurable ceiling.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

import numpy as np

from ..kernel import Program, StructBuf, SymTable, compile_formula, eval_program
from ..logic import Formula, IllFormed, Sort, SortKind, Tag, Vocabulary
from ..structures import Structure, SymKey

DEFAULT_CEILING = 10_000_000


class GuardrailExceeded(Exception):
    def __init__(self, estimate: float, ceiling: int):
        self.estimate, self.ceiling = estimate, ceiling
        super().__init__(
            f"enumeration would visit ~{estimate:.3g} interpretations, over "
            f"the ceiling {ceiling}; tighten bounds or raise --ceiling")


@dataclass
class CellSpace:
    """Mutable cells of one buffer: offsets plus per-cell cardinality."""

    offsets: np.ndarray     # int64 cell addresses in buf.data
    cards: np.ndarray       # int64 number of values per cell
    lows: np.ndarray        # int64 first value per cell (ints: -window)

    @property
    def count(self) -> float:
        out = 1.0
        for c in self.cards:
            out *= float(c)
        return out

    def first(self, buf: StructBuf) -> None:
        buf.data[self.offsets] = self.lows

    def next(self, buf: StructBuf) -> bool:
        """Odometer step (last cell fastest); False when wrapped around."""
        data = buf.data
        for i in range(len(self.offsets) - 1, -1, -1):
            off = self.offsets[i]
            if data[off] - self.lows[i] + 1 < self.cards[i]:
                data[off] += 1
                return True
            data[off] = self.lows[i]
        return False


def cell_space(buf: StructBuf, keys: Optional[Sequence[SymKey]] = None
               ) -> CellSpace:
    """Cells of the given symbol copies, in the given order (default: all
    symbols in table order)."""
    table = buf.table
    ids = ([table.sym_ids[k] for k in keys] if keys is not None
           else range(len(table.sym_decls)))
    offsets: list[int] = []
    cards: list[int] = []
    lows: list[int] = []
    for sid in ids:
        decl = table.sym_decls[sid]
        off = int(buf.sym_offset[sid])
        n = int(buf.sym_len[sid])
        if decl.is_relation:
            card, low = 2, 0
        elif decl.result_sort.is_int:
            card, low = 2 * buf.int_window + 1, -buf.int_window
        else:
            card = int(buf.sizes[table.sort_ids[decl.result_sort.name]])
            low = 0
        offsets.extend(range(off, off + n))
        cards.extend([card] * n)
        lows.extend([low] * n)
    return CellSpace(np.array(offsets, dtype=np.int64),
                     np.array(cards, dtype=np.int64),
                     np.array(lows, dtype=np.int64))


def size_combos(sorts: Sequence[Sort], bounds: dict[str, int]
                ) -> Iterator[dict[str, int]]:
    """All domain-size combinations 1..max per sort, ascending."""
    names = [s.name for s in sorts]
    ranges = []
    for s in sorts:
        if s.name not in bounds:
            raise IllFormed(f"no size bound for sort {s.name}")
        ranges.append(range(1, bounds[s.name] + 1))
    for combo in itertools.product(*ranges):
        yield dict(zip(names, combo))


def iter_bufs(table: SymTable, sizes: dict[str, int], int_window: int = 3,
              keys: Optional[Sequence[SymKey]] = None,
              base: Optional[StructBuf] = None,
              ceiling: int = DEFAULT_CEILING) -> Iterator[StructBuf]:
    """Yield every interpretation of ``keys`` (all symbols when None) over
    fixed domain sizes; other symbols keep their ``base`` values.

    The same buffer object is yielded each time (mutated in place).
    """
    buf = base.clone() if base is not None else StructBuf.layout(
        table, sizes, int_window)
    space = cell_space(buf, keys)
    if space.count > ceiling:
        raise GuardrailExceeded(space.count, ceiling)
    space.first(buf)
    while True:
        yield buf
        if not space.next(buf):
            return


def enumerate_structures(vocab: Vocabulary, bounds: dict[str, int],
                         constraint: Optional[Formula] = None,
                         int_window: int = 3,
                         ceiling: int = DEFAULT_CEILING
                         ) -> Iterator[Structure]:
    """Every structure over every in-bounds domain-size combination that
    satisfies the constraint, in deterministic order (no isomorphism
    reduction; elements are canonically 0..n-1 per sort)."""
    keys = [(d.name, Tag.PLAIN, False) for d in vocab.symbols.values()]
    table = SymTable.build(vocab, keys)
    finite = [s for s in vocab.sorts.values() if not s.is_int]
    total = 0.0
    for sizes in size_combos(finite, bounds):
        probe = StructBuf.layout(table, sizes, int_window)
        total += cell_space(probe).count
    if total > ceiling:
        raise GuardrailExceeded(total, ceiling)
    for sizes in size_combos(finite, bounds):
        prog = None
        for buf in iter_bufs(table, sizes, int_window, ceiling=ceiling):
            if constraint is not None:
                if prog is None:
                    prog = compile_formula(constraint, table)
                if not eval_program(prog, buf):
                    continue
            yield buf.to_structure()
