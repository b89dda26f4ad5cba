"""Pure-Python interpreter for compiled programs (fallback backend)."""

from __future__ import annotations

from .compile import (
    INT_SORT_ID, OP_ADD, OP_AND, OP_APP, OP_EQ, OP_EXISTS, OP_FORALL, OP_IFF,
    OP_IMPLIES, OP_INTLIT, OP_ITE, OP_LE, OP_LIT, OP_LT, OP_NEG, OP_NOT,
    OP_OR, OP_REL, OP_SUB, OP_VAR, Program, StructBuf,
)

BACKEND = "pure"


def _prog_lists(prog: Program):
    cached = getattr(prog, "_py_cache", None)
    if cached is None:
        cached = (prog.ops.tolist(), prog.children.tolist())
        prog._py_cache = cached
    return cached


def _buf_lists(buf: StructBuf):
    cached = getattr(buf, "_py_cache", None)
    if cached is None:
        cached = (buf.sym_offset.tolist(), buf.stride_off.tolist(),
                  buf.strides.tolist(), buf.sizes.tolist())
        buf._py_cache = cached
    return cached


def eval_program(prog: Program, buf: StructBuf, env=None) -> bool:
    ops, children = _prog_lists(prog)
    sym_offset, stride_off, strides, sizes = _buf_lists(buf)
    data = buf.data
    slots = [0] * max(prog.nslots, 1)
    if env:
        for slot, value in env.items():
            slots[slot] = value

    def node(i: int) -> int:
        op, a, b, c = ops[i]
        if op == OP_REL or op == OP_APP:
            addr = sym_offset[a]
            so = stride_off[a]
            for j in range(c):
                addr += node(children[b + j]) * strides[so + j]
            v = int(data[addr])
            return (1 if v else 0) if op == OP_REL else v
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
        if op == OP_NOT:
            return 0 if node(a) else 1
        if op == OP_EQ:
            return 1 if node(a) == node(b) else 0
        if op == OP_VAR:
            return slots[a]
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
        if op == OP_IMPLIES:
            return node(b) if node(a) else 1
        if op == OP_IFF:
            return 1 if bool(node(a)) == bool(node(b)) else 0
        if op == OP_LIT or op == OP_INTLIT:
            return a
        if op == OP_LE:
            return 1 if node(a) <= node(b) else 0
        if op == OP_LT:
            return 1 if node(a) < node(b) else 0
        if op == OP_ADD:
            return node(a) + node(b)
        if op == OP_SUB:
            return node(a) - node(b)
        if op == OP_NEG:
            return -node(a)
        if op == OP_ITE:
            return node(b) if node(a) else node(c)
        raise ValueError(f"bad opcode {op}")

    return bool(node(prog.root))
