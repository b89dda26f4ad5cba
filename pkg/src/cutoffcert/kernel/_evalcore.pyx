# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled interpreter for the eval kernel (hot path of the oracle)."""

import numpy as np
cimport numpy as cnp

cnp.import_array()

BACKEND = "cython"

DEF OP_LIT = 0
DEF OP_VAR = 1
DEF OP_INTLIT = 2
DEF OP_APP = 3
DEF OP_REL = 4
DEF OP_EQ = 5
DEF OP_LE = 6
DEF OP_LT = 7
DEF OP_ADD = 8
DEF OP_SUB = 9
DEF OP_NEG = 10
DEF OP_ITE = 11
DEF OP_NOT = 12
DEF OP_AND = 13
DEF OP_OR = 14
DEF OP_IMPLIES = 15
DEF OP_IFF = 16
DEF OP_FORALL = 17
DEF OP_EXISTS = 18

DEF INT_SORT_ID = -1


cdef long long _node(long long i,
                     long long[:, ::1] ops,
                     long long[::1] children,
                     long long[::1] data,
                     long long[::1] sizes,
                     long long[::1] strides,
                     long long[::1] sym_offset,
                     long long[::1] stride_off,
                     long long[::1] slots,
                     long long int_window) nogil:
    cdef long long op = ops[i, 0]
    cdef long long a = ops[i, 1]
    cdef long long b = ops[i, 2]
    cdef long long c = ops[i, 3]
    cdef long long j, addr, so, v, lo, hi, want, d

    if op == OP_REL or op == OP_APP:
        addr = sym_offset[a]
        so = stride_off[a]
        for j in range(c):
            addr += _node(children[b + j], ops, children, data, sizes,
                          strides, sym_offset, stride_off, slots,
                          int_window) * strides[so + j]
        v = data[addr]
        if op == OP_REL:
            return 1 if v != 0 else 0
        return v
    if op == OP_AND:
        for j in range(c):
            if _node(children[b + j], ops, children, data, sizes, strides,
                     sym_offset, stride_off, slots, int_window) == 0:
                return 0
        return 1
    if op == OP_OR:
        for j in range(c):
            if _node(children[b + j], ops, children, data, sizes, strides,
                     sym_offset, stride_off, slots, int_window) != 0:
                return 1
        return 0
    if op == OP_NOT:
        return 1 - (_node(a, ops, children, data, sizes, strides, sym_offset,
                          stride_off, slots, int_window) != 0)
    if op == OP_EQ:
        return 1 if _node(a, ops, children, data, sizes, strides, sym_offset,
                          stride_off, slots, int_window) == \
                    _node(b, ops, children, data, sizes, strides, sym_offset,
                          stride_off, slots, int_window) else 0
    if op == OP_VAR:
        return slots[a]
    if op == OP_FORALL or op == OP_EXISTS:
        if c == INT_SORT_ID:
            lo = -int_window
            hi = int_window
        else:
            lo = 0
            hi = sizes[c] - 1
        want = 0 if op == OP_FORALL else 1
        for d in range(lo, hi + 1):
            slots[a] = d
            if (_node(b, ops, children, data, sizes, strides, sym_offset,
                      stride_off, slots, int_window) != 0) == (want != 0):
                return want
        return 1 - want
    if op == OP_IMPLIES:
        if _node(a, ops, children, data, sizes, strides, sym_offset,
                 stride_off, slots, int_window) == 0:
            return 1
        return 1 if _node(b, ops, children, data, sizes, strides, sym_offset,
                          stride_off, slots, int_window) != 0 else 0
    if op == OP_IFF:
        return 1 if (_node(a, ops, children, data, sizes, strides, sym_offset,
                           stride_off, slots, int_window) != 0) == \
                    (_node(b, ops, children, data, sizes, strides, sym_offset,
                           stride_off, slots, int_window) != 0) else 0
    if op == OP_LIT or op == OP_INTLIT:
        return a
    if op == OP_LE:
        return 1 if _node(a, ops, children, data, sizes, strides, sym_offset,
                          stride_off, slots, int_window) <= \
                    _node(b, ops, children, data, sizes, strides, sym_offset,
                          stride_off, slots, int_window) else 0
    if op == OP_LT:
        return 1 if _node(a, ops, children, data, sizes, strides, sym_offset,
                          stride_off, slots, int_window) < \
                    _node(b, ops, children, data, sizes, strides, sym_offset,
                          stride_off, slots, int_window) else 0
    if op == OP_ADD:
        return _node(a, ops, children, data, sizes, strides, sym_offset,
                     stride_off, slots, int_window) + \
               _node(b, ops, children, data, sizes, strides, sym_offset,
                     stride_off, slots, int_window)
    if op == OP_SUB:
        return _node(a, ops, children, data, sizes, strides, sym_offset,
                     stride_off, slots, int_window) - \
               _node(b, ops, children, data, sizes, strides, sym_offset,
                     stride_off, slots, int_window)
    if op == OP_NEG:
        return -_node(a, ops, children, data, sizes, strides, sym_offset,
                      stride_off, slots, int_window)
    if op == OP_ITE:
        if _node(a, ops, children, data, sizes, strides, sym_offset,
                 stride_off, slots, int_window) != 0:
            return _node(b, ops, children, data, sizes, strides, sym_offset,
                         stride_off, slots, int_window)
        return _node(c, ops, children, data, sizes, strides, sym_offset,
                     stride_off, slots, int_window)
    return 0


def eval_program(prog, buf, env=None):
    cdef long long[:, ::1] ops = prog.ops
    cdef long long[::1] children = prog.children
    cdef long long[::1] data = buf.data
    cdef long long[::1] sizes = buf.sizes
    cdef long long[::1] strides = buf.strides
    cdef long long[::1] sym_offset = buf.sym_offset
    cdef long long[::1] stride_off = buf.stride_off
    slots_arr = np.zeros(max(prog.nslots, 1), dtype=np.int64)
    if env:
        for slot, value in env.items():
            slots_arr[slot] = value
    cdef long long[::1] slots = slots_arr
    cdef long long root = prog.root
    cdef long long w = buf.int_window
    cdef long long result
    with nogil:
        result = _node(root, ops, children, data, sizes, strides,
                       sym_offset, stride_off, slots, w)
    return result != 0
