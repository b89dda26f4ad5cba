"""Decode solver models into finite structures and re-validate them.

Models arrive as the standard ``(get-model)`` s-expression: universe elements
of an uninterpreted sort appear as 0-ary ``declare-fun`` entries (z3 names
them ``<sort>!val!<n>``), interpretations as ``define-fun`` entries whose
bodies use ite/let/equality chains.  Symbols the solver omitted are filled
with defaults (empty relation, first element / zero).  The decoded structure
is re-checked against the negated obligation with the reference evaluator
before it is presented.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from typing import Any, Optional

from ..logic import (
    IllFormed, Sort, SymbolDecl, Tag, Var, Vocabulary, smt_name,
    symbol_occurrences,
)
from ..structures import Structure, evaluate
from ..vcgen import VerificationCondition
from .sexpr import SExpr, SExprError, parse_all


class DecodeError(Exception):
    """Countermodel decoding or re-validation failed."""


_VAL_RE = re.compile(r"^(.*)!val!(\d+)$")


@dataclass
class CounterModel:
    structure: Structure          # over the tagged copies, canonical domains
    assignment: dict[str, int]    # obligation's free variables (z, hints)
    universes: dict[str, list[str]]   # element display names per sort

    def element_name(self, sort: str, value: Any) -> str:
        names = self.universes.get(sort)
        if names is None:
            return str(value)
        return names[value] if 0 <= value < len(names) else str(value)


def decode_model(text_or_sexprs, vc: VerificationCondition,
                 vocab: Vocabulary, validate: bool = True) -> CounterModel:
    if isinstance(text_or_sexprs, str):
        try:
            items = parse_all(text_or_sexprs)
        except SExprError as e:
            raise DecodeError(f"unreadable model: {e}") from None
        model = None
        for it in items:
            if isinstance(it, list):
                model = it
                break
        if model is None:
            raise DecodeError("no model s-expression in solver output")
    else:
        model = text_or_sexprs
    if model and model[0] == "model":  # some solvers wrap with 'model'
        model = model[1:]

    negated, frees = vc.negation()
    needed = sorted(set(symbol_occurrences(negated)),
                    key=lambda k: smt_name(*k))

    # universe elements and function definitions
    universes: dict[str, list[tuple[int, str]]] = {}
    defs: dict[str, tuple[list[tuple[str, str]], SExpr]] = {}
    for item in model:
        if not isinstance(item, list) or not item:
            continue
        if item[0] == "declare-fun" and len(item) >= 4 and item[2] == []:
            name, sort = str(item[1]), str(item[3])
            m = _VAL_RE.match(name)
            idx = int(m.group(2)) if m else len(universes.get(sort, []))
            universes.setdefault(sort, []).append((idx, name))
        elif item[0] == "define-fun" and len(item) >= 5:
            name = str(item[1])
            params = [(str(p[0]), str(p[1])) for p in item[2]]
            defs[name] = (params, item[4])

    # also harvest universe constants mentioned only inside bodies
    def harvest(e: SExpr) -> None:
        if isinstance(e, str):
            m = _VAL_RE.match(e)
            if m:
                sort = m.group(1)
                pair = (int(m.group(2)), e)
                if pair not in universes.get(sort, []):
                    universes.setdefault(sort, []).append(pair)
        elif isinstance(e, list):
            for x in e:
                harvest(x)

    for params, body in defs.values():
        harvest(body)

    elem_index: dict[str, int] = {}
    universe_names: dict[str, list[str]] = {}
    for sort, pairs in universes.items():
        pairs.sort()
        universe_names[sort] = [n for _, n in pairs]
        for i, (_, n) in enumerate(pairs):
            elem_index[n] = i

    def eval_body(e: SExpr, env: dict[str, Any]) -> Any:
        if isinstance(e, int):
            return e
        if isinstance(e, str):
            if e in env:
                return env[e]
            if e == "true":
                return True
            if e == "false":
                return False
            if e in elem_index:
                return elem_index[e]
            if e in defs:
                params, body = defs[e]
                if params:
                    raise DecodeError(f"{e} used without arguments")
                return eval_body(body, {})
            raise DecodeError(f"unknown atom {e!r} in model")
        if not e:
            raise DecodeError("empty application in model")
        head = e[0]
        if head == "let":
            env2 = dict(env)
            for name, val in e[1]:
                env2[str(name)] = eval_body(val, env)
            return eval_body(e[2], env2)
        if head == "ite":
            return eval_body(e[2] if eval_body(e[1], env) else e[3], env)
        if head == "=":
            vals = [eval_body(x, env) for x in e[1:]]
            return all(v == vals[0] for v in vals[1:])
        if head == "distinct":
            vals = [eval_body(x, env) for x in e[1:]]
            return len(set(vals)) == len(vals)
        if head == "and":
            return all(eval_body(x, env) for x in e[1:])
        if head == "or":
            return any(eval_body(x, env) for x in e[1:])
        if head == "not":
            return not eval_body(e[1], env)
        if head == "=>":
            return (not eval_body(e[1], env)) or eval_body(e[2], env)
        if head == "+":
            return sum(eval_body(x, env) for x in e[1:])
        if head == "-":
            vals = [eval_body(x, env) for x in e[1:]]
            return -vals[0] if len(vals) == 1 else vals[0] - sum(vals[1:])
        if head == "*":
            out = 1
            for x in e[1:]:
                out *= eval_body(x, env)
            return out
        if head == "<=":
            return eval_body(e[1], env) <= eval_body(e[2], env)
        if head == "<":
            return eval_body(e[1], env) < eval_body(e[2], env)
        if head == ">=":
            return eval_body(e[1], env) >= eval_body(e[2], env)
        if head == ">":
            return eval_body(e[1], env) > eval_body(e[2], env)
        if isinstance(head, str) and head in defs:
            params, body = defs[head]
            args = [eval_body(x, env) for x in e[1:]]
            if len(args) != len(params):
                raise DecodeError(f"arity mismatch applying {head}")
            return eval_body(body, {p[0]: a for p, a in zip(params, args)})
        raise DecodeError(f"cannot evaluate model term {e!r}")

    # assemble domains: default size 1 for sorts the model never mentions
    def sort_size(s: Sort) -> int:
        return max(1, len(universe_names.get(s.name, [])))

    sorts_used: set[str] = set()
    for name, _, _ in needed:
        decl = vocab.decl(name)
        for s in decl.arg_sorts + ((decl.result_sort,)
                                   if decl.result_sort else ()):
            if not s.is_int:
                sorts_used.add(s.name)
    for v in frees:
        if not v.sort.is_int:
            sorts_used.add(v.sort.name)
    from ..vcgen import _var_sorts  # quantified sorts matter for eval too
    for s in vocab.sorts.values():
        if not s.is_int:
            sorts_used.add(s.name)

    domains = {name: tuple(range(sort_size(vocab.sorts[name])))
               for name in sorts_used if name in vocab.sorts}

    interps: dict[tuple[str, Tag, bool], Any] = {}
    max_int = 0
    for name, tag, primed in needed:
        decl = vocab.decl(name)
        flat = smt_name(name, tag, primed)
        doms = [domains[s.name] if not s.is_int else ()
                for s in decl.arg_sorts]
        if any(s.is_int for s in decl.arg_sorts):
            raise DecodeError(f"{flat} has integer arguments")
        entry = defs.get(flat)
        if decl.is_relation:
            tuples = set()
            if entry is not None:
                params, body = entry
                for args in itertools.product(*doms):
                    env = {p[0]: a for p, a in zip(params, args)}
                    if eval_body(body, env):
                        tuples.add(args)
            interps[(name, tag, primed)] = frozenset(tuples)
        else:
            out = {}
            res = decl.result_sort
            for args in itertools.product(*doms):
                if entry is None:
                    val: Any = 0
                else:
                    params, body = entry
                    env = {p[0]: a for p, a in zip(params, args)}
                    val = eval_body(body, env)
                if res.is_int:
                    val = int(val)
                    max_int = max(max_int, abs(val))
                out[args] = val
            interps[(name, tag, primed)] = out

    assignment: dict[str, int] = {}
    for v in frees:
        entry = defs.get(v.name)
        if entry is None:
            assignment[v.name] = 0
        else:
            val = eval_body(entry[1], {})
            assignment[v.name] = int(val)
            if v.sort.is_int:
                max_int = max(max_int, abs(int(val)))

    structure = Structure(vocab, domains, interps,
                          int_window=max(3, max_int + 2))
    cm = CounterModel(structure, assignment, universe_names)
    if validate:
        ok = evaluate(structure, assignment, negated)
        if not ok:
            raise DecodeError(
                f"decoded model does not satisfy the negated obligation "
                f"{vc.vc_id}")
    return cm
