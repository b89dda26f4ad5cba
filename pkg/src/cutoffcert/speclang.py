"""Protocol specification surface language.

Line-oriented declarations (``#`` comments, parenthesis-balanced line
continuation); transitions own the indented lines that follow them.
Capitalized identifiers free in a formula are implicitly universally
quantified at the top of that formula.  Quantifier and parameter sort
annotations may be omitted when usage determines them.

The variable ``z`` is reserved for the deleted element of high-low updates
and is rejected anywhere else.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

from .logic import (
    And, App, DELETION_VAR, Eq, FALSE, Formula, Iff, IllFormed, Implies,
    IntCmp, IntLit, IntOp, Ite, Lit, Not, Or, Quant, Rel, RESERVED_SUFFIXES,
    INT, Sort, SortKind, SymbolDecl, Tag, Term, TRUE, Var, Vocabulary, conj,
    disj, exists, forall, free_vars, neq, symbol_occurrences,
)
from . import encode
from .transforms import fresh_name, nnf, sort_check, substitute

KEYWORDS = {
    "sort", "mutable", "immutable", "relation", "function", "constant",
    "axiom", "init", "def", "transition", "assume", "safety", "bound",
    "condition", "update", "hint", "invariant", "forall", "exists",
    "true", "false", "ite", "bounded",
}


class SpecError(Exception):
    def __init__(self, msg: str, line: int = 0, col: int = 0):
        self.msg, self.line, self.col = msg, line, col
        super().__init__(f"{line}:{col}: {msg}" if line else msg)


# --- data model ---------------------------------------------------------------

@dataclass(frozen=True)
class Definition:
    name: str
    params: tuple[Var, ...]
    body: Formula


@dataclass(frozen=True)
class TransitionDef:
    name: str
    params: tuple[Var, ...]
    conjuncts: tuple[Formula, ...]   # two-state; params free
    assumes: tuple[Formula, ...]     # unprimed-only subset of conjuncts

    @property
    def body(self) -> Formula:
        return conj(self.conjuncts)


@dataclass(frozen=True)
class Hint:
    transition: str
    target: str
    high_params: tuple[Var, ...]
    low_params: tuple[Var, ...]
    z: Var
    body: Formula

    def is_functional(self) -> bool:
        """True when the hint is a conjunction of equations pinning every low
        parameter to a term over the high parameters and z (totality is then
        trivial and skipped)."""
        eqs = self.body.parts if isinstance(self.body, And) else (self.body,)
        low_names = {v.name for v in self.low_params}
        pinned: set[str] = set()
        for e in eqs:
            if not isinstance(e, Eq):
                return False
            lhs, rhs = e.lhs, e.rhs
            if not (isinstance(lhs, Var) and lhs.name in low_names):
                lhs, rhs = rhs, lhs
            if not (isinstance(lhs, Var) and lhs.name in low_names):
                return False
            if lhs.name in pinned:
                return False
            rhs_vars: set[str] = set()
            from .logic import term_free_vars
            term_free_vars(rhs, rhs_vars)
            if rhs_vars & low_names:
                return False
            pinned.add(lhs.name)
        return pinned == low_names


@dataclass(frozen=True)
class UpdateRule:
    symbol: str
    params: tuple[Var, ...]   # matches the symbol's signature, then z
    rhs: Union[Formula, Term]


@dataclass
class HighLowUpdate:
    sort: Sort
    bound: Optional[int] = None
    condition: Optional[Formula] = None       # free variable exactly z
    rel_updates: dict[str, UpdateRule] = field(default_factory=dict)
    fun_updates: dict[str, UpdateRule] = field(default_factory=dict)
    hints: dict[str, Hint] = field(default_factory=dict)
    invariants: tuple[Formula, ...] = ()
    explicit: tuple[str, ...] = ()            # symbols with user updates
    defaults_applied: bool = False

    @property
    def z(self) -> Var:
        return Var(DELETION_VAR, self.sort)


@dataclass
class CutoffTask:
    stages: list[HighLowUpdate]


@dataclass
class ProtocolSpec:
    vocabulary: Vocabulary
    axioms: tuple[Formula, ...]
    inits: tuple[Formula, ...]
    definitions: dict[str, Definition]
    transitions: tuple[TransitionDef, ...]
    safety: Formula
    skolem_constants: tuple[str, ...] = ()

    def axiom(self) -> Formula:
        return conj(self.axioms)

    def init(self) -> Formula:
        return conj(self.inits)

    def transition(self, name: str) -> TransitionDef:
        for t in self.transitions:
            if t.name == name:
                return t
        raise SpecError(f"unknown transition {name}")


# --- lexer --------------------------------------------------------------------

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><->|->|<=|>=|!=|:=|[()',.:=<>!&|+\-])
""", re.VERBOSE)


@dataclass
class Token:
    kind: str   # 'ident' | 'int' | operator text | 'eof'
    text: str
    line: int
    col: int


def _lex(text: str, line_no: int) -> list[Token]:
    out = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise SpecError(f"stray character {text[pos]!r}", line_no, pos + 1)
        if m.lastgroup == "ws":
            pos = m.end()
            continue
        kind = m.lastgroup if m.lastgroup in ("ident", "int") else m.group()
        out.append(Token(kind, m.group(), line_no, pos + 1))
        pos = m.end()
    return out


@dataclass(eq=False)
class _Hole:
    """Unresolved sort placeholder, unified during resolution.

    Identity-hashed: the union-find table must hold the placeholder objects
    themselves (an id-keyed table would go stale once holes are collected).
    """
    line: int
    col: int
    hint: str = ""


SortLike = Union[Sort, _Hole]


class _Sorts:
    """Union-find over sort placeholders."""

    def __init__(self) -> None:
        self.binding: dict[_Hole, SortLike] = {}

    def find(self, s: SortLike) -> SortLike:
        while isinstance(s, _Hole) and s in self.binding:
            s = self.binding[s]
        return s

    def unify(self, a: SortLike, b: SortLike, tok: Token) -> None:
        a, b = self.find(a), self.find(b)
        if a is b:
            return
        if isinstance(a, _Hole):
            self.binding[a] = b
        elif isinstance(b, _Hole):
            self.binding[b] = a
        elif a != b:
            raise SpecError(f"sort mismatch: {a.name} vs {b.name}",
                            tok.line, tok.col)

    def resolve(self, s: SortLike, what: str) -> Sort:
        s = self.find(s)
        if isinstance(s, _Hole):
            raise SpecError(f"cannot infer sort of {what or s.hint}",
                            s.line, s.col)
        return s


class Parser:
    def __init__(self) -> None:
        self.vocab = Vocabulary()
        self.defs: dict[str, Definition] = {}
        self.axioms: list[Formula] = []
        self.inits: list[Formula] = []
        self.transitions: list[TransitionDef] = []
        self.safeties: list[Formula] = []
        self.updates: dict[str, HighLowUpdate] = {}   # by sort name
        self.stage_order: list[str] = []
        self.current_stage: Optional[str] = None
        self.sorts = _Sorts()
        self.deferred: list = []  # resolution thunks

    # -- identifiers ----------------------------------------------------------

    def _check_name(self, name: str, tok: Token) -> None:
        for suf in RESERVED_SUFFIXES:
            if name.endswith(suf):
                raise SpecError(f"identifier {name} collides with reserved "
                                f"suffix {suf}", tok.line, tok.col)
        if name == DELETION_VAR:
            raise SpecError(f"{DELETION_VAR} is reserved for the deleted "
                            f"element", tok.line, tok.col)
        if name in KEYWORDS:
            raise SpecError(f"{name} is a keyword", tok.line, tok.col)
        if name in self.vocab.symbols or name in self.defs or \
                name in self.vocab.sorts:
            raise SpecError(f"duplicate declaration of {name}",
                            tok.line, tok.col)

    def _sort(self, name: str, tok: Token) -> Sort:
        if name == "int":
            return INT
        try:
            return self.vocab.sorts[name]
        except KeyError:
            raise SpecError(f"unknown sort {name}", tok.line, tok.col) from None

    # -- formula parsing (Pratt-ish recursive descent) -------------------------

    def parse_formula(self, toks: list[Token], scope: dict[str, Var],
                      implicit: Optional[dict[str, Var]], allow_z: bool,
                      two_state: bool) -> Formula:
        """Parse a full token list as one formula.  ``implicit`` collects
        capitalized free identifiers when not None; ``allow_z`` admits the
        reserved variable (inside update blocks); ``two_state`` admits primes.
        """
        stream = _Stream(toks)
        f = self._formula(stream, scope, implicit, allow_z, two_state)
        stream.expect_end()
        return f

    def _formula(self, s, scope, implicit, allow_z, two_state) -> Formula:
        return self._iff(s, scope, implicit, allow_z, two_state)

    def _iff(self, s, scope, implicit, allow_z, two_state) -> Formula:
        f = self._implies(s, scope, implicit, allow_z, two_state)
        while s.peek().kind == "<->":
            s.next()
            f = Iff(f, self._implies(s, scope, implicit, allow_z, two_state))
        return f

    def _implies(self, s, scope, implicit, allow_z, two_state) -> Formula:
        f = self._disj(s, scope, implicit, allow_z, two_state)
        if s.peek().kind == "->":
            s.next()
            return Implies(f, self._implies(s, scope, implicit, allow_z,
                                            two_state))
        return f

    def _disj(self, s, scope, implicit, allow_z, two_state) -> Formula:
        parts = [self._conj(s, scope, implicit, allow_z, two_state)]
        while s.peek().kind == "|":
            s.next()
            parts.append(self._conj(s, scope, implicit, allow_z, two_state))
        return parts[0] if len(parts) == 1 else Or(tuple(parts))

    def _conj(self, s, scope, implicit, allow_z, two_state) -> Formula:
        parts = [self._unary(s, scope, implicit, allow_z, two_state)]
        while s.peek().kind == "&":
            s.next()
            parts.append(self._unary(s, scope, implicit, allow_z, two_state))
        return parts[0] if len(parts) == 1 else And(tuple(parts))

    def _unary(self, s, scope, implicit, allow_z, two_state) -> Formula:
        tok = s.peek()
        if tok.kind == "!":
            s.next()
            return Not(self._unary(s, scope, implicit, allow_z, two_state))
        if tok.kind == "ident" and tok.text in ("forall", "exists"):
            s.next()
            kind = tok.text
            binders: list[Var] = []
            inner = dict(scope)
            while True:
                name_tok = s.expect("ident")
                name = name_tok.text
                if name == DELETION_VAR:
                    raise SpecError(f"{DELETION_VAR} is reserved",
                                    name_tok.line, name_tok.col)
                sort: SortLike
                if s.peek().kind == ":":
                    s.next()
                    sort_tok = s.expect("ident")
                    sort = self._sort(sort_tok.text, sort_tok)
                else:
                    sort = _Hole(name_tok.line, name_tok.col,
                                 f"variable {name}")
                v = Var(name, sort)  # type: ignore[arg-type]
                binders.append(v)
                inner[name] = v
                if s.peek().kind == ",":
                    s.next()
                    continue
                break
            s.expect(".")
            body = self._formula(s, inner, implicit, allow_z, two_state)
            for v in reversed(binders):
                body = Quant(kind, v.name, v.sort, body)
            return body
        return self._atom(s, scope, implicit, allow_z, two_state)

    def _atom(self, s, scope, implicit, allow_z, two_state) -> Formula:
        tok = s.peek()
        if tok.kind == "ident" and tok.text == "true":
            s.next()
            return TRUE
        if tok.kind == "ident" and tok.text == "false":
            s.next()
            return FALSE
        if tok.kind == "(":
            mark = s.pos
            dmark = len(self.deferred)
            imark = set(implicit) if implicit is not None else set()
            err: Optional[SpecError] = None
            try:
                s.next()
                f = self._formula(s, scope, implicit, allow_z, two_state)
                s.expect(")")
                if s.peek().kind in ("=", "!=", "<=", "<", ">=", ">",
                                     "+", "-"):
                    raise _BacktrackTerm()
                return f
            except _BacktrackTerm:
                s.pos = mark
            except SpecError as e:
                err = e
                s.pos = mark
            del self.deferred[dmark:]
            if implicit is not None:
                for k in set(implicit) - imark:
                    del implicit[k]
            try:
                return self._comparison_or_rel(s, scope, implicit, allow_z,
                                               two_state, tok)
            except SpecError:
                raise err if err is not None else SpecError(
                    "expected a formula", tok.line, tok.col) from None
        return self._comparison_or_rel(s, scope, implicit, allow_z,
                                       two_state, tok)

    def _comparison_or_rel(self, s, scope, implicit, allow_z, two_state,
                           tok) -> Formula:
        lhs = self._term(s, scope, implicit, allow_z, two_state)
        op_tok = s.peek()
        if op_tok.kind in ("=", "!=", "<=", "<", ">=", ">"):
            s.next()
            rhs = self._term(s, scope, implicit, allow_z, two_state)
            if op_tok.kind in ("=", "!="):
                self._defer_unify_terms(lhs, rhs, op_tok)
                eq: Formula = Eq(lhs, rhs)
                return Not(eq) if op_tok.kind == "!=" else eq
            # integer comparisons
            for t in (lhs, rhs):
                self._defer_term_sort(t, INT, op_tok)
            if op_tok.kind == ">=":
                return IntCmp("<=", rhs, lhs)
            if op_tok.kind == ">":
                return IntCmp("<", rhs, lhs)
            return IntCmp(op_tok.kind, lhs, rhs)
        if isinstance(lhs, Rel):
            return lhs
        if isinstance(lhs, App) and not lhs.args and lhs.sym in self.defs \
                and not self.defs[lhs.sym].params:
            return Rel(lhs.sym, (), lhs.tag, lhs.primed)
        raise SpecError("expected a formula, found a term",
                        tok.line, tok.col)

    def _term(self, s, scope, implicit, allow_z, two_state):
        t = self._term_unary(s, scope, implicit, allow_z, two_state)
        while s.peek().kind in ("+", "-"):
            op = s.next()
            rhs = self._term_unary(s, scope, implicit, allow_z, two_state)
            for x in (t, rhs):
                self._defer_term_sort(x, INT, op)
            t = IntOp("+" if op.kind == "+" else "-", (t, rhs))
        return t

    def _term_unary(self, s, scope, implicit, allow_z, two_state):
        tok = s.peek()
        if tok.kind == "-":
            s.next()
            inner = self._term_unary(s, scope, implicit, allow_z, two_state)
            self._defer_term_sort(inner, INT, tok)
            if isinstance(inner, IntLit):
                return IntLit(-inner.value)
            return IntOp("neg", (inner,))
        if tok.kind == "int":
            s.next()
            return IntLit(int(tok.text))
        if tok.kind == "(":
            s.next()
            t = self._term(s, scope, implicit, allow_z, two_state)
            s.expect(")")
            return t
        if tok.kind != "ident":
            raise SpecError(f"unexpected {tok.text!r}", tok.line, tok.col)
        if tok.text == "ite":
            s.next()
            s.expect("(")
            cond = self._formula(s, scope, implicit, allow_z, two_state)
            s.expect(",")
            then = self._term(s, scope, implicit, allow_z, two_state)
            s.expect(",")
            other = self._term(s, scope, implicit, allow_z, two_state)
            s.expect(")")
            self._defer_unify_terms(then, other, tok)
            return Ite(cond, then, other)
        return self._application(s, scope, implicit, allow_z, two_state)

    def _application(self, s, scope, implicit, allow_z, two_state):
        tok = s.expect("ident")
        name = tok.text
        primed = False
        if s.peek().kind == "'":
            s.next()
            primed = True
        args: list = []
        if s.peek().kind == "(" and (name in self.vocab.symbols
                                     or name in self.defs):
            s.next()
            if s.peek().kind != ")":
                while True:
                    args.append(self._term(s, scope, implicit, allow_z,
                                           two_state))
                    if s.peek().kind == ",":
                        s.next()
                        continue
                    break
            s.expect(")")

        if name in scope:
            if primed:
                raise SpecError(f"variable {name} cannot be primed",
                                tok.line, tok.col)
            if args:
                raise SpecError(f"variable {name} is not applicable",
                                tok.line, tok.col)
            return scope[name]

        if name in self.vocab.symbols:
            decl = self.vocab.symbols[name]
            if primed and not two_state:
                raise SpecError(f"primed symbol {name}' outside a transition",
                                tok.line, tok.col)
            if primed and not decl.mutable:
                raise SpecError(f"immutable symbol {name} cannot be primed",
                                tok.line, tok.col)
            if len(args) != decl.arity:
                raise SpecError(
                    f"{name} expects {decl.arity} argument(s), got "
                    f"{len(args)}", tok.line, tok.col)
            for a, srt in zip(args, decl.arg_sorts):
                self._defer_term_sort(a, srt, tok)
            if decl.is_relation:
                return Rel(name, tuple(args), Tag.PLAIN, primed)
            return App(name, tuple(args), Tag.PLAIN, primed)

        if name in self.defs:
            d = self.defs[name]
            if primed:
                raise SpecError(f"definition {name} cannot be primed",
                                tok.line, tok.col)
            if len(args) != len(d.params):
                raise SpecError(
                    f"{name} expects {len(d.params)} argument(s), got "
                    f"{len(args)}", tok.line, tok.col)
            for a, p in zip(args, d.params):
                self._defer_term_sort(a, p.sort, tok)
            return Rel(name, tuple(args), Tag.PLAIN, False)

        if name == DELETION_VAR and not allow_z:
            raise SpecError(f"{DELETION_VAR} is reserved for the deleted "
                            f"element", tok.line, tok.col)
        if name[0].isupper() and implicit is not None and not args \
                and not primed:
            if name not in implicit:
                implicit[name] = Var(name, _Hole(tok.line, tok.col,
                                                 f"variable {name}"))  # type: ignore[arg-type]
            return implicit[name]
        raise SpecError(f"unknown symbol {name}", tok.line, tok.col)

    # -- deferred sort constraints ---------------------------------------------

    def _defer_term_sort(self, t, sort: SortLike, tok: Token) -> None:
        self.deferred.append(("term", t, sort, tok))

    def _defer_unify_terms(self, a, b, tok: Token) -> None:
        self.deferred.append(("eq", a, b, tok))

    def _term_sortlike(self, t) -> SortLike:
        if isinstance(t, Var):
            return t.sort
        if isinstance(t, App):
            decl = self.vocab.symbols.get(t.sym)
            if decl is None or decl.result_sort is None:
                raise SpecError(f"{t.sym} used as a term")
            return decl.result_sort
        if isinstance(t, (IntLit, IntOp)):
            return INT
        if isinstance(t, Ite):
            return self._term_sortlike(t.then)
        if isinstance(t, Rel):
            raise SpecError(f"relation {t.sym} used as a term")
        raise SpecError(f"not a term: {t!r}")

    def _run_deferred(self) -> None:
        for kind, a, b, tok in self.deferred:
            if kind == "term":
                self.sorts.unify(self._term_sortlike(a), b, tok)
            else:
                self.sorts.unify(self._term_sortlike(a),
                                 self._term_sortlike(b), tok)
        self.deferred.clear()

    def _finalize_formula(self, f: Formula, what: str) -> Formula:
        """Replace sort holes by their resolved sorts."""
        sorts = self.sorts

        def on_term(t):
            if isinstance(t, Var):
                return Var(t.name, sorts.resolve(t.sort, f"variable {t.name}"))
            if isinstance(t, App):
                return App(t.sym, tuple(on_term(a) for a in t.args), t.tag,
                           t.primed)
            if isinstance(t, (IntLit,)):
                return t
            if isinstance(t, IntOp):
                return IntOp(t.op, tuple(on_term(a) for a in t.args))
            if isinstance(t, Ite):
                return Ite(go(t.cond), on_term(t.then), on_term(t.other))
            raise SpecError(f"not a term: {t!r}")

        def go(f):
            if isinstance(f, Lit):
                return f
            if isinstance(f, Eq):
                return Eq(on_term(f.lhs), on_term(f.rhs))
            if isinstance(f, IntCmp):
                return IntCmp(f.op, on_term(f.lhs), on_term(f.rhs))
            if isinstance(f, Rel):
                return Rel(f.sym, tuple(on_term(a) for a in f.args), f.tag,
                           f.primed)
            if isinstance(f, Not):
                return Not(go(f.body))
            if isinstance(f, And):
                return And(tuple(go(p) for p in f.parts))
            if isinstance(f, Or):
                return Or(tuple(go(p) for p in f.parts))
            if isinstance(f, Implies):
                return Implies(go(f.lhs), go(f.rhs))
            if isinstance(f, Iff):
                return Iff(go(f.lhs), go(f.rhs))
            if isinstance(f, Quant):
                return Quant(f.kind, f.var,
                             sorts.resolve(f.sort, f"variable {f.var}"),
                             go(f.body))
            raise SpecError(f"not a formula: {f!r}")

        return go(f)

    def _close_implicit(self, f: Formula, implicit: dict[str, Var]) -> Formula:
        for name in reversed(list(implicit)):
            v = implicit[name]
            f = Quant("forall", v.name, v.sort, f)
        return f

    # -- directives -------------------------------------------------------------

    def parse(self, text: str, filename: str = "<spec>"
              ) -> tuple[ProtocolSpec, CutoffTask]:
        lines = _logical_lines(text)
        i = 0
        while i < len(lines):
            line_no, raw = lines[i]
            toks = _lex(raw, line_no)
            i += 1
            if not toks:
                continue
            if raw[0].isspace():
                raise SpecError("unexpected indented line outside a "
                                "transition", line_no, 1)
            head = toks[0]
            if head.kind != "ident":
                raise SpecError(f"unexpected {head.text!r}", head.line,
                                head.col)
            rest = toks[1:]
            if head.text == "sort":
                self._d_sort(rest, head)
            elif head.text in ("mutable", "immutable"):
                self._d_symbol(rest, head, mutable=head.text == "mutable")
            elif head.text in ("relation", "function", "constant"):
                self._d_symbol(toks, head, mutable=True)
            elif head.text == "axiom":
                self.axioms.append(self._closed_formula(rest, head))
            elif head.text == "init":
                self.inits.append(self._closed_formula(rest, head))
            elif head.text == "def":
                self._d_def(rest, head)
            elif head.text == "safety":
                self.safeties.append(self._closed_formula(rest, head))
            elif head.text == "transition":
                block = []
                while i < len(lines) and lines[i][1][0].isspace():
                    block.append(lines[i])
                    i += 1
                self._d_transition(rest, head, block)
            elif head.text == "bound":
                self._d_bound(rest, head)
            elif head.text == "condition":
                self._d_condition(rest, head)
            elif head.text == "update":
                self._d_update(rest, head)
            elif head.text == "hint":
                self._d_hint(rest, head)
            elif head.text == "invariant":
                self._d_invariant(rest, head)
            else:
                raise SpecError(f"unknown directive {head.text}", head.line,
                                head.col)

        if not self.safeties:
            raise SpecError("specification has no safety property")
        spec = ProtocolSpec(self.vocabulary(), tuple(self.axioms),
                            tuple(self.inits), dict(self.defs),
                            tuple(self.transitions), conj(self.safeties))
        task = CutoffTask([self.updates[s] for s in self.stage_order])
        return spec, task

    def vocabulary(self) -> Vocabulary:
        return self.vocab

    def _closed_formula(self, toks: list[Token], head: Token) -> Formula:
        implicit: dict[str, Var] = {}
        f = self.parse_formula(toks, {}, implicit, allow_z=False,
                               two_state=False)
        self._run_deferred()
        f = self._close_implicit(f, implicit)
        f = self._finalize_formula(f, head.text)
        if free_vars(f):
            raise SpecError(f"free variables in {head.text}: "
                            f"{sorted(free_vars(f))}", head.line, head.col)
        return f

    def _d_sort(self, toks: list[Token], head: Token) -> None:
        s = _Stream(toks)
        name_tok = s.expect("ident")
        if name_tok.text == "int":
            s.expect_end()
            if "int" not in self.vocab.sorts:
                self.vocab.add_sort(INT)
            return
        self._check_name(name_tok.text, name_tok)
        if s.peek().kind == "ident" and s.peek().text == "bounded":
            s.next()
            k_tok = s.expect("int")
            s.expect_end()
            sort = Sort(name_tok.text, SortKind.BOUNDED, int(k_tok.text))
            self.vocab.add_sort(sort)
            self.axioms.append(encode.size_le(sort, sort.bound))
        else:
            s.expect_end()
            self.vocab.add_sort(Sort(name_tok.text))

    def _d_symbol(self, toks: list[Token], head: Token, mutable: bool) -> None:
        s = _Stream(toks)
        kind_tok = s.expect("ident")
        kind = kind_tok.text
        if kind not in ("relation", "function", "constant"):
            raise SpecError(f"expected relation/function/constant, got "
                            f"{kind}", kind_tok.line, kind_tok.col)
        name_tok = s.expect("ident")
        self._check_name(name_tok.text, name_tok)
        arg_sorts: list[Sort] = []
        if kind in ("relation", "function"):
            s.expect("(")
            if s.peek().kind != ")":
                while True:
                    st = s.expect("ident")
                    arg_sorts.append(self._sort(st.text, st))
                    if s.peek().kind == ",":
                        s.next()
                        continue
                    break
            s.expect(")")
        result: Optional[Sort] = None
        if kind in ("function", "constant"):
            s.expect(":")
            st = s.expect("ident")
            result = self._sort(st.text, st)
        s.expect_end()
        for srt in arg_sorts:
            if srt.is_int:
                raise SpecError("integer-sorted arguments are not supported",
                                name_tok.line, name_tok.col)
        self.vocab.add_symbol(SymbolDecl(name_tok.text, tuple(arg_sorts),
                                         result, mutable))

    def _params(self, s: "_Stream", allow_z_last: bool = False
                ) -> list[Var]:
        s.expect("(")
        params: list[Var] = []
        seen: set[str] = set()
        if s.peek().kind != ")":
            while True:
                name_tok = s.expect("ident")
                name = name_tok.text
                if name in seen:
                    raise SpecError(f"duplicate parameter {name}",
                                    name_tok.line, name_tok.col)
                seen.add(name)
                sort: SortLike
                if s.peek().kind == ":":
                    s.next()
                    st = s.expect("ident")
                    sort = self._sort(st.text, st)
                else:
                    sort = _Hole(name_tok.line, name_tok.col,
                                 f"parameter {name}")
                params.append(Var(name, sort))  # type: ignore[arg-type]
                if s.peek().kind == ",":
                    s.next()
                    continue
                break
        s.expect(")")
        for i, p in enumerate(params):
            if p.name == DELETION_VAR and not (allow_z_last
                                               and i == len(params) - 1):
                raise SpecError(f"{DELETION_VAR} is reserved and may only be "
                                f"the last parameter of an update block")
        return params

    def _d_def(self, toks: list[Token], head: Token) -> None:
        s = _Stream(toks)
        name_tok = s.expect("ident")
        self._check_name(name_tok.text, name_tok)
        params = self._params(s)
        s.expect(":=")
        scope = {p.name: p for p in params}
        body = self._formula(s, scope, None, allow_z=False, two_state=False)
        s.expect_end()
        self._run_deferred()
        body = self._finalize_formula(body, f"def {name_tok.text}")
        params = tuple(Var(p.name, self.sorts.resolve(p.sort, f"parameter "
                                                      f"{p.name}"))
                       for p in params)
        extra = free_vars(body) - {p.name for p in params}
        if extra:
            raise SpecError(f"def {name_tok.text} mentions non-parameters "
                            f"{sorted(extra)}", name_tok.line, name_tok.col)
        self.defs[name_tok.text] = Definition(name_tok.text, params, body)

    def _d_transition(self, toks: list[Token], head: Token,
                      block: list[tuple[int, str]]) -> None:
        s = _Stream(toks)
        name_tok = s.expect("ident")
        for t in self.transitions:
            if t.name == name_tok.text:
                raise SpecError(f"duplicate transition {name_tok.text}",
                                name_tok.line, name_tok.col)
        params = self._params(s)
        s.expect_end()
        scope = {p.name: p for p in params}
        conjuncts: list[Formula] = []
        assumes: list[Formula] = []
        raw_items: list[tuple[Formula, bool, Token]] = []
        for line_no, raw in block:
            ltoks = _lex(raw, line_no)
            if not ltoks:
                continue
            is_assume = ltoks[0].kind == "ident" and ltoks[0].text == "assume"
            body_toks = ltoks[1:] if is_assume else ltoks
            implicit: dict[str, Var] = {}
            f = self.parse_formula(body_toks, scope, implicit,
                                   allow_z=False, two_state=True)
            raw_items.append((self._close_implicit(f, implicit), is_assume,
                              ltoks[0]))
        self._run_deferred()
        rparams = tuple(Var(p.name, self.sorts.resolve(p.sort,
                                                       f"parameter {p.name}"))
                        for p in params)
        for f, is_assume, tok in raw_items:
            f = self._finalize_formula(f, "transition")
            if is_assume:
                if any(primed for _, _, primed in symbol_occurrences(f)):
                    raise SpecError("assume mentions primed symbols",
                                    tok.line, tok.col)
                assumes.append(f)
            conjuncts.append(f)
        tr = TransitionDef(name_tok.text, rparams, tuple(conjuncts),
                           tuple(assumes))
        extra = free_vars(tr.body) - {p.name for p in rparams}
        if extra:
            raise SpecError(f"transition {tr.name} mentions unbound "
                            f"{sorted(extra)}", name_tok.line, name_tok.col)
        self.transitions.append(tr)

    # -- high-low update directives ----------------------------------------------

    def _stage(self, sort: Sort) -> HighLowUpdate:
        if sort.name not in self.updates:
            self.updates[sort.name] = HighLowUpdate(sort)
            self.stage_order.append(sort.name)
        self.current_stage = sort.name
        return self.updates[sort.name]

    def _d_bound(self, toks: list[Token], head: Token) -> None:
        s = _Stream(toks)
        st = s.expect("ident")
        k = s.expect("int")
        s.expect_end()
        sort = self._sort(st.text, st)
        stage = self._stage(sort)
        if stage.bound is not None:
            raise SpecError(f"duplicate bound for sort {sort.name}",
                            st.line, st.col)
        stage.bound = int(k.text)

    def _d_condition(self, toks: list[Token], head: Token) -> None:
        s = _Stream(toks)
        params = self._params(s, allow_z_last=True)
        if len(params) != 1 or params[0].name != DELETION_VAR:
            raise SpecError("condition takes exactly the parameter "
                            f"{DELETION_VAR}: <sort>", head.line, head.col)
        s.expect("=")
        z = params[0]
        if isinstance(z.sort, _Hole):
            raise SpecError("condition parameter needs a sort annotation",
                            head.line, head.col)
        scope = {z.name: z}
        implicit: dict[str, Var] = {}
        f = self._formula(s, scope, implicit, allow_z=True, two_state=False)
        s.expect_end()
        self._run_deferred()
        f = self._finalize_formula(self._close_implicit(f, implicit),
                                   "condition")
        stage = self._stage(z.sort)
        if stage.condition is not None:
            raise SpecError(f"duplicate condition for sort {z.sort.name}",
                            head.line, head.col)
        stage.condition = f

    def _d_update(self, toks: list[Token], head: Token) -> None:
        s = _Stream(toks)
        sym_tok = s.expect("ident")
        decl = self.vocab.symbols.get(sym_tok.text)
        if decl is None:
            raise SpecError(f"unknown symbol {sym_tok.text}", sym_tok.line,
                            sym_tok.col)
        params = self._params(s, allow_z_last=True)
        if not params or params[-1].name != DELETION_VAR:
            raise SpecError(f"last update parameter must be {DELETION_VAR}",
                            head.line, head.col)
        if len(params) != decl.arity + 1:
            raise SpecError(f"update {decl.name} takes {decl.arity + 1} "
                            f"parameters, got {len(params)}", head.line,
                            head.col)
        z = params[-1]
        if isinstance(z.sort, _Hole):
            raise SpecError("the deletion parameter needs a sort annotation",
                            head.line, head.col)
        for p, srt in zip(params[:-1], decl.arg_sorts):
            if not isinstance(p.sort, _Hole) and p.sort != srt:
                raise SpecError(f"parameter {p.name} has sort {p.sort.name}, "
                                f"expected {srt.name}", head.line, head.col)
            self.sorts.unify(p.sort, srt, head)
        s.expect("=")
        scope = {p.name: p for p in params}
        implicit: dict[str, Var] = {}
        if decl.is_relation:
            rhs: Union[Formula, Term] = self._formula(
                s, scope, implicit, allow_z=True, two_state=False)
        else:
            rhs = self._term(s, scope, implicit, allow_z=True,
                             two_state=False)
            self._defer_term_sort(rhs, decl.result_sort, head)
        s.expect_end()
        self._run_deferred()
        if decl.is_relation:
            rhs = self._finalize_formula(self._close_implicit(rhs, implicit),
                                         "update")
        else:
            rhs = self._finalize_formula(Eq(rhs, rhs), "update").lhs
        rparams = tuple(Var(p.name, self.sorts.resolve(p.sort, p.name))
                        for p in params)
        stage = self._stage(z.sort)
        rule = UpdateRule(decl.name, rparams, rhs)
        book = stage.rel_updates if decl.is_relation else stage.fun_updates
        if decl.name in book:
            raise SpecError(f"duplicate update for {decl.name}",
                            sym_tok.line, sym_tok.col)
        book[decl.name] = rule
        stage.explicit = stage.explicit + (decl.name,)

    def _d_hint(self, toks: list[Token], head: Token) -> None:
        s = _Stream(toks)
        tr_tok = s.expect("ident")
        tr = None
        for t in self.transitions:
            if t.name == tr_tok.text:
                tr = t
        if tr is None:
            raise SpecError(f"unknown transition {tr_tok.text}",
                            tr_tok.line, tr_tok.col)
        params = self._params(s, allow_z_last=True)
        n = len(tr.params)
        if len(params) != 2 * n + 1 or params[-1].name != DELETION_VAR:
            raise SpecError(
                f"hint {tr.name} takes {n} high + {n} low parameters and "
                f"{DELETION_VAR}", head.line, head.col)
        z = params[-1]
        if isinstance(z.sort, _Hole):
            raise SpecError("the deletion parameter needs a sort annotation",
                            head.line, head.col)
        target = tr.name
        if s.peek().kind == "->":
            s.next()
            tgt_tok = s.expect("ident")
            target = tgt_tok.text
            if all(t.name != target for t in self.transitions):
                raise SpecError(f"unknown target transition {target}",
                                tgt_tok.line, tgt_tok.col)
        s.expect("=")
        for p, srt in zip(params[:n], [v.sort for v in tr.params]):
            self.sorts.unify(p.sort, srt, head)
        tgt = next(t for t in self.transitions if t.name == target)
        if len(tgt.params) != n:
            raise SpecError(f"target {target} has a different arity",
                            head.line, head.col)
        for p, srt in zip(params[n:2 * n], [v.sort for v in tgt.params]):
            self.sorts.unify(p.sort, srt, head)
        scope = {p.name: p for p in params}
        implicit: dict[str, Var] = {}
        f = self._formula(s, scope, implicit, allow_z=True, two_state=False)
        s.expect_end()
        self._run_deferred()
        f = self._finalize_formula(self._close_implicit(f, implicit), "hint")
        rparams = [Var(p.name, self.sorts.resolve(p.sort, p.name))
                   for p in params]
        stage = self._stage(z.sort)
        if tr.name in stage.hints:
            raise SpecError(f"duplicate hint for {tr.name}", tr_tok.line,
                            tr_tok.col)
        stage.hints[tr.name] = Hint(tr.name, target,
                                    tuple(rparams[:n]),
                                    tuple(rparams[n:2 * n]),
                                    rparams[-1], f)

    def _d_invariant(self, toks: list[Token], head: Token) -> None:
        if self.current_stage is None:
            raise SpecError("invariant before any update block: declare "
                            "bound/condition/update/hint first", head.line,
                            head.col)
        f = self._closed_formula(toks, head)
        stage = self.updates[self.current_stage]
        stage.invariants = stage.invariants + (f,)


class _BacktrackTerm(Exception):
    """A parenthesized formula turned out to start a term comparison."""


class _Stream:
    def __init__(self, toks: list[Token]):
        self.toks = toks
        self.pos = 0

    def peek(self) -> Token:
        if self.pos < len(self.toks):
            return self.toks[self.pos]
        if self.toks:
            last = self.toks[-1]
            return Token("eof", "", last.line, last.col + len(last.text))
        return Token("eof", "", 0, 0)

    def next(self) -> Token:
        t = self.peek()
        self.pos += 1
        return t

    def expect(self, kind: str) -> Token:
        t = self.peek()
        if t.kind != kind:
            raise SpecError(f"expected {kind!r}, found {t.text!r}",
                            t.line, t.col)
        return self.next()

    def expect_end(self) -> None:
        t = self.peek()
        if t.kind != "eof":
            raise SpecError(f"unexpected trailing {t.text!r}", t.line, t.col)


def _logical_lines(text: str) -> list[tuple[int, str]]:
    """Strip comments and join lines while parentheses stay open."""
    out: list[tuple[int, str]] = []
    acc = ""
    acc_line = 0
    depth = 0
    for n, line in enumerate(text.splitlines(), start=1):
        if "#" in line:
            line = line[:line.index("#")]
        if not line.strip():
            continue
        if depth == 0:
            acc, acc_line = line, n
        else:
            acc += " " + line.strip()
        depth = acc.count("(") - acc.count(")")
        if depth < 0:
            raise SpecError("unbalanced ')'", n, 1)
        if depth == 0:
            out.append((acc_line, acc.rstrip()))
            acc = ""
    if depth != 0:
        raise SpecError("unbalanced '(' at end of file", acc_line, 1)
    return out


def parse_spec(text: str, filename: str = "<spec>"
               ) -> tuple[ProtocolSpec, CutoffTask]:
    return Parser().parse(text, filename)


# --- pipeline operations --------------------------------------------------------

def expand_definitions(spec: ProtocolSpec) -> ProtocolSpec:
    """Inline definition bodies everywhere (capture-avoiding); the result
    contains no definition symbols."""
    if not spec.definitions:
        return spec
    order = _toposort_defs(spec.definitions)
    expanded: dict[str, Definition] = {}
    for name in order:
        d = spec.definitions[name]
        expanded[name] = Definition(d.name, d.params,
                                    _expand(d.body, expanded))

    def ex(f: Formula) -> Formula:
        return _expand(f, expanded)

    return replace(
        spec,
        axioms=tuple(ex(a) for a in spec.axioms),
        inits=tuple(ex(i) for i in spec.inits),
        transitions=tuple(
            TransitionDef(t.name, t.params,
                          tuple(ex(c) for c in t.conjuncts),
                          tuple(ex(a) for a in t.assumes))
            for t in spec.transitions),
        safety=ex(spec.safety),
        definitions={},
    )


def expand_in_update(update: HighLowUpdate, spec: ProtocolSpec
                     ) -> HighLowUpdate:
    """Inline definitions inside the update's own formulas."""
    if not spec.definitions:
        return update
    order = _toposort_defs(spec.definitions)
    expanded: dict[str, Definition] = {}
    for name in order:
        d = spec.definitions[name]
        expanded[name] = Definition(d.name, d.params,
                                    _expand(d.body, expanded))
    out = HighLowUpdate(update.sort, update.bound,
                        None if update.condition is None
                        else _expand(update.condition, expanded),
                        dict(update.rel_updates), dict(update.fun_updates),
                        dict(update.hints),
                        tuple(_expand(i, expanded)
                              for i in update.invariants),
                        update.explicit, update.defaults_applied)
    for name, rule in list(out.rel_updates.items()):
        out.rel_updates[name] = UpdateRule(rule.symbol, rule.params,
                                           _expand(rule.rhs, expanded))
    for name, rule in list(out.fun_updates.items()):
        out.fun_updates[name] = UpdateRule(
            rule.symbol, rule.params, _expand_term(rule.rhs, expanded))
    for name, h in list(out.hints.items()):
        out.hints[name] = Hint(h.transition, h.target, h.high_params,
                               h.low_params, h.z, _expand(h.body, expanded))
    return out


def _toposort_defs(defs: dict[str, Definition]) -> list[str]:
    order: list[str] = []
    state: dict[str, int] = {}

    def visit(name: str, stack: list[str]) -> None:
        if state.get(name) == 2:
            return
        if state.get(name) == 1:
            cycle = " -> ".join(stack + [name])
            raise SpecError(f"cyclic definitions: {cycle}")
        state[name] = 1
        for dep, _, _ in symbol_occurrences(defs[name].body):
            if dep in defs:
                visit(dep, stack + [name])
        state[name] = 2
        order.append(name)

    for name in defs:
        visit(name, [])
    return order


def _expand_term(t: Term, defs: dict[str, Definition]) -> Term:
    if isinstance(t, (Var, IntLit)):
        return t
    if isinstance(t, App):
        return App(t.sym, tuple(_expand_term(a, defs) for a in t.args),
                   t.tag, t.primed)
    if isinstance(t, IntOp):
        return IntOp(t.op, tuple(_expand_term(a, defs) for a in t.args))
    if isinstance(t, Ite):
        return Ite(_expand(t.cond, defs), _expand_term(t.then, defs),
                   _expand_term(t.other, defs))
    raise SpecError(f"not a term: {t!r}")


def _expand(f: Formula, defs: dict[str, Definition]) -> Formula:
    if isinstance(f, Lit):
        return f
    if isinstance(f, Eq):
        return Eq(_expand_term(f.lhs, defs), _expand_term(f.rhs, defs))
    if isinstance(f, IntCmp):
        return IntCmp(f.op, _expand_term(f.lhs, defs),
                      _expand_term(f.rhs, defs))
    if isinstance(f, Rel):
        args = tuple(_expand_term(a, defs) for a in f.args)
        if f.sym in defs:
            d = defs[f.sym]
            return substitute(d.body,
                              {p.name: a for p, a in zip(d.params, args)})
        return Rel(f.sym, args, f.tag, f.primed)
    if isinstance(f, Not):
        return Not(_expand(f.body, defs))
    if isinstance(f, And):
        return And(tuple(_expand(p, defs) for p in f.parts))
    if isinstance(f, Or):
        return Or(tuple(_expand(p, defs) for p in f.parts))
    if isinstance(f, Implies):
        return Implies(_expand(f.lhs, defs), _expand(f.rhs, defs))
    if isinstance(f, Iff):
        return Iff(_expand(f.lhs, defs), _expand(f.rhs, defs))
    if isinstance(f, Quant):
        return Quant(f.kind, f.var, f.sort, _expand(f.body, defs))
    raise SpecError(f"not a formula: {f!r}")


def skolemize_safety(spec: ProtocolSpec) -> ProtocolSpec:
    """Replace the leading existentials of the negated safety property by
    fresh immutable constants so the fault witness is nameable.

    The negation is normalized and its existential prefix extracted; an
    existential left under a universal is an unsupported shape and rejected.
    """
    negated = nnf(Not(spec.safety))
    prefix, matrix = _pull_existentials(negated)
    if _has_existential(matrix):
        raise SpecError("negated safety has an existential under a "
                        "universal; cannot Skolemize")
    if not prefix:
        return spec
    vocab = spec.vocabulary.copy()
    taken = set(vocab.symbols) | set(vocab.sorts)
    binding: dict[str, Term] = {}
    names: list[str] = []
    for v in prefix:
        name = fresh_name(f"{v.name.lower()}_sk", taken)
        taken.add(name)
        vocab.add_symbol(SymbolDecl(name, (), v.sort, mutable=False))
        binding[v.name] = App(name)
        names.append(name)
    body = substitute(matrix, binding)
    return replace(spec, vocabulary=vocab, safety=Not(body),
                   skolem_constants=spec.skolem_constants + tuple(names))


def _pull_existentials(f: Formula) -> tuple[list[Var], Formula]:
    """Extract existentials not under a universal/negation, renaming apart."""
    taken: set[str] = set()

    def go(f: Formula) -> tuple[list[Var], Formula]:
        if isinstance(f, Quant) and f.kind == "exists":
            new = fresh_name(f.var, taken)
            taken.add(new)
            body = f.body
            if new != f.var:
                body = substitute(body, {f.var: Var(new, f.sort)})
            inner, matrix = go(body)
            return [Var(new, f.sort)] + inner, matrix
        if isinstance(f, And) or isinstance(f, Or):
            vars_: list[Var] = []
            parts = []
            for p in f.parts:
                vs, m = go(p)
                vars_ += vs
                parts.append(m)
            ctor = And if isinstance(f, And) else Or
            return vars_, ctor(tuple(parts))
        return [], f

    taken |= free_vars(f)
    return go(f)


def _has_existential(f: Formula) -> bool:
    if isinstance(f, Quant):
        return f.kind == "exists" or _has_existential(f.body)
    if isinstance(f, Not):
        return _has_existential(f.body)
    if isinstance(f, (And, Or)):
        return any(_has_existential(p) for p in f.parts)
    if isinstance(f, (Implies, Iff)):
        return _has_existential(f.lhs) or _has_existential(f.rhs)
    return False


def apply_defaults(update: HighLowUpdate, spec: ProtocolSpec
                   ) -> HighLowUpdate:
    """Fill in the deletion condition, cutoff bound, and per-symbol updates.

    Defaults: the condition keeps z away from every immutable constant of the
    target sort, the bound is the number of such constants, and every symbol
    without an update keeps its high interpretation.  Invariants are conjoined
    into the condition.
    """
    if update.defaults_applied:
        return update
    vocab = spec.vocabulary
    sort = update.sort
    z = update.z
    out = HighLowUpdate(sort, update.bound, update.condition,
                        dict(update.rel_updates), dict(update.fun_updates),
                        dict(update.hints), update.invariants,
                        update.explicit, defaults_applied=True)

    consts = [d for d in vocab.symbols.values()
              if d.is_constant and not d.mutable and d.result_sort == sort]
    if out.condition is None:
        out.condition = conj([neq(z, App(c.name)) for c in consts])
    if out.bound is None:
        out.bound = len(consts)
    for inv in update.invariants:
        if free_vars(inv):
            raise SpecError("invariant must be a closed formula")
        out.condition = conj([out.condition, inv])

    for decl in vocab.symbols.values():
        xs = tuple(Var(f"x{i}", s) for i, s in enumerate(decl.arg_sorts))
        if decl.is_relation:
            if decl.name not in out.rel_updates:
                out.rel_updates[decl.name] = UpdateRule(
                    decl.name, xs + (z,), Rel(decl.name, xs))
        else:
            if decl.name not in out.fun_updates:
                out.fun_updates[decl.name] = UpdateRule(
                    decl.name, xs + (z,), App(decl.name, xs))
    return out


def build_eta(update: HighLowUpdate, spec: ProtocolSpec) -> encode.EtaFormula:
    """Assemble the high/low relation for a defaults-applied update."""
    from .transforms import retag

    z = update.z
    vocab = spec.vocabulary
    if update.condition is None:
        raise SpecError("apply_defaults before build_eta")
    rel_rhs: dict[str, Formula] = {}
    fun_rhs: dict[str, Term] = {}
    for name, rule in update.rel_updates.items():
        decl = vocab.decl(name)
        xs = [Var(f"x{i}", s) for i, s in enumerate(decl.arg_sorts)]
        binding = {p.name: x for p, x in zip(rule.params, xs + [z])}
        rel_rhs[name] = retag(substitute(rule.rhs, binding), Tag.PLAIN, Tag.H)
    for name, rule in update.fun_updates.items():
        decl = vocab.decl(name)
        xs = [Var(f"x{i}", s) for i, s in enumerate(decl.arg_sorts)]
        binding = {p.name: x for p, x in zip(rule.params, xs + [z])}
        rhs = substitute(Eq(rule.rhs, rule.rhs), binding).lhs
        fun_rhs[name] = _retag_term(rhs, Tag.H)
    condition = retag(update.condition, Tag.PLAIN, Tag.H)
    return encode.build_eta(condition, rel_rhs, fun_rhs, vocab, z)


def _retag_term(t: Term, tag: Tag) -> Term:
    from .transforms import map_symbols
    f = map_symbols(Eq(t, t), lambda s, tg, p: (tag, p))
    return f.lhs
