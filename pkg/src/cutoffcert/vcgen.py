"""Assemble the verification conditions that establish a strong size-reducing
simulation, split the transition obligation per transition, decompose it with
user hints, and plan the per-sort stages.

All obligations are implications between formulas over the tagged copies of
the vocabulary; the shared deletion variable ``z`` stays free (it is closed
universally over the whole implication by checkers and emitters).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

from . import encode
from .logic import (
    And, App, DELETION_VAR, Eq, Formula, Iff, IllFormed, Implies, Lit, Not,
    Or, Quant, Rel, Sort, SortKind, Tag, Term, TRUE, Var, Vocabulary, conj,
    disj, exists, forall, free_vars, neq,
)
from .speclang import (
    CutoffTask, Hint, HighLowUpdate, ProtocolSpec, SpecError, TransitionDef,
    apply_defaults, build_eta, expand_definitions, expand_in_update,
    skolemize_safety,
)
from .transforms import map_symbols, retag, retag_two_state

VC_NAMES = {
    1: "iota-preservation",
    2: "tau-preservation",
    3: "safety-preservation",
    4: "projectability",
    5: "gamma-preservation",
    6: "theta-initiation",
    7: "theta-consecution",
}


@dataclass(frozen=True)
class VerificationCondition:
    index: int                  # row 1..7
    name: str                   # VC_NAMES[index]
    part: str                   # '' | transition | 'transition:hint-...'
    hypothesis: Formula
    conclusion: Formula
    stage: str                  # target sort name
    z: Optional[Var]            # shared free deletion variable (rows 1-5, 7)

    @property
    def vc_id(self) -> str:
        base = f"{self.index}-{self.name}"
        return f"{base}[{self.part}]" if self.part else base

    def formula(self) -> Formula:
        """The closed proof obligation."""
        impl = Implies(self.hypothesis, self.conclusion)
        vs = sorted(free_vars(impl))
        sorts = _var_sorts(impl)
        return forall([Var(v, sorts[v]) for v in vs], impl)

    def negation(self) -> tuple[Formula, list[Var]]:
        """hypothesis /\\ !conclusion with its free variables (to be read
        existentially); satisfiable iff the obligation is not valid."""
        f = And((self.hypothesis, Not(self.conclusion)))
        sorts = _var_sorts(f)
        return f, [Var(v, sorts[v]) for v in sorted(free_vars(f))]


def _var_sorts(f: Formula) -> dict[str, Sort]:
    """Sorts of free variables (each name used at one sort)."""
    from .logic import Eq as _Eq, IntCmp as _Cmp, IntLit, IntOp, Ite
    out: dict[str, Sort] = {}

    def on_term(t, bound):
        if isinstance(t, Var):
            if t.name not in bound:
                out[t.name] = t.sort
        elif isinstance(t, (App, IntOp)):
            for a in t.args:
                on_term(a, bound)
        elif isinstance(t, Ite):
            go(t.cond, bound)
            on_term(t.then, bound)
            on_term(t.other, bound)

    def go(f, bound):
        if isinstance(f, (_Eq, _Cmp)):
            on_term(f.lhs, bound)
            on_term(f.rhs, bound)
        elif isinstance(f, Rel):
            for a in f.args:
                on_term(a, bound)
        elif isinstance(f, Not):
            go(f.body, bound)
        elif isinstance(f, (And, Or)):
            for p in f.parts:
                go(p, bound)
        elif isinstance(f, (Implies, Iff)):
            go(f.lhs, bound)
            go(f.rhs, bound)
        elif isinstance(f, Quant):
            go(f.body, bound | {f.var})

    go(f, set())
    return out


def _dedupe(parts: Sequence[Formula]) -> list[Formula]:
    return list(dict.fromkeys(parts))


def _h(f: Formula) -> Formula:
    return retag(f, Tag.PLAIN, Tag.H)


def _l(f: Formula) -> Formula:
    return retag(f, Tag.PLAIN, Tag.L)


def _hp(f: Formula, vocab: Vocabulary) -> Formula:
    """Post-state copy of a single-state formula: mutables to h', immutables
    stay on the shared h copy."""

    def fn(sym: str, tag: Tag, primed: bool):
        if tag is not Tag.PLAIN or primed:
            raise IllFormed(f"{sym} unexpectedly tagged")
        return (Tag.HP if vocab.decl(sym).mutable else Tag.H, False)

    return map_symbols(f, fn)


def _prime_eta(f: Formula, vocab: Vocabulary) -> Formula:
    """eta', over the post-state copies: mutable h->h', l->l'."""

    def fn(sym: str, tag: Tag, primed: bool):
        if not vocab.decl(sym).mutable:
            return (tag, primed)
        if tag is Tag.H:
            return (Tag.HP, primed)
        if tag is Tag.L:
            return (Tag.LP, primed)
        return (tag, primed)

    return map_symbols(f, fn)


def _not_safety(spec: ProtocolSpec) -> Formula:
    phi = spec.safety
    return phi.body if isinstance(phi, Not) else Not(phi)


def mentions_mutable(f: Formula, vocab: Vocabulary) -> bool:
    from .logic import symbol_occurrences
    return any(vocab.decl(s).mutable for s, _, _ in symbol_occurrences(f))


def tau_disjunct(t: TransitionDef, vocab: Vocabulary) -> Formula:
    """exists params. body, over the h copies."""
    body = retag_two_state(t.body, vocab, Tag.H, Tag.HP)
    return exists(list(t.params), body)


def generate_vcs(spec: ProtocolSpec, update: HighLowUpdate,
                 k: Optional[int] = None) -> list[VerificationCondition]:
    """The seven obligations for one target sort (unsplit, unhinted)."""
    vocab = spec.vocabulary
    sort = update.sort
    z = update.z
    if update.condition is None:
        raise SpecError("apply_defaults before generate_vcs")
    if k is None:
        k = update.bound
    assert k is not None

    eta = build_eta(update, spec).formula
    eta_p = _prime_eta(eta, vocab)
    theta = retag(update.condition, Tag.PLAIN, Tag.H)
    theta_p = _prime_eta(theta, vocab)

    gamma_h = [_h(a) for a in spec.axioms]
    gamma_hp = [_hp(a, vocab) for a in spec.axioms
                if mentions_mutable(a, vocab)]
    iota_h = [_h(i) for i in spec.inits]

    tau_h = disj([tau_disjunct(t, vocab) for t in spec.transitions])
    idle = encode.idle_formula(vocab)
    tau_or_idle = disj([exists(list(t.params), t.body)
                        for t in spec.transitions] + [idle])
    # low-copy conclusions: exclude z, then move onto the l copies
    def low1(f: Formula) -> Formula:
        return _l(encode.z_exclude(f, z))

    def low2(f: Formula) -> Formula:
        return retag_two_state(encode.z_exclude(f, z), vocab, Tag.L, Tag.LP)

    neg_phi = _not_safety(spec)

    stage = sort.name
    vcs = [
        VerificationCondition(
            1, VC_NAMES[1], "",
            conj(_dedupe(gamma_h + iota_h + [eta])),
            low1(conj(spec.inits)), stage, z),
        VerificationCondition(
            2, VC_NAMES[2], "",
            conj(_dedupe(gamma_h + gamma_hp + [eta, eta_p, tau_h])),
            low2(tau_or_idle), stage, z),
        VerificationCondition(
            3, VC_NAMES[3], "",
            conj(_dedupe(gamma_h + [_h(neg_phi), eta])),
            low1(neg_phi), stage, z),
        VerificationCondition(
            4, VC_NAMES[4], "",
            conj(_dedupe(gamma_h + [eta])),
            _l(encode.closure_formula(vocab, z)), stage, z),
        VerificationCondition(
            5, VC_NAMES[5], "",
            conj(_dedupe(gamma_h + [eta])),
            low1(conj(spec.axioms)), stage, z),
        VerificationCondition(
            6, VC_NAMES[6], "",
            conj(_dedupe(gamma_h + iota_h + [encode.size_gt(sort, k)])),
            exists([z], theta), stage, None),
        VerificationCondition(
            7, VC_NAMES[7], "",
            conj(_dedupe(gamma_h + gamma_hp + [theta, tau_h])),
            theta_p, stage, z),
    ]
    return vcs


def split_per_transition(vc: VerificationCondition, spec: ProtocolSpec
                         ) -> list[VerificationCondition]:
    """One obligation per transition, replacing tau in the hypothesis."""
    if vc.index not in (2, 7):
        raise SpecError(f"cannot split {vc.vc_id}")
    vocab = spec.vocabulary
    tau_h = disj([tau_disjunct(t, vocab) for t in spec.transitions])
    out = []
    for t in spec.transitions:
        hyp = _replace_conjunct(vc.hypothesis, tau_h, tau_disjunct(t, vocab))
        out.append(replace(vc, part=t.name, hypothesis=hyp))
    return out


def _replace_conjunct(f: Formula, old: Formula, new: Formula) -> Formula:
    if f == old:
        return new
    if isinstance(f, And):
        return conj([new if p == old else p for p in f.parts])
    raise SpecError("hypothesis does not contain the expected conjunct")


def apply_hint(vc: VerificationCondition, hint: Hint, spec: ProtocolSpec
               ) -> list[VerificationCondition]:
    """Decompose a split tau-preservation obligation using a hint.

    Totality asks for low arguments related to the high ones; sufficiency asks
    that related arguments make the target low transition (or a stutter) go
    through.  The low arguments of the deleted sort must avoid z: this guard
    comes from the excluded-z form of the existential it replaces.  For hints
    that pin every low argument with an equation, totality is trivial and
    skipped.
    """
    if vc.index != 2 or not vc.part or ":" in vc.part:
        raise SpecError(f"hints apply to split tau-preservation, not "
                        f"{vc.vc_id}")
    vocab = spec.vocabulary
    t = spec.transition(vc.part)
    target = spec.transition(hint.target)
    z = hint.z

    # high transition body instantiated on the hint's high parameters
    body_h = retag_two_state(t.body, vocab, Tag.H, Tag.HP)
    bind_h = {p.name: v for p, v in zip(t.params, hint.high_params)}
    from .transforms import substitute
    body_h = substitute(body_h, bind_h)

    # shared context: the split hypothesis minus the existential tau disjunct
    hyp_parts = list(vc.hypothesis.parts) if isinstance(vc.hypothesis, And) \
        else [vc.hypothesis]
    tau_part = tau_disjunct(t, vocab)
    context = [p for p in hyp_parts if p != tau_part]
    if len(context) == len(hyp_parts):
        raise SpecError("split hypothesis lacks the transition disjunct")

    gamma = retag(hint.body, Tag.PLAIN, Tag.H)

    out: list[VerificationCondition] = []
    if not hint.is_functional():
        out.append(replace(
            vc, part=f"{vc.part}:hint-totality",
            hypothesis=conj(context + [body_h]),
            conclusion=exists(list(hint.low_params), gamma)))

    # sufficiency: target low transition on the low parameters, or a stutter
    bind_l = {p.name: v for p, v in zip(target.params, hint.low_params)}
    tgt_body = substitute(target.body, bind_l)
    guards = [neq(v, z) for v in hint.low_params if v.sort == z.sort]
    low_step = conj(guards
                    + [retag_two_state(encode.z_exclude(tgt_body, z),
                                       vocab, Tag.L, Tag.LP)])
    idle_l = retag_two_state(encode.z_exclude(encode.idle_formula(vocab), z),
                             vocab, Tag.L, Tag.LP)
    out.append(replace(
        vc, part=f"{vc.part}:hint-sufficiency",
        hypothesis=conj(context + [body_h, gamma]),
        conclusion=disj([low_step, idle_l])))
    return out


def stage_obligations(spec: ProtocolSpec, update: HighLowUpdate
                      ) -> list[VerificationCondition]:
    """Full per-stage obligation list: rows 1-7 with 2 and 7 split per
    transition and hints applied where given."""
    vcs = generate_vcs(spec, update)
    out: list[VerificationCondition] = []
    for vc in vcs:
        if vc.index in (2, 7) and spec.transitions:
            for split in split_per_transition(vc, spec):
                if vc.index == 2 and split.part in update.hints:
                    out.extend(apply_hint(split, update.hints[split.part],
                                          spec))
                else:
                    out.append(split)
        else:
            out.append(vc)
    return out


@dataclass
class PlanStage:
    sort: Sort
    bound: int
    update: HighLowUpdate
    spec: ProtocolSpec          # Skolemized, with earlier caps injected
    vcs: list[VerificationCondition]


@dataclass
class ProofPlan:
    stages: list[PlanStage]
    base_spec: ProtocolSpec     # original, pre-Skolemization (for the
                                # residual bounded check)
    final_bounds: dict[str, int]


def plan_multisort(spec: ProtocolSpec, task: CutoffTask) -> ProofPlan:
    """Order the per-sort stages, injecting each certified cap into the
    axioms of the later stages, and fix the residual bounded-check sizes.

    The bounded check must also cover size-1 instances when a stage's bound
    is 0: deleting below a singleton domain is impossible, so the simulation
    argument only reaches down to one element.
    """
    base = expand_definitions(spec)
    working = skolemize_safety(base)
    final_bounds: dict[str, int] = {}
    for srt in working.vocabulary.sorts.values():
        if srt.kind is SortKind.BOUNDED:
            final_bounds[srt.name] = srt.bound

    stages: list[PlanStage] = []
    for update in task.stages:
        sort = update.sort
        if sort.kind is not SortKind.FINITE:
            raise SpecError(f"cutoff target {sort.name} is not an "
                            f"unbounded finite sort")
        update = apply_defaults(expand_in_update(update, spec), working)
        assert update.bound is not None
        vcs = stage_obligations(working, update)
        stages.append(PlanStage(sort, update.bound, update, working, vcs))
        final_bounds[sort.name] = max(update.bound, 1)
        working = replace(
            working,
            axioms=working.axioms + (encode.size_le(sort,
                                                    max(update.bound, 1)),))
    return ProofPlan(stages, base, final_bounds)
