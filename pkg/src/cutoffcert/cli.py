"""Command-line front end: verify / emit / oracle."""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

from . import __version__
from .logic import IllFormed, SortKind, Tag
from .oracle.bfs import SafetyResult, Trace, bounded_safety_check
from .oracle.enumerate import DEFAULT_CEILING, GuardrailExceeded
from .oracle.simulation import check_strong_simulation
from .oracle.validity import bounded_validity_check
from .pretty import fmt, term_str
from .smt.driver import (
    DEFAULT_TIMEOUT_MS, InfrastructureError, SolverConfig, SolverUnavailable,
    check, resolve_solver, run_query,
)
from .smt.emit import emit_query
from .smt.model import CounterModel, DecodeError
from .speclang import ProtocolSpec, SpecError, parse_spec
from .structures import Structure
from .vcgen import PlanStage, ProofPlan, plan_multisort

EXIT_SAFE = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
EXIT_INFRA = 3
EXIT_INCONCLUSIVE = 4


def corpus_dir() -> Path:
    return Path(__file__).with_name("corpus")


def _parse_max(items: list[str]) -> dict[str, int]:
    out = {}
    for it in items or []:
        if "=" not in it:
            raise SpecError(f"--max expects sort=N, got {it!r}")
        name, n = it.split("=", 1)
        out[name.strip()] = int(n)
    return out


def _load(path: str):
    text = Path(path).read_text()
    return parse_spec(text, path)


def _counts(stage: PlanStage) -> dict:
    """Update/hint/invariant bookkeeping for comparing against published
    summaries.  The update denominator counts declared relations and
    functions, leaving out immutable constants (their updates are forced)."""
    vocab = stage.spec.vocabulary
    symbols = [d for d in vocab.symbols.values()
               if not (d.is_constant and not d.mutable)]
    skolems = set(stage.spec.skolem_constants)
    symbols = [d for d in symbols if d.name not in skolems]
    explicit = [n for n in stage.update.explicit]
    return {
        "updates": f"{len(set(explicit))}/{len(symbols)}",
        "hints": f"{len(stage.update.hints)}/{len(stage.spec.transitions)}",
        "invariant": bool(stage.update.invariants),
    }


def render_structure(s: Structure, names: Optional[dict] = None,
                     indent: str = "  ") -> str:
    lines = []
    for name, dom in sorted(s.domains.items()):
        lines.append(f"{indent}{name} = {{{', '.join(map(str, dom))}}}")
    for (name, tag, primed), interp in sorted(
            s.interps.items(), key=lambda kv: (kv[0][0], kv[0][1].value)):
        from .logic import smt_name
        label = smt_name(name, tag, primed)
        if isinstance(interp, frozenset):
            rows = sorted(interp)
            lines.append(f"{indent}{label} = "
                         f"{{{', '.join(map(str, rows))}}}")
        else:
            items = ", ".join(f"{k}->{v}" for k, v in sorted(interp.items()))
            lines.append(f"{indent}{label} = {{{items}}}")
    return "\n".join(lines)


def render_counter(cm: CounterModel) -> str:
    out = [render_structure(cm.structure)]
    if cm.assignment:
        out.append("  where " + ", ".join(
            f"{k} = {v}" for k, v in sorted(cm.assignment.items())))
    return "\n".join(out)


def render_trace(trace: Trace) -> str:
    out = ["  initial state:"]
    out.append(render_structure(trace.initial, indent="    "))
    for step in trace.steps:
        out.append(f"  --{step.transition}"
                   f"({', '.join(map(str, step.params))})-->")
        out.append(render_structure(step.state, indent="    "))
    return "\n".join(out)


def solver_version(cfg: SolverConfig) -> str:
    try:
        out, _ = run_query("(get-info :version)\n", cfg)
        m = re.search(r'"([^"]+)"', out)
        return m.group(1) if m else out.strip()[:40]
    except Exception:
        return "unknown"


def _vc_filename(stage: str, vc_id: str) -> str:
    clean = re.sub(r"[^A-Za-z0-9_.-]+", "_", vc_id).strip("_")
    return f"{stage}__{clean}.smt2"


def cmd_emit(args) -> int:
    spec, task = _load(args.spec)
    plan = plan_multisort(spec, task)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for stage in plan.stages:
        for vc in stage.vcs:
            text = emit_query(vc, stage.spec.vocabulary)
            (out / _vc_filename(stage.sort.name, vc.vc_id)).write_text(text)
    manifest = {
        "spec": Path(args.spec).name,
        "stages": [{"sort": st.sort.name, "bound": st.bound,
                    "vcs": [vc.vc_id for vc in st.vcs]}
                   for st in plan.stages],
        "bounded_check": dict(sorted(plan.final_bounds.items())),
    }
    (out / "bounded_check.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"wrote {sum(len(st.vcs) for st in plan.stages)} queries and "
          f"bounded_check.json to {out}")
    return EXIT_SAFE


def cmd_verify(args) -> int:
    spec, task = _load(args.spec)
    plan = plan_multisort(spec, task)
    if not plan.stages:
        print("error: spec declares no cutoff stages (bound/condition/"
              "update/hint blocks)", file=sys.stderr)
        return EXIT_USAGE

    uncovered = [s.name for s in spec.vocabulary.sorts.values()
                 if s.kind is SortKind.FINITE
                 and s.name not in plan.final_bounds]
    cfg = resolve_solver(args.solver, args.timeout_ms)
    report = {
        "tool": f"cutoffcert {__version__}",
        "solver": {"command": cfg.describe(),
                   "version": solver_version(cfg)},
        "logic": "none declared (solver defaults)",
        "spec": Path(args.spec).name,
        "stages": [],
        "overall": None,
    }

    t_start = time.monotonic()
    any_invalid = False
    any_unknown = False
    counters: list[tuple[str, CounterModel]] = []
    for stage in plan.stages:
        vocab = stage.spec.vocabulary
        with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
            futures = [pool.submit(check, vc, vocab, cfg)
                       for vc in stage.vcs]
            verdicts = [f.result() for f in futures]
        stage_rec = {"sort": stage.sort.name, "bound": stage.bound,
                     **_counts(stage), "vcs": []}
        for vc, verdict in zip(stage.vcs, verdicts):
            rec = {"id": vc.vc_id, "status": verdict.status,
                   "time_ms": round(verdict.time_ms, 1)}
            stage_rec["vcs"].append(rec)
            if verdict.status == "invalid":
                any_invalid = True
                counters.append((f"{stage.sort.name}/{vc.vc_id}",
                                 verdict.counter))
            elif verdict.status in ("unknown", "timeout"):
                any_unknown = True
        report["stages"].append(stage_rec)
        if args.emit_dir:
            outdir = Path(args.emit_dir)
            outdir.mkdir(parents=True, exist_ok=True)
            for vc in stage.vcs:
                (outdir / _vc_filename(stage.sort.name, vc.vc_id)
                 ).write_text(emit_query(vc, vocab))

    bounded_rec = None
    if any_invalid:
        overall = "VC-FAILED"
    elif any_unknown:
        overall = "INCONCLUSIVE"
    elif args.skip_bounded:
        overall = "CUTOFF-ONLY"
    elif uncovered:
        overall = "CUTOFF-ONLY"
        report["uncovered_sorts"] = uncovered
    else:
        caps = dict(plan.final_bounds)
        for name, n in _parse_max(args.max or []).items():
            caps[name] = max(caps.get(name, 1), n)
        try:
            res = bounded_safety_check(plan.base_spec, caps,
                                       int_window=args.int_window,
                                       ceiling=args.ceiling)
        except GuardrailExceeded as e:
            print(f"bounded check refused: {e}", file=sys.stderr)
            return EXIT_INFRA
        bounded_rec = {"bounds": dict(sorted(caps.items())),
                       "safe": res.safe,
                       "states": res.states_explored,
                       "instances": res.instances,
                       "window_clipped": res.int_clipped}
        report["bounded"] = bounded_rec
        overall = "SAFE" if res.safe else "BOUNDED-UNSAFE"
        if not res.safe:
            report["trace_length"] = len(res.trace)

    report["overall"] = overall
    report["wall_ms"] = round((time.monotonic() - t_start) * 1000, 1)

    # human-readable summary
    print(f"cutoffcert {__version__} on {report['spec']} "
          f"(solver: z3 {report['solver']['version']})")
    for stage_rec in report["stages"]:
        print(f"stage {stage_rec['sort']}: bound {stage_rec['bound']}, "
              f"updates {stage_rec['updates']}, hints {stage_rec['hints']}, "
              f"invariant {'yes' if stage_rec['invariant'] else 'no'}")
        for rec in stage_rec["vcs"]:
            print(f"  {rec['id']:52s} {rec['status']:8s}"
                  f"{rec['time_ms']:9.1f} ms")
    if bounded_rec is not None:
        verdictw = "SAFE" if bounded_rec["safe"] else "UNSAFE"
        print(f"bounded check at {bounded_rec['bounds']}: {verdictw} "
              f"({bounded_rec['states']} states, "
              f"{bounded_rec['instances']} instances)")
    for label, cm in counters:
        print(f"countermodel for {label}:")
        print(render_counter(cm))
    if overall == "BOUNDED-UNSAFE" and 'res' in locals() and res.trace:
        print("violating trace:")
        print(render_trace(res.trace))
    print(f"overall: {overall} ({report['wall_ms']:.0f} ms)")

    if args.report:
        Path(args.report).write_text(
            json.dumps(report, indent=2, sort_keys=True) + "\n")

    if overall == "SAFE":
        return EXIT_SAFE
    if overall in ("VC-FAILED", "BOUNDED-UNSAFE"):
        return EXIT_FAILED
    return EXIT_INCONCLUSIVE


def cmd_oracle(args) -> int:
    spec, task = _load(args.spec)
    bounds = _parse_max(args.max or [])
    did = False
    code = EXIT_SAFE
    if args.safety:
        did = True
        from .speclang import expand_definitions
        base = expand_definitions(spec)
        missing = [s.name for s in base.vocabulary.sorts.values()
                   if not s.is_int and s.name not in bounds]
        if missing:
            print(f"error: --safety needs --max for sorts {missing}",
                  file=sys.stderr)
            return EXIT_USAGE
        try:
            res = bounded_safety_check(base, bounds,
                                       int_window=args.int_window,
                                       ceiling=args.ceiling)
        except GuardrailExceeded as e:
            print(f"refused: {e}", file=sys.stderr)
            return EXIT_INFRA
        if res.safe:
            print(f"SAFE up to {bounds} ({res.states_explored} states, "
                  f"{res.instances} instances"
                  + (", integer window clipped" if res.int_clipped else "")
                  + ")")
        else:
            print(f"UNSAFE at {bounds}: violating trace of length "
                  f"{len(res.trace)}")
            print(render_trace(res.trace))
            code = EXIT_FAILED
    if args.simulation or args.validity:
        plan = plan_multisort(spec, task)
        for stage in plan.stages:
            if args.stage and stage.sort.name != args.stage:
                continue
            sbounds = dict(bounds)
            for s in stage.spec.vocabulary.sorts.values():
                if not s.is_int:
                    sbounds.setdefault(s.name, 2)
            if args.simulation:
                did = True
                rep = check_strong_simulation(
                    stage.spec, stage.update, stage.bound, sbounds,
                    int_window=args.int_window, ceiling=args.ceiling)
                print(f"stage {stage.sort.name} (k={stage.bound}, "
                      f"bounds {sbounds}): {rep.pairs} pairs over "
                      f"{rep.states} states")
                for name, r in {**rep.strong, **rep.weak}.items():
                    mark = "ok" if r.holds else f"VIOLATED {r.witness}"
                    print(f"  {name:22s} {mark}")
                if not rep.all_strong() or not rep.all_weak():
                    code = EXIT_FAILED
            if args.validity:
                did = True
                for vc in stage.vcs:
                    res = bounded_validity_check(
                        vc, stage.spec, sbounds, update=stage.update,
                        int_window=args.int_window, ceiling=args.ceiling)
                    status = ("valid-up-to" if res.valid
                              else "COUNTERMODEL")
                    print(f"  {vc.vc_id:52s} {status} "
                          f"({res.cases} cases)")
                    if not res.valid:
                        code = EXIT_FAILED
    if not did:
        print("error: pick at least one of --safety/--simulation/--validity",
              file=sys.stderr)
        return EXIT_USAGE
    return code


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="cutoffcert",
        description="Certify cutoff bounds for safety properties of "
                    "first-order transition systems.")
    p.add_argument("--version", action="version",
                   version=f"cutoffcert {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("spec", help="specification file")
        sp.add_argument("--int-window", type=int, default=3,
                        help="oracle integer window half-width")
        sp.add_argument("--ceiling", type=int, default=DEFAULT_CEILING,
                        help="enumeration guardrail")

    v = sub.add_parser("verify", help="generate, discharge, and finish with "
                                      "the bounded check")
    common(v)
    v.add_argument("--solver", help="solver command (overrides env/PATH)")
    v.add_argument("--timeout-ms", type=int, default=DEFAULT_TIMEOUT_MS)
    v.add_argument("--jobs", type=int, default=4,
                   help="parallel solver processes")
    v.add_argument("--skip-bounded", action="store_true",
                   help="stop after the cutoff argument (never SAFE)")
    v.add_argument("--max", action="append", metavar="SORT=N",
                   help="extend the bounded check beyond the certified caps")
    v.add_argument("--report", help="write a JSON report here")
    v.add_argument("--emit-dir", help="also write the SMT queries here")
    v.set_defaults(fn=cmd_verify)

    e = sub.add_parser("emit", help="write one SMT-LIB file per obligation")
    common(e)
    e.add_argument("--out", required=True, help="output directory")
    e.set_defaults(fn=cmd_emit)

    o = sub.add_parser("oracle", help="exhaustive finite-instance checks")
    common(o)
    o.add_argument("--safety", action="store_true",
                   help="breadth-first reachability check")
    o.add_argument("--simulation", action="store_true",
                   help="check the simulation definitions directly")
    o.add_argument("--validity", action="store_true",
                   help="brute-force the verification conditions")
    o.add_argument("--max", action="append", metavar="SORT=N")
    o.add_argument("--stage", help="restrict to one target sort")
    o.set_defaults(fn=cmd_oracle)
    return p


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except SpecError as e:
        loc = f"{args.spec}:{e.line}:{e.col}: " if e.line else ""
        print(f"{loc}error: {e.msg}", file=sys.stderr)
        return EXIT_USAGE
    except (IllFormed, DecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SolverUnavailable as e:
        print(f"solver unavailable: {e}", file=sys.stderr)
        return EXIT_INFRA
    except InfrastructureError as e:
        print(f"infrastructure error: {e}", file=sys.stderr)
        return EXIT_INFRA


if __name__ == "__main__":
    sys.exit(main())
