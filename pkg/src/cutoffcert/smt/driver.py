"""Drive an external SMT solver process, one process per query.

The wire format is SMT-LIB 2.6 text over the child's standard streams.  The
solver command resolves from (first hit wins): an explicit ``--solver``
argument, the ``CUTOFFCERT_SOLVER`` environment variable, a ``z3`` binary on
PATH, and the bundled Node shim over the z3 WebAssembly package.

``unknown`` is never treated as valid; a crash or unparseable reply is an
infrastructure error, distinct from a verdict.
"""

from __future__ import annotations

import os
import shlex
import shutil
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from ..logic import Vocabulary
from ..vcgen import VerificationCondition
from .emit import emit_query
from .model import CounterModel, DecodeError, decode_model

ENV_SOLVER = "CUTOFFCERT_SOLVER"
DEFAULT_TIMEOUT_MS = 10_000


class SolverUnavailable(Exception):
    pass


class InfrastructureError(Exception):
    """Solver crashed or spoke garbage; not a verification verdict."""


@dataclass
class SolverConfig:
    command: list[str]
    timeout_ms: int = DEFAULT_TIMEOUT_MS
    kind: str = "generic"   # 'z3' | 'shim' | 'generic'

    def describe(self) -> str:
        return " ".join(self.command)


def shim_path() -> Path:
    return Path(__file__).with_name("z3shim.js")


def resolve_solver(explicit: Optional[str] = None,
                   timeout_ms: int = DEFAULT_TIMEOUT_MS) -> SolverConfig:
    if explicit:
        return SolverConfig(shlex.split(explicit), timeout_ms, "generic")
    env = os.environ.get(ENV_SOLVER)
    if env:
        return SolverConfig(shlex.split(env), timeout_ms, "generic")
    z3 = shutil.which("z3")
    if z3:
        return SolverConfig([z3, "-in", "-smt2"], timeout_ms, "z3")
    node = shutil.which("node")
    if node:
        return SolverConfig([node, str(shim_path())], timeout_ms, "shim")
    raise SolverUnavailable(
        "no SMT solver found: pass --solver, set CUTOFFCERT_SOLVER, put z3 "
        "on PATH, or install node with the z3-solver npm package")


@dataclass
class SolverVerdict:
    status: str                      # valid | invalid | unknown | timeout
    time_ms: float
    counter: Optional[CounterModel] = None
    reason: str = ""

    @property
    def is_valid(self) -> bool:
        return self.status == "valid"


def run_query(query: str, config: SolverConfig) -> tuple[str, str]:
    """Run one solver process on the query; returns (stdout, stderr)."""
    cmd = list(config.command)
    if config.kind == "shim":
        cmd += ["--timeout-ms", str(config.timeout_ms)]
    elif config.kind == "z3":
        cmd += [f"-t:{config.timeout_ms}"]
    try:
        proc = subprocess.run(
            cmd, input=query, capture_output=True, text=True,
            timeout=max(1.0, config.timeout_ms / 1000 * 3 + 15))
    except FileNotFoundError as e:
        raise SolverUnavailable(f"cannot run solver: {e}") from None
    except subprocess.TimeoutExpired:
        return ("__timeout__", "")
    if proc.returncode not in (0, 1):  # z3 exits 1 on (error ...) replies
        raise InfrastructureError(
            f"solver exited with {proc.returncode}: {proc.stderr.strip()}")
    return (proc.stdout, proc.stderr)


def check(vc: VerificationCondition, vocab: Vocabulary,
          config: SolverConfig) -> SolverVerdict:
    """Decide one obligation: unsat means valid, sat yields a re-validated
    countermodel."""
    query = emit_query(vc, vocab)
    start = time.monotonic()
    out, err = run_query(query, config)
    elapsed = (time.monotonic() - start) * 1000
    if out == "__timeout__":
        return SolverVerdict("timeout", elapsed)
    verdict_line = ""
    rest_lines: list[str] = []
    for line in out.splitlines():
        line = line.strip()
        if not verdict_line and line in ("sat", "unsat", "unknown"):
            verdict_line = line
        elif verdict_line:
            rest_lines.append(line)
        elif line.startswith("(error") or not line:
            continue
        else:
            rest_lines.append(line)
    if not verdict_line:
        raise InfrastructureError(
            f"no check-sat verdict in solver output: "
            f"{out[:200]!r} {err[:200]!r}")
    if verdict_line == "unsat":
        return SolverVerdict("valid", elapsed)
    if verdict_line == "unknown":
        return SolverVerdict("unknown", elapsed,
                             reason="solver returned unknown")
    model_text = "\n".join(rest_lines)
    counter = decode_model(model_text, vc, vocab)
    return SolverVerdict("invalid", elapsed, counter=counter)
