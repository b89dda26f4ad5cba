#!/usr/bin/env node
// Batch SMT-LIB front end over the z3 WebAssembly build ("z3-solver" on npm).
// Reads a whole SMT-LIB 2 script from stdin, evaluates it, prints the solver
// output (check-sat verdict, model, errors) to stdout, like `z3 -in`.
//
// The z3-solver module is resolved from, in order: $CUTOFFCERT_Z3_MODULES,
// ./node_modules, ./solver/node_modules, the directory of this script, and
// the regular module path.

"use strict";

function resolveZ3() {
  const path = require("path");
  const candidates = [];
  if (process.env.CUTOFFCERT_Z3_MODULES) {
    candidates.push(process.env.CUTOFFCERT_Z3_MODULES);
  }
  candidates.push(path.join(process.cwd(), "node_modules"));
  candidates.push(path.join(process.cwd(), "solver", "node_modules"));
  candidates.push(path.join(__dirname, "node_modules"));
  for (const dir of candidates) {
    try {
      return require(require.resolve("z3-solver", { paths: [dir] }));
    } catch (e) { /* keep looking */ }
  }
  try {
    return require("z3-solver");
  } catch (e) {
    process.stderr.write(
      "z3shim: cannot find the z3-solver npm package; run\n" +
      "  npm install z3-solver\n" +
      "in the repository root (or set CUTOFFCERT_Z3_MODULES).\n");
    process.exit(3);
  }
}

let timeoutMs = 0;
for (let i = 2; i < process.argv.length; i++) {
  if (process.argv[i] === "--timeout-ms") {
    timeoutMs = parseInt(process.argv[++i], 10) || 0;
  }
}

let input = "";
process.stdin.setEncoding("utf8");
process.stdin.on("data", (d) => { input += d; });
process.stdin.on("end", async () => {
  const { init } = resolveZ3();
  const { Z3 } = await init();
  if (timeoutMs > 0) {
    Z3.global_param_set("timeout", String(timeoutMs));
  }
  const cfg = Z3.mk_config();
  const ctx = Z3.mk_context(cfg);
  try {
    const out = await Z3.eval_smtlib2_string(ctx, input);
    process.stdout.write(out);
    if (!out.endsWith("\n")) process.stdout.write("\n");
    process.exit(0);
  } catch (e) {
    process.stderr.write("z3shim: " + String(e) + "\n");
    process.exit(1);
  }
});
