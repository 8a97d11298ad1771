#!/usr/bin/env python3
"""Smoke test for the `sentinel` extension module.

Exercises the full binding surface on deliberately coarse settings so the
whole script stays fast: model stepping, scenario simulation, gain
synthesis, the single observer with its error envelope, the subset bank,
and windowed isolation. Build the module first:

    pip install -e crates/py --no-build-isolation
"""

import json
import math
import sys

import sentinel

failures = []


def check(name, ok, detail=""):
    verdict = "ok" if ok else "FAIL"
    print(f"{name}: {verdict}" + (f" ({detail})" if detail else ""))
    if not ok:
        failures.append(name)


# Plant construction and stepping.
model = sentinel.Model.benchmark(0.1, 1.0)
check("model shape", (model.n, model.p, model.r) == (2, 4, 1))
x1 = model.step([1.0, 0.5], [0.2])
check("model step", len(x1) == 2 and all(math.isfinite(v) for v in x1))

# Scenario resolution and simulation.
scenario = sentinel.Scenario(json.dumps({
    "mode": "example1",
    "parameters": {"seeds": [1], "horizon": 200},
}))
trace = scenario.trace(1)
check("trace shape", len(trace.x) == 201 and len(trace.y[0]) == 4)
check("trace noise bounded", all(abs(v) <= 0.5 for row in trace.m for v in row))

# Gain synthesis on a coarse decay grid (fast; the default grid is finer).
design = sentinel.synthesize(model, [1, 2, 3, 4], grid_step=0.3, refine_step=0.1)
check(
    "synthesis certificate",
    0 < design.decay < 1 and design.gain > 0 and design.amplification >= 1,
    f"c3={design.c3:.2f} gain={design.gain:.4f}",
)
check("gain shapes", len(design.l) == 2 and len(design.l[0]) == 4 and len(design.k[0]) == 4)

none_design = sentinel.design_at(sentinel.Model.benchmark(0.1, 1.0), [4], 0.95)
check("infeasible decay reported as None", none_design is None or none_design.gain > 0)

# Observer run and the certificate envelope.
observer = sentinel.Observer(model, design)
estimates = observer.run(model, trace)
violation = sentinel.envelope_violation(design, estimates, trace)
check("observer envelope", violation <= 1e-6, f"worst violation {violation:.2e}")

# Subset bank under an attacked sensor, on the same coarse grid.
attacked = sentinel.Scenario(json.dumps({
    "mode": "example2",
    "parameters": {"seeds": [1], "horizon": 120},
}))
bank = sentinel.build_bank(model, attacked.q, grid_step=0.3, refine_step=0.1)
check("bank size", bank.candidate_count == 4 and len(bank.candidate_labels) == 4)

atk_trace = attacked.trace(1)
run = bank.run(model, atk_trace)
tail = sentinel.tail_error(run, atk_trace)
check("bank tail error", 0 < tail < 1.0, f"tail {tail:.4f}")

# Windowed isolation should accuse the attacked sensor in most windows.
report, _ = bank.isolate(model, atk_trace, 20)
accusations = [w.accused for w in report.windows()]
hit = sum(1 for a in accusations if a == attacked.attacked)
check(
    "isolation accuses the attacked sensor",
    hit >= len(accusations) - 1 and len(accusations) == 6,
    f"{hit}/{len(accusations)} windows",
)

if failures:
    print(f"\nsmoke test FAILED: {failures}")
    sys.exit(1)
print("\nsmoke test passed")
