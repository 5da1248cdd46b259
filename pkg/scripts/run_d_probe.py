#!/usr/bin/env python3
"""Dimension-scaling probe for the kinetic scheme.

Runs the coupled kinetic study at a fixed step in d = 1, 2, 4 and checks the
terminal error ratio error(d)/error(1) against the 3 d^{3/2} envelope.
"""

import json
from pathlib import Path

from sdelab.harness import ExperimentConfig, kinetic_d_probe

cfg = ExperimentConfig(model={"kind": "kinetic_double_well", "dim": 1},
                       variant="kinetic", deltas=(2.0 ** -6,), horizon=10.0,
                       n_paths=2000, epsilon=0.1, substeps=16, seed=7)
errs = kinetic_d_probe(cfg, dims=(1, 2, 4), delta=2.0 ** -6)

rows = []
for d, e in errs.items():
    ratio, bound = e / errs[1], 3.0 * d ** 1.5
    rows.append({"d": d, "error": e, "ratio": ratio, "bound": bound,
                 "within_bound": ratio <= bound})
    print(f"d={d} error={e:.6g} ratio={ratio:.3f} bound={bound:.3f}")

out = Path(__file__).parent / "out" / "d_probe"
out.mkdir(parents=True, exist_ok=True)
(out / "d_probe.json").write_text(json.dumps(rows, indent=2) + "\n")
ok = all(r["within_bound"] for r in rows)
print("[PASS]" if ok else "[FAIL]", "d-scaling within 3*d^1.5")
raise SystemExit(0 if ok else 2)
