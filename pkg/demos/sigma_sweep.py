"""Trace the price of fairness: Ncut as the balance requirement tightens.

Writes one CSV report row per sigma to stdout (or to the file given as
the first argument), using the same columns as ``fairncut partition``.

    python3 demos/sigma_sweep.py [out.csv]
"""

import sys
from fractions import Fraction

from fairncut.bench import SbmConfig, emit_report, run_fnm, sbm_generate

g, ga, _ = sbm_generate(SbmConfig(seed=0))
out = open(sys.argv[1], "wb") if len(sys.argv) > 1 else sys.stdout.buffer

header = True
for tenths in range(10, 0, -1):
    sigma = Fraction(tenths, 10)
    r = run_fnm(g, ga, 5, sigma, seed=0, dataset="sbm-0")
    lines = emit_report(r, "csv").splitlines(keepends=True)
    out.write(b"".join(lines if header else lines[1:]))
    out.flush()
    header = False
    print(f"sigma {float(sigma):.1f}: ncut {r.ncut:.4f} balance {r.balance:.4f}", file=sys.stderr)
