"""Wall-clock comparison of the compiled and numpy march backends.

    python benchmarks/bench_goursat.py [--deltas 1/64,1/128,1/256] [--repeat 3] [--json out.json]

Both backends solve the same cusp-forming problem; the table reports the
best-of-N time per backend, the speed-up and the largest absolute
difference between the two solved bands.
"""
import argparse
import json
import math
import sys
import time
from fractions import Fraction

import numpy as np

from varwave import goursat
from varwave.coeffx import Bounds, CoefficientSet
from varwave.initdata import InitialData, boundary_gamma0, s_grid


def problem(delta):
    cs = CoefficientSet.from_text("1", "0", "sqrt(2 + sin(u))", Bounds(1, 1, 0, 1, math.sqrt(3)))
    d = InitialData.from_text("0.8*tanh(x/0.1)", "0", 1.0)
    T = 1.6
    return cs, boundary_gamma0(cs, d, s_grid(cs, d.L, T, delta)), T


def best_time(fn, repeat):
    best, out = math.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--deltas", default="1/64,1/128,1/256")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json")
    args = ap.parse_args(argv)
    if goursat._kernel is None:
        print("compiled backend not built; reinstall without VARWAVE_NO_EXT", file=sys.stderr)
        return 1
    rows = []
    print(f"{'delta':>10} {'nodes':>10} {'compiled s':>11} {'numpy s':>9} {'speed-up':>9} {'max |diff|':>11}")
    for tok in args.deltas.split(","):
        delta = float(Fraction(tok))
        cs, bd, T = problem(delta)
        tc, sc = best_time(lambda: goursat.solve(bd, cs, t_stop=T, backend="compiled"), args.repeat)
        tn, sn = best_time(lambda: goursat.solve(bd, cs, t_stop=T, backend="numpy"), args.repeat)
        r = min(sc.rows, sn.rows)
        diff = float(np.nanmax(np.abs(sc.F[:, :r] - sn.F[:, :r])))
        nodes = int(sc.mask.sum())
        rows.append({"delta": delta, "nodes": nodes, "compiled_s": tc, "numpy_s": tn, "speedup": tn / tc,
                     "max_abs_diff": diff})
        print(f"{delta:>10.6g} {nodes:>10d} {tc:>11.3f} {tn:>9.3f} {tn / tc:>9.2f} {diff:>11.2e}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)
            fh.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
