"""Compiled kernels against their numpy/LAPACK reference paths.

The path is fixed at import time, so each one runs in a fresh interpreter
(``ZEROLAP_NO_NUMBA`` unset, then set). Every kernel is timed after a
warm-up call (which absorbs JIT compilation), and the outputs of both paths
are compared.

    python benchmarks/bench_kernels.py [--repeat 5] [--n 20000]
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

WORKER = r"""
import json, sys, time
import numpy as np
from zerolap import kernels

n, repeat = int(sys.argv[1]), int(sys.argv[2])
rng = np.random.default_rng(0)
lower = rng.standard_normal(n - 1) + 0j
upper = lower.copy()
diag = 4.0 + rng.standard_normal(n) - 0.3j
b = rng.standard_normal(n) + 1j * rng.standard_normal(n)

def timed(fn):
    fn()  # warm-up / compile
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out

res = {"numba": kernels.USE_NUMBA}
t, x = timed(lambda: kernels.TridiagLU(lower, diag, upper).solve(b))
res["tridiag_factor_solve"] = (t, x[:8].real.tolist() + x[:8].imag.tolist())
t, y = timed(lambda: kernels.tridiag_matvec(lower, diag, upper, b))
res["tridiag_matvec"] = (t, y[:8].real.tolist())
t, g = timed(lambda: kernels.exterior_green(diag, 1.0))
res["exterior_green"] = (t, [g.real, g.imag])
t_eval = np.concatenate([[0.0], np.geomspace(1e-2, 200.0, 200)])
t, out = timed(lambda: kernels.dopri5_flow([5.0, 0.3], t_eval, (1.0, 1.0, 0.0, 0.0, 1.0))[0])
res["dopri5_flow"] = (t, out[-1].tolist())
print(json.dumps(res))
"""


def run_path(disable: bool, n: int, repeat: int) -> dict:
    env = dict(os.environ)
    env.pop("ZEROLAP_NO_NUMBA", None)
    if disable:
        env["ZEROLAP_NO_NUMBA"] = "1"
    proc = subprocess.run([sys.executable, "-c", WORKER, str(n), str(repeat)], env=env, capture_output=True,
                          text=True, check=True)
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=20000, help="tridiagonal size")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    t0 = time.perf_counter()
    fast = run_path(False, args.n, args.repeat)
    ref = run_path(True, args.n, args.repeat)
    if not fast["numba"]:
        print("numba unavailable: both runs used the reference path")
    print(f"{'kernel':<22}{'numba [s]':>12}{'reference [s]':>15}{'speedup':>10}{'max |diff|':>13}")
    worst = 0.0
    for key in ("tridiag_factor_solve", "tridiag_matvec", "exterior_green", "dopri5_flow"):
        tf, of = fast[key]
        tr, orf = ref[key]
        diff = float(np.max(np.abs(np.asarray(of) - np.asarray(orf))))
        scale = float(np.max(np.abs(orf))) or 1.0
        worst = max(worst, diff / scale)
        print(f"{key:<22}{tf:>12.2e}{tr:>15.2e}{tr / tf:>10.1f}{diff:>13.1e}")
    print(f"total wall time {time.perf_counter() - t0:.1f} s; worst relative disagreement {worst:.1e}")
    return 0 if worst < 1e-6 else 1


if __name__ == "__main__":
    sys.exit(main())
