"""Time the compiled criterion kernel against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

The workload matches one PSO iteration on the two-group Emax problem:
60 particles, 25 prior atoms, 6 support slots, 4 parameters. A full
optimize() call is timed under each backend as well.
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from doseopt import _kernels_py
from doseopt.kernels import DET_FLOOR, REL_TOL

try:
    from doseopt import _kernels as _compiled
except ImportError:
    _compiled = None

_OPTIMIZE_SNIPPET = """
import time
from doseopt import DiscretePrior, ParameterStructure, PsoConfig, optimize, BACKEND
s = ParameterStructure.common_location_scale("emax", [1.0, 1.0], [1.0, 1.0])
prior = s.full_prior([DiscretePrior.uniform([0.2, 0.275, 0.35, 0.425, 0.5]),
                      DiscretePrior.uniform([0.6, 0.675, 0.75, 0.825, 0.9])])
t = time.perf_counter()
res = optimize(s, prior, PsoConfig(seed=1))
print(BACKEND, time.perf_counter() - t, repr(res.value))
"""


def _workload(rng, P=60, A=25, K=6, m=4):
    G = rng.normal(size=(P, A, K, m))
    W = rng.dirichlet(np.ones(K), size=P)
    probs = np.full(A, 1.0 / A)
    return G, W, probs


def _optimize_under(pure: bool):
    env = dict(os.environ)
    if pure:
        env["DOSEOPT_PURE_PYTHON"] = "1"
    else:
        env.pop("DOSEOPT_PURE_PYTHON", None)
    out = subprocess.run([sys.executable, "-c", _OPTIMIZE_SNIPPET], env=env,
                         capture_output=True, text=True, check=True).stdout.split()
    return out[0], float(out[1]), float(out[2])


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--skip-optimize", action="store_true")
    args = ap.parse_args()

    G, W, probs = _workload(np.random.default_rng(0))
    py = lambda: _kernels_py.batch_criterion(G, W, probs, REL_TOL, DET_FLOOR)
    t_py = min(timeit.repeat(py, number=args.repeat, repeat=3)) / args.repeat
    print(f"batch_criterion  numpy   {t_py * 1e3:8.3f} ms/call")
    if _compiled is None:
        print("compiled extension not built; nothing to compare")
        return
    cy = lambda: _compiled.batch_criterion(G, W, probs, REL_TOL, DET_FLOOR)
    t_cy = min(timeit.repeat(cy, number=args.repeat, repeat=3)) / args.repeat
    diff = np.max(np.abs(py() - cy()))
    print(f"batch_criterion  cython  {t_cy * 1e3:8.3f} ms/call   "
          f"speedup {t_py / t_cy:5.1f}x   max |diff| {diff:.2e}")

    if not args.skip_optimize:
        for pure in (False, True):
            backend, secs, value = _optimize_under(pure)
            print(f"optimize (seed 1) {backend:<7} {secs:7.2f} s   Phi = {value:.12f}")


if __name__ == "__main__":
    main()
