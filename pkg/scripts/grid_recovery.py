"""Recovery check over a 3x3x3 grid of planted parameters.

    python scripts/grid_recovery.py [--passes 256] [--seed 0]
"""
import argparse
import itertools
import time

import numpy as np

from ptelicit.estimation import fit
from ptelicit.pt_core import PTParams

from calibrate_recovery import simulate_table

SIGMAS = np.linspace(0.3, 1.0, 3)
LAMBDAS = np.linspace(0.5, 3.0, 3)
GAMMAS = np.linspace(0.5, 1.5, 3)
TOL = np.array([0.05, 0.35, 0.10])


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--passes", type=int, default=256)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    t0 = time.time()
    worst = np.zeros(3)
    bad = 0
    for i, (s, l, g) in enumerate(itertools.product(SIGMAS, LAMBDAS, GAMMAS)):
        truth = PTParams(s, l, g)
        rep = fit(simulate_table(truth, args.passes, args.seed * 1000 + i))
        err = np.abs(rep.params.as_array() - truth.as_array())
        worst = np.maximum(worst, err / TOL)
        ok = bool(np.all(err <= TOL)) and not any(rep.boundary_flags.values())
        bad += not ok
        print(f"{'ok ' if ok else 'BAD'} truth ({s:.3f}, {l:.3f}, {g:.3f})  "
              f"est {np.round(rep.params.as_array(), 3)}  err/tol {np.round(err / TOL, 3)}")
    print(f"\n{bad} failures; worst err/tol per param {np.round(worst, 3)}; {time.time() - t0:.1f}s")


if __name__ == "__main__":
    main()
