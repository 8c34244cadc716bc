"""Compare the L0 path solver with exhaustive best-subset search on random
instances and report the relative training-loss gap and timing.

    python3 scripts/solver_vs_exhaustive.py --instances 50 --p 12 --k 4
"""

import argparse
import time

import numpy as np
from scipy.special import expit

from stabtune.l0logreg import Dataset, fit_l0_exhaustive, fit_l0_path


def instance(n, p, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, p))
    beta = np.zeros(p)
    beta[rng.choice(p, size=min(3, p), replace=False)] = rng.normal(0, 1.5, min(3, p))
    y = (rng.random(n) < expit(x @ beta)).astype(int)
    return Dataset(x, y)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--instances", type=int, default=30)
    ap.add_argument("--n", type=int, default=80)
    ap.add_argument("--p", type=int, default=10)
    ap.add_argument("--k", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    gaps = np.zeros((args.instances, args.k + 1))
    t_path = t_exact = 0.0
    for i in range(args.instances):
        data = instance(args.n, args.p, args.seed + i)
        t = time.perf_counter()
        path = fit_l0_path(data, args.k)
        t_path += time.perf_counter() - t
        for k in range(args.k + 1):
            t = time.perf_counter()
            exact = fit_l0_exhaustive(data, k)
            t_exact += time.perf_counter() - t
            gaps[i, k] = (path[k].loss - exact.loss) / abs(exact.loss)
    print(f"{'k':>3}{'max gap':>12}{'misses':>8}")
    for k in range(args.k + 1):
        print(f"{k:>3}{gaps[:, k].max():>12.2e}{int((gaps[:, k] > 1e-8).sum()):>8}")
    print(f"path solver {t_path:.2f} s, exhaustive {t_exact:.2f} s")


if __name__ == "__main__":
    main()
