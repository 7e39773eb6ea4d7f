"""How many Sinkhorn iterations a plan needs to reach a given accuracy.

For random cosine-like score matrices, compares ``sinkhorn`` at a growing
number of iterations against the same solver run far past convergence and
prints, per instance, the iterations needed to get within ``--tol``.

    python scripts/sinkhorn_convergence.py [--cases 50] [--tol 1e-8]
"""

import argparse

import numpy as np

from flowguide.ot_guidance import SinkhornConfig, sinkhorn


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cases", type=int, default=50)
    ap.add_argument("--tol", type=float, default=1e-8)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--reference-iters", type=int, default=1 << 18)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    needed = []
    for i in range(args.cases):
        k, b = int(rng.integers(1, 9)), int(rng.integers(1, 33))
        lam = float(rng.uniform(1.0, 50.0))
        s = rng.uniform(-1.0, 1.0, (k, b))
        ref = sinkhorn(s, SinkhornConfig(lam, args.reference_iters))
        n = 1
        while n < args.reference_iters and np.abs(sinkhorn(s, SinkhornConfig(lam, n)) - ref).max() > args.tol:
            n *= 2
        err500 = np.abs(sinkhorn(s, SinkhornConfig(lam, 500)) - ref).max()
        needed.append(n)
        print(f"{i:3d}  K={k} B={b:2d} lam={lam:5.1f}  err@500 {err500:.1e}  iters for tol <= {n}")
    needed = np.array(needed)
    print(f"instances needing more than 500 iterations: {(needed > 500).sum()}/{args.cases}")


if __name__ == "__main__":
    main()
