"""Fraction of seeded runs in which a good state's naive estimate misses the
aggregated parameter by more than the L1 certificate.

    python3 scripts/l1_certificate_soundness.py --runs 200 --n 100000
"""
import argparse
import math

import numpy as np

from slowmix.aggregation import aggregate_channel
from slowmix.decay import DecayProfile
from slowmix.estimator import estimate, l1_certificate
from slowmix.fixtures import md_fixture
from slowmix.simulator import SampleCounts, count_batch, simulate_batch


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--runs", type=int, default=200)
    ap.add_argument("--n", type=int, default=100_000)
    ap.add_argument("--gamma", type=float, default=0.3)
    ap.add_argument("--batch", type=int, default=25)
    args = ap.parse_args()

    ch = md_fixture()
    d = DecayProfile.exponential(args.gamma)
    k = max(1, int(math.log2(args.n) // 4))
    past = "1" * max(k, ch.depth)
    theta = aggregate_channel(ch, k).channel.theta
    bound = l1_certificate(args.n, k, d, ch.alphabet).bound
    worst, violated, sizes = 0.0, 0, []
    for start in range(0, args.runs, args.batch):
        seeds = list(range(start, min(start + args.batch, args.runs)))
        X, Y = simulate_batch(ch, args.n, past, seeds)
        for N in count_batch(X, Y, past, k, ch.alphabet):
            rep = estimate(SampleCounts(k, ch.alphabet, N), d, ch.input)
            good = list(rep.good.states)
            sizes.append(len(good))
            if good:
                err = np.abs(rep.estimates.theta - theta).sum(axis=2)[good]
                worst = max(worst, float(err.max()))
                violated += bool((err > bound).any())
    print(f"k = {k}, certificate = {bound:.4f}")
    print(f"good states per run: min {min(sizes)}, max {max(sizes)}")
    print(f"largest L1 error on a good state: {worst:.4f}")
    print(f"runs with a violation: {violated}/{args.runs}")


if __name__ == "__main__":
    main()
