"""Monte Carlo view of the coupling on example 5: per-step match frequency
before agreement, coalescence times and divergence after coalescence.

    python3 scripts/coupling_observations.py --eps 0.2 --runs 200
"""
import argparse

import numpy as np

from slowmix.coupling import CoupledPair, coupled_run
from slowmix.decay import big_delta, coalescence_horizon, delta
from slowmix.estimator import eta, good_set_from
from slowmix.fixtures import example5, example5_decay


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--eps", type=float, default=0.2)
    ap.add_argument("--runs", type=int, default=200)
    ap.add_argument("--horizon", type=int, default=200)
    ap.add_argument("--n", type=int, default=100_000, help="sample size that fixes ell_n")
    ap.add_argument("--good", default="00,01,10,11")
    args = ap.parse_args()

    m = example5(args.eps)
    d = example5_decay(args.eps)
    good = good_set_from(args.good.split(","), 2, 2)
    ell = coalescence_horizon(d, args.n)
    names = good.names
    taus, tilde, apart, diverged = [], 0, 0, 0
    for seed in range(args.runs):
        s1, s2 = names[seed % len(names)], names[(seed // len(names)) % len(names)]
        rec = coupled_run(CoupledPair(m, good, "0" + s1, "1" + s2, ell=ell, seed=seed), args.horizon)
        gap = ~rec.agree_k[:-1]
        tilde += int(rec.tilde[1:][gap].sum())
        apart += int(gap.sum())
        if rec.tau is not None:
            taus.append(rec.tau)
            diverged += rec.divergences > 0
    print(f"good set {names}, ell_n = {ell}")
    print(f"eta = {eta(m.q, good):.4f}, floor eta (1 - delta_k) = {eta(m.q, good) * (1 - delta(d, 2)):.4f}")
    print(f"match frequency before agreement: {tilde / max(apart, 1):.4f} over {apart} steps")
    if taus:
        print(f"coalesced {len(taus)}/{args.runs}, mean tau {np.mean(taus):.2f}, max tau {max(taus)}")
        print(f"divergence after coalescence: {diverged / len(taus):.4f} (Delta_ell = {big_delta(d, ell):.2e})")


if __name__ == "__main__":
    main()
