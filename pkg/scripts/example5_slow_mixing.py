"""Slow mixing on example 5: state frequencies stay far from the stationary
law while ratios within the good set settle quickly.

    python3 scripts/example5_slow_mixing.py --eps 1e-9 --n 100000
"""
import argparse
import json

from slowmix.channel import channel_from_process
from slowmix.estimator import estimate
from slowmix.fixtures import example5, example5_decay, example5_stationary
from slowmix.simulator import count, simulate


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--eps", type=float, default=1e-9)
    ap.add_argument("--n", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    ch = channel_from_process(example5(args.eps))
    c = count(simulate(ch, args.n, "11", seed=args.seed), 2)
    rep = estimate(c, example5_decay(args.eps), ch.input)
    mu = example5_stationary(args.eps)
    limit = {"11": 0.2, "01": 0.4, "10": 0.4}
    print(json.dumps({
        "good_states": rep.good.names,
        "ratios": rep.ratios,
        "ratios_of_the_eps_zero_chain": limit,
        "frequency_of_ones": float(c.N[:, :, 1].sum()) / args.n,
        "stationary_mass_of_one": mu["11"] + mu["01"],
        "eta": rep.eta,
        "notes": list(rep.notes),
    }, indent=2))


if __name__ == "__main__":
    main()
