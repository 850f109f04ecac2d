"""Finite-difference gradient check broken down by loss, gamma and variance."""

import argparse
from collections import defaultdict

from reglab.gradcheck import run_gradcheck


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=300)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--h", type=float, default=1e-5)
    args = ap.parse_args()

    records = run_gradcheck(args.trials, args.seed, args.h)
    worst = defaultdict(float)
    for r in records:
        key = (r.loss, r.gamma, r.sigma_sq)
        worst[key] = max(worst[key], r.rel_error)
    print(f"{'loss':<12}{'gamma':>6}{'sigma^2':>9}{'max rel err':>14}")
    for (loss, gamma, s2), err in sorted(worst.items()):
        print(f"{loss:<12}{gamma:>6.1f}{s2:>9.2f}{err:>14.2e}")
    print(f"\noverall max relative error: {max(worst.values()):.2e}")


if __name__ == "__main__":
    main()
