"""Solve for class weights on the simplex with the primal-dual method and
compare against brute-force grid search."""

import argparse

import numpy as np

from reglab.core import LossConfig, PredictionBatch
from reglab.optim import ConstraintForm, DualState, Schedule, primal_dual_solve, simplex_grid, toy_gfl_objective


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--classes", type=int, default=3)
    ap.add_argument("--samples", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--eta", type=float, default=0.1)
    ap.add_argument("--constraint", choices=[c.value for c in ConstraintForm], default="sum")
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    batch = PredictionBatch.from_logits(rng.normal(0, 1.5, (args.samples, args.classes)), rng.integers(0, args.classes, args.samples))
    obj = toy_gfl_objective(batch, LossConfig())
    st = primal_dual_solve(
        obj, DualState.uniform(args.classes), Schedule(args.eta), max_iters=50_000, tol=1e-10, constraint=args.constraint
    )
    print(f"converged={st.converged} after {st.iterations} iterations, residual {st.residual:.2e}")
    print("alpha =", np.round(st.alpha, 6))
    print(f"objective {obj(np.zeros(0), st.alpha)[0]:.10f}")
    if args.classes <= 4:
        best = min(simplex_grid(args.classes, 0.01), key=lambda a: obj(np.zeros(0), a)[0])
        print(f"grid best {obj(np.zeros(0), best)[0]:.10f} at", best)


if __name__ == "__main__":
    main()
