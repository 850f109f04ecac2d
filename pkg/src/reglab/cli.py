"""``reglab`` command line: one executable, one subcommand per workflow.

Exit status: 0 on success, 1 on domain errors (one line on stderr), 2 on
usage errors. Every numeric option can also come from ``--config FILE``
(a JSON object keyed by option name); explicit flags win over the file.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import (
    REFERENCE_DETECTION_COUNTS,
    REFERENCE_SEGMENTATION_COUNTS,
    AnnotationCounts,
    ClassCatalog,
    ClassWeights,
    Dataset,
    LossConfig,
    PredictionBatch,
    SampleGeometry,
    _read_json,
    dumps_dataset,
    load_counts,
    load_dataset,
)
from .errors import ReglabError, SchemaError
from .gradcheck import LOSSES, run_gradcheck
from .losses import LossValue, gfl, joint_loss, reg_loss
from .metrics import format_metric_table, map_range
from .optim import (
    DualState,
    LassoProblem,
    ParameterVector,
    Schedule,
    primal_dual_solve,
    prox_gradient_step,
    quadratic_bowl,
    rsgd_step,
    sgd_step,
    sphere_linear,
    toy_gfl_objective,
)
from .rebalance import weights_for_scheme
from .synthgen import DetectorQuality, GeneratorConfig, generate_dataset
from .trainer import LossChoice, ToyModel, make_classification_task, train
from .uncertainty import VariationalState, reg_u_loss

SCHEMES = ("uniform", "inverse-frequency", "normalized")


def _write(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _dump(obj, out: str | None) -> None:
    _write(json.dumps(obj, indent=2, allow_nan=False) + "\n", out)


def _loss_config(args) -> LossConfig:
    return LossConfig(
        gamma=args.gamma,
        beta=args.beta,
        delta=args.delta,
        lambda_task=args.lambda_task,
        sigma_sq=args.sigma_sq,
        refinement_direction=args.direction,
        prob_floor=args.prob_floor,
        all_class_sum=args.all_class_sum,
    )


def _add_loss_flags(p):
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=0.0)
    p.add_argument("--lambda", dest="lambda_task", type=float, default=1.0)
    p.add_argument("--sigma-sq", dest="sigma_sq", type=float, default=0.0)
    p.add_argument("--direction", choices=("closer", "farther"), default="closer")
    p.add_argument("--prob-floor", dest="prob_floor", type=float, default=1e-7)
    p.add_argument("--all-class-sum", dest="all_class_sum", action="store_true")


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_data(args) -> int:
    catalog = ClassCatalog()
    if args.counts:
        counts = load_counts(args.counts)
    else:
        counts = AnnotationCounts(
            REFERENCE_DETECTION_COUNTS if args.task == "detection" else REFERENCE_SEGMENTATION_COUNTS
        )
    config = GeneratorConfig(
        counts=counts,
        scene_count=args.scenes,
        image_extent=tuple(args.extent),
        box_size_range=tuple(args.box_size),
        detector_quality=DetectorQuality(args.noise, args.confusion, args.miss, args.fp_rate),
        seed=args.seed,
        max_boxes_per_scene=args.max_boxes,
        task=args.task,
    )
    _write(dumps_dataset(generate_dataset(config, catalog)), args.out)
    return 0


def cmd_weights(args) -> int:
    counts = load_counts(args.counts)
    weights = weights_for_scheme(counts, args.scheme)
    _dump({"scheme": args.scheme, "total": counts.total, "alpha": weights.as_dict()}, args.out)
    return 0


def _batch_from_json(raw, where: str):
    if not isinstance(raw, dict) or "labels" not in raw:
        raise SchemaError(f"{where}: batch needs 'labels' and 'logits' or 'probs'")
    labels = np.asarray(raw["labels"], dtype=np.int64)
    if "logits" in raw:
        batch = PredictionBatch.from_logits(np.asarray(raw["logits"], dtype=float), labels)
    elif "probs" in raw:
        batch = PredictionBatch(np.asarray(raw["probs"], dtype=float), labels)
    else:
        raise SchemaError(f"{where}: batch needs 'logits' or 'probs'")
    n, c = batch.probs.shape
    geometry = SampleGeometry(np.asarray(raw["distances"], dtype=float)) if "distances" in raw else None
    alpha = raw.get("alpha")
    weights = ClassWeights(np.asarray(alpha, dtype=float)) if alpha is not None else ClassWeights.uniform(c)
    return batch, geometry, weights, raw


def _evaluate_batch(raw, config: LossConfig, uncertainty: bool, where: str) -> dict:
    batch, geometry, weights, raw = _batch_from_json(raw, where)
    out = {"n_samples": batch.n_samples, "gfl": gfl(batch, weights, config).value}
    if geometry is not None:
        out["reg"] = reg_loss(batch, geometry, weights, config).value
    if uncertainty:
        mu = np.asarray(raw.get("mu", batch.probs), dtype=float)
        var = np.broadcast_to(np.asarray(raw.get("sigma_sq", config.sigma_sq), dtype=float), mu.shape)
        out["reg_u"] = reg_u_loss(VariationalState(mu, var), batch.labels, geometry, weights, config).value
    return out


def cmd_loss_eval(args) -> int:
    config = _loss_config(args)
    det = _evaluate_batch(_read_json(args.batch), config, args.uncertainty, args.batch)
    result = {"detection": det}
    if args.seg_batch:
        seg = _evaluate_batch(_read_json(args.seg_batch), config, args.uncertainty, args.seg_batch)
        result["segmentation"] = seg
        # each task uses its refined loss when it carries geometry
        dk = "reg" if "reg" in det else "gfl"
        sk = "reg" if "reg" in seg else "gfl"
        total = joint_loss(LossValue(det[dk], np.zeros(0)), LossValue(seg[sk], np.zeros(0)), config)
        result["joint"] = {
            "components": {"detection": dk, "segmentation": sk},
            "lambda": config.lambda_task,
            "value": total.value,
        }
    _dump(result, args.out)
    return 0


def cmd_grad_check(args) -> int:
    records = run_gradcheck(args.trials, args.seed, args.h)
    per_loss = {name: max(r.rel_error for r in records if r.loss == name) for name in LOSSES}
    worst = max(per_loss.values())
    passed = worst <= args.tol
    _dump(
        {
            "trials": args.trials,
            "seed": args.seed,
            "h": args.h,
            "tolerance": args.tol,
            "max_rel_error": worst,
            "per_loss": per_loss,
            "passed": passed,
        },
        args.out,
    )
    return 0 if passed else 1


def _trace_row(t, loss, residual, norm):
    return {"t": t, "loss": float(loss), "residual": float(residual), "norm": float(norm)}


def cmd_optimize(args) -> int:
    rng = np.random.default_rng(args.seed)
    schedule = Schedule(args.eta0, args.decay)
    trace = []
    if args.algorithm == "sgd":
        params = ParameterVector(rng.normal(size=args.dim))
        for _ in range(args.iters):
            loss, grad = quadratic_bowl(params.theta)
            trace.append(_trace_row(params.t, loss, 0.0, np.linalg.norm(params.theta)))
            params = sgd_step(params, grad, schedule)
        theta = params.theta
    elif args.algorithm == "rsgd":
        target = rng.normal(size=args.dim)
        fn = sphere_linear(target)
        params = ParameterVector.on_sphere(rng.normal(size=args.dim))
        for _ in range(args.iters):
            loss, grad = fn(params.theta)
            trace.append(_trace_row(params.t, loss, 0.0, np.linalg.norm(params.theta)))
            params = rsgd_step(params, grad, schedule)
        theta = params.theta
    elif args.algorithm == "proxgrad":
        problem = LassoProblem.random(args.seed, d=args.dim, reg=args.reg)
        params = ParameterVector(np.zeros(args.dim))
        for _ in range(args.iters):
            _, grad = problem.smooth(params.theta)
            trace.append(_trace_row(params.t, problem.objective(params.theta), 0.0, np.abs(params.theta).sum()))
            params = prox_gradient_step(params, grad, schedule, problem.reg)
        theta = params.theta
    else:
        batch = PredictionBatch.from_logits(rng.normal(0.0, 1.5, (20, args.dim)), rng.integers(0, args.dim, 20))
        objective = toy_gfl_objective(batch, _loss_config(args))
        state = primal_dual_solve(objective, DualState.uniform(args.dim), schedule, args.iters, args.tol)
        trace = [_trace_row(r.t, r.objective, r.residual, np.linalg.norm(state.alpha)) for r in state.trace]
        theta = state.alpha
    _dump({"algorithm": args.algorithm, "seed": args.seed, "final": list(map(float, theta)), "trace": trace}, args.out)
    if args.csv:
        lines = ["t,loss,residual,norm"] + [f"{r['t']},{r['loss']!r},{r['residual']!r},{r['norm']!r}" for r in trace]
        Path(args.csv).write_text("\n".join(lines) + "\n")
    return 0


def cmd_train(args) -> int:
    proportions = [float(v) for v in args.proportions.split(",")]
    data = make_classification_task(proportions, args.n_train, args.n_test, args.dim, args.separation, args.seed)
    choice = LossChoice(args.loss)
    weights = None
    if choice is not LossChoice.CE:
        weights = weights_for_scheme(data[0].annotation_counts(), args.scheme)
    report = train(
        ToyModel.zeros(args.dim, len(proportions)),
        data,
        choice,
        weights,
        _loss_config(args),
        Schedule(args.eta0, args.decay),
        args.epochs,
        args.seed,
    )
    _dump(report.to_dict(), args.out)
    if args.csv:
        Path(args.csv).write_text(report.to_csv())
    return 0


def cmd_evaluate(args) -> int:
    dataset: Dataset = load_dataset(args.data)
    report = map_range(dataset.scenes, args.min_confidence, args.interpolated, args.verbose, args.threshold)
    as_dict = report.to_dict(dataset.class_names)
    _dump(as_dict, args.out)
    table = format_metric_table(as_dict)
    if args.table:
        Path(args.table).write_text(table + "\n")
    elif args.out:
        sys.stdout.write(table + "\n")
    return 0


def _train_table(report: dict) -> str:
    metrics = report["final_metrics"]
    lines = [f"loss: {report.get('loss_choice', '?')}", f"{'Class':<8}  {'Precision':>9}  {'Recall':>9}  {'F1-score':>9}"]
    for name, m in metrics.items():
        lines.append(f"{name:<8}  {100 * m['precision']:>9.2f}  {100 * m['recall']:>9.2f}  {100 * m['f1']:>9.2f}")
    if report["per_epoch"]:
        last = report["per_epoch"][-1]
        lines.append(f"final epoch {last['epoch']}: loss {last['loss']:.6f}")
    return "\n".join(lines)


def cmd_report(args) -> int:
    raw = _read_json(args.input)
    if isinstance(raw, dict) and "macro" in raw and "per_class" in raw:
        text = format_metric_table(raw)
    elif isinstance(raw, dict) and "final_metrics" in raw and "per_epoch" in raw:
        text = _train_table(raw)
    else:
        raise SchemaError(f"{args.input}: neither a metric report nor a training report")
    _write(text + "\n", args.out)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reglab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=func)
        p.add_argument("--config", help="JSON file of option defaults")
        p.add_argument("--out", help="output path (default: stdout)")
        return p

    p = add("gen-data", cmd_gen_data, "generate a synthetic imbalanced dataset")
    p.add_argument("--counts", help="counts JSON (default: the reference counts for --task)")
    p.add_argument("--task", choices=("detection", "segmentation"), default="detection")
    p.add_argument("--scenes", type=int, default=100)
    p.add_argument("--extent", type=float, nargs=2, default=[1280.0, 720.0], metavar=("W", "H"))
    p.add_argument("--box-size", dest="box_size", type=float, nargs=2, default=[16.0, 160.0], metavar=("MIN", "MAX"))
    p.add_argument("--noise", type=float, default=0.0, help="localization noise std")
    p.add_argument("--confusion", type=float, default=0.0)
    p.add_argument("--miss", type=float, default=0.0)
    p.add_argument("--fp-rate", dest="fp_rate", type=float, default=0.0)
    p.add_argument("--max-boxes", dest="max_boxes", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)

    p = add("weights", cmd_weights, "class weights from annotation counts")
    p.add_argument("--counts", required=True)
    p.add_argument("--scheme", choices=SCHEMES, default="normalized")

    p = add("loss-eval", cmd_loss_eval, "evaluate losses on a batch JSON")
    p.add_argument("--batch", required=True)
    p.add_argument("--seg-batch", dest="seg_batch")
    p.add_argument("--uncertainty", action="store_true", help="also evaluate the uncertainty-aware loss")
    _add_loss_flags(p)

    p = add("grad-check", cmd_grad_check, "finite-difference check of every analytic gradient")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-5)

    p = add("optimize", cmd_optimize, "run an optimizer on its toy problem")
    p.add_argument("--algorithm", choices=("sgd", "rsgd", "proxgrad", "primaldual"), required=True)
    p.add_argument("--eta0", type=float, default=0.1)
    p.add_argument("--decay", choices=("constant", "inverse-t"), default="constant")
    p.add_argument("--iters", type=int, default=1000)
    p.add_argument("--dim", type=int, default=5)
    p.add_argument("--reg", type=float, default=0.5, help="L1 strength for proxgrad")
    p.add_argument("--tol", type=float, default=1e-10, help="primal-dual stopping tolerance")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv", help="also write the trace as CSV")
    _add_loss_flags(p)

    p = add("train", cmd_train, "train the toy classifier")
    p.add_argument("--loss", choices=[c.value for c in LossChoice], default="ce")
    p.add_argument("--proportions", default="0.95,0.05")
    p.add_argument("--n-train", dest="n_train", type=int, default=2000)
    p.add_argument("--n-test", dest="n_test", type=int, default=2000)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--separation", type=float, default=2.0)
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--eta0", type=float, default=0.5)
    p.add_argument("--decay", choices=("constant", "inverse-t"), default="constant")
    p.add_argument("--scheme", choices=SCHEMES, default="inverse-frequency")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv", help="per-epoch per-class errors as CSV")
    _add_loss_flags(p)

    p = add("evaluate", cmd_evaluate, "detection metrics for a dataset JSON")
    p.add_argument("--data", required=True)
    p.add_argument("--table", help="write the plain-text table here")
    p.add_argument("--min-confidence", dest="min_confidence", type=float, default=None)
    p.add_argument("--threshold", type=float, default=0.5, help="IoU threshold for precision/recall/F1")
    p.add_argument("--interpolated", action="store_true", help="all-point interpolated AP")
    p.add_argument("--verbose", action="store_true", help="report greedy vs maximum TP counts")

    p = add("report", cmd_report, "render a metric or training report as a table")
    p.add_argument("--input", required=True)

    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config or not argv:
        return
    raw = _read_json(known.config)
    if not isinstance(raw, dict):
        raise SchemaError("--config must hold a JSON object")
    sub_action = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    sub = sub_action.choices.get(argv[0])
    if sub is not None:
        sub.set_defaults(**{k.replace("-", "_"): v for k, v in raw.items()})


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except ReglabError as exc:
        print(f"reglab: error: {exc}", file=sys.stderr)
        return 1
    if getattr(args, "func", None) is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        return args.func(args)
    except (ReglabError, ValueError) as exc:
        print(f"reglab: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
