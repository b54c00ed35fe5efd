"""Command-line entry points: run sweeps, verify invariants, solve fixed
points."""

import argparse
import json
import sys

import numpy as np

from .analysis import SingularSystemError, compute_A_b, contraction_condition, \
    fixed_point, mspbe
from .checks import verify_all
from .emphasis import EmphasisKind, EmphasisSpec, emphasis_abs_expected_td, \
    init_emphasis_state, long_run_count_inverse
from .harness import DEFAULT_ALPHA_GRID, DEFAULT_LAMBDA_GRID, \
    ExperimentConfig, aggregate_all, emit, resolve_task, run_experiment, \
    select_best
from .learners import Algorithm, AlgoConfig
from .mrp import load_environment


def parse_emphasis(text: str, epsilon_floor: float) -> EmphasisSpec:
    """Parse a compact emphasis spec: ``constant:2.0``, ``table:1,0.5,...``,
    ``count_inverse``, ``noise_prior`` or ``abs_expected_td``."""
    head, _, param = str(text).partition(":")
    kind = EmphasisKind(head.strip().lower())
    if kind is EmphasisKind.CONSTANT:
        value = float(param) if param else 1.0
        return EmphasisSpec(kind, constant=value, epsilon_floor=epsilon_floor)
    if kind is EmphasisKind.TABLE:
        if not param:
            raise ValueError("table emphasis needs comma-separated values")
        table = np.array([float(x) for x in param.split(",")])
        return EmphasisSpec(kind, table=table, epsilon_floor=epsilon_floor)
    return EmphasisSpec(kind, epsilon_floor=epsilon_floor)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dtd",
        description="Emphasis-weighted TD prediction: sweeps, verification "
                    "and exact fixed points.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate learning curves")
    run.add_argument("--task", required=True,
                     help="RW5_LEFT/MIDDLE/RIGHT, RW5_TABULAR/INVERTED/"
                          "DEPENDENT, BOYAN13, NOISY10[:level]")
    run.add_argument("--algo", nargs="+", required=True,
                     choices=[a.value for a in Algorithm])
    run.add_argument("--lambda", dest="lambdas", nargs="+", type=float,
                     default=list(DEFAULT_LAMBDA_GRID))
    run.add_argument("--alpha", nargs="+", type=float,
                     default=list(DEFAULT_ALPHA_GRID))
    run.add_argument("--emphasis", default="constant:1")
    run.add_argument("--epsilon-floor", type=float, default=1e-3)
    run.add_argument("--runs", type=int, default=50)
    run.add_argument("--steps", type=int, default=5000)
    run.add_argument("--eval-every", type=int, default=50)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--out", required=True)
    run.add_argument("--format", choices=["csv", "json"], default="csv")
    run.add_argument("--env-file", default=None,
                     help="JSON environment overriding the named task")
    run.add_argument("--aggregate", action="store_true",
                     help="emit per-step means and deviations instead of "
                          "raw curves")

    sweep = sub.add_parser("sweep", help="run an experiment config file")
    sweep.add_argument("--config", required=True)

    verify = sub.add_parser("verify", help="run the self-verification suite")
    verify.add_argument("--filter", default=None)
    verify.add_argument("--out", default=None)

    fp = sub.add_parser("fixed-point",
                        help="solve the expected-update fixed point")
    fp.add_argument("--task", required=True)
    fp.add_argument("--emphasis", default="constant:1")
    fp.add_argument("--epsilon-floor", type=float, default=1e-3)
    fp.add_argument("--lambda", dest="lam", type=float, required=True)
    fp.add_argument("--kappa", type=float, default=None)
    return parser


def _expand_cells(algos, lambdas, alphas, emphasis):
    cells = []
    for name in algos:
        for lam in lambdas:
            for alpha in alphas:
                cells.append(AlgoConfig(Algorithm(name), lam=lam, alpha=alpha,
                                        emphasis=emphasis))
    return cells


def cmd_run(args) -> int:
    emphasis = parse_emphasis(args.emphasis, args.epsilon_floor)
    config = ExperimentConfig(
        task=args.task,
        algorithms=_expand_cells(args.algo, args.lambdas, args.alpha,
                                 emphasis),
        runs=args.runs, steps=args.steps, eval_every=args.eval_every,
        base_seed=args.seed)
    environment = load_environment(args.env_file) if args.env_file else None
    records = run_experiment(config, environment=environment)
    if args.aggregate:
        emit(aggregate_all(records), args.out, fmt=args.format,
             kind="aggregate")
    else:
        emit(records, args.out, fmt=args.format, kind="curve")
    for key, best in sorted(select_best(records).items()):
        print(f"{key[0]} {key[1]}: best lambda={best.lam} alpha={best.alpha} "
              f"final_mspbe={best.score:.6f}")
    print(f"wrote {args.out}")
    return 0


def cmd_sweep(args) -> int:
    with open(args.config, "r", encoding="utf-8") as handle:
        spec = json.load(handle)
    cells = []
    for entry in spec["algorithms"]:
        emphasis_spec = entry.get("emphasis", {"kind": "constant"})
        eps = float(emphasis_spec.get("epsilon_floor", 1e-3))
        kind = EmphasisKind(emphasis_spec["kind"])
        if kind is EmphasisKind.TABLE:
            emphasis = EmphasisSpec(kind, table=np.array(
                emphasis_spec["table"], dtype=float), epsilon_floor=eps)
        elif kind is EmphasisKind.CONSTANT:
            emphasis = EmphasisSpec(
                kind, constant=float(emphasis_spec.get("constant", 1.0)),
                epsilon_floor=eps)
        else:
            emphasis = EmphasisSpec(kind, epsilon_floor=eps)
        lams = entry["lambda"]
        alphas = entry["alpha"]
        lams = lams if isinstance(lams, list) else [lams]
        alphas = alphas if isinstance(alphas, list) else [alphas]
        for lam in lams:
            for alpha in alphas:
                cells.append(AlgoConfig(Algorithm(entry["algorithm"]),
                                        lam=float(lam), alpha=float(alpha),
                                        emphasis=emphasis))
    config = ExperimentConfig(
        task=spec["task"], algorithms=cells, runs=int(spec["runs"]),
        steps=int(spec["steps"]), eval_every=int(spec["eval_every"]),
        base_seed=int(spec["base_seed"]))
    records = run_experiment(config)
    fmt = spec.get("format", "csv")
    if spec.get("aggregate", False):
        emit(aggregate_all(records), spec["out"], fmt=fmt, kind="aggregate")
    else:
        emit(records, spec["out"], fmt=fmt, kind="curve")
    print(f"wrote {spec['out']}")
    return 0


def cmd_verify(args) -> int:
    results = verify_all(args.filter)
    payload = [res.to_dict() for res in results]
    text = json.dumps(payload, indent=1, default=str)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            handle.write(text + "\n")
    else:
        print(text)
    n_pass = sum(res.passed for res in results)
    print(f"{n_pass}/{len(results)} checks passed", file=sys.stderr)
    return 0 if n_pass == len(results) else 1


def _resolve_fixed_emphasis(spec: EmphasisSpec, mrp, fm, lam):
    """Concrete emphasis vector for the analytic fixed point; adaptive
    emphasis is iterated to self-consistency."""
    if spec.kind is EmphasisKind.COUNT_INVERSE:
        return long_run_count_inverse(mrp, spec.epsilon_floor), \
            "long-run visitation limit"
    if spec.kind is EmphasisKind.ABS_EXPECTED_TD_ERROR:
        f = np.ones(mrp.n_states)
        for _ in range(500):
            theta = fixed_point(compute_A_b(mrp, fm, f, lam))
            nxt = emphasis_abs_expected_td(mrp, fm, theta, spec.epsilon_floor)
            if np.max(np.abs(nxt - f)) < 1e-12:
                return nxt, "self-consistent adaptive emphasis"
            f = nxt
        return f, "adaptive emphasis iteration hit its cap"
    return init_emphasis_state(spec, mrp).values, "fixed emphasis"


def cmd_fixed_point(args) -> int:
    mrp, fm = resolve_task(args.task)
    spec = parse_emphasis(args.emphasis, args.epsilon_floor)
    f, note = _resolve_fixed_emphasis(spec, mrp, fm, args.lam)
    try:
        system = compute_A_b(mrp, fm, f, args.lam)
        theta = fixed_point(system)
    except (SingularSystemError, ValueError) as exc:
        print(json.dumps({"error": str(exc)}))
        return 1
    report = contraction_condition(mrp, f, args.lam, kappa=args.kappa)
    payload = {
        "task": args.task,
        "lambda": args.lam,
        "emphasis": f.tolist(),
        "emphasis_note": note,
        "theta_star": theta.tolist(),
        "mspbe": mspbe(theta, mrp, fm),
        "residual": float(np.max(np.abs(system.A @ theta + system.b))),
        "contraction": {
            "condition": report.condition,
            "holds": report.holds,
            "margin": report.margin,
            "lhs": report.lhs,
            "rhs": report.rhs,
            "terms": report.terms,
            "note": report.note,
        },
    }
    print(json.dumps(payload, indent=1, default=str))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"run": cmd_run, "sweep": cmd_sweep, "verify": cmd_verify,
                "fixed-point": cmd_fixed_point}
    try:
        return handlers[args.command](args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
