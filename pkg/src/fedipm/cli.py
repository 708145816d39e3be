"""Command-line entry point: ``fedipm {solve, bench-sketch, compare-models, gen-problem}``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from .centralpath import HyperParams, Profile
from .erm import erm_objective, erm_to_conic
from .exceptions import FedIPMError, IterationCapExceeded, ProblemFormatError
from .fednet import compare_models, run_federated
from .newton import WeightMatrix, bilinear_error_report, two_sketch_error
from .problem import desk_lp, dump_problem, load_problem, model_gap_instance, random_box_lp
from .sketch import SketchKind, SketchSpec, make_sketch, sketch_specs
from .solver import Mode, solve, write_trace_csv

__all__ = ["main", "build_parser"]

logger = logging.getLogger("fedipm")

EXIT_OK = 0
EXIT_SOLVE_FAILED = 1
EXIT_BAD_INPUT = 2

_LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


class CliError(Exception):
    def __init__(self, payload: dict, code: int):
        super().__init__(payload.get("message", ""))
        self.payload = payload
        self.code = code


def _configure_logging() -> None:
    level = _LOG_LEVELS.get(os.environ.get("FEDIPM_LOG", "error").lower(), logging.ERROR)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


def _open_out(path: str | None):
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "w", newline=""), True


def _write_json(obj, path: str | None) -> None:
    fh, close = _open_out(path)
    try:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    finally:
        if close:
            fh.close()


def _load(path: str):
    try:
        return load_problem(path)
    except json.JSONDecodeError as exc:
        raise CliError(
            {"error": "malformed-json", "message": exc.msg, "path": path, "line": exc.lineno, "column": exc.colno},
            EXIT_BAD_INPUT,
        ) from exc
    except ProblemFormatError as exc:
        raise CliError({"error": "bad-problem", "message": str(exc), "path": path}, EXIT_BAD_INPUT) from exc
    except OSError as exc:
        raise CliError({"error": "io", "message": str(exc), "path": path}, EXIT_BAD_INPUT) from exc


def _specs(args, d: int):
    sizes = [args.b1, args.b2, args.b3, args.b4]
    kind = SketchKind.parse(args.sketch)
    if kind is SketchKind.IDENTITY:
        return sketch_specs(kind, d, d, seed=args.seed)
    if any(b is None for b in sizes):
        raise CliError(
            {"error": "bad-config", "message": "SKETCHED and FEDERATED modes need --b1 --b2 --b3 --b4"},
            EXIT_BAD_INPUT,
        )
    return sketch_specs(kind, sizes, d, seed=args.seed)


# -- solve --------------------------------------------------------------------


def cmd_solve(args) -> int:
    if not 0 < args.delta < 1:
        raise CliError({"error": "bad-config", "message": "--delta must lie in (0, 1)"}, EXIT_BAD_INPUT)
    problem = _load(args.problem)
    mode = Mode(args.mode.upper())
    m = len(problem.blocks) + 1
    params = HyperParams.for_profile(args.profile, m)
    specs = None if mode is Mode.EXACT else _specs(args, problem.d)
    try:
        if mode is Mode.FEDERATED:
            result = run_federated(
                problem, args.delta, params, specs, completion=args.completion,
                broadcast=args.broadcast, max_iter=args.max_iters,
            )
        else:
            result = solve(problem, args.delta, params, mode=mode, specs=specs, max_iter=args.max_iters)
    except IterationCapExceeded as exc:
        result = exc.result
        logger.error("%s", exc)
    except FedIPMError as exc:
        raise CliError({"error": type(exc).__name__, "message": str(exc)}, EXIT_SOLVE_FAILED) from exc
    if args.out_trace:
        with open(args.out_trace, "w", newline="") as fh:
            write_trace_csv(result.trace, fh)
    summary = {k: (float(v) if isinstance(v, np.floating) else v) for k, v in result.summary().items()}
    summary["mode"] = mode.value
    summary["profile"] = Profile(args.profile.upper()).value
    if result.ledger is None:
        summary.setdefault("control_words", 0)
        summary.setdefault("setup_words", 0)
    _write_json(summary, args.out_summary)
    return EXIT_OK if result.converged else EXIT_SOLVE_FAILED


# -- bench-sketch ---------------------------------------------------------------

BENCH_COLUMNS = (
    "b",
    "trials",
    "gap_q25",
    "gap_median",
    "gap_q75",
    "two_sketch_q25",
    "two_sketch_median",
    "two_sketch_q75",
)


def bench_sketch(d: int, b_list, trials: int, seed: int, kind: str = "AMS", n: int | None = None) -> list[dict]:
    """Per-``b`` quartiles of the bilinear gap ``|g^T P h - g^T P~ h|`` and the two-sketch error.

    The bilinear instance is a fixed ``d x n`` matrix with ``W = I`` and
    ``g = h``; the two-sketch error uses ``Bt = I`` in dimension ``n``.
    """
    kind = SketchKind.parse(kind)
    n = 2 * d if n is None else int(n)
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((d, n))
    g = rng.standard_normal(n)
    g /= np.linalg.norm(g)
    u = rng.standard_normal(n)
    v = rng.standard_normal(n)
    W = WeightMatrix.identity(n)
    rows = []
    for b in b_list:
        gaps, errs = [], []
        for t in range(trials):
            specs = sketch_specs(kind, b, d, seed=seed + t)
            gaps.append(bilinear_error_report(A, W, g, specs=specs).gap)
            rows_n = n if kind is SketchKind.IDENTITY else int(b)
            R = np.asarray(make_sketch(SketchSpec(kind, rows_n, n, seed + t, 1)))
            S = np.asarray(make_sketch(SketchSpec(kind, rows_n, n, seed + t, 2)))
            errs.append(two_sketch_error(u, v, np.eye(n), R, S)[0])
        gq = np.quantile(gaps, [0.25, 0.5, 0.75])
        eq = np.quantile(errs, [0.25, 0.5, 0.75])
        rows.append(dict(zip(BENCH_COLUMNS, [int(b), int(trials), *map(float, gq), *map(float, eq)])))
    return rows


def _int_list(text: str) -> list[int]:
    try:
        values = [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc
    if not values or any(v < 1 for v in values):
        raise argparse.ArgumentTypeError("sizes must be positive integers")
    return values


def cmd_bench_sketch(args) -> int:
    rows = bench_sketch(args.d, args.b_list, args.trials, args.seed, args.sketch, args.n)
    fh, close = _open_out(args.out)
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(BENCH_COLUMNS)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row.values()])
    finally:
        if close:
            fh.close()
    return EXIT_OK


# -- compare-models -------------------------------------------------------------


def cmd_compare_models(args) -> int:
    problem = model_gap_instance() if args.problem is None else _load(args.problem)
    partition = args.partition
    rows = compare_models(problem, delta=args.delta, partition=partition, b=args.b)
    if args.json:
        clean = [{k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in r.items()} for r in rows]
        _write_json(clean, args.out)
        return EXIT_OK
    fh, close = _open_out(args.out)
    try:
        fh.write(f"{'model':<10} {'correct':<8} {'words/round':>12} {'delta-vs-exact':>16}\n")
        for r in rows:
            correct = "-" if r["correct"] is None else ("yes" if r["correct"] else "no")
            norm = "-" if math.isnan(r["delta_norm"]) else f"{r['delta_norm']:.3e}"
            fh.write(f"{r['model']:<10} {correct:<8} {r['uplink_words']:>12d} {norm:>16}\n")
    finally:
        if close:
            fh.close()
    return EXIT_OK


# -- gen-problem ----------------------------------------------------------------


def gen_problem(kind: str, n: int = 2, d: int = 1, seed: int | None = None, clients: int = 1,
                samples: int = 2, features: int = 1, x_bound: float = 10.0):
    if kind == "boxlp":
        if seed is None:
            if (n, d) != (2, 1):
                raise ValueError("a seedless boxlp is only defined for n=2, d=1 (the canonical desk LP)")
            return desk_lp()
        return random_box_lp(n, d, seed, clients)
    if kind == "model-gap":
        return model_gap_instance()
    if kind == "least-squares-erm":
        rng = np.random.default_rng(0 if seed is None else seed)
        X = np.round(rng.uniform(-1.0, 1.0, size=(samples, features)), 3)
        y = np.round(rng.uniform(-1.0, 1.0, size=samples), 3)
        problem = erm_to_conic("squared", X, -y, x_bound=x_bound, clients=clients)
        coef = np.linalg.lstsq(X, y, rcond=None)[0]
        if np.all(np.abs(coef) < x_bound):
            problem.ref_opt = erm_objective(X, -y, coef)
        problem.seed = seed
        return problem
    raise ValueError(f"unknown problem kind {kind!r}")


def cmd_gen_problem(args) -> int:
    try:
        problem = gen_problem(args.kind, args.n, args.d, args.seed, args.clients, args.samples, args.features,
                              args.x_bound)
    except ValueError as exc:
        raise CliError({"error": "bad-config", "message": str(exc)}, EXIT_BAD_INPUT) from exc
    text = dump_problem(problem)
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)
    return EXIT_OK


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedipm", description="Federated sketched interior-point solver")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve a problem file and emit a trace and a summary")
    p.add_argument("--problem", required=True, help="problem JSON file")
    p.add_argument("--mode", default="EXACT", type=str.upper, choices=[m.value for m in Mode])
    p.add_argument("--profile", default="PRACTICAL", type=str.upper, choices=[pr.value for pr in Profile])
    p.add_argument("--sketch", default="AMS", help="AMS, SRHT or IDENTITY-DEBUG")
    for k in range(1, 5):
        p.add_argument(f"--b{k}", type=int, default=None, help=f"rows of sketch R{k}")
    p.add_argument("--delta", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--completion", choices=["client", "server"], default="client")
    p.add_argument("--broadcast", choices=["slice", "full"], default="slice")
    p.add_argument("--out-trace", default=None, help="trace CSV path")
    p.add_argument("--out-summary", default=None, help="summary JSON path (stdout when omitted)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench-sketch", help="sketch error quartiles per sketch size")
    p.add_argument("--d", type=int, default=8)
    p.add_argument("--n", type=int, default=None, help="columns of the bench instance (default 2d)")
    p.add_argument("--b-list", type=_int_list, default=[8, 32, 128])
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sketch", default="AMS")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bench_sketch)

    p = sub.add_parser("compare-models", help="baseline federations against the exact step")
    p.add_argument("--problem", default=None, help="problem JSON (default: the crafted two-client instance)")
    p.add_argument("--partition", type=_int_list, default=None, help="columns per client, in order")
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--b", type=int, default=4, help="sketch rows for the sketched-protocol row")
    p.add_argument("--json", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_compare_models)

    p = sub.add_parser("gen-problem", help="write a problem JSON file")
    p.add_argument("--kind", choices=["boxlp", "least-squares-erm", "model-gap"], default="boxlp")
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--clients", type=int, default=1)
    p.add_argument("--samples", type=int, default=2)
    p.add_argument("--features", type=int, default=1)
    p.add_argument("--x-bound", type=float, default=10.0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_gen_problem)
    return parser


def main(argv=None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        sys.stderr.write(json.dumps(exc.payload, sort_keys=True) + "\n")
        return exc.code
    except FedIPMError as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}, sort_keys=True) + "\n")
        return EXIT_SOLVE_FAILED


if __name__ == "__main__":
    sys.exit(main())
