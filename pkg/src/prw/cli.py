"""Command-line harness: general distance computation plus the synthetic
experiment grids (hypercube sweeps, Wishart noise robustness, timing and
learning-rate robustness), with CSV/JSON persistence."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .exact_ot import exact_ot_plan
from .measures import (
    DiscreteMeasure,
    add_noise,
    cost_matrix,
    fragmented_hypercube,
    load_measure,
    save_measure,
    wishart_gaussian_pair,
)
from .solvers import SolveResult, SolverConfig, solve, subspace_error
from .stiefel import StiefelPoint

EXIT_OK = 0
EXIT_NONCONVERGED = 1
EXIT_INPUT_ERROR = 2

RESULT_COLUMNS = [
    "experiment",
    "algorithm",
    "n",
    "d",
    "k",
    "k_star",
    "sigma",
    "gamma",
    "eta",
    "seed",
    "prw_sq_value",
    "w2_sq",
    "ratio",
    "rel_error",
    "subspace_error",
    "wall_time_seconds",
    "outer_iterations",
    "termination",
]


def derive_seed(base_seed: int, grid_index: int, repetition: int) -> int:
    """Seed scheme: base + 10007 * grid point + repetition (documented contract)."""
    return base_seed + 10007 * grid_index + repetition


@dataclass(frozen=True)
class RunTask:
    experiment: str
    grid_index: int
    repetition: int
    algorithm: str
    n: int
    d: int
    k: int
    k_star: int
    sigma: float | None
    gamma: float | None
    eta: float | None
    base_seed: int
    tol_outer: float = 1e-3
    max_outer_iter: int = 2000
    data_kind: str = "hypercube"  # hypercube | wishart
    compute_w2: bool = False
    compute_subspace: bool = False
    rel_error_target: float | None = None
    trace: bool = False


def _true_subspace(d: int, k_star: int) -> StiefelPoint:
    basis = np.zeros((d, k_star))
    basis[:k_star, :] = np.eye(k_star)
    return StiefelPoint(basis)


def run_task(task: RunTask) -> dict:
    """One grid point x repetition; returns a ResultRow dict."""
    seed = derive_seed(task.base_seed, task.grid_index, task.repetition)
    if task.data_kind == "hypercube":
        mu, nu = fragmented_hypercube(task.n, task.d, task.k_star, seed)
    else:
        mu, nu = wishart_gaussian_pair(task.n, task.d, task.k_star, seed)
    if task.sigma:
        mu = add_noise(mu, task.sigma, seed + 1)
        nu = add_noise(nu, task.sigma, seed + 2)
    config = SolverConfig(
        algorithm=task.algorithm,
        k=task.k,
        eta=task.eta,
        gamma=task.gamma,
        tol_outer=task.tol_outer,
        max_outer_iter=task.max_outer_iter,
        seed=seed,
    )
    t0 = time.perf_counter()
    result = solve(mu, nu, config)
    wall = time.perf_counter() - t0

    row = {
        "experiment": task.experiment,
        "algorithm": task.algorithm,
        "n": task.n,
        "d": task.d,
        "k": task.k,
        "k_star": task.k_star,
        "sigma": task.sigma if task.sigma is not None else "",
        "gamma": task.gamma if task.gamma is not None else "",
        "eta": task.eta if task.eta is not None else "",
        "seed": seed,
        "prw_sq_value": result.prw_sq_value,
        "w2_sq": "",
        "ratio": "",
        "rel_error": "",
        "subspace_error": "",
        "wall_time_seconds": wall,
        "outer_iterations": len(result.history),
        "termination": result.termination,
    }
    if task.compute_w2:
        ctx = cost_matrix(mu, nu)
        _, w2 = exact_ot_plan(ctx.cost, mu.weights, nu.weights)
        row["w2_sq"] = w2
        if w2 > 0:
            row["ratio"] = result.prw_sq_value / w2
    if task.rel_error_target is not None and task.rel_error_target > 0:
        row["rel_error"] = (
            abs(result.prw_sq_value - task.rel_error_target) / task.rel_error_target
        )
    if task.compute_subspace:
        row["subspace_error"] = subspace_error(
            result.U, _true_subspace(task.d, task.k_star)
        )
    if task.trace:
        row["_history"] = result.history
    return row


def _pool_size(args) -> int:
    env = os.environ.get("PRW_NUM_WORKERS")
    if getattr(args, "workers", None):
        return args.workers
    if env:
        return int(env)
    return os.cpu_count() or 1


def run_tasks(tasks: list[RunTask], workers: int) -> list[dict]:
    """Run the grid, merging results in (grid index, repetition) order."""
    if workers <= 1 or len(tasks) <= 1:
        rows = [run_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run_task, tasks))
    order = sorted(
        range(len(tasks)), key=lambda i: (tasks[i].grid_index, tasks[i].repetition)
    )
    return [rows[i] for i in order]


def write_rows(rows: list[dict], path: str, trace_path: str | None = None) -> None:
    if trace_path:
        with open(trace_path, "w") as handle:
            for row in rows:
                history = row.get("_history", [])
                record = {k: v for k, v in row.items() if k != "_history"}
                record["history"] = history
                handle.write(json.dumps(record) + "\n")
    with open(path, "w", newline="") as handle:
        writer = csv.DictWriter(
            handle, fieldnames=RESULT_COLUMNS, extrasaction="ignore"
        )
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def _error(kind: str, message: str) -> int:
    print(json.dumps({"error": {"kind": kind, "message": message}}), file=sys.stderr)
    return EXIT_INPUT_ERROR


def _load_schema():
    import importlib.resources as resources

    with resources.files("prw").joinpath("schemas/result.schema.json").open() as f:
        return json.load(f)


def cmd_compute(args) -> int:
    try:
        mu = load_measure(args.mu, args.format)
        nu = load_measure(args.nu, args.format)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        return _error("io", str(exc))
    try:
        config = SolverConfig(
            algorithm=args.algorithm,
            k=args.k,
            eta=args.eta,
            gamma=args.gamma,
            retraction=args.retraction,
            tol_outer=args.tol_outer,
            max_outer_iter=args.max_outer_iter,
            seed=args.seed,
            n_restarts=args.restarts,
        )
    except ValueError as exc:
        return _error("config", str(exc))
    t0 = time.perf_counter()
    result = solve(mu, nu, config)
    wall = time.perf_counter() - t0
    summary = {
        "prw_sq_value": result.prw_sq_value,
        "k": config.k,
        "algorithm": config.algorithm,
        "outer_iterations": len(result.history),
        "wall_time_seconds": wall,
        "termination": result.termination,
        "seed": config.seed,
    }
    text = json.dumps(summary, indent=2)
    print(text)
    if args.out:
        with open(args.out, "w") as handle:
            handle.write(text + "\n")
    if args.trace:
        with open(args.trace, "w") as handle:
            for record in result.history:
                handle.write(json.dumps(record) + "\n")
    return EXIT_OK if result.termination == "tol_reached" else EXIT_NONCONVERGED


def cmd_generate(args) -> int:
    try:
        if args.kind == "hypercube":
            mu, nu = fragmented_hypercube(args.n, args.d, args.k_star, args.seed)
        elif args.kind == "gaussian":
            mu, nu = wishart_gaussian_pair(args.n, args.d, args.k_star, args.seed)
        else:
            return _error("config", f"unknown kind {args.kind!r}")
        if args.sigma:
            mu = add_noise(mu, args.sigma, args.seed + 1)
            nu = add_noise(nu, args.sigma, args.seed + 2)
        save_measure(mu, args.out_mu)
        save_measure(nu, args.out_nu)
    except (OSError, ValueError) as exc:
        return _error("io", str(exc))
    return EXIT_OK


def _finish(rows, args) -> int:
    write_rows(rows, args.out, getattr(args, "trace", None))
    bad = sum(1 for row in rows if row["termination"] != "tol_reached")
    if bad:
        print(f"{bad}/{len(rows)} runs did not reach tolerance", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_hypercube(args) -> int:
    ks = args.k_grid or [args.k_star]
    ns = args.n_grid or [args.n]
    tasks = []
    grid_index = 0
    for n in ns:
        for k in ks:
            for rep in range(args.reps):
                tasks.append(
                    RunTask(
                        experiment="hypercube",
                        grid_index=grid_index,
                        repetition=rep,
                        algorithm=args.algorithm,
                        n=n,
                        d=args.d,
                        k=k,
                        k_star=args.k_star,
                        sigma=None,
                        gamma=args.gamma,
                        eta=args.eta,
                        base_seed=args.seed,
                        compute_subspace=(k == args.k_star),
                        rel_error_target=4.0 * args.k_star,
                        trace=bool(getattr(args, "trace", None)),
                    )
                )
            grid_index += 1
    rows = run_tasks(tasks, _pool_size(args))
    return _finish(rows, args)


def cmd_gaussian_noise(args) -> int:
    tasks = []
    grid_index = 0
    for sigma in args.sigma_grid:
        for k in args.k_grid:
            for rep in range(args.reps):
                tasks.append(
                    RunTask(
                        experiment="gaussian_noise",
                        grid_index=grid_index,
                        repetition=rep,
                        algorithm=args.algorithm,
                        n=args.n,
                        d=args.d,
                        k=k,
                        k_star=args.k_star,
                        sigma=sigma or None,
                        gamma=args.gamma,
                        eta=args.eta,
                        base_seed=args.seed,
                        data_kind="wishart",
                        compute_w2=True,
                        trace=bool(getattr(args, "trace", None)),
                    )
                )
            grid_index += 1
    rows = run_tasks(tasks, _pool_size(args))
    return _finish(rows, args)


def cmd_timing(args) -> int:
    algorithms = args.algorithms or ["rgas", "ragas"]
    gammas = args.gamma_grid or [args.gamma if args.gamma is not None else 0.01]
    tasks = []
    grid_index = 0
    for algorithm in algorithms:
        for gamma in gammas:
            for d in args.d_grid:
                for rep in range(args.reps):
                    tasks.append(
                        RunTask(
                            experiment="timing",
                            grid_index=grid_index,
                            repetition=rep,
                            algorithm=algorithm,
                            n=args.n,
                            d=d,
                            k=args.k,
                            k_star=args.k_star,
                            sigma=None,
                            gamma=gamma,
                            eta=args.eta,
                            base_seed=args.seed,
                            tol_outer=args.tol_outer,
                            trace=bool(getattr(args, "trace", None)),
                        )
                    )
                grid_index += 1
    rows = run_tasks(tasks, _pool_size(args))
    return _finish(rows, args)


def _add_common(p, with_algorithm=True):
    if with_algorithm:
        p.add_argument("--algorithm", default="rgas", choices=["rgas", "ragas", "rsgan"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--trace", default=None, help="write per-run iterate history JSONL")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="prw", description="Projection robust Wasserstein distances"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compute", help="distance between two measure files")
    p.add_argument("--mu", required=True)
    p.add_argument("--nu", required=True)
    p.add_argument("--format", default="csv", choices=["csv", "jsonl"])
    p.add_argument("--algorithm", default="rgas", choices=["rgas", "ragas", "rsgan"])
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--retraction", default="qr")
    p.add_argument("--tol-outer", type=float, default=1e-3)
    p.add_argument("--max-outer-iter", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=1)
    p.add_argument("--out", default=None)
    p.add_argument("--trace", default=None)
    p.set_defaults(func=cmd_compute)

    p = sub.add_parser("generate", help="write synthetic measure files")
    p.add_argument("--kind", required=True, choices=["hypercube", "gaussian"])
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--d", type=int, default=30)
    p.add_argument("--k-star", type=int, default=2)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-mu", required=True)
    p.add_argument("--out-nu", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("hypercube", help="fragmented-hypercube k/n sweeps")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--n-grid", type=int, nargs="*", default=None)
    p.add_argument("--d", type=int, default=30)
    p.add_argument("--k-star", type=int, default=2)
    p.add_argument("--k-grid", type=int, nargs="*", default=None)
    p.add_argument("--reps", type=int, default=20)
    _add_common(p)
    p.set_defaults(func=cmd_hypercube)

    p = sub.add_parser("gaussian-noise", help="Wishart pairs, PRW/W2 ratios")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--d", type=int, default=20)
    p.add_argument("--k-star", type=int, default=5)
    p.add_argument("--k-grid", type=int, nargs="*", default=[2, 4, 6, 8, 10])
    p.add_argument("--sigma-grid", type=float, nargs="*", default=[0.0, 1.0])
    p.add_argument("--reps", type=int, default=20)
    _add_common(p)
    p.set_defaults(func=cmd_gaussian_noise)

    p = sub.add_parser("timing", help="wall-time scaling over dimension")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--d-grid", type=int, nargs="*", default=[25, 50, 100, 250, 500])
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--k-star", type=int, default=2)
    p.add_argument("--tol-outer", type=float, default=1e-3)
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--algorithms", nargs="*", default=None, choices=["rgas", "ragas", "rsgan"])
    p.add_argument("--gamma-grid", type=float, nargs="*", default=None)
    _add_common(p)
    p.set_defaults(func=cmd_timing)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        return _error("io" if isinstance(exc, OSError) else "config", str(exc))


if __name__ == "__main__":
    sys.exit(main())
