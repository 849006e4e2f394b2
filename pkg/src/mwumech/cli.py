"""Command-line front end: `mwumech <command> [options]`.

Exit codes: 0 when every invariant flag holds, 1 when one fails (or a
library invariant trips), 2 on bad input.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from .audit import DEFAULT_GRID, audit_truthfulness
from .auction import INSTANCE_KINDS, AuctionInstance, ExactVerifier, GreedyVerifier, generate_instance, make_verifier
from .core import CapacityError, DimensionError, FractionalPoint, MwuError, SeededRng
from .covering import explicit_covering_problem, iteration_bound, solution_vector, solve_covering
from .decomposition import call_bound, convex_decompose, size_bound
from .mechanism import MechanismParams, run_mechanism
from .packing import ExactWelfareSolver, explicit_packing_problem, solve_packing
from .report import dumps, rows_to_csv

log = logging.getLogger("mwumech")

LOG_LEVELS = {"off": None, "info": logging.INFO, "trace": logging.DEBUG}


class InputError(Exception):
    """Bad user input; maps to exit code 2."""


def configure_logging() -> None:
    level_name = os.environ.get("MWUMECH_LOG", "off").strip().lower() or "off"
    if level_name not in LOG_LEVELS:
        raise InputError(f"MWUMECH_LOG must be one of {sorted(LOG_LEVELS)}, got {level_name!r}")
    root = logging.getLogger("mwumech")
    for h in list(root.handlers):
        root.removeHandler(h)
    level = LOG_LEVELS[level_name]
    if level is None:
        root.setLevel(logging.CRITICAL + 1)
        return
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root.addHandler(handler)
    root.setLevel(level)


def load_json(path: str | None) -> dict:
    if path is None:
        raise InputError("--input is required")
    try:
        text = sys.stdin.read() if path == "-" else Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise InputError(f"{path}: expected a JSON object at the top level")
    return data


def _matrix(data: dict) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    try:
        m, n = int(data["m"]), int(data["n"])
        A = np.asarray(data["A"], dtype=float).reshape(m, n)
        b = np.asarray(data["b"], dtype=float)
        c = np.asarray(data["c"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"matrix instance needs m, n, A (row-major), b, c: {exc}") from exc
    if b.shape != (m,) or c.shape != (n,):
        raise InputError("b must have m entries and c must have n entries")
    if np.any(A < 0) or np.any(b <= 0) or np.any(c <= 0):
        raise InputError("A must be non-negative, b and c positive")
    return A, b, c


def _instance(data: dict) -> AuctionInstance:
    try:
        return AuctionInstance.from_json(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"invalid auction instance: {exc}") from exc


def _epsilon(args, data: dict, key: str = "epsilon", default: float = 0.25) -> float:
    eps = getattr(args, key, None)
    if eps is None:
        eps = data.get(key, default)
    eps = float(eps)
    if not 0 < eps <= 0.5:
        raise InputError(f"{key} must lie in (0, 1/2], got {eps}")
    return eps


# -- commands ---------------------------------------------------------------


def cmd_solve_cover(args) -> dict:
    data = load_json(args.input)
    A, b, c = _matrix(data)
    eps = _epsilon(args, data)
    kappa = float(data.get("kappa", 1.0))
    sol = solve_covering(explicit_covering_problem(A, b, c, kappa), eps, kappa)
    x = solution_vector(sol, A.shape[1])
    m = A.shape[0]
    row_cover = A @ x / b
    return {
        "command": "solve-cover",
        "config": {"epsilon": eps, "kappa": kappa, "m": m, "n": A.shape[1]},
        "result": {
            "x": x,
            "objective": sol.objective,
            "iterations": sol.iterations,
            "oracle_calls": sol.oracle_calls,
            "iteration_bound": iteration_bound(m, eps),
            "min_cover": float(row_cover.min()),
            "support_size": sol.support_size,
        },
        "flags": {
            "feasible": bool(row_cover.min() >= 1 - 1e-9),
            "within_iteration_bound": bool(sol.iterations <= iteration_bound(m, eps)),
        },
    }


def cmd_solve_pack(args) -> dict:
    data = load_json(args.input)
    A, b, c = _matrix(data)
    eps = _epsilon(args, data)
    kappa = float(data.get("kappa", 1.0))
    sol = solve_packing(explicit_packing_problem(A, b, c, kappa), eps)
    x = np.zeros(A.shape[1])
    for j, v in sol.x.items():
        x[int(j)] = v
    return {
        "command": "solve-pack",
        "config": {"epsilon": eps, "kappa": kappa, "m": A.shape[0], "n": A.shape[1]},
        "result": {
            "x": x,
            "objective": sol.objective,
            "upper_bound": sol.upper_bound,
            "certified_ratio": sol.certified_ratio,
            "iterations": sol.iterations,
            "oracle_calls": sol.oracle_calls,
            "step_epsilon": sol.step_epsilon,
        },
        "flags": {
            "feasible": bool(np.all(A @ x <= b * (1 + 1e-9))),
            "certified": bool(sol.certified_ratio >= 1 - eps),
        },
    }


def _decompose_verifier(instance: AuctionInstance, mode: str, alpha, x_star):
    if mode == "greedy":
        return GreedyVerifier(instance, None if alpha is None else float(alpha))
    if mode == "exact":
        if alpha is None:
            return ExactVerifier.for_point(instance, x_star)
        return ExactVerifier(instance, float(alpha))
    raise InputError(f"alpha_mode must be 'exact' or 'greedy', got {mode!r}")


def cmd_decompose(args) -> dict:
    data = load_json(args.input)
    instance = _instance(data.get("domain", data))
    eps = _epsilon(args, data)
    mode = args.alpha_mode or data.get("alpha_mode", "exact")
    raw = data.get("x_star", "lp")
    if raw == "lp":
        x_star = ExactWelfareSolver()(instance)
    else:
        x_star = np.asarray(raw, dtype=float)
        if x_star.shape != (instance.dimension,):
            raise InputError(f"x_star needs {instance.dimension} coordinates")
        if np.any(x_star < 0) or not instance.contains_fractional(x_star):
            raise InputError("x_star must be a non-negative point of the auction polytope")
    point = FractionalPoint.from_coords(x_star)
    verifier = _decompose_verifier(instance, mode, data.get("alpha"), point.coords)
    res = convex_decompose(point, verifier, eps, instance)
    s = res.support_size
    norm = float(np.max(point.coords, initial=0.0))
    return {
        "command": "decompose",
        "config": {"epsilon": eps, "alpha_mode": mode, "domain": instance.to_json()},
        "alpha": res.alpha,
        "x_star": point.coords,
        "target": res.target,
        "terms": [{"lambda": float(w), "point": list(p)} for w, p in zip(res.decomposition.weights, res.decomposition.points.astype(int))],
        "verifier_calls": res.verifier_calls,
        "size": res.size,
        "support_size": s,
        "terms_added": res.terms_added,
        "residual_norm": res.residual_norm,
        "flags": {
            "exact": bool(res.residual_norm <= 1e-9 * (1 + norm)),
            "size_bound": bool(res.size <= size_bound(s, eps)),
            "call_bound": bool(res.verifier_calls <= call_bound(s, eps)),
            "feasible": bool(res.decomposition.validate(instance)),
        },
    }


def _mechanism_setup(args, data: dict):
    instance = _instance(data)
    eps0 = args.epsilon0 if args.epsilon0 is not None else data.get("epsilon0", 0.5)
    try:
        params = MechanismParams(float(eps0), instance.n_players)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    mode = args.alpha_mode or data.get("alpha_mode", "exact")
    if mode not in ("exact", "greedy"):
        raise InputError(f"alpha_mode must be 'exact' or 'greedy', got {mode!r}")
    try:
        verifier = make_verifier(instance, mode)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    seed = args.seed if args.seed is not None else int(data.get("seed", 0))
    dec_eps = _epsilon(args, data, default=0.25)
    return instance, params, mode, verifier, seed, dec_eps


def cmd_mechanism_run(args) -> dict:
    data = load_json(args.input)
    instance, params, mode, verifier, seed, dec_eps = _mechanism_setup(args, data)
    outcome = run_mechanism(instance, ExactWelfareSolver(), params, verifier, dec_eps, rng=SeededRng(seed))
    rec = outcome.to_json()
    probs = outcome.probabilities
    realized_ok = instance.contains_fractional(outcome.allocation)
    return {
        "command": "mechanism run",
        "config": {"instance": instance.to_json(), "epsilon0": params.epsilon0, "alpha_mode": mode,
                   "seed": seed, "epsilon": dec_eps},
        "params": params.to_json(),
        "alpha": float(verifier.alpha),
        "outcome": rec,
        "flags": {
            "payments_nonnegative": bool(outcome.min_payment() >= -1e-12),
            "probabilities_sum_to_one": bool(abs(probs.sum() - 1) <= 1e-12),
            "realized_allocation_feasible": bool(realized_ok),
        },
    }


def _grid(text: str | None) -> tuple[float, ...]:
    if text is None:
        return DEFAULT_GRID
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError as exc:
        raise InputError(f"--grid must be comma-separated numbers: {exc}") from exc


def cmd_mechanism_audit(args) -> dict:
    data = load_json(args.input)
    instance, params, mode, verifier, seed, dec_eps = _mechanism_setup(args, data)
    grid = _grid(args.grid)
    if any(c < 0 for c in grid):
        raise InputError("deviation factors must be non-negative")
    audit = audit_truthfulness(
        instance, params, grid, verifier=verifier, decomposition_epsilon=dec_eps,
        monte_carlo=args.monte_carlo, seed=seed, workers=args.workers,
    )
    flags = audit.pop("flags")
    audit.pop("passed")
    return {
        "command": "mechanism audit",
        "config": {"instance": instance.to_json(), "epsilon0": params.epsilon0, "alpha_mode": mode,
                   "seed": seed, "epsilon": dec_eps, "grid": list(grid)},
        "audit": audit,
        "flags": flags,
    }


def audit_rows(report: dict) -> list[dict]:
    rows = []
    for p in report["audit"]["players"]:
        for d in p["deviations"]:
            rows.append(
                {
                    "player": p["player"],
                    "factor": d["factor"],
                    "truth_utility": p["expected_utility"],
                    "deviation_utility": d["expected_utility"],
                    "ok": d["ok"],
                    "negative_utility_probability": p["negative_utility_probability"],
                    "min_util_ok": p["min_util_ok"],
                }
            )
    return rows


def cmd_gen(args) -> dict:
    seed = 0 if args.seed is None else args.seed
    try:
        inst = generate_instance(args.kind, args.n, args.m, seed)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    out = inst.to_json()
    out.update({"epsilon0": 0.5, "alpha_mode": "exact", "seed": seed})
    return out


# -- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mwumech", description="MWU covering/packing, convex decomposition, mechanisms.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", help="input JSON file ('-' for stdin)")
    common.add_argument("--output", help="write the report here instead of stdout")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--epsilon", type=float, default=None)
    common.add_argument("--epsilon0", type=float, default=None)
    common.add_argument("--alpha-mode", choices=("exact", "greedy"), default=None)
    common.add_argument("--format", choices=("json", "csv"), default="json")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("solve-cover", parents=[common], help="explicit covering LP").set_defaults(func=cmd_solve_cover)
    sub.add_parser("solve-pack", parents=[common], help="explicit packing LP").set_defaults(func=cmd_solve_pack)
    sub.add_parser("decompose", parents=[common], help="convex decomposition").set_defaults(func=cmd_decompose)

    mech = sub.add_parser("mechanism", help="run or audit the mechanism")
    msub = mech.add_subparsers(dest="action", required=True)
    msub.add_parser("run", parents=[common]).set_defaults(func=cmd_mechanism_run)
    audit = msub.add_parser("audit", parents=[common])
    audit.add_argument("--grid", default=None, help="comma-separated value scalings")
    audit.add_argument("--monte-carlo", type=int, default=0, help="samples for the cross-check (0 = off)")
    audit.add_argument("--workers", type=int, default=4)
    audit.set_defaults(func=cmd_mechanism_audit)

    gen = sub.add_parser("gen", parents=[common], help="generate an auction instance")
    gen.add_argument("--kind", choices=INSTANCE_KINDS, required=True)
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--m", type=int, required=True)
    gen.set_defaults(func=cmd_gen)
    return parser


def _emit(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # argparse exits with 2 on usage errors
    try:
        configure_logging()
        start = time.perf_counter()
        report = args.func(args)
        elapsed = time.perf_counter() - start
        log.info("%s finished in %.3f s", args.command, elapsed)
    except InputError as exc:
        print(f"mwumech: error: {exc}", file=sys.stderr)
        return 2
    except (CapacityError, DimensionError) as exc:
        print(f"mwumech: error: {exc}", file=sys.stderr)
        return 2
    except MwuError as exc:
        print(f"mwumech: invariant failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1

    flags = report.get("flags", {})
    if args.command != "gen":
        report["passed"] = all(flags.values())
        report["timings"] = {"total_seconds": elapsed}
    if args.format == "csv":
        if args.command != "mechanism" or args.action != "audit":
            print("mwumech: error: --format csv is only available for audit tables", file=sys.stderr)
            return 2
        text = rows_to_csv(audit_rows(report))
    else:
        text = dumps(report)
    _emit(text, args.output)
    return 0 if all(flags.values()) else 1


if __name__ == "__main__":
    sys.exit(main())
