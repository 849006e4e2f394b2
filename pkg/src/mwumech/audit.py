"""Exact-expectation audits of the mechanisms on desk-scale auctions.

Expected utilities are computed in closed form from the branch probabilities
and the decomposition weights, never by sampling. The optional Monte Carlo
pass only cross-checks those numbers.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .auction import AuctionInstance, make_verifier
from .core import MwuError, SeededRng
from .mechanism import (
    MechanismParams,
    RandomizedOutcome,
    monte_carlo_utility,
    others_value,
    player_constants,
    run_mechanism,
)
from .packing import ExactWelfareSolver

log = logging.getLogger(__name__)

DEFAULT_GRID = (0.0, 0.25, 0.5, 1.0, 2.0, 4.0)
TOL = 1e-9


class AuditError(MwuError):
    """The audit preconditions do not hold (e.g. a non-deterministic solver)."""


def _rel_tol(*values: float) -> float:
    # decompositions are exact only to ~1e-9 per coordinate, scaled by the values
    return TOL * (1 + max((abs(v) for v in values), default=0.0))


def check_deterministic(solver, instance: AuctionInstance) -> None:
    if not getattr(solver, "deterministic", False):
        raise AuditError("exact expectations need a deterministic welfare solver")
    a, b = solver(instance), solver(instance)
    if not np.array_equal(a, b):
        raise AuditError("welfare solver returned different allocations for the same input")


def fractional_opt(instance: AuctionInstance) -> float:
    """max over Q of the welfare, by vertex enumeration."""
    return float((instance.vertices() @ instance.weight_vector()).max(initial=0.0))


@dataclass
class _Context:
    instance: AuctionInstance
    params: MechanismParams
    solver: object
    verifier: object
    dec_eps: float
    cache: dict

    def run(self, report: AuctionInstance) -> RandomizedOutcome:
        return run_mechanism(report, self.solver, self.params, self.verifier, self.dec_eps, cache=self.cache)


def _deviation_row(ctx: _Context, i: int, factor: float, truth_utility: float) -> dict:
    report = ctx.instance.scaled_player(i, factor)
    out = ctx.run(report)
    util = out.expected_utility(i, ctx.instance.player_weights(i))
    bound = (1 - ctx.params.epsilon0) * util
    return {
        "factor": factor,
        "expected_utility": util,
        "truth_over_bound": truth_utility - bound,
        "ok": bool(truth_utility >= bound - TOL),
        "min_payment": out.min_payment(),
    }


def audit_truthfulness(
    instance: AuctionInstance,
    params: MechanismParams | None = None,
    grid=DEFAULT_GRID,
    solver=None,
    verifier=None,
    alpha_mode: str = "exact",
    decomposition_epsilon: float = 0.25,
    monte_carlo: int = 0,
    seed: int = 0,
    workers: int = 4,
) -> dict:
    """Audit the integral mechanism against deviations that rescale one player's report."""
    if params is None:
        params = MechanismParams(0.5, instance.n_players)
    solver = ExactWelfareSolver() if solver is None else solver
    verifier = make_verifier(instance, alpha_mode) if verifier is None else verifier
    check_deterministic(solver, instance)
    ctx = _Context(instance, params, solver, verifier, decomposition_epsilon, {})
    n = instance.n_players

    truth = ctx.run(instance)
    alpha = float(verifier.alpha)
    scale = alpha / (1 + 4 * decomposition_epsilon)
    consts = player_constants(instance, params.epsilon)

    players = []
    truth_utils = []
    for i in range(n):
        w = instance.player_weights(i)
        util = truth.expected_utility(i, w)
        frac_util = truth.fractional_expected_utility(i, w)
        min_util = (1 - params.eps_bar) * params.qi * consts.dominating_values[i]
        neg = truth.negative_utility_probability(i, w)
        truth_utils.append(util)
        players.append(
            {
                "player": i,
                "expected_utility": util,
                "fractional_expected_utility": frac_util,
                "identity_gap": util - scale * frac_util,
                "identity_ok": bool(abs(util - scale * frac_util) <= _rel_tol(util, frac_util)),
                "min_util_bound": min_util,
                "min_util_ok": bool(frac_util >= min_util - _rel_tol(min_util)),
                "negative_utility_probability": neg,
                "ir_ok": bool(neg <= 1 - params.q0 + 1e-12),
                "active": bool(truth.branches[0].fractional.active[i]),
            }
        )

    jobs = [(i, c) for i in range(n) for c in grid]
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        rows = list(pool.map(lambda job: _deviation_row(ctx, job[0], job[1], truth_utils[job[0]]), jobs))
    for (i, _), row in zip(jobs, rows):
        players[i].setdefault("deviations", []).append(row)

    opt = fractional_opt(instance)
    gamma = alpha * (1 - params.epsilon) * (1 - params.epsilon0) / (1 + 4 * decomposition_epsilon)
    welfare = truth.expected_welfare(instance.weight_vector())
    min_payment = min([truth.min_payment()] + [r["min_payment"] for r in rows])

    flags = {
        "payments_nonnegative": bool(min_payment >= -1e-12),
        "individually_rational": all(p["ir_ok"] for p in players),
        "truthful": all(d["ok"] for p in players for d in p["deviations"]),
        "welfare": bool(welfare >= gamma * opt - TOL),
        "min_util": all(p["min_util_ok"] for p in players),
        "expectation_identity": all(p["identity_ok"] for p in players),
    }

    report = {
        "params": params.to_json(),
        "alpha": alpha,
        "decomposition_epsilon": decomposition_epsilon,
        "grid": list(grid),
        "gamma": gamma,
        "opt": opt,
        "expected_welfare": welfare,
        "min_payment": min_payment,
        "players": players,
    }
    if monte_carlo > 0:
        mc = []
        rng = SeededRng(seed)
        for i in range(n):
            gen = rng.stream("mechanism-stage", 1, i)
            mean, se = monte_carlo_utility(truth, i, instance.player_weights(i), gen, monte_carlo)
            diff = abs(mean - truth_utils[i])
            mc.append({"player": i, "mean": mean, "stderr": se, "ok": bool(diff <= 3 * se + _rel_tol(mean))})
        report["monte_carlo"] = {"samples": monte_carlo, "players": mc}
        flags["monte_carlo"] = all(r["ok"] for r in mc)
    report["flags"] = flags
    report["passed"] = all(flags.values())
    log.info("audit: %s", flags)
    return report


# -- Lemma-level checks for the M0 sub-mechanism ----------------------------


def _m0(instance: AuctionInstance, solver, eps: float, i: int):
    """x = A(v), x' = A(0, v_-i), beta_i and the shifted-VCG payment of player i."""
    x = solver(instance)
    x_prime = solver(instance.zeroed_player(i))
    beta = player_constants(instance, eps).beta[i]
    vcg = others_value(instance, i, x_prime) - others_value(instance, i, x)
    return x, x_prime, beta, max(vcg - beta, 0.0)


def _lemma1(instance: AuctionInstance, x: np.ndarray, candidates, eps: float) -> float:
    """Smallest slack of v(x) >= v(x_hat) - beta_k - eps v_k(x_hat) over candidates and players."""
    betas = player_constants(instance, eps).beta
    vx = instance.welfare(x)
    worst = math.inf
    for xh in candidates:
        vh = instance.welfare(xh)
        for k in range(instance.n_players):
            slack = vx - (vh - betas[k] - eps * instance.player_value(k, xh))
            worst = min(worst, slack)
    return worst


def lemma_checks(instance: AuctionInstance, solver, grid=DEFAULT_GRID, epsilon: float | None = None) -> dict:
    """Check the approximation-robustness inequalities with an approximate solver.

    For truth v_bar and each report v = (c * v_bar_i, v_-i): the welfare
    inequality for x = A(w), w in {v, v_bar, v'}, against every vertex of Q
    and the solver's own outputs; and U_i(v_bar) >= U_i(v) - eps v_bar_i(x) - 3 beta_i
    together with individual rationality of M0.
    """
    eps = float(solver.epsilon if epsilon is None else epsilon)
    verts = list(instance.vertices())
    rows = []
    for i in range(instance.n_players):
        w_true = instance.player_weights(i)
        xb, xb_prime, beta, p_true = _m0(instance, solver, eps, i)
        u_true = float(w_true @ xb) - p_true
        for c in grid:
            report = instance.scaled_player(i, c)
            x, x_prime, beta_r, p_rep = _m0(report, solver, eps, i)
            cands = verts + [x, x_prime, xb, xb_prime]
            slack1 = min(
                _lemma1(prof, sol, cands, eps)
                for prof, sol in ((report, x), (instance, xb), (report.zeroed_player(i), x_prime))
            )
            u_rep = float(w_true @ x) - p_rep
            slack2 = u_true - (u_rep - eps * float(w_true @ x) - 3 * beta)
            rows.append(
                {
                    "player": i,
                    "factor": c,
                    "lemma1_slack": slack1,
                    "lemma2_slack": slack2,
                    "m0_utility": u_true,
                    "beta": beta,
                    "beta_report": beta_r,
                    "ok": bool(slack1 >= -TOL and slack2 >= -TOL and u_true >= -TOL and p_rep >= 0),
                }
            )
    return {"epsilon": eps, "rows": rows, "passed": all(r["ok"] for r in rows)}
