"""Randomized mechanisms on top of a fractional welfare maximizer.

* `fractional_vcg` / `exact_ls_mechanism`: exact LP, VCG prices, decomposition,
  and payments scaled by v_i(x^j)/v_i(x).
* `approx_fractional_mechanism`: the lottery over {0, 1..n} that tolerates an
  eps-approximate maximizer (active players, shifted VCG prices, dominating
  allocations), followed by `integral_conversion`.

All branches are materialized so expectations can be computed exactly; the
rng only picks the realized branch/term.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .auction import AuctionInstance
from .core import ContractError, SeededRng
from .decomposition import DecompositionResult, convex_decompose

ZERO_VALUE = 1e-12

WelfareSolver = Callable[[AuctionInstance], np.ndarray]


@dataclass(frozen=True)
class MechanismParams:
    epsilon0: float
    n: int

    def __post_init__(self) -> None:
        if not 0 < self.epsilon0 <= 0.5:
            raise ValueError(f"epsilon0 must lie in (0, 1/2], got {self.epsilon0!r}")
        if self.n < 1:
            raise ValueError("need at least one player")

    @property
    def eps_bar(self) -> float:
        return self.epsilon0 / 2

    @property
    def q0(self) -> float:
        return (1 - self.epsilon0 / self.n) ** self.n

    @property
    def qi(self) -> float:
        return (1 - self.q0) / self.n

    @property
    def eta(self) -> float:
        return self.eps_bar * (1 - self.q0) ** 2 / self.n**3

    @property
    def eta_prime(self) -> float:
        return self.eta / self.qi

    @property
    def epsilon(self) -> float:
        return self.eta * self.eps_bar * (1 - self.q0) / (8 * self.n)

    @property
    def probabilities(self) -> list[float]:
        return [self.q0] + [self.qi] * self.n

    def to_json(self) -> dict:
        return {
            "epsilon0": self.epsilon0,
            "n": self.n,
            "eps_bar": self.eps_bar,
            "q0": self.q0,
            "qi": self.qi,
            "eta": self.eta,
            "eta_prime": self.eta_prime,
            "epsilon": self.epsilon,
        }


@dataclass
class PlayerConstants:
    dominating: list[np.ndarray]
    dominating_values: np.ndarray
    L: np.ndarray
    beta: np.ndarray


def player_constants(instance: AuctionInstance, epsilon: float) -> PlayerConstants:
    n = instance.n_players
    u = [instance.dominating_allocation(i) for i in range(n)]
    vals = np.array([instance.player_value(i, u[i]) for i in range(n)])
    L = vals.sum() - vals
    return PlayerConstants(u, vals, L, epsilon * L)


@dataclass
class FractionalOutcome:
    allocation: np.ndarray
    payments: np.ndarray
    vcg_payments: np.ndarray
    active: tuple[bool, ...] = ()
    label: int = 0
    probability: float = 1.0


def others_value(instance: AuctionInstance, i: int, x) -> float:
    return instance.welfare(x) - instance.player_value(i, x)


def fractional_vcg(instance: AuctionInstance, solver: WelfareSolver) -> FractionalOutcome:
    """x* = argmax over Q of the welfare, p_i = v_{-i}(x_hat^{-i}) - v_{-i}(x*)."""
    x = solver(instance)
    n = instance.n_players
    p = np.zeros(n)
    for i in range(n):
        x_without = solver(instance.zeroed_player(i))
        p[i] = others_value(instance, i, x_without) - others_value(instance, i, x)
    p[np.abs(p) <= ZERO_VALUE] = 0.0
    return FractionalOutcome(x, p, p.copy(), tuple([True] * n))


@dataclass
class IntegralBranch:
    """One fractional outcome and its convex decomposition with scaled payments."""

    fractional: FractionalOutcome
    decomposition: DecompositionResult
    term_payments: np.ndarray  # (terms, players)

    @property
    def probability(self) -> float:
        return self.fractional.probability

    @property
    def weights(self) -> np.ndarray:
        return self.decomposition.decomposition.weights

    @property
    def points(self) -> np.ndarray:
        return self.decomposition.decomposition.points


@dataclass
class RandomizedOutcome:
    instance: AuctionInstance
    branches: list[IntegralBranch]
    realized_branch: int | None = None
    realized_term: int | None = None
    scale: float = 1.0

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([b.probability for b in self.branches])

    @property
    def allocation(self) -> np.ndarray | None:
        if self.realized_branch is None:
            return None
        return self.branches[self.realized_branch].points[self.realized_term]

    @property
    def payments(self) -> np.ndarray | None:
        if self.realized_branch is None:
            return None
        return self.branches[self.realized_branch].term_payments[self.realized_term]

    def realizations(self):
        """Yield (probability, branch index, term index, point, payments)."""
        for bi, br in enumerate(self.branches):
            for ti, (w, pt) in enumerate(zip(br.weights, br.points)):
                yield br.probability * w, bi, ti, pt, br.term_payments[ti]

    def min_payment(self) -> float:
        return min(float(pay.min()) for _, _, _, _, pay in self.realizations())

    def expected_payment(self, i: int) -> float:
        return sum(pr * pay[i] for pr, _, _, _, pay in self.realizations())

    def expected_utility(self, i: int, true_weights: np.ndarray) -> float:
        return sum(pr * (float(true_weights @ pt) - pay[i]) for pr, _, _, pt, pay in self.realizations())

    def negative_utility_probability(self, i: int, true_weights: np.ndarray, tol: float = 1e-9) -> float:
        return float(
            sum(pr for pr, _, _, pt, pay in self.realizations() if float(true_weights @ pt) - pay[i] < -tol)
        )

    def expected_welfare(self, true_weight_vector: np.ndarray) -> float:
        return sum(pr * float(true_weight_vector @ pt) for pr, _, _, pt, _ in self.realizations())

    def fractional_expected_utility(self, i: int, true_weights: np.ndarray) -> float:
        return sum(
            b.probability * (float(true_weights @ b.fractional.allocation) - b.fractional.payments[i])
            for b in self.branches
        )

    def to_json(self) -> dict:
        branches = []
        for br in self.branches:
            fr = br.fractional
            branches.append(
                {
                    "label": fr.label,
                    "probability": fr.probability,
                    "allocation": fr.allocation.tolist(),
                    "payments": fr.payments.tolist(),
                    "vcg_payments": fr.vcg_payments.tolist(),
                    "active": list(fr.active),
                    "verifier_calls": br.decomposition.verifier_calls,
                    "residual_norm": br.decomposition.residual_norm,
                    "terms": [
                        {"lambda": float(w), "point": [int(c) for c in pt], "payments": pay.tolist()}
                        for w, pt, pay in zip(br.weights, br.points, br.term_payments)
                    ],
                }
            )
        out = {"scale": self.scale, "branches": branches}
        if self.realized_branch is not None:
            out["realized"] = {
                "branch": self.realized_branch,
                "term": self.realized_term,
                "allocation": [int(c) for c in self.allocation],
                "payments": self.payments.tolist(),
            }
        return out


def scaled_payments(
    instance: AuctionInstance, fractional: FractionalOutcome, points: np.ndarray
) -> np.ndarray:
    """p_i * v_i(x^l) / v_i(x); zero when v_i(x) vanishes (reported values)."""
    n = instance.n_players
    out = np.zeros((points.shape[0], n))
    for i in range(n):
        w = instance.player_weights(i)
        denom = float(w @ fractional.allocation)
        if denom <= ZERO_VALUE or fractional.payments[i] == 0:
            continue
        out[:, i] = fractional.payments[i] * (points @ w) / denom
    return out


def _decompose(x, verifier, epsilon, instance, cache: dict | None) -> DecompositionResult:
    key = np.asarray(x, dtype=float).tobytes()
    if cache is not None and key in cache:
        return cache[key]
    res = convex_decompose(x, verifier, epsilon, instance)
    if cache is not None:
        cache[key] = res
    return res


def _realize(outcome: RandomizedOutcome, rng: SeededRng | None) -> RandomizedOutcome:
    if rng is None:
        return outcome
    probs = outcome.probabilities
    stage = rng.stream("mechanism-stage")
    bi = int(stage.choice(len(probs), p=probs / probs.sum()))
    w = outcome.branches[bi].weights
    ti = int(rng.stream("decomposition-sample").choice(len(w), p=w / w.sum()))
    outcome.realized_branch, outcome.realized_term = bi, ti
    return outcome


def exact_ls_mechanism(
    instance: AuctionInstance,
    solver: WelfareSolver,
    verifier,
    epsilon: float,
    rng: SeededRng | None = None,
    cache: dict | None = None,
) -> RandomizedOutcome:
    """Fractional VCG, decomposition of alpha/(1+4eps) x*, scaled payments."""
    frac = fractional_vcg(instance, solver)
    dec = _decompose(frac.allocation, verifier, epsilon, instance, cache)
    pays = scaled_payments(instance, frac, dec.decomposition.points)
    scale = float(verifier.alpha) / (1 + 4 * epsilon)
    out = RandomizedOutcome(instance, [IntegralBranch(frac, dec, pays)], scale=scale)
    return _realize(out, rng)


def _check_solver(solver, params: MechanismParams) -> None:
    eps = getattr(solver, "epsilon", None)
    if eps is None or eps > params.epsilon:
        raise ContractError(
            f"welfare solver guarantee {eps!r} is worse than the required eps = {params.epsilon:.3e}"
        )


def approx_fractional_mechanism(
    instance: AuctionInstance,
    solver: WelfareSolver,
    params: MechanismParams,
) -> list[FractionalOutcome]:
    """All n+1 branches of the fractional lottery, branch 0 first."""
    n = instance.n_players
    if params.n != n:
        raise ValueError(f"params built for {params.n} players, instance has {n}")
    _check_solver(solver, params)
    eps = params.epsilon
    consts = player_constants(instance, eps)
    x = solver(instance)
    vcg = np.zeros(n)
    for i in range(n):
        x_without = solver(instance.zeroed_player(i))
        vcg[i] = others_value(instance, i, x_without) - others_value(instance, i, x)
    pay = np.maximum(vcg - consts.beta, 0.0)
    pay[pay <= ZERO_VALUE] = 0.0
    ratio = params.qi / params.q0
    active = []
    for i in range(n):
        u_hat = instance.player_value(i, x) - pay[i]
        vu = consts.dominating_values[i]
        cond1 = u_hat + params.eps_bar * ratio * vu >= ratio * params.eta_prime * consts.L[i]
        cond2 = vu >= params.eta * consts.L[i]
        active.append(bool(cond1 and cond2))
    keep = [i for i in range(n) if active[i]]
    x0 = instance.restrict_block(x, keep)
    p0 = np.where(active, pay, 0.0)
    branches = [FractionalOutcome(x0, p0, vcg, tuple(active), 0, params.q0)]
    for j in range(n):
        xj = instance.restrict_block(consts.dominating[j], [j])
        pj = np.zeros(n)
        if active[j]:
            pj[j] = params.eta_prime * consts.L[j]
        branches.append(FractionalOutcome(xj, pj, vcg, tuple(active), j + 1, params.qi))
    return branches


def integral_conversion(
    instance: AuctionInstance,
    branches: Sequence[FractionalOutcome],
    verifier,
    epsilon: float,
    rng: SeededRng | None = None,
    cache: dict | None = None,
) -> RandomizedOutcome:
    """Decompose every branch's allocation and scale payments by v_i(x^l)/v_i(x)."""
    out = []
    for fr in branches:
        dec = _decompose(fr.allocation, verifier, epsilon, instance, cache)
        out.append(IntegralBranch(fr, dec, scaled_payments(instance, fr, dec.decomposition.points)))
    scale = float(verifier.alpha) / (1 + 4 * epsilon)
    return _realize(RandomizedOutcome(instance, out, scale=scale), rng)


def run_mechanism(
    instance: AuctionInstance,
    solver: WelfareSolver,
    params: MechanismParams,
    verifier,
    epsilon: float,
    rng: SeededRng | None = None,
    cache: dict | None = None,
) -> RandomizedOutcome:
    """The integral (1 - eps0)-truthful mechanism: lottery, then decomposition."""
    branches = approx_fractional_mechanism(instance, solver, params)
    return integral_conversion(instance, branches, verifier, epsilon, rng, cache)


def monte_carlo_utility(
    outcome: RandomizedOutcome, i: int, true_weights: np.ndarray, rng: np.random.Generator, samples: int
) -> tuple[float, float]:
    """Sample mean and standard error of player i's realized utility."""
    table = list(outcome.realizations())
    probs = np.array([r[0] for r in table])
    utils = np.array([float(true_weights @ r[3]) - r[4][i] for r in table])
    draws = rng.choice(len(table), size=samples, p=probs / probs.sum())
    vals = utils[draws]
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
