"""Width-independent MWU packing solver (Garg-Koenemann style) and welfare solvers.

    max c.x  s.t.  A x <= b,  x >= 0

The oracle receives row weights z (z_i = b_i * length_i) and returns a column
approximately minimizing (1/c_j) * sum_i z_i a_ij / b_i. A kappa-oracle, for
kappa in (0, 1], returns a column whose ratio is at most (1/kappa) * min.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Hashable, Mapping

import numpy as np

from .auction import Additive, AuctionInstance, SingleMinded
from .core import MalformedOracleError, MwuError, TripwireError
from .lp import best_vertex

log = logging.getLogger(__name__)

BETA_SEARCH_ITERATIONS = 200


class NoDemandError(MwuError):
    """No player values any bundle positively."""


@dataclass(frozen=True)
class PackingColumn:
    column_id: Hashable
    value: float
    entries: Mapping[int, float]
    ratio: float

    def __post_init__(self) -> None:
        if not self.value > 0:
            raise MalformedOracleError(f"column {self.column_id!r} has non-positive value")
        if not any(a > 0 for a in self.entries.values()):
            raise MalformedOracleError(f"column {self.column_id!r} is empty (unbounded LP)")


PackingOracle = Callable[[np.ndarray], PackingColumn]


@dataclass
class PackingProblem:
    num_rows: int
    capacities: np.ndarray
    oracle: PackingOracle
    kappa: float = 1.0

    def __post_init__(self) -> None:
        self.capacities = np.asarray(self.capacities, dtype=float)
        if self.capacities.shape != (self.num_rows,) or np.any(self.capacities <= 0):
            raise ValueError("capacities must be positive, one per row")
        if not 0 < self.kappa <= 1:
            raise ValueError("kappa must lie in (0, 1]")


@dataclass
class PackingSolution:
    x: dict
    objective: float
    upper_bound: float
    certified_ratio: float
    iterations: int
    oracle_calls: int
    step_epsilon: float
    max_load: float
    values: dict = field(default_factory=dict, repr=False)

    @property
    def certified_epsilon(self) -> float:
        return max(0.0, 1.0 - self.certified_ratio)


def _gk_run(problem: PackingProblem, step: float) -> PackingSolution:
    m = problem.num_rows
    b = problem.capacities
    delta0 = (1 + step) * ((1 + step) * m) ** (-1 / step)
    lengths = delta0 / b
    per_row = math.ceil(math.log((1 + step) / delta0) / math.log1p(step)) + 1
    cap = 2 * m * per_row + 10
    x: dict = {}
    values: dict = {}
    loads = np.zeros(m)
    best_dual = math.inf
    it = 0
    while True:
        D = float(b @ lengths)
        if D >= 1:
            break
        if it >= cap:
            raise TripwireError(f"packing loop exceeded {cap} iterations")
        col = problem.oracle(b * lengths)
        # min_j ratio >= kappa * returned ratio, so D/(kappa*ratio) bounds OPT;
        # the certificate below is stated relative to kappa.
        best_dual = min(best_dual, D / col.ratio)
        idx = np.fromiter(col.entries.keys(), dtype=int)
        a = np.fromiter(col.entries.values(), dtype=float)
        pos = a > 0
        idx, a = idx[pos], a[pos]
        amount = float(np.min(b[idx] / a))
        x[col.column_id] = x.get(col.column_id, 0.0) + amount
        values[col.column_id] = col.value
        frac = amount * a / b[idx]
        loads[idx] += frac
        lengths[idx] *= 1 + step * frac
        it += 1

    max_load = float(loads.max()) if x else 0.0
    if max_load > 0:
        x = {cid: v / max_load for cid, v in x.items()}
    objective = float(sum(values[cid] * v for cid, v in x.items()))
    ratio = objective / best_dual if best_dual < math.inf and best_dual > 0 else 1.0
    return PackingSolution(
        x=x,
        objective=objective,
        upper_bound=best_dual / problem.kappa,
        certified_ratio=min(ratio, 1.0),
        iterations=it,
        oracle_calls=it,
        step_epsilon=step,
        max_load=max_load,
        values=values,
    )


def solve_packing(problem: PackingProblem, epsilon: float) -> PackingSolution:
    """Return x with A x <= b and c.x >= (1 - eps) * kappa * OPT, with certificate.

    The certificate is the best dual bound seen by the loop; if the first pass
    with step eps is not certified, the step is halved (at step eps/4 the
    textbook analysis already guarantees the bound).
    """
    if not 0 < epsilon <= 0.5:
        raise ValueError(f"epsilon must lie in (0, 1/2], got {epsilon!r}")
    step = epsilon
    calls = 0
    while True:
        sol = _gk_run(problem, step)
        calls += sol.oracle_calls
        if sol.certified_ratio >= 1 - epsilon:
            sol.oracle_calls = calls
            return sol
        if step < epsilon / 4:
            raise TripwireError(
                f"packing certificate {sol.certified_ratio:.6g} below 1-eps after step {step:.3g}"
            )
        log.debug("packing: certificate %.6g at step %.3g, halving", sol.certified_ratio, step)
        step /= 2


class ExplicitPackingOracle:
    def __init__(self, A, b, c, kappa: float = 1.0) -> None:
        self.A = np.asarray(A, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.c = np.asarray(c, dtype=float)
        if np.any(self.c <= 0):
            raise ValueError("packing values must be positive")
        if np.any(self.A.sum(axis=0) <= 0):
            raise ValueError("every column needs a nonzero entry (else unbounded)")
        self.kappa = kappa

    def __call__(self, z: np.ndarray) -> PackingColumn:
        ratios = (z / self.b) @ self.A / self.c
        best = ratios.min()
        if self.kappa < 1:
            j = int(np.flatnonzero(ratios <= best / self.kappa)[-1])
        else:
            j = int(np.argmin(ratios))
        col = self.A[:, j]
        return PackingColumn(j, float(self.c[j]), {i: float(a) for i, a in enumerate(col) if a > 0}, float(ratios[j]))


def explicit_packing_problem(A, b, c, kappa: float = 1.0) -> PackingProblem:
    A = np.asarray(A, dtype=float)
    return PackingProblem(A.shape[0], np.asarray(b, dtype=float), ExplicitPackingOracle(A, b, c, kappa), kappa)


# -- combinatorial-auction demand oracle -------------------------------------


def _additive_best_bundle(values, y: float, z: np.ndarray) -> tuple[tuple[int, ...], float] | None:
    a = np.asarray(values, dtype=float)
    if a.sum() <= 0:
        return None

    def slack(beta: float) -> float:
        gains = beta * a - z
        pos = gains[gains > 0]
        best = pos.sum() if pos.size else gains[a > 0].max()
        return best - y

    lo, hi = 0.0, (y + z.sum()) / a.sum()
    if slack(lo) >= 0:
        hi = lo
    else:
        for _ in range(BETA_SEARCH_ITERATIONS):
            if hi - lo <= 1e-12 * hi:
                break
            mid = 0.5 * (lo + hi)
            if slack(mid) >= 0:
                hi = mid
            else:
                lo = mid
    gains = hi * a - z
    bundle = tuple(int(j) for j in np.flatnonzero((gains >= 0) & (a > 0)))
    if not bundle:
        j = int(np.flatnonzero(a > 0)[np.argmax(gains[a > 0])])
        bundle = (j,)
    idx = list(bundle)
    ratio = (y + z[idx].sum()) / a[idx].sum()
    return bundle, float(ratio)


def auction_demand_oracle(
    y: np.ndarray, z: np.ndarray, instance: AuctionInstance
) -> tuple[int, tuple[int, ...], float]:
    """argmin over (player k, bundle T) of (y_k + sum_{j in T} z_j) / v_k(T).

    Exact for single-minded bidders (their bundle is the minimizer); additive
    bidders use binary search on the ratio beta. Ties go to the lowest player.
    """
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    if np.any(y < 0) or np.any(z < 0):
        raise ValueError("oracle weights must be non-negative")
    best: tuple[int, tuple[int, ...], float] | None = None
    for k, p in enumerate(instance.players):
        if isinstance(p, SingleMinded):
            if p.value <= 0:
                continue
            cand = (p.bundle, (y[k] + z[list(p.bundle)].sum()) / p.value)
        else:
            found = _additive_best_bundle(p.values, float(y[k]), z)
            if found is None:
                continue
            cand = found
        if best is None or cand[1] < best[2]:
            best = (k, cand[0], float(cand[1]))
    if best is None:
        raise NoDemandError("all valuations are zero")
    return best


def auction_packing_problem(instance: AuctionInstance) -> PackingProblem:
    """Rows: one per player, then one per item; columns are (player, bundle)."""
    n, m = instance.n_players, instance.n_items

    def oracle(weights: np.ndarray) -> PackingColumn:
        k, bundle, ratio = auction_demand_oracle(weights[:n], weights[n:], instance)
        entries = {k: 1.0}
        entries.update({n + j: 1.0 for j in bundle})
        return PackingColumn((k, bundle), instance.players[k].bundle_value(bundle), entries, ratio)

    return PackingProblem(n + m, np.ones(n + m), oracle)


def columns_to_allocation(instance: AuctionInstance, x: Mapping) -> np.ndarray:
    out = np.zeros(instance.dimension)
    for (k, bundle), val in x.items():
        block = instance.blocks[k]
        if isinstance(instance.players[k], SingleMinded):
            out[block[0]] += val
        else:
            for j in bundle:
                out[block[j]] += val
    return out


# -- fractional welfare maximizers (the "A" of the mechanism) ----------------


class ExactWelfareSolver:
    """Exact fractional welfare maximizer by vertex enumeration of Q.

    Deterministic: ties go to the lexicographically largest optimal vertex.
    Serves as an eps-approximation for every eps >= 0.
    """

    epsilon = 0.0
    deterministic = True

    def __init__(self, max_dimension: int = 12) -> None:
        self.max_dimension = max_dimension
        self.calls = 0

    def __call__(self, instance: AuctionInstance) -> np.ndarray:
        from .core import CapacityError

        if instance.dimension > self.max_dimension:
            raise CapacityError(f"dimension {instance.dimension} exceeds cap {self.max_dimension}")
        self.calls += 1
        x, _ = best_vertex(instance.vertices(), instance.weight_vector(), maximize=True)
        return x


class MwuWelfareSolver:
    """Welfare maximizer backed by solve_packing on the auction LP."""

    deterministic = True

    def __init__(self, epsilon: float) -> None:
        self.epsilon = epsilon
        self.calls = 0
        self.last: PackingSolution | None = None
        self.worst_certified_epsilon = 0.0

    def __call__(self, instance: AuctionInstance) -> np.ndarray:
        self.calls += 1
        if not np.any(instance.weight_vector() > 0):
            self.last = None
            return np.zeros(instance.dimension)
        sol = solve_packing(auction_packing_problem(instance), self.epsilon)
        self.last = sol
        self.worst_certified_epsilon = max(self.worst_certified_epsilon, sol.certified_epsilon)
        return columns_to_allocation(instance, sol.x)
