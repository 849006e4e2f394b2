"""Khandekar-style multiplicative-weights solver for covering LPs.

    min c.x  s.t.  A x >= b,  x >= 0

The matrix is only reached through a column oracle: given normalized row
weights z it returns a column (id, cost, entries) that approximately
maximizes (1/c_j) * sum_i z_i a_ij / b_i.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Hashable, Mapping

import numpy as np

from .core import ContractError, MalformedOracleError, MwuError, TripwireError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ColumnOracleResponse:
    column_id: Hashable
    cost: float
    column_entries: Mapping[int, float]

    def __post_init__(self) -> None:
        if not self.cost > 0:
            raise MalformedOracleError(f"column {self.column_id!r} has cost {self.cost!r}")
        if any(a < 0 for a in self.column_entries.values()):
            raise MalformedOracleError(f"column {self.column_id!r} has negative entries")


ColumnOracle = Callable[[np.ndarray], ColumnOracleResponse]


@dataclass
class CoveringProblem:
    num_rows: int
    row_targets: np.ndarray
    oracle: ColumnOracle

    def __post_init__(self) -> None:
        self.row_targets = np.asarray(self.row_targets, dtype=float)
        if self.num_rows < 1:
            raise ValueError("covering problem needs at least one row")
        if self.row_targets.shape != (self.num_rows,):
            raise ValueError("row_targets must have length num_rows")
        if np.any(self.row_targets <= 0):
            raise ValueError("row targets must be positive")


def threshold(m: int, epsilon: float) -> float:
    """ln(m)/eps^2, floored at 1 so that m = 1 still runs one step."""
    return max(math.log(m) / epsilon**2, 1.0)


def iteration_bound(m: int, epsilon: float) -> int:
    """m * ceil(T); equals m*ceil(ln m / eps^2) whenever m >= 2 and eps <= 1/2."""
    return m * math.ceil(threshold(m, epsilon))


@dataclass
class CoveringState:
    epsilon: float
    loads: np.ndarray
    threshold: float
    x: dict = field(default_factory=dict)
    active: np.ndarray = None  # type: ignore[assignment]
    iteration: int = 0

    def __post_init__(self) -> None:
        if self.active is None:
            self.active = self.loads < self.threshold

    @classmethod
    def initial(cls, m: int, epsilon: float) -> "CoveringState":
        return cls(epsilon=epsilon, loads=np.zeros(m), threshold=threshold(m, epsilon))

    @property
    def min_load(self) -> float:
        return float(self.loads.min())


@dataclass
class CoveringSolution:
    x_hat: dict
    iterations: int
    oracle_calls: int
    objective: float
    min_load: float
    threshold: float
    raw_loads: np.ndarray
    last_active: np.ndarray
    history: list = field(default_factory=list, repr=False)

    @property
    def support_size(self) -> int:
        return sum(1 for v in self.x_hat.values() if v > 0)

    @property
    def total(self) -> float:
        return float(sum(self.x_hat.values()))


def weight_vector(state: CoveringState, epsilon: float | None = None) -> np.ndarray:
    """z_t = p(t)/|p(t)|_1 with p_i = (1-eps)^load_i on active rows, 0 elsewhere.

    Computed in log space with max-subtraction so large loads cannot underflow.
    """
    eps = state.epsilon if epsilon is None else epsilon
    active = state.active
    if not active.any():
        raise MwuError("weight vector requested with an empty active list")
    logs = np.full(state.loads.shape, -np.inf)
    logs[active] = state.loads[active] * math.log1p(-eps)
    logs -= logs[active].max()
    p = np.exp(logs)
    return p / p.sum()


def _validate_epsilon(epsilon: float) -> None:
    if not 0 < epsilon <= 0.5:
        raise ValueError(f"epsilon must lie in (0, 1/2], got {epsilon!r}")


def _run(
    problem: CoveringProblem,
    epsilon: float,
    query: Callable[[np.ndarray], ColumnOracleResponse],
    record: bool,
) -> CoveringSolution:
    _validate_epsilon(epsilon)
    m = problem.num_rows
    b = problem.row_targets
    state = CoveringState.initial(m, epsilon)
    cap = 2 * iteration_bound(m, epsilon)
    costs: dict = {}
    history = []
    calls = 0

    while state.min_load < state.threshold:
        if state.iteration >= cap:
            raise TripwireError(f"covering loop exceeded {cap} iterations")
        state.iteration += 1
        z = weight_vector(state)
        resp = query(z)
        calls += 1
        col = np.zeros(m)
        for i, a in resp.column_entries.items():
            col[int(i)] = a
        ratios = np.full(m, np.inf)
        hit = state.active & (col > 0)
        if not hit.any():
            raise MalformedOracleError(
                f"column {resp.column_id!r} has no positive entry on an active row"
            )
        ratios[hit] = b[hit] / col[hit]
        delta = float(ratios.min())
        incr = delta * col / b
        # bottleneck rows gain exactly one unit of load
        incr[ratios == delta] = 1.0
        prev_loads = state.loads
        state.loads = prev_loads + incr
        state.x[resp.column_id] = state.x.get(resp.column_id, 0.0) + delta
        costs[resp.column_id] = resp.cost
        if record:
            history.append(
                {
                    "t": state.iteration,
                    "delta": delta,
                    "column_id": resp.column_id,
                    "active": state.active.copy(),
                    "loads_before": prev_loads,
                    "step": delta * col / b,
                }
            )
        last_active = state.active
        state.active = state.loads < state.threshold
    if state.iteration == 0:
        raise MwuError("covering loop did not run")

    scale = state.min_load
    x_hat = {cid: val / scale for cid, val in state.x.items()}
    objective = float(sum(costs[cid] * v for cid, v in x_hat.items()))
    log.debug("covering: %d iterations, objective %.6g", state.iteration, objective)
    return CoveringSolution(
        x_hat=x_hat,
        iterations=state.iteration,
        oracle_calls=calls,
        objective=objective,
        min_load=float((state.loads / scale).min()),
        threshold=state.threshold,
        raw_loads=state.loads,
        last_active=last_active,
        history=history,
    )


def solve_covering(
    problem: CoveringProblem,
    epsilon: float,
    kappa: float = 1.0,
    record: bool = False,
) -> CoveringSolution:
    """Run the covering loop with a kappa-approximate maximizing oracle.

    Guarantees (for a correct oracle): min load >= 1, at most
    m*ceil(ln m/eps^2) iterations, and c.x <= (1+4eps)/kappa * OPT.
    """
    if not 0 < kappa <= 1:
        raise ValueError(f"kappa must lie in (0, 1], got {kappa!r}")
    return _run(problem, epsilon, problem.oracle, record)


def check_unit_response(z: np.ndarray, resp: ColumnOracleResponse) -> float:
    """Contract of the unit oracle: 1.z = 1 and z.column >= 1."""
    z = np.asarray(z, dtype=float)
    if abs(z.sum() - 1.0) > 1e-12 or np.any(z < 0):
        raise ContractError(f"unit oracle needs normalized weights, got sum {z.sum()!r}")
    value = sum(z[int(i)] * a for i, a in resp.column_entries.items())
    if value < 1 - 1e-9:
        raise ContractError(f"unit oracle column {resp.column_id!r} gives z.A1_j = {value!r} < 1")
    return value


def solve_covering_unit(
    num_rows: int,
    oracle_prime: ColumnOracle,
    epsilon: float,
    record: bool = False,
) -> CoveringSolution:
    """b = 1, c = 1 variant driven by an oracle with z.A1_j >= 1.

    Then 1.x_hat <= 1 + 4 eps with the same iteration/support bound.
    """

    def query(z: np.ndarray) -> ColumnOracleResponse:
        resp = oracle_prime(z)
        check_unit_response(z, resp)
        return resp

    problem = CoveringProblem(num_rows, np.ones(num_rows), oracle_prime)
    return _run(problem, epsilon, query, record)


class ExplicitCoveringOracle:
    """Column oracle over an explicit (A, b, c); kappa < 1 returns the first
    column within kappa of the best instead of the best."""

    def __init__(self, A, b, c, kappa: float = 1.0) -> None:
        self.A = np.asarray(A, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.c = np.asarray(c, dtype=float)
        self.kappa = kappa
        if np.any(self.c <= 0):
            raise ValueError("costs must be positive")
        self.calls = 0

    def scores(self, z: np.ndarray) -> np.ndarray:
        return (z / self.b) @ self.A / self.c

    def __call__(self, z: np.ndarray) -> ColumnOracleResponse:
        self.calls += 1
        s = self.scores(z)
        best = s.max()
        j = int(np.flatnonzero(s >= self.kappa * best)[0]) if self.kappa < 1 else int(np.argmax(s))
        col = self.A[:, j]
        return ColumnOracleResponse(j, float(self.c[j]), {i: float(a) for i, a in enumerate(col) if a > 0})


def explicit_covering_problem(A, b, c, kappa: float = 1.0) -> CoveringProblem:
    A = np.asarray(A, dtype=float)
    if np.any(A < 0):
        raise ValueError("covering matrix must be non-negative")
    if np.any(A.sum(axis=1) <= 0):
        raise ValueError("every row needs a positive entry")
    return CoveringProblem(A.shape[0], np.asarray(b, dtype=float), ExplicitCoveringOracle(A, b, c, kappa))


def solution_vector(sol: CoveringSolution, n: int) -> np.ndarray:
    x = np.zeros(n)
    for j, v in sol.x_hat.items():
        x[int(j)] = v
    return x
