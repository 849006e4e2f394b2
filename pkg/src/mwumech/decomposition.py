"""Exact convex decomposition of alpha/(1+4 eps) * x* into integral points.

Two stages:

1. `find_dominating_combination` solves the covering LP over the (implicit)
   columns of Q_I with the unit-oracle covering loop; each oracle call is one
   call of the integrality-gap verifier.
2. `exact_decompose` trims the dominating combination down to equality using
   only downward closure: either subtract a unit vector from one point, or
   split a point's weight onto a copy with its over-covered coordinates zeroed.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    ConvexDecomposition,
    FractionalPoint,
    IntegralPoint,
    MwuError,
    PackingDomain,
    TripwireError,
    check_verifier_output,
    restrict_to_support,
    verify_membership,
)
from .covering import ColumnOracleResponse, CoveringSolution, iteration_bound, solve_covering_unit

log = logging.getLogger(__name__)


class DecompositionError(MwuError):
    pass


def call_bound(s: int, epsilon: float) -> int:
    """Verifier-call (and dominating-size) bound s*ceil(ln s / eps^2); 0 for s = 0.

    For s = 1 the threshold is floored at 1, giving one call.
    """
    return 0 if s == 0 else iteration_bound(s, epsilon)


def size_bound(s: int, epsilon: float) -> int:
    """Bound on the exact decomposition size: s * (1 + ceil(ln s / eps^2))."""
    return max(1, call_bound(s, epsilon) + s)


@dataclass
class DominatingCombination:
    terms: list[tuple[float, IntegralPoint]]
    target: np.ndarray
    verifier_calls: int
    covering: CoveringSolution | None = field(default=None, repr=False)
    mass: float = 1.0

    def combined(self) -> np.ndarray:
        return sum((w * p.array for w, p in self.terms), np.zeros(len(self.target)))


@dataclass
class ExactDecomposition:
    decomposition: ConvexDecomposition
    iterations: int
    terms_added: int
    unit_steps: int
    split_steps: int
    potentials: list[float] = field(default_factory=list, repr=False)
    positive_counts: list[int] = field(default_factory=list, repr=False)


def _as_point(x_star) -> FractionalPoint:
    return x_star if isinstance(x_star, FractionalPoint) else FractionalPoint.from_coords(x_star)


def find_dominating_combination(
    x_star,
    verifier,
    epsilon: float,
    include_mass_row: bool = False,
    record: bool = False,
) -> DominatingCombination:
    """Convex combination of verifier outputs dominating alpha/(1+4eps) * x*.

    Rows of the covering LP are the support coordinates j, with entries
    x^i_j / (alpha x*_j). With include_mass_row the extra row sum(lam) >= 1 is
    added as well (m = s + 1); by default it is left out and enforced by the
    final normalization, which keeps the verifier-call count within
    s*ceil(ln s/eps^2).
    """
    x_star = _as_point(x_star)
    alpha = float(verifier.alpha)
    d = x_star.dimension
    support = list(x_star.support)
    s = len(support)
    target = alpha / (1 + 4 * epsilon) * x_star.coords
    if s == 0:
        return DominatingCombination([(1.0, IntegralPoint.zeros(d))], target, 0)

    xs = x_star.coords[support]
    m = s + 1 if include_mass_row else s
    calls = 0
    points: dict[tuple, IntegralPoint] = {}

    def oracle(z: np.ndarray) -> ColumnOracleResponse:
        nonlocal calls
        w = z[:s]
        V = np.zeros(d)
        V[support] = w / (alpha * xs)
        calls += 1
        raw = verifier(V, x_star.coords)
        check_verifier_output(alpha, V, x_star.coords, raw)
        point = restrict_to_support(raw, support)
        points[point.coords] = point
        entries = {r: point.coords[j] / (alpha * xs[r]) for r, j in enumerate(support) if point.coords[j] > 0}
        if include_mass_row:
            entries[s] = 1.0
        return ColumnOracleResponse(point.coords, 1.0, entries)

    sol = solve_covering_unit(m, oracle, epsilon, record=record)
    mass = sol.total
    terms = [(val / mass, points[cid]) for cid, val in sol.x_hat.items() if val > 0]
    log.debug("dominating combination: s=%d, %d calls, mass %.6g", s, calls, mass)
    return DominatingCombination(terms, target, calls, sol, mass)


def _merge(terms: list[list], point: IntegralPoint, weight: float) -> bool:
    """Add weight to an existing identical point; return True if merged."""
    for t in terms:
        if t[1] == point:
            t[0] += weight
            return True
    return False


def exact_decompose(
    x_star_scaled,
    dominating,
    domain: PackingDomain | None = None,
    check_feasibility: bool = True,
) -> ExactDecomposition:
    """Turn a dominating convex combination into an exact one.

    Adds at most s new points. Gaps below 1e-9 * (1 + target_j) count as zero.
    """
    target = np.asarray(
        x_star_scaled.coords if isinstance(x_star_scaled, FractionalPoint) else x_star_scaled, dtype=float
    )
    src = dominating.terms if isinstance(dominating, DominatingCombination) else dominating
    terms: list[list] = []
    for w, p in src:
        if not _merge(terms, p, w):
            terms.append([float(w), p])
    d = len(target)
    support = [j for j in range(d) if target[j] > 0]
    s = len(support)
    thr = 1e-9 * (1 + target)

    def combined() -> np.ndarray:
        return sum((w * p.array for w, p in terms), np.zeros(d))

    gap = combined() - target
    outside = [j for j in range(d) if j not in set(support)]
    if any(p.coords[j] > 0 for w, p in terms if w > 0 for j in outside):
        raise DecompositionError("dominating points must vanish outside the support of the target")
    if np.any(gap < -thr):
        raise DecompositionError(f"input does not dominate the target (min gap {gap.min():.3e})")

    initial = len(terms)
    max_l1 = max((sum(p.coords) for _, p in terms), default=0)
    max_l1 = max(max_l1, 1)
    cap = (initial + s) * (max_l1 + 1) + s + 1
    potentials = [float(gap[support].sum())]
    counts = [int(np.sum(gap > thr))]
    unit_steps = split_steps = added = it = 0

    while True:
        positive = gap > thr
        if not positive.any():
            break
        if it >= cap:
            raise TripwireError(f"exact decomposition exceeded {cap} iterations")
        it += 1

        chosen = None
        for ti, (w, p) in enumerate(terms):
            if w <= 0:
                continue
            for j in support:
                if positive[j] and p.coords[j] > 0 and gap[j] >= w:
                    chosen = (ti, j)
                    break
            if chosen:
                break

        if chosen is not None:
            ti, j = chosen
            w, p = terms[ti]
            coords = list(p.coords)
            coords[j] -= 1
            newp = IntegralPoint(tuple(coords))
            if check_feasibility and domain is not None and not verify_membership(domain, newp):
                raise DecompositionError(f"unit subtraction left Q at {newp.coords}")
            terms[ti][1] = newp
            # collapse duplicates created by the subtraction
            for tj, other in enumerate(terms):
                if tj != ti and other[1] == newp:
                    other[0] += terms[ti][0]
                    terms[ti][0] = 0.0
                    break
            unit_steps += 1
            new_potential_drop = w
        else:
            ti = next(
                k for k, (w, p) in enumerate(terms)
                if w > 0 and any(positive[j] and p.coords[j] > 0 for j in support)
            )
            w, p = terms[ti]
            elig = [j for j in support if positive[j] and p.coords[j] > 0]
            k = min(elig, key=lambda j: (gap[j] / p.coords[j], j))
            theta = gap[k] / p.coords[k]
            if theta > w:
                raise DecompositionError("split weight exceeds the term weight")
            y = IntegralPoint(tuple(0 if positive[j] else c for j, c in enumerate(p.coords)))
            if check_feasibility and domain is not None and not verify_membership(domain, y):
                raise DecompositionError(f"zeroed copy left Q at {y.coords}")
            terms[ti][0] = w - theta
            if not _merge(terms, y, theta):
                terms.append([theta, y])
                added += 1
            split_steps += 1
            new_potential_drop = None

        before_count = counts[-1]
        gap = combined() - target
        if np.any(gap < -thr):
            raise DecompositionError(f"gap went negative ({gap.min():.3e})")
        potentials.append(float(gap[support].sum()))
        counts.append(int(np.sum(gap > thr)))
        if new_potential_drop is not None:
            if potentials[-1] > potentials[-2] - new_potential_drop + 1e-12:
                raise DecompositionError("unit step did not lower the gap potential")
        elif counts[-1] >= before_count:
            raise DecompositionError("split step did not close a gap")

    final = [(w, p) for w, p in terms if w > 0]
    total = sum(w for w, _ in final)
    final = [(w / total, p) for w, p in final]
    return ExactDecomposition(
        decomposition=ConvexDecomposition(tuple(final)),
        iterations=it,
        terms_added=added,
        unit_steps=unit_steps,
        split_steps=split_steps,
        potentials=potentials,
        positive_counts=counts,
    )


@dataclass
class DecompositionResult:
    decomposition: ConvexDecomposition
    target: np.ndarray
    alpha: float
    epsilon: float
    support_size: int
    verifier_calls: int
    dominating_size: int
    terms_added: int
    dominating: DominatingCombination = field(repr=False)
    exact: ExactDecomposition = field(repr=False)

    @property
    def residual_norm(self) -> float:
        return float(np.max(np.abs(self.decomposition.mean() - self.target), initial=0.0))

    @property
    def size(self) -> int:
        return self.decomposition.size


def convex_decompose(
    x_star,
    verifier,
    epsilon: float,
    domain: PackingDomain | None = None,
    check_feasibility: bool = True,
) -> DecompositionResult:
    """alpha/(1+4eps) * x* = sum_j lam_j x^j with x^j integral points of Q."""
    if not 0 < epsilon <= 0.5:
        raise ValueError(f"epsilon must lie in (0, 1/2], got {epsilon!r}")
    x_star = _as_point(x_star)
    dom = find_dominating_combination(x_star, verifier, epsilon)
    exact = exact_decompose(dom.target, dom, domain, check_feasibility)
    return DecompositionResult(
        decomposition=exact.decomposition,
        target=dom.target,
        alpha=float(verifier.alpha),
        epsilon=epsilon,
        support_size=len(x_star.support),
        verifier_calls=dom.verifier_calls,
        dominating_size=len(dom.terms),
        terms_added=exact.terms_added,
        dominating=dom,
        exact=exact,
    )
