"""Brute-force LP by vertex enumeration for desk-scale explicit polyhedra.

Used as the exact reference (tests, exact fractional welfare maximizer).
Everything here is O(C(rows, d)) and guarded by a combination cap.
"""
from __future__ import annotations

import itertools
import math

import numpy as np

from .core import CapacityError, MwuError, snap

MAX_COMBINATIONS = 250_000
_BATCH = 4096


class InfeasibleError(MwuError):
    pass


def enumerate_vertices(G: np.ndarray, h: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """All vertices of {x : G x <= h}, rows sorted lexicographically descending.

    G must include whatever bound rows make the polyhedron pointed
    (typically -I for non-negativity).
    """
    G = np.asarray(G, dtype=float)
    h = np.asarray(h, dtype=float)
    rows, d = G.shape
    if d == 0:
        return np.zeros((1, 0))
    total = math.comb(rows, d)
    if total > MAX_COMBINATIONS:
        raise CapacityError(f"{total} row subsets exceeds cap {MAX_COMBINATIONS}")

    found: dict[tuple, np.ndarray] = {}
    combos = itertools.combinations(range(rows), d)
    while True:
        chunk = list(itertools.islice(combos, _BATCH))
        if not chunk:
            break
        idx = np.array(chunk)
        mats = G[idx]
        rhs = h[idx]
        dets = np.linalg.det(mats)
        ok = np.abs(dets) > 1e-10
        if not ok.any():
            continue
        sols = np.linalg.solve(mats[ok], rhs[ok][..., None])[..., 0]
        feasible = np.all(sols @ G.T <= h + tol * (1 + np.abs(h)), axis=1)
        for x in sols[feasible]:
            x = snap(x, 1e-10)
            key = tuple(np.round(x, 9))
            found.setdefault(key, x)
    if not found:
        raise InfeasibleError("polyhedron has no vertices")
    keys = sorted(found, reverse=True)
    return np.array([found[k] for k in keys])


def best_vertex(
    vertices: np.ndarray, c: np.ndarray, maximize: bool = True, tol: float = 1e-9
) -> tuple[np.ndarray, float]:
    """Optimal vertex; ties go to the first row (vertices come lex-descending)."""
    vals = vertices @ np.asarray(c, dtype=float)
    target = vals.max() if maximize else vals.min()
    slack = tol * (1 + abs(target))
    good = vals >= target - slack if maximize else vals <= target + slack
    k = int(np.flatnonzero(good)[0])
    return vertices[k].copy(), float(vals[k])


def solve_packing_lp(A: np.ndarray, b: np.ndarray, c: np.ndarray) -> tuple[np.ndarray, float]:
    """max c.x s.t. A x <= b, x >= 0."""
    A = np.asarray(A, dtype=float)
    n = A.shape[1]
    G = np.vstack([A, -np.eye(n)])
    h = np.concatenate([np.asarray(b, dtype=float), np.zeros(n)])
    return best_vertex(enumerate_vertices(G, h), c, maximize=True)


def solve_covering_lp(A: np.ndarray, b: np.ndarray, c: np.ndarray) -> tuple[np.ndarray, float]:
    """min c.x s.t. A x >= b, x >= 0 (c > 0 keeps it bounded)."""
    A = np.asarray(A, dtype=float)
    n = A.shape[1]
    G = np.vstack([-A, -np.eye(n)])
    h = np.concatenate([-np.asarray(b, dtype=float), np.zeros(n)])
    return best_vertex(enumerate_vertices(G, h), c, maximize=False)
