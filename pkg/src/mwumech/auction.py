"""Combinatorial-auction packing domain, verifiers and instance generators.

Coordinates are grouped per player. A single-minded player owns one
coordinate x_i (its bundle, 0 <= x_i <= 1); an additive player owns one
coordinate per item, x_{i,j}. Rows of Q are one capacity row per item and
one x_i <= 1 row per single-minded player.
"""
from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Sequence, Union

import numpy as np
from scipy.optimize import linprog

from . import lp
from .core import (
    CapacityError,
    ContractError,
    DimensionError,
    IntegralPoint,
    MwuError,
    SeededRng,
    check_verifier_output,
)

MAX_PLAYERS = 8
MAX_ITEMS = 8
MAX_INTEGRAL_POINTS = 200_000


@dataclass(frozen=True)
class SingleMinded:
    bundle: tuple[int, ...]
    value: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "bundle", tuple(sorted(set(int(j) for j in self.bundle))))
        if not self.bundle:
            raise ValueError("single-minded bundle must be nonempty")
        if self.value < 0:
            raise ValueError("values must be non-negative")

    kind = "single_minded"

    def bundle_value(self, items) -> float:
        return self.value if set(self.bundle) <= set(items) else 0.0

    def scaled(self, factor: float) -> "SingleMinded":
        return SingleMinded(self.bundle, self.value * factor)

    def to_json(self) -> dict:
        return {"type": "single_minded", "bundle": list(self.bundle), "value": self.value}


@dataclass(frozen=True)
class Additive:
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", tuple(float(a) for a in self.values))
        if any(a < 0 for a in self.values):
            raise ValueError("values must be non-negative")

    kind = "additive"

    def bundle_value(self, items) -> float:
        return float(sum(self.values[j] for j in items))

    def scaled(self, factor: float) -> "Additive":
        return Additive(tuple(a * factor for a in self.values))

    def to_json(self) -> dict:
        return {"type": "additive", "values": list(self.values)}


Valuation = Union[SingleMinded, Additive]


def valuation_from_json(obj: dict) -> Valuation:
    kind = obj.get("type")
    if kind == "single_minded":
        return SingleMinded(tuple(obj["bundle"]), float(obj["value"]))
    if kind == "additive":
        return Additive(tuple(obj["values"]))
    raise ValueError(f"unknown valuation type {kind!r}")


@dataclass(frozen=True)
class AuctionInstance:
    """Players' (reported) valuations over m items; implements PackingDomain."""

    n_items: int
    players: tuple[Valuation, ...]
    blocks: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)
    var_map: tuple[tuple[int, object], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "players", tuple(self.players))
        if not self.players:
            raise ValueError("auction needs at least one player")
        if self.n_items < 1:
            raise ValueError("auction needs at least one item")
        blocks, var_map = [], []
        for i, p in enumerate(self.players):
            if isinstance(p, SingleMinded):
                if max(p.bundle) >= self.n_items or min(p.bundle) < 0:
                    raise ValueError(f"player {i} bundle references unknown items")
                blocks.append((len(var_map),))
                var_map.append((i, p.bundle))
            else:
                if len(p.values) != self.n_items:
                    raise ValueError(f"player {i} has {len(p.values)} values for {self.n_items} items")
                start = len(var_map)
                blocks.append(tuple(range(start, start + self.n_items)))
                var_map.extend((i, j) for j in range(self.n_items))
        object.__setattr__(self, "blocks", tuple(blocks))
        object.__setattr__(self, "var_map", tuple(var_map))

    @property
    def n_players(self) -> int:
        return len(self.players)

    @property
    def dimension(self) -> int:
        return len(self.var_map)

    @property
    def all_single_minded(self) -> bool:
        return all(isinstance(p, SingleMinded) for p in self.players)

    def structure_key(self) -> tuple:
        """Everything that shapes Q; values are excluded."""
        return (
            self.n_items,
            tuple(p.bundle if isinstance(p, SingleMinded) else "additive" for p in self.players),
        )

    # -- valuations -------------------------------------------------------
    def player_weights(self, i: int) -> np.ndarray:
        w = np.zeros(self.dimension)
        p = self.players[i]
        if isinstance(p, SingleMinded):
            w[self.blocks[i][0]] = p.value
        else:
            w[list(self.blocks[i])] = p.values
        return w

    def weight_vector(self) -> np.ndarray:
        return sum((self.player_weights(i) for i in range(self.n_players)), np.zeros(self.dimension))

    def player_value(self, i: int, x) -> float:
        return float(np.dot(self.player_weights(i), np.asarray(x, dtype=float)))

    def welfare(self, x) -> float:
        return float(np.dot(self.weight_vector(), np.asarray(x, dtype=float)))

    def dominating_allocation(self, i: int) -> np.ndarray:
        """All items to player i."""
        u = np.zeros(self.dimension)
        u[list(self.blocks[i])] = 1.0
        return u

    def with_player(self, i: int, valuation: Valuation) -> "AuctionInstance":
        players = list(self.players)
        old = players[i]
        if isinstance(old, SingleMinded) != isinstance(valuation, SingleMinded):
            raise ValueError("replacement valuation must keep the player's class")
        if isinstance(old, SingleMinded) and old.bundle != valuation.bundle:
            raise ValueError("replacement valuation must keep the bundle")
        players[i] = valuation
        return replace(self, players=tuple(players))

    def scaled_player(self, i: int, factor: float) -> "AuctionInstance":
        return self.with_player(i, self.players[i].scaled(factor))

    def zeroed_player(self, i: int) -> "AuctionInstance":
        return self.scaled_player(i, 0.0)

    def restrict_block(self, x, keep: Sequence[int]) -> np.ndarray:
        """Zero every player block not listed in keep."""
        out = np.zeros(self.dimension)
        x = np.asarray(x, dtype=float)
        for i in keep:
            idx = list(self.blocks[i])
            out[idx] = x[idx]
        return out

    # -- polytope ---------------------------------------------------------
    def constraint_matrix(self) -> tuple[np.ndarray, np.ndarray]:
        return _constraints(self.structure_key())

    def contains(self, point: IntegralPoint) -> bool:
        if point.dimension != self.dimension:
            raise DimensionError(f"point has dimension {point.dimension}, domain has {self.dimension}")
        A, b = self.constraint_matrix()
        return bool(np.all(A @ point.array <= b + 1e-12))

    def contains_fractional(self, x, tol: float = 1e-9) -> bool:
        x = np.asarray(x, dtype=float)
        A, b = self.constraint_matrix()
        return bool(np.all(x >= -tol) and np.all(A @ x <= b + tol))

    def integral_points(self) -> np.ndarray:
        return _integral_points(self.structure_key())

    def vertices(self) -> np.ndarray:
        return _vertices(self.structure_key())

    def to_json(self) -> dict:
        return {"items": self.n_items, "players": [p.to_json() for p in self.players]}

    @classmethod
    def from_json(cls, obj: dict) -> "AuctionInstance":
        return cls(int(obj["items"]), tuple(valuation_from_json(p) for p in obj["players"]))


def _structure_players(key: tuple) -> list:
    return list(key[1])


@functools.lru_cache(maxsize=256)
def _constraints(key: tuple) -> tuple[np.ndarray, np.ndarray]:
    m, players = key
    d = sum(1 if p != "additive" else m for p in players)
    rows = []
    col = 0
    item_rows = np.zeros((m, d))
    player_rows = []
    for p in players:
        if p == "additive":
            for j in range(m):
                item_rows[j, col + j] = 1.0
            col += m
        else:
            for j in p:
                item_rows[j, col] = 1.0
            r = np.zeros(d)
            r[col] = 1.0
            player_rows.append(r)
            col += 1
    rows = [item_rows] + ([np.array(player_rows)] if player_rows else [])
    A = np.vstack(rows)
    A.setflags(write=False)
    b = np.ones(A.shape[0])
    b.setflags(write=False)
    return A, b


@functools.lru_cache(maxsize=256)
def _integral_points(key: tuple) -> np.ndarray:
    """Q_I in lexicographically descending order."""
    m, players = key
    pts: list[tuple[int, ...]] = []

    def rec(k: int, used: frozenset, acc: tuple) -> None:
        if len(pts) > MAX_INTEGRAL_POINTS:
            raise CapacityError(f"more than {MAX_INTEGRAL_POINTS} integral points")
        if k == len(players):
            pts.append(acc)
            return
        p = players[k]
        if p == "additive":
            free = [j for j in range(m) if j not in used]
            for r in range(len(free) + 1):
                for take in itertools.combinations(free, r):
                    block = tuple(1 if j in take else 0 for j in range(m))
                    rec(k + 1, used | frozenset(take), acc + block)
        else:
            rec(k + 1, used, acc + (0,))
            if not used.intersection(p):
                rec(k + 1, used | frozenset(p), acc + (1,))

    rec(0, frozenset(), ())
    arr = np.array(sorted(pts, reverse=True), dtype=float)
    arr.setflags(write=False)
    return arr


@functools.lru_cache(maxsize=256)
def _vertices(key: tuple) -> np.ndarray:
    A, b = _constraints(key)
    d = A.shape[1]
    G = np.vstack([A, -np.eye(d)])
    h = np.concatenate([b, np.zeros(d)])
    V = lp.enumerate_vertices(G, h)
    V.setflags(write=False)
    return V


# -- integrality-gap verifiers ---------------------------------------------


class GreedyVerifier:
    """Greedy by weight/sqrt(|bundle|) for single-minded bidders; alpha = 1/sqrt(m)."""

    def __init__(self, instance: AuctionInstance, alpha: float | None = None) -> None:
        if not instance.all_single_minded:
            raise ValueError("greedy verifier needs single-minded bidders")
        self.instance = instance
        self.alpha = 1 / math.sqrt(instance.n_items) if alpha is None else alpha
        self.calls = 0

    def __call__(self, v: np.ndarray, x_star: np.ndarray) -> IntegralPoint:
        self.calls += 1
        inst = self.instance
        v = np.asarray(v, dtype=float)
        order = sorted(
            range(inst.n_players),
            key=lambda i: (-v[i] / math.sqrt(len(inst.players[i].bundle)), i),
        )
        taken: set[int] = set()
        x = [0] * inst.dimension
        for i in order:
            bundle = inst.players[i].bundle
            if v[i] > 0 and taken.isdisjoint(bundle):
                x[i] = 1
                taken.update(bundle)
        point = IntegralPoint(tuple(x))
        check_verifier_output(self.alpha, v, x_star, point)
        return point


class ExactVerifier:
    """Returns argmax over enumerated Q_I (ties: lexicographically largest point).

    alpha is either given or measured; `for_point` measures the largest alpha
    with alpha*x* dominated by a convex combination of Q_I, `for_polytope` the
    worst such alpha over the vertices of Q.
    """

    def __init__(self, instance: AuctionInstance, alpha: float = 1.0) -> None:
        self.instance = instance
        self.points = instance.integral_points()
        self.alpha = alpha
        self.calls = 0

    @classmethod
    def for_point(cls, instance: AuctionInstance, x_star) -> "ExactVerifier":
        return cls(instance, measure_alpha(instance, x_star))

    @classmethod
    def for_polytope(cls, instance: AuctionInstance) -> "ExactVerifier":
        return cls(instance, polytope_alpha(instance))

    def best(self, v: np.ndarray) -> IntegralPoint:
        scores = self.points @ np.asarray(v, dtype=float)
        top = scores.max()
        k = int(np.flatnonzero(scores >= top - 1e-12 * (1 + abs(top)))[0])
        return IntegralPoint(tuple(int(c) for c in self.points[k]))

    def __call__(self, v: np.ndarray, x_star: np.ndarray) -> IntegralPoint:
        self.calls += 1
        point = self.best(v)
        check_verifier_output(self.alpha, v, x_star, point)
        return point


def measure_alpha(instance: AuctionInstance, x_star) -> float:
    """max alpha s.t. alpha*x* <= sum_k lam_k q^k, lam in the simplex, q^k in Q_I."""
    x_star = np.asarray(x_star, dtype=float)
    supp = np.flatnonzero(x_star > 0)
    if supp.size == 0:
        return 1.0
    P = instance.integral_points()
    k = P.shape[0]
    # variables (lam_1..lam_k, alpha); maximize alpha
    c = np.zeros(k + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-P[:, supp].T, x_star[supp][:, None]])
    b_ub = np.zeros(supp.size)
    A_eq = np.concatenate([np.ones(k), [0.0]])[None, :]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[1.0], bounds=[(0, None)] * (k + 1), method="highs")
    if res.status != 0:
        raise MwuError(f"alpha measurement LP failed: {res.message}")
    alpha = float(res.x[-1])
    if alpha >= 1 - 1e-9:
        return 1.0
    # stay on the safe side of the LP tolerance
    return alpha - 1e-9


def polytope_alpha(instance: AuctionInstance) -> float:
    return min(measure_alpha(instance, v) for v in instance.vertices())


def make_verifier(instance: AuctionInstance, mode: str):
    if mode == "greedy":
        return GreedyVerifier(instance)
    if mode == "exact":
        return ExactVerifier.for_polytope(instance)
    raise ValueError(f"unknown alpha mode {mode!r}")


# -- generators -------------------------------------------------------------

INSTANCE_KINDS = ("single_minded_uniform", "additive_uniform", "adversarial_overlap")


def generate_instance(kind: str, n: int, m: int, seed: int) -> AuctionInstance:
    """Deterministic random instance; values are uniform integers in [1, 100]."""
    if kind not in INSTANCE_KINDS:
        raise ValueError(f"unknown instance kind {kind!r}")
    if not 1 <= n <= MAX_PLAYERS:
        raise ValueError(f"n must lie in [1, {MAX_PLAYERS}]")
    if not 1 <= m <= MAX_ITEMS:
        raise ValueError(f"m must lie in [1, {MAX_ITEMS}]")
    rng = SeededRng(seed).stream("instance-gen")
    players: list[Valuation] = []
    if kind == "single_minded_uniform":
        for _ in range(n):
            mask = int(rng.integers(1, 2**m))
            bundle = tuple(j for j in range(m) if mask >> j & 1)
            players.append(SingleMinded(bundle, float(rng.integers(1, 101))))
    elif kind == "additive_uniform":
        for _ in range(n):
            players.append(Additive(tuple(float(a) for a in rng.integers(1, 101, size=m))))
    else:
        # consecutive cyclic pairs overlap pairwise, which forces fractional LP optima
        for i in range(n):
            bundle = (i % m, (i + 1) % m) if m > 1 else (0,)
            players.append(SingleMinded(bundle, float(rng.integers(50, 101))))
    return AuctionInstance(m, tuple(players))
