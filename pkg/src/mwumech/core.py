"""Shared abstractions: points, decompositions, domain/verifier protocols, RNG."""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Iterable, Protocol, Sequence, runtime_checkable

import numpy as np

ZERO_TOL = 1e-12


class MwuError(Exception):
    """Base class for all library errors."""


class ContractError(MwuError):
    """An oracle or verifier broke its stated contract."""


class MalformedOracleError(MwuError):
    """An oracle returned a column that cannot make progress."""


class TripwireError(MwuError):
    """A proven iteration bound was exceeded."""


class CapacityError(MwuError):
    """A brute-force routine was asked to exceed its desk-scale cap."""


class DimensionError(ValueError, MwuError):
    pass


def snap(coords: Iterable[float], tol: float = ZERO_TOL) -> np.ndarray:
    """Clip float dust: |c| <= tol becomes 0, near-integers become integers."""
    arr = np.array(coords, dtype=float)
    arr[np.abs(arr) <= tol] = 0.0
    rounded = np.round(arr)
    near = np.abs(arr - rounded) <= tol
    arr[near] = rounded[near]
    return arr


@dataclass(frozen=True)
class FractionalPoint:
    coords: np.ndarray
    support: tuple[int, ...] = field(default=())

    def __post_init__(self) -> None:
        arr = np.array(self.coords, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "coords", arr)
        if arr.ndim != 1:
            raise DimensionError("coords must be a vector")
        if np.any(arr < 0):
            raise ValueError("fractional point has negative coordinates")
        computed = tuple(int(j) for j in np.flatnonzero(arr > 0))
        if self.support and tuple(self.support) != computed:
            raise ValueError("stored support does not match coordinates")
        object.__setattr__(self, "support", computed)

    @classmethod
    def from_coords(cls, coords: Iterable[float]) -> "FractionalPoint":
        arr = snap(coords)
        arr[arr < 0] = 0.0
        return cls(arr)

    @property
    def dimension(self) -> int:
        return int(self.coords.shape[0])

    def scaled(self, factor: float) -> "FractionalPoint":
        return FractionalPoint(self.coords * factor)


@dataclass(frozen=True, order=True)
class IntegralPoint:
    coords: tuple[int, ...]

    def __post_init__(self) -> None:
        vals = tuple(self.coords)
        for c in vals:
            if int(c) != c or c < 0:
                raise ValueError(f"integral point needs non-negative integers, got {vals}")
        object.__setattr__(self, "coords", tuple(int(c) for c in vals))

    @classmethod
    def zeros(cls, d: int) -> "IntegralPoint":
        return cls((0,) * d)

    @property
    def dimension(self) -> int:
        return len(self.coords)

    @property
    def array(self) -> np.ndarray:
        return np.array(self.coords, dtype=float)

    def __len__(self) -> int:
        return len(self.coords)


@runtime_checkable
class PackingDomain(Protocol):
    """A packing polytope Q accessed only through integral membership."""

    @property
    def dimension(self) -> int: ...

    def contains(self, point: IntegralPoint) -> bool: ...


@runtime_checkable
class IntegralityGapVerifier(Protocol):
    alpha: float

    def __call__(self, v: np.ndarray, x_star: np.ndarray) -> IntegralPoint: ...


def check_verifier_output(
    alpha: float, v: np.ndarray, x_star: np.ndarray, x: IntegralPoint
) -> None:
    """Raise ContractError unless v.x >= alpha * v.x_star (relative slack 1e-9)."""
    target = float(np.dot(v, x_star))
    got = float(np.dot(v, x.array))
    if got < alpha * target - 1e-9 * abs(target):
        raise ContractError(
            f"verifier returned value {got!r} < alpha*target = {alpha * target!r}"
        )


def verify_membership(domain: PackingDomain, point: IntegralPoint) -> bool:
    if point.dimension != domain.dimension:
        raise DimensionError(
            f"point has dimension {point.dimension}, domain has {domain.dimension}"
        )
    return bool(domain.contains(point))


def zero_out(domain: PackingDomain, point: IntegralPoint, indices: Iterable[int]) -> IntegralPoint:
    """Set the given coordinates to zero; feasible by downward closure."""
    if point.dimension != domain.dimension:
        raise DimensionError(
            f"point has dimension {point.dimension}, domain has {domain.dimension}"
        )
    drop = set(indices)
    return IntegralPoint(tuple(0 if j in drop else c for j, c in enumerate(point.coords)))


def restrict_to_support(point: IntegralPoint, support: Sequence[int]) -> IntegralPoint:
    keep = set(support)
    return IntegralPoint(tuple(c if j in keep else 0 for j, c in enumerate(point.coords)))


@dataclass(frozen=True)
class ConvexDecomposition:
    terms: tuple[tuple[float, IntegralPoint], ...]

    def __post_init__(self) -> None:
        terms = tuple((float(w), p) for w, p in self.terms)
        object.__setattr__(self, "terms", terms)
        if not terms:
            raise ValueError("empty decomposition")
        if any(w < 0 for w, _ in terms):
            raise ValueError("negative convex weight")
        total = sum(w for w, _ in terms)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {total!r}, expected 1")
        dims = {p.dimension for _, p in terms}
        if len(dims) != 1:
            raise DimensionError("mixed point dimensions in decomposition")

    @property
    def size(self) -> int:
        return sum(1 for w, _ in self.terms if w > 0)

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for w, _ in self.terms])

    @property
    def points(self) -> np.ndarray:
        return np.array([p.coords for _, p in self.terms], dtype=float)

    def mean(self) -> np.ndarray:
        return self.weights @ self.points

    def validate(self, domain: PackingDomain) -> bool:
        return all(verify_membership(domain, p) for _, p in self.terms)


def stable_label_hash(label: str) -> int:
    return zlib.crc32(label.encode("utf-8"))


@dataclass(frozen=True)
class SeededRng:
    """Seed holder that hands out independent, labelled numpy generators.

    Asking twice for the same label (and key) yields generators that produce
    identical sequences, so one subsystem drawing more numbers never shifts
    another subsystem's draws.
    """

    seed: int

    def stream(self, label: str, *keys: int) -> np.random.Generator:
        entropy = [self.seed & 0xFFFFFFFFFFFFFFFF, stable_label_hash(label), *keys]
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
