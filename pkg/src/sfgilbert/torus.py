"""Toroidal geometry on T_n = [-n/2, n/2)^d with opposite faces identified.

Coordinates are canonicalized into the half-open range [-n/2, n/2) so that
every location has exactly one representative.  Distances use the
per-coordinate minimal-image convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .errors import ParameterError


def canonicalize(coords, n: float) -> np.ndarray:
    """Map arbitrary real coordinates onto the canonical range [-n/2, n/2)."""
    x = np.asarray(coords, dtype=float)
    y = np.mod(x + n / 2.0, n) - n / 2.0
    # fmod rounding can land exactly on +n/2
    return np.where(y >= n / 2.0, y - n, y)


@dataclass(frozen=True)
class TorusPoint:
    coords: Tuple[float, ...]
    n: float

    def __post_init__(self):
        if self.n <= 0:
            raise ParameterError(f"torus side must be positive, got {self.n}")
        if len(self.coords) < 2:
            raise ParameterError(f"dimension must be >= 2, got {len(self.coords)}")
        c = tuple(float(v) for v in canonicalize(self.coords, self.n))
        object.__setattr__(self, "coords", c)

    @property
    def d(self) -> int:
        return len(self.coords)

    def as_array(self) -> np.ndarray:
        return np.array(self.coords)


def _check_compatible(a: TorusPoint, b: TorusPoint) -> None:
    if a.d != b.d:
        raise ParameterError(f"dimension mismatch: {a.d} vs {b.d}")
    if a.n != b.n:
        raise ParameterError(f"side length mismatch: {a.n} vs {b.n}")


def min_image_delta(a, b, n: float) -> np.ndarray:
    """Absolute per-coordinate minimal-image separation, broadcasting over leading axes."""
    delta = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))
    return np.minimum(delta, n - delta)


def torus_norm(delta) -> np.ndarray:
    """Euclidean norm of minimal-image deltas along the last axis.

    Summation runs coordinate by coordinate so that the compiled graph
    kernels reproduce the exact same rounding.
    """
    delta = np.asarray(delta, dtype=float)
    acc = delta[..., 0] * delta[..., 0]
    for k in range(1, delta.shape[-1]):
        acc = acc + delta[..., k] * delta[..., k]
    return np.sqrt(acc)


def pairwise_distances(x, y, n: float) -> np.ndarray:
    """Toroidal distance matrix between the rows of ``x`` and ``y``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return torus_norm(min_image_delta(x[:, None, :], y[None, :, :], n))


def toroidal_distance(a: TorusPoint, b: TorusPoint) -> float:
    _check_compatible(a, b)
    acc = 0.0
    for u, v in zip(a.coords, b.coords):
        t = abs(u - v)
        t = min(t, a.n - t)
        acc += t * t
    return math.sqrt(acc)


def max_distance(d: int, n: float) -> float:
    """Largest possible toroidal distance, attained at the antipodal corner."""
    return math.sqrt(d) * n / 2.0


def ball_contains(center: TorusPoint, radius: float, query: TorusPoint) -> bool:
    if radius < 0:
        raise ParameterError(f"radius must be nonnegative, got {radius}")
    _check_compatible(center, query)
    if radius >= max_distance(center.d, center.n):
        return True
    return toroidal_distance(center, query) <= radius


def unit_ball_volume(d: int) -> float:
    """Volume kappa_d of the unit ball in R^d."""
    if d < 1:
        raise ParameterError(f"dimension must be >= 1, got {d}")
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


@dataclass(frozen=True)
class DyadicCubeIndex:
    """Address of a level-m dyadic subcube; ``digits[j]`` is the j-th refinement step."""

    digits: Tuple[Tuple[int, ...], ...] = ()
    d: int = 2

    def __post_init__(self):
        if self.d < 1:
            raise ParameterError(f"dimension must be >= 1, got {self.d}")
        digits = tuple(tuple(int(v) for v in step) for step in self.digits)
        for step in digits:
            if len(step) != self.d or any(v not in (0, 1) for v in step):
                raise ParameterError(f"malformed dyadic digit {step} for d={self.d}")
        object.__setattr__(self, "digits", digits)

    @property
    def level(self) -> int:
        return len(self.digits)

    def children(self):
        for k in range(2 ** self.d):
            step = tuple((k >> (self.d - 1 - j)) & 1 for j in range(self.d))
            yield DyadicCubeIndex(self.digits + (step,), self.d)

    def integer_coords(self) -> Tuple[int, ...]:
        """Cube position on the level-m lattice, i.e. sum_j i_j 2^(m-j) per axis."""
        m = self.level
        out = [0] * self.d
        for j, step in enumerate(self.digits, start=1):
            for a in range(self.d):
                out[a] += step[a] << (m - j)
        return tuple(out)

    @classmethod
    def from_integer_coords(cls, coords: Sequence[int], level: int) -> "DyadicCubeIndex":
        d = len(coords)
        for c in coords:
            if not 0 <= c < 2 ** level:
                raise ParameterError(f"cube coordinate {c} outside level {level}")
        digits = tuple(
            tuple((int(c) >> (level - j)) & 1 for c in coords) for j in range(1, level + 1)
        )
        return cls(digits, d)


@dataclass(frozen=True)
class Box:
    lower: Tuple[float, ...]
    side: float

    @property
    def upper(self) -> Tuple[float, ...]:
        return tuple(v + self.side for v in self.lower)

    def volume(self) -> float:
        return self.side ** len(self.lower)

    def contains(self, point) -> bool:
        """Half-open membership, lower faces closed."""
        p = np.asarray(point, dtype=float)
        lo = np.asarray(self.lower)
        return bool(np.all(p >= lo) and np.all(p < lo + self.side))


def dyadic_cube(index: DyadicCubeIndex, n: float) -> Box:
    lower = [-n / 2.0] * index.d
    for j, step in enumerate(index.digits, start=1):
        for a in range(index.d):
            lower[a] += n * 2.0 ** (-j) * step[a]
    return Box(tuple(lower), n * 2.0 ** (-index.level))


def cube_coords_of(points, n: float, level: int) -> np.ndarray:
    """Integer level-``level`` cube coordinates of canonical points (lower-closed boxes)."""
    p = np.asarray(points, dtype=float)
    side = n / 2 ** level
    c = np.floor((p + n / 2.0) / side).astype(np.int64)
    return np.clip(c, 0, 2 ** level - 1)


def boxes_intersect_on_torus(a: Box, b: Box, n: float) -> bool:
    """Closed-box intersection after identifying opposite faces of the torus."""
    for lo_a, lo_b in zip(a.lower, b.lower):
        hit = False
        for shift in (-n, 0.0, n):
            lo = lo_b + shift
            if lo <= lo_a + a.side and lo_a <= lo + b.side:
                hit = True
                break
        if not hit:
            return False
    return True
