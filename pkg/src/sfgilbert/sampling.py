"""Marked Poisson point processes on the torus and typical-vertex samplers.

All randomness flows through explicit ``numpy.random.Generator`` objects built
on the counter-based Philox bit generator.  Replication ``r`` of a run seeded
with ``seed`` uses the stream ``stream(seed, r)``, so replications are
independent of each other and of execution order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import CapacityError, FormatError, InfiniteMeanError, ParameterError
from .torus import TorusPoint, canonicalize, unit_ball_volume

DEFAULT_MAX_POINTS = 20_000_000


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Independent Philox stream for ``seed`` and a tuple of integer spawn keys."""
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class ParetoComponent:
    weight: float
    s: float
    beta: float

    @property
    def x_m(self) -> float:
        return self.beta ** (1.0 / self.s)

    def sf(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(t < self.x_m, 1.0, self.beta * np.power(np.maximum(t, self.x_m), -self.s))

    def moment(self, k: float) -> float:
        if k >= self.s:
            return math.inf
        return self.s * self.x_m**k / (self.s - k)

    def power_sf_integral(self, p: float, a: float, b: float) -> float:
        """Closed form of int_a^b u^p P(R > u) du for 0 <= a <= b <= inf."""
        if b <= a:
            return 0.0
        xm = self.x_m
        total = 0.0
        lo, hi = a, min(b, xm)
        if hi > lo:
            total += (hi ** (p + 1) - lo ** (p + 1)) / (p + 1)
        lo, hi = max(a, xm), b
        if hi > lo:
            q = p + 1.0 - self.s
            if math.isinf(hi):
                if q >= 0:
                    return math.inf
                total += self.beta * (-(lo**q)) / q
            elif q == 0:
                total += self.beta * math.log(hi / lo)
            else:
                total += self.beta * (hi**q - lo**q) / q
        return total


@dataclass(frozen=True)
class RadiusLaw:
    """Radius distribution: exact Pareto or a finite mixture of Pareto laws.

    For a single component P(R > t) = beta * t^-s for t >= x_m = beta^(1/s).
    For a mixture the tail index is the smallest component index and the tail
    constant sums the weighted constants of the components attaining it.
    """

    components: Tuple[ParetoComponent, ...]
    kind: str = "pareto"

    def __post_init__(self):
        if not self.components:
            raise ParameterError("radius law needs at least one component")
        for c in self.components:
            if c.s <= 0 or c.beta <= 0 or c.weight <= 0:
                raise ParameterError(f"invalid Pareto component {c}")
        if not math.isclose(sum(c.weight for c in self.components), 1.0, rel_tol=1e-12):
            raise ParameterError("mixture weights must sum to 1")

    @classmethod
    def pareto(cls, s: float, beta: float) -> "RadiusLaw":
        return cls((ParetoComponent(1.0, float(s), float(beta)),), "pareto")

    @classmethod
    def mixture(cls, s: float, beta: float, weight: float, s2: float, beta2: float) -> "RadiusLaw":
        """Pareto(s, beta) with probability 1-weight, Pareto(s2, beta2) otherwise."""
        if not 0 < weight < 1:
            raise ParameterError("mixture weight must lie in (0, 1)")
        return cls(
            (ParetoComponent(1.0 - weight, float(s), float(beta)), ParetoComponent(weight, float(s2), float(beta2))),
            "pareto-mixture",
        )

    @property
    def s(self) -> float:
        return min(c.s for c in self.components)

    @property
    def beta(self) -> float:
        """Tail constant lim t^s P(R > t)."""
        return sum(c.weight * c.beta for c in self.components if c.s == self.s)

    @property
    def x_m(self) -> float:
        return min(c.x_m for c in self.components)

    def sf(self, t):
        return sum(c.weight * c.sf(t) for c in self.components)

    def cdf(self, t):
        return 1.0 - self.sf(t)

    def moment(self, k: float) -> float:
        return sum(c.weight * c.moment(k) for c in self.components)

    def power_sf_integral(self, p: float, a: float, b: float) -> float:
        return sum(c.weight * c.power_sf_integral(p, a, b) for c in self.components)

    def sample(self, rng: np.random.Generator, size=None):
        """Inverse-CDF draws; R = x_m * U^(-1/s) with U uniform on (0, 1]."""
        u = 1.0 - rng.random(size)
        if len(self.components) == 1:
            c = self.components[0]
            return c.x_m * u ** (-1.0 / c.s)
        w = np.cumsum([c.weight for c in self.components])
        pick = np.searchsorted(w, rng.random(size), side="right")
        pick = np.minimum(pick, len(self.components) - 1)
        xm = np.array([c.x_m for c in self.components])[pick]
        s = np.array([c.s for c in self.components])[pick]
        return xm * u ** (-1.0 / s)

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "components": [[c.weight, c.s, c.beta] for c in self.components],
        }

    @classmethod
    def from_description(cls, desc: dict) -> "RadiusLaw":
        comps = tuple(ParetoComponent(float(w), float(s), float(b)) for w, s, b in desc["components"])
        return cls(comps, desc.get("kind", "pareto"))


def sample_radius(law: RadiusLaw, rng: np.random.Generator) -> float:
    return float(law.sample(rng))


@dataclass(frozen=True)
class MarkedPoint:
    id: int
    location: TorusPoint
    radius: float


@dataclass(eq=False)
class SampleInstance:
    """One realization of the marked Poisson process on T_n.

    Point data live in parallel arrays: ``coords`` (N x d), ``radii`` (N,) and
    ``ids`` (N,).  Generated instances use ids 0..N-1.
    """

    d: int
    n: float
    lam: float
    law: RadiusLaw
    seed: Optional[int]
    coords: np.ndarray
    radii: np.ndarray
    ids: np.ndarray = field(default=None)

    def __post_init__(self):
        self.coords = np.ascontiguousarray(np.asarray(self.coords, dtype=float).reshape(-1, self.d))
        self.radii = np.ascontiguousarray(np.asarray(self.radii, dtype=float))
        if self.ids is None:
            self.ids = np.arange(len(self.radii), dtype=np.int64)
        self.ids = np.ascontiguousarray(np.asarray(self.ids, dtype=np.int64))
        if not (len(self.coords) == len(self.radii) == len(self.ids)):
            raise ParameterError("coords, radii and ids must have equal length")
        if self.d < 2:
            raise ParameterError("dimension must be >= 2")
        if np.any(self.radii < 0):
            raise ParameterError("radii must be nonnegative")
        if len(np.unique(self.ids)) != len(self.ids):
            raise ParameterError("point ids must be unique")
        if np.any(np.diff(self.ids) < 0):
            # index order doubles as id order everywhere downstream
            order = np.argsort(self.ids, kind="stable")
            self.ids, self.coords, self.radii = self.ids[order], self.coords[order], self.radii[order]
        self._index = None
        self._rank = None

    def __len__(self) -> int:
        return len(self.radii)

    @property
    def size(self) -> int:
        return len(self.radii)

    def index_of(self, point_id: int) -> int:
        if self._index is None:
            if np.array_equal(self.ids, np.arange(len(self.ids))):
                self._index = False
            else:
                self._index = {int(v): i for i, v in enumerate(self.ids)}
        if self._index is False:
            if 0 <= point_id < len(self.ids):
                return int(point_id)
        elif point_id in self._index:
            return self._index[point_id]
        raise ParameterError(f"unknown vertex id {point_id}")

    @property
    def rank(self) -> np.ndarray:
        """Position of each point in the strict radius order; ties go to the lower id."""
        if self._rank is None:
            order = np.lexsort((-self.ids, self.radii))
            rank = np.empty(len(order), dtype=np.int64)
            rank[order] = np.arange(len(order))
            self._rank = rank
        return self._rank

    def point(self, i: int) -> MarkedPoint:
        return MarkedPoint(int(self.ids[i]), TorusPoint(tuple(self.coords[i]), self.n), float(self.radii[i]))

    def points(self):
        return [self.point(i) for i in range(self.size)]

    def with_points(self, coords, radii, ids=None) -> "SampleInstance":
        return SampleInstance(self.d, self.n, self.lam, self.law, self.seed, coords, radii, ids)


def sample_instance(
    d: int,
    n: float,
    lam: float,
    law: RadiusLaw,
    seed: int,
    *,
    rng: Optional[np.random.Generator] = None,
    max_points: int = DEFAULT_MAX_POINTS,
) -> SampleInstance:
    if d < 2:
        raise ParameterError("dimension must be >= 2")
    if n <= 0 or lam <= 0:
        raise ParameterError("n and lambda must be positive")
    mean = lam * n**d
    if mean > max_points:
        raise CapacityError(f"expected point count {mean:.3g} exceeds max_points={max_points}")
    if rng is None:
        rng = stream(seed)
    count = int(rng.poisson(mean))
    coords = canonicalize(-n / 2.0 + n * rng.random((count, d)), n)
    radii = law.sample(rng, count)
    return SampleInstance(d, float(n), float(lam), law, seed, coords, radii)


def uniform_ball_norms(rng: np.random.Generator, d: int, size) -> np.ndarray:
    """Norms |U| of points uniform in the unit ball of R^d."""
    return rng.random(size) ** (1.0 / d)


def sample_typical_out_sum(
    alpha: float,
    law: RadiusLaw,
    rng: np.random.Generator,
    d: int = 2,
    size=None,
    radius=None,
):
    """Exact draws of the out-sum D_out^(alpha) at the origin of the infinite-volume model.

    Given R* = r, the out-neighbors form a Poisson(kappa_d r^d) number of
    points uniform in B_r(o), so D = r^alpha * sum |U_i|^alpha.  Pass
    ``radius`` to condition on a fixed R*.
    """
    if alpha < 0:
        raise ParameterError("alpha must be nonnegative")
    shape = () if size is None else size
    m = int(np.prod(shape))
    if radius is None:
        r = np.asarray(law.sample(rng, m), dtype=float)
    else:
        r = np.broadcast_to(np.asarray(radius, dtype=float), (m,)).copy()
    counts = rng.poisson(unit_ball_volume(d) * r**d)
    if alpha == 0:
        out = counts.astype(float)
    else:
        total = int(counts.sum())
        norms = uniform_ball_norms(rng, d, total) ** alpha
        owner = np.repeat(np.arange(m), counts)
        out = np.bincount(owner, weights=norms, minlength=m) * r**alpha
    return float(out[0]) if size is None else out.reshape(shape)


def _in_neighbor_distance_icdf(law: RadiusLaw, d: int, rng: np.random.Generator, count: int) -> np.ndarray:
    """Distances |xi| of in-neighbors, density proportional to u^(d-1) P(R > u)."""
    comps = law.components
    masses = np.array([c.weight * c.x_m**d * c.s / (d * (c.s - d)) for c in comps])
    pick = rng.choice(len(comps), size=count, p=masses / masses.sum()) if len(comps) > 1 else np.zeros(count, int)
    out = np.empty(count)
    v = rng.random(count)
    for i, c in enumerate(comps):
        sel = pick == i
        xm, s, b = c.x_m, c.s, c.beta
        inner = xm**d / d
        outer = b * xm ** (d - s) / (s - d)
        u = v[sel] * (inner + outer)
        low = u <= inner
        res = np.empty(len(u))
        res[low] = (d * u[low]) ** (1.0 / d)
        rest = u[~low] - inner
        res[~low] = (xm ** (d - s) - rest * (s - d) / b) ** (1.0 / (d - s))
        out[sel] = res
    return out


def sample_typical_in_sum(alpha: float, law: RadiusLaw, rng: np.random.Generator, d: int = 2, size=None):
    """Exact draws of the in-sum D_in^(alpha) at the origin of the infinite-volume model.

    The points whose balls reach the origin form a Poisson process with mean
    count kappa_d E R^d, and their distances to the origin are i.i.d. with
    density proportional to u^(d-1) P(R > u).
    """
    if alpha < 0:
        raise ParameterError("alpha must be nonnegative")
    if law.s <= d:
        raise InfiniteMeanError(f"in-degree is infinite almost surely for s={law.s} <= d={d}")
    shape = () if size is None else size
    m = int(np.prod(shape))
    mean = unit_ball_volume(d) * law.moment(d)
    counts = rng.poisson(mean, m)
    if alpha == 0:
        out = counts.astype(float)
    else:
        total = int(counts.sum())
        dist = _in_neighbor_distance_icdf(law, d, rng, total)
        owner = np.repeat(np.arange(m), counts)
        out = np.bincount(owner, weights=dist**alpha, minlength=m)
    return float(out[0]) if size is None else out.reshape(shape)


# ---------------------------------------------------------------------------
# point-set files


def _fmt(x: float) -> str:
    return repr(float(x))


def instance_header(inst: SampleInstance) -> str:
    return (
        f"# d={inst.d} n={_fmt(inst.n)} lambda={_fmt(inst.lam)} s={_fmt(inst.law.s)} "
        f"beta={_fmt(inst.law.beta)} seed={inst.seed if inst.seed is not None else 'none'}"
    )


def write_points(inst: SampleInstance, path) -> None:
    with open(path, "w") as fh:
        fh.write(instance_header(inst) + "\n")
        for i in range(inst.size):
            parts = [str(int(inst.ids[i]))] + [_fmt(v) for v in inst.coords[i]] + [_fmt(inst.radii[i])]
            fh.write(" ".join(parts) + "\n")


def parse_header(line: str) -> dict:
    if not line.startswith("#"):
        raise FormatError("missing '#' header line")
    out = {}
    for tok in line[1:].split():
        if "=" not in tok:
            raise FormatError(f"malformed header token {tok!r}")
        k, v = tok.split("=", 1)
        out[k] = v
    return out


def read_points(path) -> SampleInstance:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise FormatError("empty point file")
    head = parse_header(lines[0])
    try:
        d = int(head["d"])
        n = float(head["n"])
        lam = float(head.get("lambda", 1.0))
        law = RadiusLaw.pareto(float(head["s"]), float(head["beta"]))
        seed = None if head.get("seed", "none") == "none" else int(head["seed"])
    except KeyError as exc:
        raise FormatError(f"header missing field {exc}") from None
    rows = [ln.split() for ln in lines[1:] if ln.strip() and not ln.startswith("#")]
    for r in rows:
        if len(r) != d + 2:
            raise FormatError(f"expected {d + 2} columns, got {len(r)}")
    arr = np.array([[float(v) for v in r] for r in rows]).reshape(-1, d + 2)
    ids = arr[:, 0].astype(np.int64)
    return SampleInstance(d, n, lam, law, seed, canonicalize(arr[:, 1 : d + 1], n), arr[:, d + 1], ids)


def instance_from_points(
    points: Sequence[Tuple[Sequence[float], float]], n: float, d: Optional[int] = None, law: Optional[RadiusLaw] = None
) -> SampleInstance:
    """Hand-built instance from ``[(coords, radius), ...]``; ids follow list order."""
    if d is None:
        d = len(points[0][0]) if points else 2
    coords = np.array([p[0] for p in points], dtype=float).reshape(-1, d)
    radii = np.array([p[1] for p in points], dtype=float)
    return SampleInstance(d, float(n), 1.0, law or RadiusLaw.pareto(2.0, 1.0), None, canonicalize(coords, n), radii)
