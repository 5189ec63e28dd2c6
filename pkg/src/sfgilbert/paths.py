"""Chemical distances, diameters and connectivity summaries.

Edges are traversed in both directions unless ``directed=True`` is passed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .errors import EmptyDomainError, ParameterError
from .graph import DirectedGeometricGraph
from .sampling import SampleInstance
from .torus import TorusPoint, canonicalize, min_image_delta, torus_norm

EXACT_DIAMETER_MAX_VERTICES = 20_000


@dataclass(frozen=True)
class DistanceResult:
    source: int
    target: int
    hops: Optional[int]
    path: Optional[tuple] = None

    @property
    def reachable(self) -> bool:
        return self.hops is not None


@dataclass(frozen=True)
class DiameterResult:
    value: Optional[int]
    connected: bool
    exact: bool
    roots: int

    @property
    def is_lower_bound(self) -> bool:
        return not self.exact


def _traversal(g: DirectedGeometricGraph, directed: bool):
    if directed:
        return g.indptr, g.indices
    return g.undirected()


class _PairSearcher:
    """Reusable scratch space for many single-pair BFS queries on one graph."""

    def __init__(self, g: DirectedGeometricGraph, directed: bool = False):
        self.g = g
        self.indptr, self.indices = _traversal(g, directed)
        nv = g.num_vertices
        self.parent = -np.ones(nv, dtype=np.int64)
        self.dist = -np.ones(nv, dtype=np.int64)

    def hops(self, a: int, b: int, limit: Optional[int] = None):
        lim = np.iinfo(np.int64).max if limit is None else int(limit)
        h, path = _kernels.bfs_pair(self.indptr, self.indices, a, b, lim, self.parent, self.dist)
        return (None if h < 0 else int(h)), path


def chemical_distance(
    g: DirectedGeometricGraph, a: int, b: int, *, directed: bool = False, with_path: bool = True
) -> DistanceResult:
    inst = g.instance
    ia, ib = inst.index_of(a), inst.index_of(b)
    h, path = _PairSearcher(g, directed).hops(ia, ib)
    p = tuple(int(inst.ids[v]) for v in path) if (with_path and h is not None) else None
    return DistanceResult(int(a), int(b), h, p)


def nearest_point(instance: SampleInstance, location) -> int:
    """Id of the point closest to ``location`` in toroidal distance; ties go to the lowest id."""
    if instance.size == 0:
        raise EmptyDomainError("nearest point of an empty instance")
    loc = location.as_array() if isinstance(location, TorusPoint) else canonicalize(location, instance.n)
    if len(loc) != instance.d:
        raise ParameterError("location dimension does not match instance")
    dist = torus_norm(min_image_delta(instance.coords, loc[None, :], instance.n))
    return int(instance.ids[int(np.argmin(dist))])


def diameter(
    g: DirectedGeometricGraph,
    *,
    sampled: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    directed: bool = False,
) -> DiameterResult:
    """Exact diameter via all-sources BFS, or a lower bound from ``sampled`` random roots.

    A disconnected graph yields ``value=None`` and ``connected=False``.
    """
    nv = g.num_vertices
    if nv <= 1:
        return DiameterResult(0, True, True, nv)
    indptr, indices = _traversal(g, directed)
    if sampled is None:
        if nv > EXACT_DIAMETER_MAX_VERTICES:
            raise ParameterError(f"exact diameter limited to {EXACT_DIAMETER_MAX_VERTICES} vertices; use sampled mode")
        sources = np.arange(nv, dtype=np.int64)
        exact = True
    else:
        rng = rng or np.random.default_rng(0)
        k = min(int(sampled), nv)
        sources = np.sort(rng.choice(nv, size=k, replace=False)).astype(np.int64)
        exact = k == nv
    # bitset frontiers win once the edge count exceeds about N^2 / 64 word operations
    if len(indices) > nv * nv / 64:
        ecc = _kernels.eccentricities_bitset(indptr, indices, sources)
    else:
        ecc = _kernels.eccentricities_csr(indptr, indices, sources)
    if np.any(ecc < 0):
        return DiameterResult(None, False, exact, len(sources))
    return DiameterResult(int(ecc.max()), True, exact, len(sources))


def crossing_distance(instance: SampleInstance, g: DirectedGeometricGraph) -> DistanceResult:
    """Hops between the points nearest to -n e_1 / 4 and n e_1 / 4."""
    e1 = np.zeros(instance.d)
    e1[0] = instance.n / 4.0
    a = nearest_point(instance, -e1)
    b = nearest_point(instance, e1)
    return chemical_distance(g, a, b, with_path=False)


def isolated_fraction(g: DirectedGeometricGraph) -> float:
    nv = g.num_vertices
    if nv == 0:
        return 0.0
    iso = (g.out_degrees() == 0) & (g.in_degrees() == 0)
    return float(np.mean(iso))


DISTANCE_COLUMNS = ["seed", "n", "source", "target", "hops", "reachable"]


def write_distance_rows(path, rows: Sequence[tuple]) -> None:
    """Rows are ``(seed, n, DistanceResult)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DISTANCE_COLUMNS)
        for seed, n, res in rows:
            w.writerow([seed, repr(float(n)), res.source, res.target, "" if res.hops is None else res.hops, int(res.reachable)])
