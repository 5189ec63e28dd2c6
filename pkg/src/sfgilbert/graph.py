"""Scale-free Gilbert graph G and its thinned variant G'.

An edge runs from x = (xi, r) to y = (eta, t) whenever eta lies in the closed
toroidal ball of radius r around xi.  The thinned graph keeps x -> y only if
t < r and no intermediate point (zeta, w) with t < w < r, zeta in B_r(xi)
has eta in its own ball.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from . import _kernels
from .errors import FormatError, ParameterError
from .sampling import SampleInstance, instance_header
from .torus import pairwise_distances

FULL = "full"
THINNED = "thinned"


class SpatialGrid:
    """Uniform grid of cell buckets with toroidal wraparound.

    The torus side is split into ``m = floor(n / cell_side)`` cells per axis
    (at least one), so the realized cell side ``n / m`` is never below the
    requested one.  Points are stored bucket by bucket in ``order`` with CSR
    offsets ``cell_start``.
    """

    def __init__(self, coords, n: float, cell_side: float = 1.0):
        if cell_side <= 0:
            raise ParameterError("cell side must be positive")
        coords = np.asarray(coords, dtype=float)
        self.n = float(n)
        self.d = coords.shape[1]
        self.m = max(1, int(math.floor(n / cell_side)))
        self.cell_side = self.n / self.m
        cells = self.cell_coords(coords)
        lin = np.zeros(len(coords), dtype=np.int64)
        for k in range(self.d):
            lin = lin * self.m + cells[:, k]
        self.order = np.argsort(lin, kind="stable").astype(np.int64)
        counts = np.bincount(lin, minlength=self.m**self.d)
        self.cell_start = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)

    def cell_coords(self, coords) -> np.ndarray:
        c = np.floor((np.asarray(coords, dtype=float) + self.n / 2.0) / self.cell_side).astype(np.int64)
        return np.clip(c, 0, self.m - 1)

    def bucket(self, cell) -> np.ndarray:
        lin = 0
        for c in cell:
            lin = lin * self.m + int(c) % self.m
        return self.order[self.cell_start[lin] : self.cell_start[lin + 1]]


@dataclass(eq=False)
class DirectedGeometricGraph:
    """Directed adjacency over instance point indices, stored as CSR arrays.

    Row ``i`` lists the out-neighbors of point ``i`` sorted by index; indices
    coincide with ids for generated instances.
    """

    instance: SampleInstance
    indptr: np.ndarray
    indices: np.ndarray
    variant: str = FULL
    _sym: Optional[tuple] = field(default=None, repr=False)
    _csr: Optional[sp.csr_matrix] = field(default=None, repr=False)

    @property
    def num_vertices(self) -> int:
        return len(self.indptr) - 1

    @property
    def num_edges(self) -> int:
        return int(self.indptr[-1])

    def out_neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i] : self.indptr[i + 1]]

    def out_degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def in_degrees(self) -> np.ndarray:
        return np.bincount(self.indices, minlength=self.num_vertices)

    def edges(self) -> np.ndarray:
        src = np.repeat(np.arange(self.num_vertices, dtype=np.int64), self.out_degrees())
        return np.column_stack([src, self.indices])

    def edge_set(self) -> set:
        return set(map(tuple, self.edges().tolist()))

    def adjacency(self) -> sp.csr_matrix:
        if self._csr is None:
            nv = self.num_vertices
            data = np.ones(len(self.indices), dtype=np.int8)
            self._csr = sp.csr_matrix((data, self.indices, self.indptr), shape=(nv, nv))
        return self._csr

    def undirected(self):
        """CSR (indptr, indices) of the symmetric closure, edges traversable both ways."""
        if self._sym is None:
            a = self.adjacency()
            s = (a + a.T).tocsr()
            s.sort_indices()
            self._sym = (s.indptr.astype(np.int64), s.indices.astype(np.int64))
        return self._sym


def _grid_for(instance: SampleInstance, cell_side: float) -> SpatialGrid:
    return SpatialGrid(instance.coords, instance.n, cell_side)


def build_full_graph(instance: SampleInstance, cell_side: float = 1.0) -> DirectedGeometricGraph:
    grid = _grid_for(instance, cell_side)
    indptr, indices = _kernels.full_graph_csr(
        instance.coords, instance.radii, instance.n, grid.m, grid.cell_side, grid.order, grid.cell_start
    )
    return DirectedGeometricGraph(instance, indptr, indices, FULL)


def thin(full: DirectedGeometricGraph) -> DirectedGeometricGraph:
    """Thinned graph derived from an already built full graph on the same instance."""
    if full.variant != FULL:
        raise ParameterError("thinning needs the full graph")
    inst = full.instance
    nv = full.num_vertices
    t_indptr, t_indices = _kernels.transpose_csr(full.indptr, full.indices, nv)
    keep = _kernels.thin_mask_by_target(t_indptr, t_indices, inst.rank, inst.coords, inst.radii, inst.n)
    dst = np.repeat(np.arange(nv, dtype=np.int64), np.diff(t_indptr))[keep]
    src = t_indices[keep]
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    indptr = np.concatenate([[0], np.cumsum(np.bincount(src, minlength=nv))]).astype(np.int64)
    return DirectedGeometricGraph(inst, indptr, dst.astype(np.int64), THINNED)


def build_thinned_graph(instance: SampleInstance, cell_side: float = 1.0) -> DirectedGeometricGraph:
    return thin(build_full_graph(instance, cell_side))


def _from_dense(instance: SampleInstance, adj: np.ndarray, variant: str) -> DirectedGeometricGraph:
    src, dst = np.nonzero(adj)
    nv = instance.size
    indptr = np.concatenate([[0], np.cumsum(np.bincount(src, minlength=nv))]).astype(np.int64)
    return DirectedGeometricGraph(instance, indptr, dst.astype(np.int64), variant)


def exhaustive_full_graph(instance: SampleInstance) -> DirectedGeometricGraph:
    """O(N^2) reference construction straight from the edge rule."""
    dist = pairwise_distances(instance.coords, instance.coords, instance.n)
    adj = dist <= instance.radii[:, None]
    np.fill_diagonal(adj, False)
    return _from_dense(instance, adj, FULL)


def exhaustive_thinned_graph(instance: SampleInstance) -> DirectedGeometricGraph:
    """O(N^3) reference construction straight from the thinning rule."""
    nv = instance.size
    dist = pairwise_distances(instance.coords, instance.coords, instance.n)
    rank = instance.rank
    r = instance.radii
    covers = dist <= r[:, None]  # covers[z, y]: y in ball of z
    adj = np.zeros((nv, nv), dtype=bool)
    for x in range(nv):
        in_ball = covers[x].copy()
        in_ball[x] = False
        ys = np.nonzero(in_ball & (rank < rank[x]))[0]
        for y in ys:
            zs = in_ball & (rank > rank[y]) & (rank < rank[x])
            zs[y] = False
            if not np.any(covers[zs, y]):
                adj[x, y] = True
    return _from_dense(instance, adj, THINNED)


def weakly_connected_components(g: DirectedGeometricGraph) -> List[List[int]]:
    """Components of the undirected view as sorted id lists, ordered by smallest id."""
    if g.num_vertices == 0:
        return []
    _, labels = connected_components(g.adjacency(), directed=True, connection="weak")
    ids = g.instance.ids
    groups = {}
    for i, lab in enumerate(labels):
        groups.setdefault(int(lab), []).append(int(ids[i]))
    comps = [sorted(v) for v in groups.values()]
    comps.sort(key=lambda c: c[0])
    return comps


def _edge_lengths(g: DirectedGeometricGraph, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    inst = g.instance
    delta = np.abs(inst.coords[src] - inst.coords[dst])
    delta = np.minimum(delta, inst.n - delta)
    acc = delta[:, 0] ** 2
    for k in range(1, inst.d):
        acc = acc + delta[:, k] ** 2
    return np.sqrt(acc)


def out_edge_power_sum(g: DirectedGeometricGraph, vertex_id: int, alpha: float) -> float:
    i = g.instance.index_of(vertex_id)
    nb = g.out_neighbors(i)
    if alpha == 0:
        return float(len(nb))
    return float(np.sum(_edge_lengths(g, np.full(len(nb), i), nb) ** alpha))


def in_edge_power_sum(g: DirectedGeometricGraph, vertex_id: int, alpha: float) -> float:
    i = g.instance.index_of(vertex_id)
    src = np.repeat(np.arange(g.num_vertices), g.out_degrees())[g.indices == i]
    if alpha == 0:
        return float(len(src))
    return float(np.sum(_edge_lengths(g, src, np.full(len(src), i)) ** alpha))


def all_power_sums(g: DirectedGeometricGraph, alpha: float):
    """Out- and in-sums of alpha-th powers of edge lengths for every vertex at once."""
    nv = g.num_vertices
    src = np.repeat(np.arange(nv, dtype=np.int64), g.out_degrees())
    w = np.ones(len(src)) if alpha == 0 else _edge_lengths(g, src, g.indices) ** alpha
    return np.bincount(src, weights=w, minlength=nv), np.bincount(g.indices, weights=w, minlength=nv)


def write_edges(g: DirectedGeometricGraph, path) -> None:
    ids = g.instance.ids
    e = g.edges()
    with open(path, "w") as fh:
        fh.write(f"# variant={g.variant}\n")
        fh.write(instance_header(g.instance) + "\n")
        for a, b in e:
            fh.write(f"{ids[a]} {ids[b]}\n")


def read_edges(path, instance: SampleInstance) -> DirectedGeometricGraph:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("# variant="):
        raise FormatError("edge list must start with '# variant=<full|thinned>'")
    variant = lines[0].split("=", 1)[1].strip()
    if variant not in (FULL, THINNED):
        raise FormatError(f"unknown variant {variant!r}")
    rows = [ln.split() for ln in lines[1:] if ln.strip() and not ln.startswith("#")]
    nv = instance.size
    adj = np.zeros((0, 2), dtype=np.int64)
    if rows:
        if any(len(r) != 2 for r in rows):
            raise FormatError("edge rows must hold exactly two ids")
        adj = np.array([[instance.index_of(int(a)), instance.index_of(int(b))] for a, b in rows], dtype=np.int64)
    order = np.lexsort((adj[:, 1], adj[:, 0]))
    adj = adj[order]
    indptr = np.concatenate([[0], np.cumsum(np.bincount(adj[:, 0], minlength=nv))]).astype(np.int64)
    return DirectedGeometricGraph(instance, indptr, adj[:, 1].copy(), variant)
