"""Dyadic backbone, Galton-Watson comparison and toroidal descending chains."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy import stats
from scipy.sparse.csgraph import connected_components

from . import _kernels
from .errors import ParameterError
from .graph import DirectedGeometricGraph, build_full_graph
from .paths import _PairSearcher
from .sampling import SampleInstance
from .torus import DyadicCubeIndex, cube_coords_of


def domination_threshold(d: int) -> float:
    """Smallest tail constant beta for which the backbone is compared to a subcritical GW process."""
    return d ** (d / 2.0) * 2 ** (2 * d + 1) * (d + 1) * math.log(2.0)


def radius_window(d: int, n: float, level: int):
    """Open radius interval qualifying a point to cover a level-``level`` cube."""
    return math.sqrt(d) * 2.0 ** (-level + 1) * n, math.sqrt(d) * 2.0 ** (-level + 2) * n


def depth_cap(d: int, n: float, t0: float) -> int:
    return int(math.floor(math.log(2 * math.sqrt(d) * n / t0) / math.log(2)))


@dataclass
class BackboneResult:
    terminated: bool
    depth: int
    examined_counts: List[int]
    retained_counts: List[int]
    discarded_counts: List[int]
    backbone: np.ndarray  # point ids, one per discarded cube
    backbone_levels: np.ndarray
    backbone_cubes: List[DyadicCubeIndex] = field(default_factory=list)

    @property
    def backbone_size(self) -> int:
        return len(self.backbone)

    @property
    def diameter_bound(self) -> int:
        return 2 + len(self.backbone)

    @property
    def total_retained(self) -> int:
        return int(sum(self.retained_counts))


def _codes(cells: np.ndarray, level: int) -> np.ndarray:
    base = np.int64(2) ** level
    out = np.zeros(len(cells), dtype=np.int64)
    for a in range(cells.shape[1]):
        out = out * base + cells[:, a]
    return out


def _children(cells: np.ndarray, d: int) -> np.ndarray:
    offsets = np.array([[(k >> (d - 1 - j)) & 1 for j in range(d)] for k in range(2**d)], dtype=np.int64)
    return (2 * cells[:, None, :] + offsets[None, :, :]).reshape(-1, d)


def build_backbone(instance: SampleInstance, cap: Optional[int] = None) -> BackboneResult:
    """Level-by-level dyadic cover of the torus by qualifying balls.

    A retained cube at level k is discarded when some point inside it has a
    radius in the level-k window; the lowest-id such point joins the
    backbone.  Children of the remaining cubes are examined at level k+1
    until nothing is retained or the depth cap is exceeded.
    """
    d, n = instance.d, instance.n
    if cap is None:
        cap = depth_cap(d, n, instance.law.x_m)
    empty = BackboneResult(False, 0, [], [], [], np.zeros(0, np.int64), np.zeros(0, np.int64))
    if instance.size == 0:
        return empty
    retained = np.zeros((1, d), dtype=np.int64)
    examined, kept, dropped = [], [], []
    bb_ids, bb_levels, bb_cubes = [], [], []
    order = np.argsort(instance.ids, kind="stable")
    for level in range(cap + 1):
        lo, hi = radius_window(d, n, level)
        r = instance.radii[order]
        q = order[(r > lo) & (r < hi)]  # qualifying points, ascending id
        q_codes = _codes(cube_coords_of(instance.coords[q], n, level), level)
        cube_codes = _codes(retained, level)
        hit = np.isin(cube_codes, q_codes)
        if hit.any():
            # first occurrence in id order gives the lowest-id representative
            uniq, first = np.unique(q_codes, return_index=True)
            reps = q[first[np.searchsorted(uniq, cube_codes[hit])]]
            bb_ids.extend(instance.ids[reps].tolist())
            bb_levels.extend([level] * len(reps))
            bb_cubes.extend(DyadicCubeIndex.from_integer_coords(c, level) for c in retained[hit])
        examined.append(len(retained))
        dropped.append(int(hit.sum()))
        kept.append(int((~hit).sum()))
        retained = retained[~hit]
        if len(retained) == 0:
            return BackboneResult(
                True, level, examined, kept, dropped, np.array(bb_ids, np.int64), np.array(bb_levels, np.int64), bb_cubes
            )
        if level < cap:
            retained = _children(retained, d)
    return BackboneResult(
        False, cap, examined, kept, dropped, np.array(bb_ids, np.int64), np.array(bb_levels, np.int64), bb_cubes
    )


def verify_backbone(instance: SampleInstance, g: DirectedGeometricGraph, result: BackboneResult) -> bool:
    """True iff every point touches the backbone by an edge and the backbone is connected in G."""
    if not result.terminated:
        raise ParameterError("backbone verification needs a terminated construction")
    nv = instance.size
    if nv == 0:
        return True
    member = np.zeros(nv, dtype=bool)
    idx = np.array([instance.index_of(int(v)) for v in result.backbone], dtype=np.int64)
    if len(idx) == 0:
        return False
    member[idx] = True
    indptr, indices = g.undirected()
    sym = sp.csr_matrix((np.ones(len(indices), dtype=np.int8), indices, indptr), shape=(nv, nv))
    touches = np.asarray(sym @ member.astype(np.int64)).ravel() > 0
    if not np.all(touches | member):
        return False
    sub = sym[idx][:, idx]
    ncomp, _ = connected_components(sub, directed=False)
    return ncomp == 1


def backbone_count_identity_holds(result: BackboneResult, d: int) -> bool:
    """#B equals the discarded-cube count and each level splits 2^d children of the previous retained set."""
    if len(result.backbone) != sum(result.discarded_counts):
        return False
    for k in range(1, len(result.examined_counts)):
        if result.examined_counts[k] != 2**d * result.retained_counts[k - 1]:
            return False
    later = sum(result.discarded_counts[1:])
    return later <= 2**d * sum(result.retained_counts)


# ---------------------------------------------------------------------------
# Galton-Watson comparison


def gw_offspring_probability(d: int) -> float:
    return 2.0 ** (-d - 1)


def gw_total_progeny(d: int, rng: np.random.Generator, cap: int = 10**6):
    """Total progeny of one GW tree with Binomial(2^d, 2^(-d-1)) offspring.

    Returns ``(T, capped)``; when the running total exceeds ``cap`` the
    simulation stops and ``capped`` is True.
    """
    if cap <= 0:
        raise ParameterError("cap must be positive")
    p = gw_offspring_probability(d)
    total, alive = 1, 1
    while alive > 0:
        alive = int(rng.binomial(2**d * alive, p))
        total += alive
        if total > cap:
            return total, True
    return total, False


@dataclass
class ProgenySample:
    totals: np.ndarray
    capped: np.ndarray
    children: int
    individuals: int

    @property
    def offspring_mean(self) -> float:
        return self.children / self.individuals

    def offspring_mean_stderr(self, d: int) -> float:
        p = gw_offspring_probability(d)
        return math.sqrt(2**d * p * (1 - p) / self.individuals)


def gw_total_progeny_many(d: int, rng: np.random.Generator, runs: int, cap: int = 10**6) -> ProgenySample:
    """Vectorized version of ``gw_total_progeny`` over independent trees."""
    p = gw_offspring_probability(d)
    totals = np.ones(runs, dtype=np.int64)
    alive = np.ones(runs, dtype=np.int64)
    capped = np.zeros(runs, dtype=bool)
    children = 0
    individuals = 0
    while True:
        active = (alive > 0) & ~capped
        if not active.any():
            break
        individuals += int(alive[active].sum())
        born = rng.binomial(2**d * alive[active], p)
        children += int(born.sum())
        alive[active] = born
        totals[active] += born
        capped |= totals > cap
    return ProgenySample(totals, capped, children, individuals)


@dataclass
class DominationReport:
    d: int
    beta: float
    threshold: float
    above_threshold: bool
    level_retention: List[float]
    level_stderr: List[float]
    level_examined: List[int]
    retention_bound: float
    retention_ok: bool
    ks_statistic: float
    ks_pvalue: float
    domination_violated: bool
    warnings: List[str]


def domination_check(
    results: Sequence[BackboneResult],
    d: int,
    beta: float,
    rng: np.random.Generator,
    gw_runs: int = 100_000,
    significance: float = 1e-3,
) -> DominationReport:
    """Empirical check of the two ingredients of the GW coupling.

    Per level, the pooled fraction of examined cubes that stay retained is
    compared with 2^(-d-1) (+3 standard errors), and the run totals of
    retained cubes are tested against simulated GW total progeny for a
    violation of stochastic domination (one-sided two-sample KS).
    """
    thr = domination_threshold(d)
    warnings = []
    if beta <= thr:
        warnings.append(f"beta={beta} is below the threshold {thr:.2f}; the retention bound is not guaranteed")
    depth = max((len(r.examined_counts) for r in results), default=0)
    bound = gw_offspring_probability(d)
    rates, errs, exam = [], [], []
    ok = True
    for k in range(depth):
        e = sum(r.examined_counts[k] for r in results if len(r.examined_counts) > k)
        kept = sum(r.retained_counts[k] for r in results if len(r.retained_counts) > k)
        p = kept / e if e else 1.0
        se = math.sqrt(p * (1 - p) / e) if e else 0.0
        rates.append(p)
        errs.append(se)
        exam.append(e)
        ok &= p <= bound + 3 * se
    retained_totals = np.array([r.total_retained for r in results], dtype=float)
    gw = gw_total_progeny_many(d, rng, gw_runs).totals.astype(float)
    if len(retained_totals):
        ks = stats.ks_2samp(retained_totals, gw, alternative="less")
        stat, pval = float(ks.statistic), float(ks.pvalue)
    else:
        stat, pval = 0.0, 1.0
    return DominationReport(
        d, beta, thr, beta > thr, rates, errs, exam, bound, bool(ok), stat, pval, pval < significance, warnings
    )


# ---------------------------------------------------------------------------
# descending chains


@dataclass(frozen=True)
class DescendingChain:
    ids: tuple

    def __len__(self) -> int:
        return len(self.ids)


def chain_lengths(instance: SampleInstance, g: Optional[DirectedGeometricGraph] = None):
    """Per-point length of the longest descending chain starting there, plus successor links."""
    if g is None:
        g = build_full_graph(instance)
    return _kernels.longest_chain_dp(g.indptr, g.indices, instance.rank)


def longest_descending_chain(instance: SampleInstance, g: Optional[DirectedGeometricGraph] = None) -> DescendingChain:
    """Longest sequence with strictly decreasing radii, each point inside the previous ball."""
    if instance.size == 0:
        return DescendingChain(())
    length, nxt = chain_lengths(instance, g)
    v = int(np.argmax(length))
    out = []
    while v >= 0:
        out.append(int(instance.ids[v]))
        v = int(nxt[v])
    return DescendingChain(tuple(out))


def is_descending_chain(instance: SampleInstance, chain: DescendingChain) -> bool:
    from .torus import torus_norm, min_image_delta

    idx = [instance.index_of(v) for v in chain.ids]
    rank = instance.rank
    for a, b in zip(idx, idx[1:]):
        if rank[b] >= rank[a]:
            return False
        dist = float(torus_norm(min_image_delta(instance.coords[a], instance.coords[b], instance.n)))
        if dist > instance.radii[a]:
            return False
    return True


@dataclass
class HopInflationReport:
    n: float
    pairs: int
    max_hops: int
    mean_hops: float
    unreachable: int
    longest_chain: int
    bound_violations: int  # pairs whose G' distance exceeds the chain length from the larger endpoint

    @property
    def ratio_to_log_n(self) -> float:
        return self.max_hops / math.log(self.n)

    @property
    def within_chain_bound(self) -> bool:
        return self.unreachable == 0 and self.bound_violations == 0 and self.max_hops <= self.longest_chain


def hop_inflation_experiment(
    instance: SampleInstance,
    g_full: DirectedGeometricGraph,
    g_thin: DirectedGeometricGraph,
    sample_size: int,
    rng: np.random.Generator,
) -> HopInflationReport:
    """G' hop counts between endpoints of sampled G edges, against descending-chain lengths."""
    if g_full.instance is not instance or g_thin.instance is not instance:
        raise ParameterError("graphs must be built from the given instance")
    e = g_full.edges()
    length, _ = chain_lengths(instance, g_full)
    longest = int(length.max()) if len(length) else 0
    if len(e) == 0:
        return HopInflationReport(instance.n, 0, 0, 0.0, 0, longest, 0)
    pick = rng.choice(len(e), size=min(sample_size, len(e)), replace=False)
    search = _PairSearcher(g_thin)
    rank = instance.rank
    hops, unreachable, violations = [], 0, 0
    for a, b in e[np.sort(pick)]:
        h, _ = search.hops(int(a), int(b))
        if h is None:
            unreachable += 1
            continue
        hops.append(h)
        top = a if rank[a] > rank[b] else b
        violations += h > length[top]
    hops = np.array(hops, dtype=np.int64)
    return HopInflationReport(
        instance.n,
        len(pick),
        int(hops.max()) if len(hops) else 0,
        float(hops.mean()) if len(hops) else 0.0,
        unreachable,
        longest,
        int(violations),
    )
