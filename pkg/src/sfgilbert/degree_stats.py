"""Tail estimation for typical-vertex power sums and Campbell-integral oracles.

The out-sum D_out^(alpha) is the sum of alpha-th powers of edge lengths leaving
a typical vertex, the in-sum D_in^(alpha) the same over entering edges.  Their
tails and torus means are compared against closed-form predictions here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, stats

from .errors import EstimationError, InfiniteMeanError, ParameterError
from .graph import build_full_graph, out_edge_power_sum, thin
from .sampling import (
    RadiusLaw,
    SampleInstance,
    sample_instance,
    sample_typical_in_sum,
    sample_typical_out_sum,
    stream,
)
from .torus import canonicalize, torus_norm, unit_ball_volume

LOGLOG = "loglog-ccdf"
HILL = "hill"
DEFAULT_WINDOW = (0.90, 0.999)
CONSTANT_WINDOW = (0.99, 0.9999)
MIN_TAIL_SAMPLES = 1000
LIGHT_TAIL_INDEX = 4.0


@dataclass(frozen=True)
class TailEstimate:
    index_hat: float
    scale_hat: float
    stderr: float
    method: str
    window: Tuple[float, float]
    n_samples: int


def _sorted_tail_sample(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=float).ravel()
    if len(x) < MIN_TAIL_SAMPLES:
        raise EstimationError(f"need at least {MIN_TAIL_SAMPLES} samples, got {len(x)}")
    if not np.all(np.isfinite(x)) or np.any(x < 0):
        raise EstimationError("samples must be finite and nonnegative")
    if np.all(x == x[0]):
        raise EstimationError("all samples are equal; no tail to fit")
    return np.sort(x)


def _window_slice(nsamp: int, window) -> slice:
    lo, hi = window
    if not 0 < lo < hi < 1:
        raise ParameterError(f"window must satisfy 0 < lo < hi < 1, got {window}")
    a, b = int(lo * nsamp), int(hi * nsamp)
    if b - a < 10:
        raise EstimationError("window holds fewer than 10 order statistics")
    return slice(a, b)


def empirical_ccdf(samples) -> Tuple[np.ndarray, np.ndarray]:
    """Sorted values and P(X >= x_i) estimated as 1 - i/N."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    return x, 1.0 - np.arange(len(x)) / len(x)


def estimate_tail_index(samples, method: str = LOGLOG, window=DEFAULT_WINDOW) -> TailEstimate:
    """Fit P(X > t) ~ C t^-index.

    ``loglog-ccdf`` regresses log CCDF on log value over the quantile
    window; ``hill`` uses the top floor(sqrt(N)) order statistics.  The scale
    is the constant C.
    """
    x = _sorted_tail_sample(samples)
    nsamp = len(x)
    if method == LOGLOG:
        sl = _window_slice(nsamp, window)
        ccdf = 1.0 - np.arange(nsamp) / nsamp
        lx, ly = np.log(x[sl]), np.log(ccdf[sl])
        if not np.all(np.isfinite(lx)):
            raise EstimationError("window reaches zero-valued samples; raise its lower quantile")
        if np.all(lx == lx[0]):
            raise EstimationError("window holds a single distinct value")
        fit = stats.linregress(lx, ly)
        index = -fit.slope
        if index <= 0:
            raise EstimationError("fitted CCDF slope is not decreasing")
        return TailEstimate(float(index), float(math.exp(fit.intercept)), float(fit.stderr), LOGLOG, tuple(window), nsamp)
    if method == HILL:
        k = int(math.floor(math.sqrt(nsamp)))
        top = x[::-1]
        ref = top[k]
        if ref <= 0:
            raise EstimationError("Hill estimator needs positive order statistics")
        gamma = float(np.mean(np.log(top[:k] / ref)))
        if gamma <= 0:
            raise EstimationError("Hill estimator degenerate on tied upper order statistics")
        index = 1.0 / gamma
        scale = (k / nsamp) * ref**index
        return TailEstimate(index, float(scale), index / math.sqrt(k), HILL, (1.0 - k / nsamp, 1.0), nsamp)
    raise ParameterError(f"unknown tail method {method!r}")


def fixed_index_constant(samples, index: float, window=CONSTANT_WINDOW) -> float:
    """Geometric mean of t^index * P(X >= t) over the window, for a known index."""
    x = _sorted_tail_sample(samples)
    sl = _window_slice(len(x), window)
    ccdf = 1.0 - np.arange(len(x)) / len(x)
    return float(np.exp(np.mean(index * np.log(x[sl]) + np.log(ccdf[sl]))))


@dataclass
class TailExperiment:
    kind: str
    d: int
    s: float
    beta: float
    alpha: float
    estimate: TailEstimate
    hill: Optional[TailEstimate]
    predicted_index: float
    predicted_constant: float
    constant_hat: float
    constant_window: Tuple[float, float]
    warnings: List[str] = field(default_factory=list)
    samples: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def index_error(self) -> float:
        return abs(self.estimate.index_hat / self.predicted_index - 1.0)

    @property
    def constant_error(self) -> float:
        return abs(self.constant_hat / self.predicted_constant - 1.0)

    def index_ok(self, tol: float = 0.15) -> bool:
        return self.index_error <= tol

    def constant_ok(self, tol: float = 0.30) -> bool:
        return self.constant_error <= tol


def out_tail_prediction(d: int, s: float, beta: float, alpha: float) -> Tuple[float, float]:
    index = s / (alpha + d)
    return index, (d * unit_ball_volume(d) / (alpha + d)) ** index * beta


def in_tail_prediction(d: int, s: float, beta: float, alpha: float) -> Tuple[float, float]:
    return (s - d) / alpha, d * unit_ball_volume(d) * beta / (s - d)


def _tail_experiment(kind, x, d, s, beta, alpha, pred, window, constant_window, keep_samples) -> TailExperiment:
    index, const = pred
    warnings = []
    if index > LIGHT_TAIL_INDEX:
        warnings.append(f"predicted index {index:.3g} exceeds {LIGHT_TAIL_INDEX}; tail too light for the fitting window")
    est = estimate_tail_index(x, LOGLOG, window)
    try:
        hill = estimate_tail_index(x, HILL)
    except EstimationError:
        hill = None
    c_hat = fixed_index_constant(x, index, constant_window)
    return TailExperiment(
        kind, d, s, beta, alpha, est, hill, index, const, c_hat, tuple(constant_window), warnings,
        x if keep_samples else None,
    )


def out_sum_tail_experiment(
    d: int,
    s: float,
    beta: float,
    alpha: float,
    N: int,
    rng: np.random.Generator,
    window=DEFAULT_WINDOW,
    constant_window=CONSTANT_WINDOW,
    keep_samples: bool = False,
) -> TailExperiment:
    """Index fit and constant check for N exact typical-vertex out-sums.

    The constant is read off with the exponent fixed at its predicted value,
    over a deeper quantile window where the limiting prefactor has settled.
    """
    if N < 10_000:
        raise ParameterError("tail experiments need N >= 10^4")
    law = RadiusLaw.pareto(s, beta)
    x = sample_typical_out_sum(alpha, law, rng, d=d, size=N)
    pred = out_tail_prediction(d, s, beta, alpha)
    return _tail_experiment("out", x, d, s, beta, alpha, pred, window, constant_window, keep_samples)


@dataclass
class PoissonCheck:
    mean: float
    stderr: float
    predicted_mean: float
    chi2: float
    dof: int
    pvalue: float

    def mean_ok(self, z: float = 3.0) -> bool:
        return abs(self.mean - self.predicted_mean) <= z * self.stderr

    def gof_ok(self, significance: float = 1e-3) -> bool:
        return self.pvalue >= significance


def poisson_gof(counts, mean: float, min_expected: float = 5.0) -> PoissonCheck:
    """Chi-square goodness of fit of integer counts to Poisson(mean), pooling sparse cells."""
    k = np.asarray(counts).astype(np.int64)
    nsamp = len(k)
    top = int(stats.poisson.ppf(1 - 1e-12, mean)) + 1
    probs = stats.poisson.pmf(np.arange(top), mean)
    obs = np.bincount(np.minimum(k, top), minlength=top + 1)[: top + 1]
    probs = np.append(probs, stats.poisson.sf(top - 1, mean))
    # pool cells from both ends until each expected count reaches min_expected
    cells_obs, cells_exp = [], []
    acc_o, acc_e = 0, 0.0
    for o, p in zip(obs, probs):
        acc_o += o
        acc_e += p * nsamp
        if acc_e >= min_expected:
            cells_obs.append(acc_o)
            cells_exp.append(acc_e)
            acc_o, acc_e = 0, 0.0
    if acc_e > 0 or acc_o > 0:
        cells_obs[-1] += acc_o
        cells_exp[-1] += acc_e
    cells_exp = np.array(cells_exp)
    cells_exp *= nsamp / cells_exp.sum()
    res = stats.chisquare(cells_obs, cells_exp)
    return PoissonCheck(
        float(k.mean()), float(k.std(ddof=1) / math.sqrt(nsamp)), float(mean), float(res.statistic),
        len(cells_obs) - 1, float(res.pvalue),
    )


def in_sum_tail_experiment(
    d: int,
    s: float,
    beta: float,
    alpha: float,
    N: int,
    rng: np.random.Generator,
    window=DEFAULT_WINDOW,
    constant_window=CONSTANT_WINDOW,
    keep_samples: bool = False,
):
    """Index fit and constant check for typical in-sums.

    With alpha = 0 the in-degree is Poisson and a ``PoissonCheck`` is returned
    instead of a tail fit.
    """
    if s <= d:
        raise InfiniteMeanError(f"in-sums are infinite almost surely when s={s} <= d={d}")
    if N < 10_000:
        raise ParameterError("tail experiments need N >= 10^4")
    law = RadiusLaw.pareto(s, beta)
    x = sample_typical_in_sum(alpha, law, rng, d=d, size=N)
    if alpha == 0:
        return poisson_gof(x, unit_ball_volume(d) * law.moment(d))
    pred = in_tail_prediction(d, s, beta, alpha)
    return _tail_experiment("in", x, d, s, beta, alpha, pred, window, constant_window, keep_samples)


# ---------------------------------------------------------------------------
# Campbell oracles


def _corner_d2(h: float, g) -> float:
    """Integral of g(|eta|) over the square [-h, h]^2 outside the disc of radius h.

    A circle of radius u in (h, sqrt(2) h) keeps the angle 2 pi - 8 arccos(h/u)
    inside the square.
    """
    val, _ = integrate.quad(
        lambda u: g(u) * u * (2 * math.pi - 8 * math.acos(h / u)), h, math.sqrt(2) * h, epsrel=1e-10, limit=200
    )
    return val


def _corner_general(d: int, h: float, g) -> float:
    """Same as ``_corner_d2`` for any d, by nested quadrature over one orthant."""

    def last_bounds(*prev):
        r2 = sum(t * t for t in prev)
        return [math.sqrt(max(h * h - r2, 0.0)), h]

    def f(*pt):
        return g(math.sqrt(sum(t * t for t in pt)))

    ranges = [[0.0, h]] * (d - 1) + [last_bounds]
    # nquad orders ranges innermost first; the callable must be innermost
    val, _ = integrate.nquad(f, ranges[::-1], opts={"epsrel": 1e-6, "limit": 100})
    return 2**d * val


def _corner(d: int, h: float, g) -> float:
    return _corner_d2(h, g) if d == 2 else _corner_general(d, h, g)


def campbell_mean_oracle(d: int, n: float, alpha: float, law: RadiusLaw) -> float:
    """E D_in,n^(alpha) = integral over the torus of |eta|^alpha P(R > |eta|).

    The ball of radius n/2 is integrated in closed form; the corners of the
    torus outside it by quadrature.
    """
    if n <= 0 or alpha < 0:
        raise ParameterError("need n > 0 and alpha >= 0")
    h = n / 2.0
    radial = d * unit_ball_volume(d) * law.power_sf_integral(alpha + d - 1, 0.0, h)
    corner = _corner(d, h, lambda u: u**alpha * float(law.sf(u)))
    return radial + corner


def campbell_limit(d: int, alpha: float, law: RadiusLaw) -> float:
    """Infinite-volume mean d kappa_d / (alpha + d) * E R^(alpha + d), finite when s > alpha + d."""
    return d * unit_ball_volume(d) / (alpha + d) * law.moment(alpha + d)


def cube_power_integral(d: int, p: float) -> float:
    """Integral of |eta|^p over the unit cube [-1/2, 1/2]^d, requires p > -d."""
    if p <= -d:
        raise InfiniteMeanError(f"|eta|^{p} is not integrable near the origin in dimension {d}")
    ball = d * unit_ball_volume(d) * 0.5 ** (p + d) / (p + d)
    return ball + _corner(d, 0.5, lambda u: u**p)


REGIME_MOMENT = "moment"
REGIME_LOG = "log"
REGIME_POLY = "polynomial"


def regime_of(d: int, alpha: float, s: float) -> str:
    gap = alpha + d - s
    if gap < 0:
        return REGIME_MOMENT
    if gap == 0:
        return REGIME_LOG
    return REGIME_POLY


def regime_normalizer(regime: str, n: float, d: int, alpha: float, s: float) -> float:
    if regime == REGIME_MOMENT:
        return 1.0
    if regime == REGIME_LOG:
        return 1.0 / math.log(n)
    return n ** (s - alpha - d)


def regime_limit(d: int, alpha: float, law: RadiusLaw) -> float:
    regime = regime_of(d, alpha, law.s)
    if regime == REGIME_MOMENT:
        return campbell_limit(d, alpha, law)
    if regime == REGIME_LOG:
        return d * unit_ball_volume(d) * law.beta
    return law.beta * cube_power_integral(d, alpha - law.s)


def median_of_means(values, blocks: int = 16) -> Tuple[float, float]:
    """Median of block means over consecutive blocks, with a normal-theory standard error."""
    v = np.asarray(values, dtype=float)
    if len(v) < blocks:
        raise EstimationError(f"median of means needs at least {blocks} values")
    means = np.array([b.mean() for b in np.array_split(v, blocks)])
    # asymptotic efficiency of the median relative to the mean is 2/pi
    se = math.sqrt(math.pi / 2) * means.std(ddof=1) / math.sqrt(blocks)
    return float(np.median(means)), float(se)


@dataclass
class RegimeReport:
    d: int
    alpha: float
    s: float
    beta: float
    regime: str
    n_grid: List[float]
    normalized_means: List[float]
    stderr: List[float]
    ci_low: List[float]
    ci_high: List[float]
    oracle: List[float]  # normalized Campbell oracle per n
    limit: float
    replications: int

    def relative_deviation(self, i: int, reference: Optional[float] = None) -> float:
        ref = self.limit if reference is None else reference
        return abs(self.normalized_means[i] / ref - 1.0)


def origin_in_sum(instance: SampleInstance, alpha: float) -> float:
    """In-sum at the origin, the typical point added to the instance."""
    dist = torus_norm(instance.coords)
    hit = dist <= instance.radii
    if alpha == 0:
        return float(np.count_nonzero(hit))
    return float(np.sum(dist[hit] ** alpha))


def vertex_in_sum(instance: SampleInstance, alpha: float, i: int) -> float:
    """In-sum at existing vertex i."""
    c = instance.coords - instance.coords[i]
    shifted = canonicalize(c, instance.n)
    dist = torus_norm(shifted)
    hit = dist <= instance.radii
    hit[i] = False
    if alpha == 0:
        return float(np.count_nonzero(hit))
    return float(np.sum(dist[hit] ** alpha))


def regime_replication(d, n, lam, law, alpha, seed, keys, mode="origin") -> float:
    rng = stream(seed, *keys)
    inst = sample_instance(d, n, lam, law, seed, rng=rng)
    if mode == "origin":
        return origin_in_sum(inst, alpha)
    if inst.size == 0:
        return 0.0
    return vertex_in_sum(inst, alpha, int(rng.integers(inst.size)))


def regime_experiment(
    d: int,
    alpha: float,
    s: float,
    beta: float,
    n_grid: Sequence[float],
    replications: int,
    seed: int = 0,
    mode: str = "origin",
    lam: float = 1.0,
    values: Optional[Sequence[Sequence[float]]] = None,
) -> RegimeReport:
    """Monte Carlo in-sum means per n, normalized for the regime, with oracles.

    ``values`` lets a caller supply precomputed replication values per n (for
    example from a worker pool); otherwise replications run here in order.
    Means are median-of-means over 16 blocks.
    """
    if any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise ParameterError("n grid must be strictly increasing")
    if mode not in ("origin", "vertex"):
        raise ParameterError(f"unknown typical-vertex mode {mode!r}")
    law = RadiusLaw.pareto(s, beta)
    regime = regime_of(d, alpha, s)
    means, errs, lo, hi, orc = [], [], [], [], []
    for j, n in enumerate(n_grid):
        if values is None:
            vals = [regime_replication(d, n, lam, law, alpha, seed, (j, r), mode) for r in range(replications)]
        else:
            vals = values[j]
        m, se = median_of_means(vals)
        c = regime_normalizer(regime, n, d, alpha, s)
        means.append(m * c)
        errs.append(se * c)
        lo.append((m - 1.96 * se) * c)
        hi.append((m + 1.96 * se) * c)
        orc.append(lam * campbell_mean_oracle(d, n, alpha, law) * c)
    return RegimeReport(
        d, alpha, s, beta, regime, list(map(float, n_grid)), means, errs, lo, hi, orc,
        lam * regime_limit(d, alpha, law), replications,
    )


# ---------------------------------------------------------------------------
# out-sums of the thinned graph at a typical vertex


def _origin_neighborhood(d, n, lam, rstar, rng):
    """Poisson points of the torus lying in the closed ball of radius rstar around the origin."""
    rho = min(rstar, n / 2.0)
    count = rng.poisson(lam * (2 * rho) ** d)
    coords = canonicalize(rng.uniform(-rho, rho, size=(count, d)), n)
    keep = torus_norm(coords) <= rstar
    return coords, keep


def thinned_origin_out_sum(d, n, lam, law, alpha, rng, rstar=None) -> Tuple[float, float]:
    """Out-sums of the added origin (o, R*) in G and in G'.

    Only points inside the ball of the origin can be its out-neighbors or
    block one of its edges, so the thinned graph is built on that ball alone.
    """
    if rstar is None:
        rstar = float(law.sample(rng))
    coords, keep = _origin_neighborhood(d, n, lam, rstar, rng)
    radii = law.sample(rng, len(coords))
    coords, radii = coords[keep], radii[keep]
    dist = torus_norm(coords)
    full = float(len(dist)) if alpha == 0 else float(np.sum(dist**alpha))
    inst = SampleInstance(
        d, n, lam, law, None, np.vstack([np.zeros((1, d)), coords]), np.concatenate([[rstar], radii])
    )
    g = thin(build_full_graph(inst))
    return full, out_edge_power_sum(g, 0, alpha)


def full_origin_out_sum_is(d, n, lam, law, alpha, rng) -> Tuple[float, float]:
    """Importance-sampled out-sum of the origin in G, returned as (value, weight).

    R* is drawn from an equal-weight mixture of its own law, a log-uniform
    law on [x_m, sqrt(d) n / 2] and its own law conditioned to exceed
    sqrt(d) n / 2; the weight is the density ratio.  The tail of R* beyond
    n/2 is what drives the mean, and plain draws reach it too rarely.
    """
    xm = law.x_m
    top = math.sqrt(d) * n / 2.0
    span = math.log(top / xm)
    beyond = float(law.sf(top))
    pick = rng.integers(3)
    if pick == 0:
        r = float(law.sample(rng))
    elif pick == 1:
        r = xm * math.exp(span * rng.random())
    else:
        # inverse CDF of the law restricted to (top, inf)
        r = _radius_quantile(law, 1.0 - beyond * (1.0 - rng.random()))
    p = _radius_density(law, r)
    q = p / 3.0
    if r <= top:
        q += 1.0 / (3.0 * r * span)
    else:
        q += p / (3.0 * beyond)
    if alpha == 0 and r >= top:
        # the ball covers the torus, so the degree is the whole Poisson count
        return float(rng.poisson(lam * n**d)), p / q
    coords, keep = _origin_neighborhood(d, n, lam, r, rng)
    dist = torus_norm(coords[keep])
    val = float(len(dist)) if alpha == 0 else float(np.sum(dist**alpha))
    return val, p / q


def _radius_quantile(law: RadiusLaw, u: float) -> float:
    if len(law.components) == 1:
        c = law.components[0]
        return c.x_m * (1.0 - u) ** (-1.0 / c.s)
    lo, hi = law.x_m, law.x_m
    while float(law.cdf(hi)) < u:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if float(law.cdf(mid)) < u:
            lo = mid
        else:
            hi = mid
    return hi


def _radius_density(law: RadiusLaw, r: float) -> float:
    tot = 0.0
    for c in law.components:
        if r >= c.x_m:
            tot += c.weight * c.s * c.beta * r ** (-c.s - 1)
    return tot


@dataclass
class ThinningReport:
    d: int
    alpha: float
    s: float
    beta: float
    n_grid: List[float]
    thinned_means: List[float]
    thinned_stderr: List[float]
    full_means: List[float]
    full_stderr: List[float]
    thinned_exponent: float  # slope of log mean against log n
    full_exponent: float
    full_log_slope: float  # slope of mean against log n
    replications: int

    @property
    def thinned_ratio(self) -> float:
        return self.thinned_means[-1] / self.thinned_means[0]


def _slope(x, y) -> float:
    return float(stats.linregress(x, y).slope)


def thinning_replication(d, n, lam, law, alpha, seed, keys):
    """One (G' out-sum, G out-sum, G weight) triple from independent streams."""
    thin_rng = stream(seed, *keys, 0)
    full_rng = stream(seed, *keys, 1)
    _, thinned = thinned_origin_out_sum(d, n, lam, law, alpha, thin_rng)
    full, w = full_origin_out_sum_is(d, n, lam, law, alpha, full_rng)
    return thinned, full, w


def thinned_out_degree_experiment(
    d: int,
    beta: float,
    alpha: float,
    n_grid: Sequence[float],
    replications: int,
    seed: int = 0,
    s: Optional[float] = None,
    lam: float = 1.0,
    values=None,
) -> ThinningReport:
    """Typical out-sums of G' and G against n at the critical index s = d.

    The G' series uses plain draws of R*; the G series is importance
    sampled (see ``full_origin_out_sum_is``).
    """
    if s is None:
        s = float(d)
    if s != d:
        raise ParameterError("the thinning experiment is defined at s = d")
    if any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise ParameterError("n grid must be strictly increasing")
    law = RadiusLaw.pareto(s, beta)
    tm, ts, fm, fs = [], [], [], []
    for j, n in enumerate(n_grid):
        if values is None:
            rows = [thinning_replication(d, n, lam, law, alpha, seed, (j, r)) for r in range(replications)]
        else:
            rows = values[j]
        arr = np.asarray(rows, dtype=float).reshape(-1, 3)
        t, f = arr[:, 0], arr[:, 1] * arr[:, 2]
        k = len(arr)
        tm.append(float(t.mean()))
        ts.append(float(t.std(ddof=1) / math.sqrt(k)))
        fm.append(float(f.mean()))
        fs.append(float(f.std(ddof=1) / math.sqrt(k)))
    logn = np.log(np.asarray(n_grid, dtype=float))
    return ThinningReport(
        d, alpha, s, beta, list(map(float, n_grid)), tm, ts, fm, fs,
        _slope(logn, np.log(tm)), _slope(logn, np.log(fm)), _slope(logn, fm), replications,
    )


def thinned_degree_beta_sweep(
    d: int, alpha: float, n: float, betas: Sequence[float], replications: int, seed: int = 0
) -> List[Tuple[float, float, float]]:
    """Mean typical G' out-sum with standard error for each tail constant at fixed n."""
    out = []
    for j, b in enumerate(betas):
        law = RadiusLaw.pareto(d, b)
        vals = [
            thinned_origin_out_sum(d, n, 1.0, law, alpha, stream(seed, j, r))[1] for r in range(replications)
        ]
        v = np.asarray(vals)
        out.append((float(b), float(v.mean()), float(v.std(ddof=1) / math.sqrt(len(v)))))
    return out
