"""Config-driven, seeded experiment runs with CSV/JSON output.

A config is a flat YAML mapping.  Every replication draws from its own Philox
stream keyed by its position in the run, so a worker pool and a serial loop
compute the same values; aggregation always folds results in replication
order.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import yaml
from scipy import stats

from . import __version__
from . import degree_stats as ds
from . import hierarchy as hy
from .errors import ConfigError, GilbertError
from .graph import build_full_graph, thin, weakly_connected_components
from .paths import EXACT_DIAMETER_MAX_VERTICES, crossing_distance, diameter, isolated_fraction
from .sampling import RadiusLaw, sample_instance, stream

EXPERIMENTS = ("out-tail", "in-tail", "regimes", "thinning", "crossing", "backbone", "chains", "isolated", "components")

RESULT_COLUMNS = ["experiment", "d", "n", "s", "beta", "alpha", "replications", "statistic", "value", "stderr", "oracle"]
BACKBONE_COLUMNS = ["seed", "n", "terminated", "depth", "backbone_size", "diameter_bound", "bfs_diameter", "connected"]

# yaml key -> (attribute, default)
SCHEMA: Dict[str, Tuple[str, Any]] = {
    "experiment": ("experiment", None),
    "d": ("d", 2),
    "n": ("n", [32]),
    "s": ("s", 2.0),
    "beta": ("beta", 1.0),
    "lambda": ("lam", 1.0),
    "alpha": ("alpha", [0.0]),
    "replications": ("replications", 1),
    "seed": ("seed", 0),
    "method": ("method", ds.LOGLOG),
    "window": ("window", list(ds.DEFAULT_WINDOW)),
    "constant_window": ("constant_window", list(ds.CONSTANT_WINDOW)),
    "samples": ("samples", 100_000),
    "pairs": ("pairs", 200),
    "mode": ("mode", "origin"),
    "gw_runs": ("gw_runs", 100_000),
    "out_dir": ("out_dir", "results"),
    "threads": ("threads", 1),
}

# keys that change how a run executes but not what it computes
EXECUTION_KEYS = ("out_dir", "threads")


@dataclass
class ExperimentConfig:
    experiment: str
    d: int = 2
    n: List[float] = field(default_factory=lambda: [32.0])
    s: float = 2.0
    beta: float = 1.0
    lam: float = 1.0
    alpha: List[float] = field(default_factory=lambda: [0.0])
    replications: int = 1
    seed: int = 0
    method: str = ds.LOGLOG
    window: List[float] = field(default_factory=lambda: list(ds.DEFAULT_WINDOW))
    constant_window: List[float] = field(default_factory=lambda: list(ds.CONSTANT_WINDOW))
    samples: int = 100_000
    pairs: int = 200
    mode: str = "origin"
    gw_runs: int = 100_000
    out_dir: str = "results"
    threads: int = 1

    @property
    def law(self) -> RadiusLaw:
        return RadiusLaw.pareto(self.s, self.beta)

    def canonical(self) -> dict:
        """Key-sorted plain mapping of the result-relevant fields, as written in YAML."""
        out = {}
        for key, (attr, _) in SCHEMA.items():
            if key in EXECUTION_KEYS:
                continue
            out[key] = getattr(self, attr)
        return out

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        errors, _, cfg = _coerce(raw)
        if errors:
            raise ConfigError(errors)
        return cfg


@dataclass
class Validation:
    errors: List[str]
    warnings: List[str]

    @property
    def ok(self) -> bool:
        return not self.errors


def _as_list(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


def _coerce(raw) -> Tuple[List[str], List[str], Optional[ExperimentConfig]]:
    errors: List[str] = []
    if not isinstance(raw, dict):
        return ["config must be a mapping of keys to values"], [], None
    for key in raw:
        if key not in SCHEMA:
            errors.append(f"{key}: unknown key")
    if "experiment" not in raw:
        errors.append("experiment: required")
    values = {}
    casts = {
        "d": int, "replications": int, "seed": int, "samples": int, "pairs": int, "gw_runs": int, "threads": int,
        "s": float, "beta": float, "lambda": float,
        "experiment": str, "method": str, "mode": str, "out_dir": str,
    }
    for key, (attr, default) in SCHEMA.items():
        if key not in raw:
            if default is not None:
                values[attr] = list(default) if isinstance(default, list) else default
            continue
        v = raw[key]
        try:
            if key in ("n", "alpha"):
                values[attr] = [float(x) for x in _as_list(v)]
            elif key in ("window", "constant_window"):
                w = [float(x) for x in _as_list(v)]
                if len(w) != 2:
                    raise ValueError("expected two quantiles")
                values[attr] = w
            elif casts[key] is int:
                if isinstance(v, bool) or float(v) != int(v):
                    raise ValueError("expected an integer")
                values[attr] = int(v)
            else:
                values[attr] = casts[key](v)
        except (TypeError, ValueError) as exc:
            errors.append(f"{key}: cannot read {v!r} ({exc})")
    if errors:
        return errors, [], None
    return [], [], ExperimentConfig(**values)


def validate(config) -> Validation:
    """Field-level checks plus regime consistency; never raises."""
    if isinstance(config, ExperimentConfig):
        raw = {k: getattr(config, a) for k, (a, _) in SCHEMA.items()}
    else:
        raw = config
    errors, warnings, cfg = _coerce(raw)
    if cfg is None:
        return Validation(errors, warnings)
    c = cfg
    if c.experiment not in EXPERIMENTS:
        errors.append(f"experiment: unknown experiment {c.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
    if c.d < 2:
        errors.append("d: dimension must be at least 2")
    if not c.n:
        errors.append("n: the n grid is empty")
    elif any(x <= 0 for x in c.n):
        errors.append("n: side lengths must be positive")
    elif any(b <= a for a, b in zip(c.n, c.n[1:])):
        errors.append("n: the n grid must be strictly increasing")
    if c.s <= 0:
        errors.append("s: tail index must be positive")
    if c.beta <= 0:
        errors.append("beta: tail constant must be positive")
    if c.lam <= 0:
        errors.append("lambda: intensity must be positive")
    if not c.alpha:
        errors.append("alpha: at least one exponent is needed")
    elif any(a < 0 for a in c.alpha):
        errors.append("alpha: exponents must be nonnegative")
    if c.replications < 1:
        errors.append("replications: must be at least 1")
    if c.seed < 0:
        errors.append("seed: must be nonnegative")
    if c.threads < 1:
        errors.append("threads: must be at least 1")
    if c.method not in (ds.LOGLOG, ds.HILL):
        errors.append(f"method: unknown estimator {c.method!r}")
    for name, w in (("window", c.window), ("constant_window", c.constant_window)):
        if not 0 < w[0] < w[1] < 1:
            errors.append(f"{name}: quantiles must satisfy 0 < lo < hi < 1")
    if c.mode not in ("origin", "vertex"):
        errors.append(f"mode: unknown typical-vertex mode {c.mode!r}")
    if c.pairs < 1:
        errors.append("pairs: must be at least 1")
    if c.gw_runs < 1:
        errors.append("gw_runs: must be at least 1")
    exp = c.experiment
    if exp in ("out-tail", "in-tail") and c.samples < 10_000:
        errors.append("samples: tail experiments need at least 10^4 samples")
    if exp == "in-tail" and c.s <= c.d:
        errors.append(f"s: in-sums diverge almost surely when s <= d (s={c.s}, d={c.d}); in-tail needs s > d")
    if exp == "out-tail":
        for a in c.alpha:
            if c.s / (a + c.d) > ds.LIGHT_TAIL_INDEX:
                warnings.append(f"alpha={a}: predicted index {c.s / (a + c.d):.3g} is too light for the tail window")
    if exp == "regimes" and c.replications < 16:
        errors.append("replications: median-of-means needs at least 16 replications")
    if exp == "thinning":
        if c.s != c.d:
            errors.append(f"s: the thinning experiment is defined at s = d (got s={c.s}, d={c.d})")
        if c.replications < 2:
            errors.append("replications: standard errors need at least 2 replications")
    if exp == "backbone":
        thr = hy.domination_threshold(c.d)
        if c.beta <= thr:
            warnings.append(f"beta: {c.beta} is below the domination threshold {thr:.2f}; the retention bound is not guaranteed")
        if c.n and c.lam * max(c.n) ** c.d > EXACT_DIAMETER_MAX_VERTICES:
            warnings.append("n: expected point count exceeds the exact-diameter limit; such runs are recorded as failures")
    return Validation(errors, warnings)


def load_config(path) -> ExperimentConfig:
    """Read a YAML config, raising ConfigError with every violation found."""
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    v = validate(raw if raw is not None else {})
    if not v.ok:
        raise ConfigError(v.errors)
    return ExperimentConfig.from_dict(raw)


# ---------------------------------------------------------------------------
# replication tasks; each returns plain picklable values


def _task_out_tail(c: ExperimentConfig, key):
    (i,) = key
    return ds.out_sum_tail_experiment(
        c.d, c.s, c.beta, c.alpha[i], c.samples, stream(c.seed, i), tuple(c.window), tuple(c.constant_window), True
    )


def _task_in_tail(c: ExperimentConfig, key):
    (i,) = key
    res = ds.in_sum_tail_experiment(
        c.d, c.s, c.beta, c.alpha[i], c.samples, stream(c.seed, i), tuple(c.window), tuple(c.constant_window), True
    )
    return res


def _task_regimes(c: ExperimentConfig, key):
    i, j, r = key
    return ds.regime_replication(c.d, c.n[j], c.lam, c.law, c.alpha[i], c.seed, key, c.mode)


def _task_thinning(c: ExperimentConfig, key):
    i, j, r = key
    return ds.thinning_replication(c.d, c.n[j], c.lam, c.law, c.alpha[i], c.seed, key)


def _instance(c: ExperimentConfig, key):
    return sample_instance(c.d, c.n[key[0]], c.lam, c.law, c.seed, rng=stream(c.seed, *key))


def _task_crossing(c: ExperimentConfig, key):
    inst = _instance(c, key)
    if inst.size == 0:
        return None
    return crossing_distance(inst, build_full_graph(inst)).hops


def _task_backbone(c: ExperimentConfig, key):
    inst = _instance(c, key)
    res = hy.build_backbone(inst)
    out = {
        "terminated": res.terminated,
        "depth": res.depth,
        "backbone_size": res.backbone_size,
        "diameter_bound": res.diameter_bound,
        "examined": res.examined_counts,
        "retained": res.retained_counts,
        "total_retained": res.total_retained,
        "bfs_diameter": None,
        "connected": None,
        "verified": None,
        "counts_ok": hy.backbone_count_identity_holds(res, c.d),
    }
    if res.terminated:
        g = build_full_graph(inst)
        out["verified"] = hy.verify_backbone(inst, g, res)
        dm = diameter(g)
        out["connected"] = dm.connected
        out["bfs_diameter"] = dm.value
    return out


def _task_chains(c: ExperimentConfig, key):
    inst = _instance(c, key)
    g = build_full_graph(inst)
    chain = hy.longest_descending_chain(inst, g)
    rep = hy.hop_inflation_experiment(inst, g, thin(g), c.pairs, stream(c.seed, *key, 1))
    return {
        "points": inst.size,
        "chain": len(chain),
        "max_hops": rep.max_hops,
        "violations": rep.bound_violations,
        "unreachable": rep.unreachable,
    }


def _task_isolated(c: ExperimentConfig, key):
    return isolated_fraction(build_full_graph(_instance(c, key)))


def _task_components(c: ExperimentConfig, key):
    g = build_full_graph(_instance(c, key))
    a = weakly_connected_components(g)
    return {"preserved": a == weakly_connected_components(thin(g)), "components": len(a)}


TASKS: Dict[str, Callable] = {
    "out-tail": _task_out_tail,
    "in-tail": _task_in_tail,
    "regimes": _task_regimes,
    "thinning": _task_thinning,
    "crossing": _task_crossing,
    "backbone": _task_backbone,
    "chains": _task_chains,
    "isolated": _task_isolated,
    "components": _task_components,
}


def task_keys(c: ExperimentConfig) -> List[tuple]:
    if c.experiment in ("out-tail", "in-tail"):
        return [(i,) for i in range(len(c.alpha))]
    if c.experiment in ("regimes", "thinning"):
        return [(i, j, r) for i in range(len(c.alpha)) for j in range(len(c.n)) for r in range(c.replications)]
    return [(j, r) for j in range(len(c.n)) for r in range(c.replications)]


def replication_seed(seed: int, key) -> int:
    """64-bit fingerprint of the stream used by one replication."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])


def _execute(args):
    c, key = args
    try:
        return "ok", TASKS[c.experiment](c, key)
    except GilbertError as exc:
        return "error", f"{type(exc).__name__}: {exc}"


def execute(c: ExperimentConfig, threads: Optional[int] = None):
    """Run every replication; results come back in key order whatever the pool size."""
    keys = task_keys(c)
    workers = c.threads if threads is None else threads
    jobs = [(c, k) for k in keys]
    if workers <= 1:
        out = [_execute(j) for j in jobs]
    else:
        chunk = max(1, len(jobs) // (8 * workers))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(_execute, jobs, chunksize=chunk))
    return keys, out


# ---------------------------------------------------------------------------
# aggregation


def _row(c, n, alpha, stat, value, stderr=None, oracle=None, reps=None):
    return {
        "experiment": c.experiment,
        "d": c.d,
        "n": n,
        "s": c.s,
        "beta": c.beta,
        "alpha": alpha,
        "replications": c.replications if reps is None else reps,
        "statistic": stat,
        "value": value,
        "stderr": stderr,
        "oracle": oracle,
    }


def _mean_se(v) -> Tuple[float, Optional[float]]:
    v = np.asarray(v, dtype=float)
    if len(v) == 0:
        return math.nan, None
    se = float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else None
    return float(v.mean()), se


def _grouped(keys, results, width):
    """Successful values grouped by the leading ``width`` key entries, in key order."""
    groups: Dict[tuple, list] = {}
    for k, (status, val) in zip(keys, results):
        if status == "ok":
            groups.setdefault(tuple(k[:width]), []).append(val)
    return groups


def _fit_slope(x, y) -> Optional[float]:
    x, y = np.asarray(x, float), np.asarray(y, float)
    ok = np.isfinite(x) & np.isfinite(y)
    if ok.sum() < 2:
        return None
    return float(np.polyfit(x[ok], y[ok], 1)[0])


def _agg_tail(c, keys, results, plots):
    rows, summary = [], {}
    ccdf = {}
    for (i,), (status, res) in zip(keys, results):
        if status != "ok":
            continue
        a = c.alpha[i]
        if isinstance(res, ds.PoissonCheck):
            rows.append(_row(c, "inf", a, "poisson_mean", res.mean, res.stderr, res.predicted_mean, c.samples))
            rows.append(_row(c, "inf", a, "chi2_pvalue", res.pvalue, None, None, c.samples))
            summary[f"alpha={a}"] = asdict(res)
            continue
        est = res.estimate if c.method == ds.LOGLOG else (res.hill or res.estimate)
        rows.append(_row(c, "inf", a, "index_hat", est.index_hat, est.stderr, res.predicted_index, c.samples))
        if res.hill is not None:
            rows.append(_row(c, "inf", a, "hill_index", res.hill.index_hat, res.hill.stderr, res.predicted_index, c.samples))
        rows.append(_row(c, "inf", a, "constant_hat", res.constant_hat, None, res.predicted_constant, c.samples))
        summary[f"alpha={a}"] = {
            "index_hat": est.index_hat,
            "predicted_index": res.predicted_index,
            "index_within_15pct": res.index_ok(0.15),
            "constant_hat": res.constant_hat,
            "predicted_constant": res.predicted_constant,
            "constant_within_30pct": res.constant_ok(0.30),
            "warnings": res.warnings,
        }
        ccdf[f"alpha{a}"] = res.samples
    plots.append(("ccdf", ccdf))
    return rows, summary


def _agg_regimes(c, keys, results, plots):
    rows, summary = [], {}
    groups = _grouped(keys, results, 2)
    for i, a in enumerate(c.alpha):
        present = [j for j in range(len(c.n)) if (i, j) in groups]
        if not present:
            continue
        grid = [c.n[j] for j in present]
        rep = ds.regime_experiment(
            c.d, a, c.s, c.beta, grid, c.replications, c.seed, c.mode, c.lam, values=[groups[(i, j)] for j in present]
        )
        for k, n in enumerate(grid):
            rows.append(_row(c, n, a, "normalized_mean", rep.normalized_means[k], rep.stderr[k], rep.oracle[k], len(groups[(i, present[k])])))
        summary[f"alpha={a}"] = {
            "regime": rep.regime,
            "limit": rep.limit,
            "n": grid,
            "normalized_means": rep.normalized_means,
            "stderr": rep.stderr,
            "oracle": rep.oracle,
        }
    plots.append(("normalized-mean", rows))
    return rows, summary


def _agg_thinning(c, keys, results, plots):
    rows, summary = [], {}
    groups = _grouped(keys, results, 2)
    for i, a in enumerate(c.alpha):
        present = [j for j in range(len(c.n)) if (i, j) in groups]
        if len(present) < 2:
            continue
        grid = [c.n[j] for j in present]
        rep = ds.thinned_out_degree_experiment(
            c.d, c.beta, a, grid, c.replications, c.seed, c.s, c.lam, values=[groups[(i, j)] for j in present]
        )
        for k, n in enumerate(grid):
            reps = len(groups[(i, present[k])])
            rows.append(_row(c, n, a, "thinned_mean", rep.thinned_means[k], rep.thinned_stderr[k], None, reps))
            rows.append(_row(c, n, a, "full_mean", rep.full_means[k], rep.full_stderr[k], None, reps))
        summary[f"alpha={a}"] = {
            "n": grid,
            "thinned_means": rep.thinned_means,
            "full_means": rep.full_means,
            "thinned_ratio": rep.thinned_ratio,
            "thinned_exponent": rep.thinned_exponent,
            "full_exponent": rep.full_exponent,
            "full_log_slope": rep.full_log_slope,
        }
    plots.append(("thinned-degree", rows))
    return rows, summary


def _agg_crossing(c, keys, results, plots):
    rows, summary = [], {}
    groups = _grouped(keys, results, 1)
    xs, ys = [], []
    for j, n in enumerate(c.n):
        vals = groups.get((j,), [])
        hops = [h for h in vals if h is not None]
        m, se = _mean_se(hops)
        rows.append(_row(c, n, 0.0, "mean_hops", m, se, None, len(vals)))
        frac = len(hops) / len(vals) if vals else math.nan
        rows.append(_row(c, n, 0.0, "reachable_fraction", frac, None, None, len(vals)))
        if hops:
            xs.append(math.log(n))
            ys.append(math.log(m) if m > 0 else math.nan)
    exponent = _fit_slope(xs, ys)
    summary["growth_exponent"] = exponent
    summary["mean_hops"] = {str(r["n"]): r["value"] for r in rows if r["statistic"] == "mean_hops"}
    plots.append(("hop-distance", rows))
    return rows, summary


def _agg_backbone(c, keys, results, plots, extra):
    rows, summary = [], {}
    groups = _grouped(keys, results, 1)
    per_run = []
    for (j, r), (status, v) in zip(keys, results):
        if status == "ok":
            per_run.append([replication_seed(c.seed, (j, r)), c.n[j], v["terminated"], v["depth"], v["backbone_size"],
                            v["diameter_bound"], v["bfs_diameter"], v["connected"]])
    extra["backbone_runs.csv"] = (BACKBONE_COLUMNS, per_run)
    p_gw = hy.gw_offspring_probability(c.d)
    for j, n in enumerate(c.n):
        vals = groups.get((j,), [])
        if not vals:
            continue
        term = [v for v in vals if v["terminated"]]
        rows.append(_row(c, n, 0.0, "terminated_fraction", len(term) / len(vals), None, None, len(vals)))
        rows.append(_row(c, n, 0.0, "verify_pass_fraction", _frac(term, lambda v: v["verified"]), None, 1.0, len(term)))
        rows.append(_row(c, n, 0.0, "diameter_bound_holds", _frac(term, lambda v: v["bfs_diameter"] is not None and v["bfs_diameter"] <= v["diameter_bound"]), None, 1.0, len(term)))
        rows.append(_row(c, n, 0.0, "count_identity_holds", _frac(vals, lambda v: v["counts_ok"]), None, 1.0, len(vals)))
        bsz = _mean_se([v["backbone_size"] for v in vals])
        rows.append(_row(c, n, 0.0, "mean_backbone_size", bsz[0], bsz[1], None, len(vals)))
        depth = max(len(v["examined"]) for v in vals)
        for k in range(depth):
            e = sum(v["examined"][k] for v in vals if len(v["examined"]) > k)
            kept = sum(v["retained"][k] for v in vals if len(v["retained"]) > k)
            p = kept / e if e else math.nan
            se = math.sqrt(p * (1 - p) / e) if e else None
            rows.append(_row(c, n, 0.0, f"retention_level_{k}", p, se, p_gw, len(vals)))
        # GW comparison of the per-run retained totals
        gw = hy.gw_total_progeny_many(c.d, stream(c.seed, 2**31 - 1, j), c.gw_runs).totals.astype(float)
        ks = stats.ks_2samp([v["total_retained"] for v in vals], gw, alternative="less")
        rows.append(_row(c, n, 0.0, "domination_ks_pvalue", float(ks.pvalue), None, None, len(vals)))
        summary[f"n={n}"] = {r["statistic"]: r["value"] for r in rows if r["n"] == n}
    summary["threshold"] = hy.domination_threshold(c.d)
    summary["above_threshold"] = c.beta > summary["threshold"]
    return rows, summary


def _frac(vals, pred) -> float:
    return sum(1 for v in vals if pred(v)) / len(vals) if vals else math.nan


def _agg_chains(c, keys, results, plots):
    rows, summary = [], {}
    groups = _grouped(keys, results, 1)
    for j, n in enumerate(c.n):
        vals = groups.get((j,), [])
        if not vals:
            continue
        ln = math.log(n)
        ch = _mean_se([v["chain"] / ln for v in vals])
        hp = _mean_se([v["max_hops"] / ln for v in vals])
        rows.append(_row(c, n, 0.0, "chain_over_log_n", ch[0], ch[1], None, len(vals)))
        rows.append(_row(c, n, 0.0, "max_chain", max(v["chain"] for v in vals), None, None, len(vals)))
        rows.append(_row(c, n, 0.0, "hops_over_log_n", hp[0], hp[1], None, len(vals)))
        rows.append(_row(c, n, 0.0, "hop_bound_violations", sum(v["violations"] + v["unreachable"] for v in vals), None, 0, len(vals)))
    by = {r["statistic"]: [] for r in rows}
    for r in rows:
        by[r["statistic"]].append(r["value"])
    summary = {k: v for k, v in by.items()}
    summary["n"] = [r["n"] for r in rows if r["statistic"] == "chain_over_log_n"]
    plots.append(("chain-length", rows))
    return rows, summary


def _agg_isolated(c, keys, results, plots):
    rows = []
    groups = _grouped(keys, results, 1)
    for j, n in enumerate(c.n):
        vals = groups.get((j,), [])
        if vals:
            m, se = _mean_se(vals)
            rows.append(_row(c, n, 0.0, "isolated_fraction", m, se, None, len(vals)))
    plots.append(("isolated", rows))
    return rows, {"isolated_fraction": {str(r["n"]): [r["value"], r["stderr"]] for r in rows}}


def _agg_components(c, keys, results, plots):
    rows = []
    groups = _grouped(keys, results, 1)
    for j, n in enumerate(c.n):
        vals = groups.get((j,), [])
        if vals:
            rows.append(_row(c, n, 0.0, "preserved_fraction", _frac(vals, lambda v: v["preserved"]), None, 1.0, len(vals)))
            m, se = _mean_se([v["components"] for v in vals])
            rows.append(_row(c, n, 0.0, "mean_components", m, se, None, len(vals)))
    return rows, {str(r["n"]) + ":" + r["statistic"]: r["value"] for r in rows}


def aggregate(c: ExperimentConfig, keys, results):
    """Fold replication results (in key order) into CSV rows, a JSON summary and plot inputs."""
    plots: list = []
    extra: dict = {}
    exp = c.experiment
    if exp in ("out-tail", "in-tail"):
        rows, summary = _agg_tail(c, keys, results, plots)
    elif exp == "regimes":
        rows, summary = _agg_regimes(c, keys, results, plots)
    elif exp == "thinning":
        rows, summary = _agg_thinning(c, keys, results, plots)
    elif exp == "crossing":
        rows, summary = _agg_crossing(c, keys, results, plots)
    elif exp == "backbone":
        rows, summary = _agg_backbone(c, keys, results, plots, extra)
    elif exp == "chains":
        rows, summary = _agg_chains(c, keys, results, plots)
    elif exp == "isolated":
        rows, summary = _agg_isolated(c, keys, results, plots)
    else:
        rows, summary = _agg_components(c, keys, results, plots)
    return rows, summary, plots, extra


# ---------------------------------------------------------------------------
# output


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(r[c] if isinstance(r, dict) else r[i]) for i, c in enumerate(columns)])


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else None
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


@dataclass
class RunManifest:
    config_hash: str
    version: str
    started: str
    finished: str
    directory: str
    outputs: List[str]
    replication_seeds: Dict[str, List[int]]
    failures: List[dict]

    @property
    def ok(self) -> bool:
        return not self.failures


def _fresh_dir(base_dir, name) -> str:
    os.makedirs(base_dir, exist_ok=True)
    path = os.path.join(base_dir, name)
    k = 1
    while os.path.exists(path):
        path = os.path.join(base_dir, f"{name}-{k}")
        k += 1
    os.makedirs(path)
    return path


def _stamp() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S%z")


def run(config: ExperimentConfig, out_dir: Optional[str] = None, threads: Optional[int] = None, plots: bool = True) -> RunManifest:
    """Execute a validated config into a fresh hash-named directory.

    Writes ``results.csv``, ``summary.json``, ``manifest.json`` and, when
    ``plots`` is set, plot data plus PNG figures under ``plots/``.
    """
    v = validate(config)
    if not v.ok:
        raise ConfigError(v.errors)
    started = _stamp()
    digest = config.config_hash()
    target = _fresh_dir(out_dir or config.out_dir, f"{config.experiment}-{digest[:12]}")
    keys, results = execute(config, threads)
    rows, summary, plot_inputs, extra = aggregate(config, keys, results)
    outputs = []
    path = os.path.join(target, "results.csv")
    write_csv(path, RESULT_COLUMNS, rows)
    outputs.append(path)
    for name, (cols, data) in extra.items():
        p = os.path.join(target, name)
        write_csv(p, cols, data)
        outputs.append(p)
    summary = {"experiment": config.experiment, "config": config.canonical(), "warnings": v.warnings, "results": summary}
    p = os.path.join(target, "summary.json")
    with open(p, "w") as fh:
        json.dump(_jsonable(summary), fh, indent=2, sort_keys=True)
        fh.write("\n")
    outputs.append(p)
    if plots:
        from .plotting import render_kind

        pdir = os.path.join(target, "plots")
        for kind, data in plot_inputs:
            if data:
                outputs.extend(render_kind(data, kind, pdir))
    failures = [{"key": list(k), "error": val} for k, (status, val) in zip(keys, results) if status != "ok"]
    seeds: Dict[str, List[int]] = {}
    for k in keys:
        seeds.setdefault("/".join(map(str, k[:-1])) or "all", []).append(replication_seed(config.seed, k))
    manifest = RunManifest(digest, __version__, started, _stamp(), target, outputs, seeds, failures)
    p = os.path.join(target, "manifest.json")
    with open(p, "w") as fh:
        json.dump(asdict(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")
    manifest.outputs.append(p)
    return manifest
