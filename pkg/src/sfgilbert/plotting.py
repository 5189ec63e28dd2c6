"""Plot-ready text files and matplotlib figures for experiment results."""

from __future__ import annotations

import os
from typing import Dict, Iterable, List, Mapping

import numpy as np

from .errors import FormatError

REQUIRED = ("experiment", "n", "alpha", "statistic", "value", "stderr")

# figure kind -> (statistic plotted, x label, y label, log-log axes)
KINDS = {
    "normalized-mean": ("normalized_mean", "n", "normalized mean in-sum", False),
    "hop-distance": ("mean_hops", "n", "mean crossing distance (hops)", True),
    "chain-length": ("chain_over_log_n", "n", "longest descending chain / log n", False),
    "thinned-degree": ("thinned_mean", "n", "typical out-degree in G'", False),
    "isolated": ("isolated_fraction", "n", "isolated fraction", False),
}


def _fmt(x: float) -> str:
    return repr(float(x))


def ccdf_points(samples, max_points: int = 2000):
    """Empirical CCDF P(X >= x) at up to ``max_points`` order statistics, log-spaced in rank."""
    x = np.sort(np.asarray(samples, dtype=float))
    x = x[x > 0]
    if len(x) == 0:
        return np.zeros(0), np.zeros(0)
    y = 1.0 - np.arange(len(x)) / len(x)
    if len(x) > max_points:
        tail = np.unique(np.round(np.geomspace(1, len(x), max_points)).astype(int))
        idx = np.sort(len(x) - tail)
        x, y = x[idx], y[idx]
    return x, y


def _write_columns(path, cols: List[np.ndarray], header: str) -> None:
    with open(path, "w") as fh:
        fh.write(f"# {header}\n")
        for row in zip(*cols):
            fh.write(" ".join(_fmt(v) for v in row) + "\n")


def emit_plot_data(results, kind: str, out_dir) -> List[str]:
    """Write two- or three-column text files (x, y [, yerr]) for one figure kind.

    For ``kind="ccdf"`` ``results`` maps a curve label to raw samples; for
    the other kinds it is a sequence of result rows (dicts with the results
    CSV columns), grouped into one file per alpha.
    """
    os.makedirs(out_dir, exist_ok=True)
    written = []
    if kind == "ccdf":
        for label, samples in results.items():
            x, y = ccdf_points(samples)
            if np.any(np.diff(y) > 0):
                raise FormatError("CCDF must be nonincreasing")
            path = os.path.join(out_dir, f"ccdf_{label}.txt")
            _write_columns(path, [x, y], "x ccdf")
            written.append(path)
        return written
    if kind not in KINDS:
        raise FormatError(f"unknown plot kind {kind!r}")
    stat = KINDS[kind][0]
    rows = list(results)
    for r in rows:
        missing = [c for c in REQUIRED if c not in r]
        if missing:
            raise FormatError(f"result row lacks columns {missing}")
    groups: Dict[str, list] = {}
    for r in rows:
        if r["statistic"] == stat:
            groups.setdefault(str(r["alpha"]), []).append(r)
    for alpha, grp in sorted(groups.items()):
        x = np.array([float(r["n"]) for r in grp])
        y = np.array([float(r["value"]) for r in grp])
        e = np.array([float(r["stderr"]) if r["stderr"] not in ("", None) else 0.0 for r in grp])
        path = os.path.join(out_dir, f"{kind}_alpha{alpha}.txt")
        _write_columns(path, [x, y, e], "x y yerr")
        written.append(path)
    return written


def _load(path):
    data = np.loadtxt(path, comments="#", ndmin=2)
    return data


def render_figure(data_files: Iterable[str], png_path, xlabel: str, ylabel: str, loglog: bool = False) -> str:
    """Draw every data file as one curve (with error bars if a third column exists)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.6))
    for path in data_files:
        data = _load(path)
        if data.size == 0:
            continue
        label = os.path.splitext(os.path.basename(path))[0]
        if data.shape[1] >= 3 and np.any(data[:, 2] > 0):
            ax.errorbar(data[:, 0], data[:, 1], yerr=data[:, 2], marker="o", ms=3, capsize=2, label=label)
        else:
            ax.plot(data[:, 0], data[:, 1], marker="." if len(data) < 50 else None, label=label)
    if loglog:
        ax.set_xscale("log")
        ax.set_yscale("log")
    else:
        ax.set_xscale("log", base=2)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(png_path, dpi=110, metadata={"Software": None})
    plt.close(fig)
    return str(png_path)


def render_kind(results, kind: str, out_dir) -> List[str]:
    """Emit the data files for ``kind`` and a PNG drawing all of them; returns every path written."""
    files = emit_plot_data(results, kind, out_dir)
    if not files:
        return []
    if kind == "ccdf":
        labels = ("value t", "P(X >= t)", True)
    else:
        _, xl, yl, ll = KINDS[kind]
        labels = (xl, yl, ll)
    png = os.path.join(out_dir, f"{kind}.png")
    render_figure(files, png, *labels)
    return files + [png]


def read_results_csv(path) -> List[Mapping[str, str]]:
    import csv

    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
