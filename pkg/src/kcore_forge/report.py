"""PNG figures for the CLI reports; matplotlib is imported lazily (optional extra)."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_core_heatmap(dist, n, m, params, path):
    """Empirical (n_1, m_11 / 2) scatter density beside the point-formula contours."""
    from .llt import llt_core_probability

    plt = _plt()
    keys, cnt = dist.arrays()
    x = keys[:, 1]
    y = keys[:, 3] // 2
    fig, ax = plt.subplots(figsize=(6, 5))
    h = ax.hist2d(x, y, weights=cnt, bins=40, cmap="Blues")
    fig.colorbar(h[3], ax=ax, label="replicates")
    xs = np.linspace(x.min(), x.max(), 120)
    ys = np.linspace(y.min(), y.max(), 120)
    X, Y = np.meshgrid(xs, ys)
    Z = llt_core_probability(X, Y, n, m, params)
    ax.contour(X, Y, Z, levels=6, colors="k", linewidths=0.8)
    ax.set_xlabel("core vertices x")
    ax.set_ylabel("core edges y")
    ax.set_title(f"core size law, n={n}, m={m}, k={params.k}")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_llt_bins(report, path):
    """Empirical against predicted bin masses from an llt_comparison report."""
    plt = _plt()
    bins = report.extra.get("bins_detail") or []
    if not bins:
        return None
    emp = np.array([b["empirical"] for b in bins])
    pred = np.array([b["predicted"] for b in bins])
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.scatter(pred, emp, s=12)
    top = max(emp.max(), pred.max()) * 1.05
    ax.plot([0, top], [0, top], "k--", lw=0.8)
    ax.set_xlabel("predicted bin mass")
    ax.set_ylabel("empirical bin mass")
    ax.set_title(report.name)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_census(census, path):
    """Class sizes of the tiny-n census on a log scale."""
    plt = _plt()
    cls = sorted(census.classes.items(), key=lambda kv: -kv[1])
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(range(len(cls)), [c for _, c in cls])
    ax.set_yscale("log")
    ax.set_xticks(range(len(cls)))
    ax.set_xticklabels([",".join(map(str, t)) for t, _ in cls], rotation=70, fontsize=7)
    ax.set_ylabel("graphs")
    ax.set_title(f"census n={census.n}, m={census.m}, k={census.k}")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_stage_rates(report, path):
    """Empirical rates and means against their limits with 2 standard errors."""
    plt = _plt()
    rows = [r for r in report.rows if r["rule"] == "rel" and not math.isnan(r["predicted"])]
    if not rows:
        return None
    ratio = [r["empirical"] / r["predicted"] for r in rows]
    err = [2 * r["stderr"] / r["predicted"] for r in rows]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.errorbar(range(len(rows)), ratio, yerr=err, fmt="o")
    ax.axhline(1.0, color="k", lw=0.8)
    tol = rows[0]["tolerance"]
    ax.axhspan(1 - tol, 1 + tol, color="g", alpha=0.1)
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels([r["observable"] for r in rows], rotation=45, ha="right", fontsize=8)
    ax.set_ylabel("empirical / predicted")
    ax.set_title(report.name)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)
