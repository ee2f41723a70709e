"""Figure rendering for the report path (PNG files next to the CSVs)."""

from __future__ import annotations

from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .evaluate import CurvePoint  # noqa: E402


def plot_pr_curves(curves: dict[str, list[CurvePoint]], path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for name, points in curves.items():
        recalls = [0.0] + [p.recall for p in points]
        precisions = [1.0] + [p.precision for p in points]
        ax.plot(recalls, precisions, marker=".", markersize=3, label=name)
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_xlim(0, 1.02)
    ax.set_ylim(0, 1.02)
    ax.legend(loc="lower left", fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_roc_curves(curves: dict[str, list[CurvePoint]], path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for name, points in curves.items():
        fprs = [0.0] + [p.fpr for p in points] + [1.0]
        tprs = [0.0] + [p.recall for p in points] + [1.0]
        ax.plot(fprs, tprs, marker=".", markersize=3, label=name)
    ax.plot([0, 1], [0, 1], linestyle=":", color="gray", linewidth=0.8)
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.legend(loc="lower right", fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_convergence(residuals: Sequence[float], path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(range(1, len(residuals) + 1), residuals, marker="o",
                markersize=3)
    ax.set_xlabel("iteration")
    ax.set_ylabel("l1 residual")
    ax.grid(alpha=0.3, which="both")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_scaling(rows: Sequence[tuple[int, int, float]], path) -> None:
    """rows: (edges, worker_count, seconds_per_iteration)."""
    fig, ax = plt.subplots(figsize=(6, 4))
    by_workers: dict[int, list[tuple[int, float]]] = {}
    for edges, workers, secs in rows:
        by_workers.setdefault(workers, []).append((edges, secs))
    for workers, pts in sorted(by_workers.items()):
        pts.sort()
        ax.loglog([e for e, _ in pts], [s for _, s in pts], marker="o",
                  markersize=4, label=f"{workers} worker(s)")
    ax.set_xlabel("edges")
    ax.set_ylabel("seconds per iteration")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3, which="both")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_savings(weeks, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    xs = [w.week for w in weeks]
    cum_net, acc = [], 0
    for w in weeks:
        acc += w.net
        cum_net.append(acc)
    ax.plot(xs, [w.fraud_prevented for w in weeks], marker="o",
            markersize=3, label="fraud prevented")
    ax.plot(xs, [w.reissue_cost for w in weeks], marker="s",
            markersize=3, label="reissue cost")
    ax.plot(xs, cum_net, marker="^", markersize=3, label="cumulative net")
    ax.set_xlabel("week")
    ax.set_ylabel("minor units")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
