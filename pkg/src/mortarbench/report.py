"""Figures rendered from a run's metrics.csv, written next to it.

Headless by design (Agg backend); every function returns the list of
files it wrote so callers can log them.
"""
from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np

from .errors import ConfigError


def read_metrics(path: str):
    """Split metrics.csv back into per-rank and per-step records."""
    rank_rows, step_rows = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            if int(row["rank"]) < 0:
                step_rows.append({
                    "step": int(row["step"]),
                    "C": float(row["C"]),
                    "eta_t": float(row["eta_t"]),
                    "eta_e": float(row["eta_e"]),
                    "rebalanced": int(row["rebalanced"]),
                    "t_redist_proxy": float(row["t_redist_proxy"]),
                    "t_ghost_proxy": float(row["t_ghost_proxy"]),
                })
            else:
                rank_rows.append({
                    "step": int(row["step"]),
                    "rank": int(row["rank"]),
                    "owned_sl_elems": int(row["owned_sl_elems"]),
                    "c_p": float(row["c_p"]),
                    "S_p": float(row["S_p"]),
                    "W_p": float(row["W_p"]),
                    "t_p": float(row["t_p"]),
                })
    if not step_rows:
        raise ConfigError(f"{path} holds no per-step rows")
    return rank_rows, step_rows


def _per_step_stat(rank_rows, key):
    steps = sorted({r["step"] for r in rank_rows})
    out_max, out_mean = [], []
    for s in steps:
        vals = np.array([r[key] for r in rank_rows if r["step"] == s])
        out_max.append(vals.max())
        out_mean.append(vals.mean())
    return np.array(steps), np.array(out_max), np.array(out_mean)


def _mark_rebalances(ax, step_rows):
    fired = [r["step"] for r in step_rows if r["rebalanced"]]
    for s in fired:
        ax.axvline(s, color="0.75", linewidth=0.8, zorder=0)
    return fired


def render_report(out_dir: str, eta_t_hat: float | None = None) -> list[str]:
    """Render the standard figure set for one run directory."""
    metrics = os.path.join(out_dir, "metrics.csv")
    rank_rows, step_rows = read_metrics(metrics)
    written = []

    steps, w_max, w_mean = _per_step_stat(rank_rows, "W_p")
    fig, ax = plt.subplots(figsize=(7, 4))
    _mark_rebalances(ax, step_rows)
    ax.plot(steps, w_max, label="max over ranks")
    ax.plot(steps, w_mean, label="mean over ranks", linestyle="--")
    ax.set_xlabel("step")
    ax.set_ylabel("quadrature points evaluated")
    ax.set_title("Interface work per step (vertical lines: rebalances)")
    ax.legend()
    path = os.path.join(out_dir, "work_per_step.png")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    written.append(path)

    ssteps = np.array([r["step"] for r in step_rows])
    eta_t = np.array([r["eta_t"] for r in step_rows])
    eta_e = np.array([r["eta_e"] for r in step_rows])
    fig, ax = plt.subplots(figsize=(7, 4))
    _mark_rebalances(ax, step_rows)
    finite_t = np.where(np.isfinite(eta_t), eta_t, np.nan)
    finite_e = np.where(np.isfinite(eta_e), eta_e, np.nan)
    ax.plot(ssteps, finite_t, label=r"$\eta_t$ (work)")
    ax.plot(ssteps, finite_e, label=r"$\eta_e$ (elements)", linestyle="--")
    if eta_t_hat is not None:
        ax.axhline(eta_t_hat, color="tab:red", linewidth=0.8,
                   label=f"threshold {eta_t_hat:g}")
    ax.set_xlabel("step")
    ax.set_ylabel("imbalance ratio")
    ax.set_title("Load imbalance (infinite ratios clipped)")
    ax.legend()
    path = os.path.join(out_dir, "imbalance.png")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(ssteps, np.cumsum(w_max), label="accumulated max work")
    ax.plot(ssteps, np.cumsum([r["C"] for r in step_rows]),
            label="accumulated ghost cost C", linestyle="--")
    ax.set_xlabel("step")
    ax.set_ylabel("accumulated units")
    ax.set_title("Accumulated critical-path work and ghosting cost")
    ax.legend()
    path = os.path.join(out_dir, "accumulated.png")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(ssteps, [r["t_ghost_proxy"] for r in step_rows], label="ghost volume")
    ax.plot(ssteps, [r["t_redist_proxy"] for r in step_rows],
            label="redistribution volume", linestyle="--")
    ax.set_xlabel("step")
    ax.set_ylabel("metered volume g(n, e)")
    ax.set_title("Communication volume per step")
    ax.legend()
    path = os.path.join(out_dir, "comm_volume.png")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    written.append(path)
    return written


def render_comparison(csv_path: str) -> list[str]:
    """Bar chart over the rows of a comparison.csv."""
    labels, work, ghost = [], [], []
    with open(csv_path, newline="") as fh:
        for row in csv.DictReader(fh):
            labels.append(row["label"])
            work.append(float(row["max_work_sum"]))
            ghost.append(float(row["ghost_volume"]))
    if not labels:
        raise ConfigError(f"{csv_path} holds no comparison rows")
    x = np.arange(len(labels))
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4))
    ax1.bar(x, work, color="tab:blue")
    ax1.set_xticks(x, labels, rotation=30, ha="right", fontsize=8)
    ax1.set_ylabel("accumulated max work")
    ax2.bar(x, ghost, color="tab:orange")
    ax2.set_xticks(x, labels, rotation=30, ha="right", fontsize=8)
    ax2.set_ylabel("accumulated ghost volume")
    fig.tight_layout()
    path = os.path.join(os.path.dirname(csv_path) or ".", "comparison.png")
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return [path]
