"""Static SVG figures for load-flow, strategy and OPF reports.

Figures are built on :class:`matplotlib.figure.Figure` directly so no pyplot
state or interactive backend is involved.
"""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np
from matplotlib.figure import Figure

P_COLOR = "#1f77b4"
Q_COLOR = "#d62728"
SVG_METADATA = {"Date": None, "Creator": "gridloss"}


def _figure(width: float = 8.0, height: float | None = None, rows: int = 1):
    if height is None:
        height = width * (math.sqrt(5) - 1.0) / 2.0 * rows
    fig = Figure(figsize=(width, height), facecolor="w")
    axes = fig.subplots(rows, 1, squeeze=False)[:, 0]
    for ax in axes:
        ax.spines["top"].set_visible(False)
        ax.spines["right"].set_visible(False)
        ax.tick_params(labelsize=8)
    return fig, axes


def save_svg(fig: Figure, path: str | Path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=SVG_METADATA)
    return path


def solve_figure(bus_ids, v_mag, v_ang_deg, branch_labels, p_loss_mw, q_loss_mvar, totals) -> Figure:
    """Voltage profile, per-branch losses and generation/load/loss totals.

    ``totals`` maps a category name to a ``(MW, MVAR)`` pair.
    """
    fig, (ax_v, ax_l, ax_t) = _figure(10.0, 11.0, rows=3)
    x = np.arange(len(bus_ids))
    ax_v.bar(x, v_mag, color=P_COLOR, width=0.7)
    ax_v.set_ylim(min(0.9, float(np.min(v_mag)) - 0.02), float(np.max(v_mag)) + 0.02)
    ax_v.set_ylabel("|V| (pu)", fontsize=9)
    ax_v.set_xticks(x, [str(b) for b in bus_ids], fontsize=7)
    ax_v.set_xlabel("bus", fontsize=9)
    ang = ax_v.twinx()
    ang.plot(x, v_ang_deg, color=Q_COLOR, marker="o", markersize=3)
    ang.set_ylabel("angle (deg)", fontsize=9)

    xb = np.arange(len(branch_labels))
    ax_l.bar(xb - 0.2, p_loss_mw, width=0.4, color=P_COLOR, label="P loss (MW)")
    ax_l.bar(xb + 0.2, q_loss_mvar, width=0.4, color=Q_COLOR, label="Q loss (MVAR)")
    ax_l.set_xticks(xb, branch_labels, rotation=90, fontsize=6)
    ax_l.legend(fontsize=8, frameon=False)
    ax_l.set_ylabel("loss", fontsize=9)

    names = list(totals)
    xt = np.arange(len(names))
    ax_t.bar(xt - 0.2, [totals[k][0] for k in names], width=0.4, color=P_COLOR, label="MW")
    ax_t.bar(xt + 0.2, [totals[k][1] for k in names], width=0.4, color=Q_COLOR, label="MVAR")
    ax_t.set_xticks(xt, names, fontsize=8)
    ax_t.legend(fontsize=8, frameon=False)
    return fig


def comparison_figure(labels, p_loss_mw, q_loss_mvar) -> Figure:
    """Grouped bars, one group (P and Q) per scenario."""
    fig, (ax,) = _figure(8.0)
    for k, (p, q) in enumerate(zip(p_loss_mw, q_loss_mvar)):
        bar_p = ax.bar(k - 0.2, 0.0 if math.isnan(p) else p, width=0.4, color=P_COLOR,
                       label="P loss (MW)" if k == 0 else None)
        bar_q = ax.bar(k + 0.2, 0.0 if math.isnan(q) else q, width=0.4, color=Q_COLOR,
                       label="Q loss (MVAR)" if k == 0 else None)
        bar_p.patches[0].set_gid(f"scenario-{k}-p")
        bar_q.patches[0].set_gid(f"scenario-{k}-q")
        ax.annotate(f"{p:.3f}", (k - 0.2, 0.0 if math.isnan(p) else p), ha="center", va="bottom", fontsize=7)
    ax.set_xticks(range(len(labels)), labels, rotation=15, fontsize=8)
    ax.set_ylabel("total loss", fontsize=9)
    ax.legend(fontsize=8, frameon=False)
    return fig


def opf_figure(histories, run_labels, best_losses, nr_loss: float | None = None) -> Figure:
    """Best-loss convergence curves and per-run best losses against NR."""
    fig, (ax_h, ax_b) = _figure(8.0, 8.0, rows=2)
    for label, hist in zip(run_labels, histories):
        ax_h.plot(range(len(hist)), hist, label=label, linewidth=1.2)
    ax_h.set_xlabel("generation", fontsize=9)
    ax_h.set_ylabel("best real loss (MW)", fontsize=9)
    ax_h.legend(fontsize=7, frameon=False)
    names = list(run_labels) + ["mean"]
    values = list(best_losses) + [float(np.mean(best_losses))]
    ax_b.bar(range(len(names)), values, color=P_COLOR, width=0.6, label="GA best")
    if nr_loss is not None:
        ax_b.axhline(nr_loss, color=Q_COLOR, linestyle="--", linewidth=1, label="NR loss")
    ax_b.set_xticks(range(len(names)), names, fontsize=8)
    ax_b.set_ylabel("real loss (MW)", fontsize=9)
    ax_b.legend(fontsize=8, frameon=False)
    return fig
