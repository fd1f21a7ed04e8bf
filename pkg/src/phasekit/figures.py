"""Figure rendering for the CLI report path.

Each report can be accompanied by PNG figures written next to the delimited
output. matplotlib is imported lazily with the Agg backend so library users
never pay for it.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _ok_rows(rows):
    return [r for r in rows if r.get("status") == "ok"]


def render_loss_figures(rows: list[dict], out_base: Path) -> list[Path]:
    plt = _plt()
    ok = _ok_rows(rows)
    written = []
    if not ok:
        return written

    term_cols = ["l1", "sc_mean", "log_mag_mean", "pl_mean", "pcl_mean", "total"]
    means = [float(np.mean([r[c] for r in ok])) for c in term_cols]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ax1.bar(term_cols, means, color="#4878d0")
    ax1.set_ylabel("mean value over utterances")
    ax1.set_title("loss terms (unweighted means)")
    ax1.tick_params(axis="x", rotation=30)

    ids = [r["id"] for r in ok]
    ax2.bar(range(len(ids)), [r["total"] for r in ok], color="#ee854a")
    ax2.set_xticks(range(len(ids)))
    ax2.set_xticklabels(ids, rotation=60, fontsize=7)
    ax2.set_ylabel("weighted total")
    ax2.set_title("total loss per utterance")
    fig.tight_layout()
    path = out_base.with_name(out_base.name + "_losses.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)
    return written


def render_metric_figures(rows: list[dict], out_base: Path) -> list[Path]:
    plt = _plt()
    ok = _ok_rows(rows)
    written = []
    if not ok:
        return written

    def series(col):
        pairs = [(r["id"], r[col]) for r in ok
                 if r.get(col) is not None and not (isinstance(r[col], float) and math.isnan(r[col]))]
        return pairs

    signal_cols = [c for c in ("snrseg", "fwsnrseg", "sdr", "sdri") if series(c)]
    phase_cols = [c for c in ("unrmse", "gd_rmse", "if_rmse") if series(c)]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4))
    for col in signal_cols:
        pairs = series(col)
        ax1.plot(range(len(pairs)), [v for _, v in pairs], marker="o", label=col)
    ax1.set_ylabel("dB")
    ax1.set_xlabel("utterance index (sorted by id)")
    ax1.set_title("signal metrics")
    ax1.legend(fontsize=8)
    for col in phase_cols:
        pairs = series(col)
        ax2.plot(range(len(pairs)), [v for _, v in pairs], marker="o", label=col)
    ax2.set_ylabel("radians / normalized")
    ax2.set_xlabel("utterance index (sorted by id)")
    ax2.set_title("phase metrics")
    ax2.legend(fontsize=8)
    fig.tight_layout()
    path = out_base.with_name(out_base.name + "_metrics.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)
    return written


def _heatmap(ax, grid, title, ylabel="frequency bin"):
    im = ax.imshow(grid.T, origin="lower", aspect="auto", interpolation="nearest")
    ax.set_xlabel("time frame")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    return im


def render_inspect_figures(what: str, payload: dict, out_base: Path) -> list[Path]:
    plt = _plt()
    if what == "phase":
        fig, axes = plt.subplots(1, 3, figsize=(13, 4))
        for ax, key in zip(axes, ("cos_vals", "sin_vals")):
            fig.colorbar(_heatmap(ax, payload[key], key), ax=ax)
        logmag = np.log10(np.maximum(payload["magnitude"], 1e-12))
        fig.colorbar(_heatmap(axes[2], logmag, "log10 magnitude"), ax=axes[2])
    elif what == "kernel":
        fig, axes = plt.subplots(1, 2, figsize=(10, 4))
        for ax, key in zip(axes, ("cos_kernel", "sin_kernel")):
            rms = np.sqrt(np.mean(payload[key] ** 2, axis=(2, 3)))
            fig.colorbar(_heatmap(ax, rms, f"{key} RMS over 3x3 offsets",
                                  ylabel="frequency bin (interior)"), ax=ax)
    elif what == "derivatives":
        fig, axes = plt.subplots(1, 2, figsize=(10, 4))
        for ax, key, label in zip(
            axes, ("if_vals", "gd_vals"),
            ("instantaneous frequency (rad/hop)", "group delay (rad/bin)"),
        ):
            fig.colorbar(_heatmap(ax, payload[key], label), ax=ax)
    else:
        raise ValueError(f"unknown inspect target {what!r}")
    fig.tight_layout()
    path = out_base.with_name(out_base.name + f"_{what}.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return [path]
