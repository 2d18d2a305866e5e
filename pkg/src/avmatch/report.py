"""Run reports: JSON, delimited tables, and matplotlib figures."""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .engine import RecallReport  # noqa: E402

_METRIC_LABELS = {
    1: "Accuracy (Top 1)",
    5: "Top 5 Recall",
    10: "Top 10 Recall",
    25: "Top 25 Recall",
    50: "Top 50 Recall",
}


def format_recall_table(report: RecallReport, preset: str) -> str:
    """Human-readable table, one metric row, values in percent."""
    header = f"{'Metric':<22}{'Random Result':>15}{preset:>12}"
    lines = [header, "-" * len(header)]
    for k in report.ks:
        label = _METRIC_LABELS.get(k, f"Top {k} Recall")
        lines.append(
            f"{label:<22}{100 * report.random_baseline[k]:>14.2f}%"
            f"{100 * report.recalls[k]:>11.2f}%"
        )
    return "\n".join(lines)


def write_recall_tsv(report: RecallReport, preset: str, path: str | Path) -> None:
    lines = ["metric\tk\trandom_baseline\t" + preset]
    for k in report.ks:
        lines.append(
            f"{_METRIC_LABELS.get(k, f'Top {k} Recall')}\t{k}\t"
            f"{report.random_baseline[k]:.6f}\t{report.recalls[k]:.6f}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_json_report(payload: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def render_recall_figure(report: RecallReport, preset: str,
                         path: str | Path) -> None:
    """Recall@k versus the analytic random baseline."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ks = list(report.ks)
    ax.plot(ks, [100 * report.recalls[k] for k in ks], "o-", label=preset)
    ax.plot(ks, [100 * report.random_baseline[k] for k in ks], "s--",
            color="gray", label="random baseline")
    ax.set_xlabel("k")
    ax.set_ylabel("recall (%)")
    ax.set_xscale("log")
    ax.set_xticks(ks)
    ax.get_xaxis().set_major_formatter(matplotlib.ticker.ScalarFormatter())
    ax.set_title(f"Top-k recall ({report.direction}, N={report.n_candidates})")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_loss_curve(metrics: list[dict], preset: str, path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    epochs = [m["epoch"] for m in metrics]
    ax.plot(epochs, [m["train_loss"] for m in metrics], label="train loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_title(f"{preset} training loss")
    val = [(m["epoch"], m["val_recall@10"]) for m in metrics
           if "val_recall@10" in m]
    if val:
        ax2 = ax.twinx()
        ax2.plot(*zip(*val), color="tab:orange", label="val recall@10")
        ax2.set_ylabel("val recall@10")
    ax.legend(loc="upper right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
