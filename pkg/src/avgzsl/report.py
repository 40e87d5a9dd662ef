"""File renderers for the report path: JSON, CSV, JSON-lines, and
matplotlib figures saved next to the machine-readable outputs."""

from __future__ import annotations

import csv
import json
import os
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def write_report_json(payload: dict, path) -> None:
    """Atomic write: the file appears complete or not at all."""
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    os.replace(tmp, path)


def write_jsonl(entries, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for entry in entries:
            f.write(json.dumps(entry) + "\n")


def write_per_class_csv(report, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["class_id", "name", "seen", "total", "correct",
                         "accuracy"])
        for row in report.per_class:
            writer.writerow([row.class_id, row.name, int(row.seen),
                             row.total, row.correct, f"{row.accuracy:.6f}"])


def write_sweep_csv(sweep, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["gamma", "hm"])
        for gamma, hm in sweep:
            writer.writerow([f"{gamma:.6f}", f"{hm:.6f}"])


def plot_training_curves(stage1_log, stage2_log, path) -> None:
    fig, (ax_loss, ax_hm) = plt.subplots(1, 2, figsize=(10, 4))
    epochs = [e["epoch"] for e in stage1_log]
    for key, label in (("l_ce", "cross-entropy"), ("l_rec", "reconstruction"),
                       ("l_reg", "regression"), ("l_total", "total")):
        ax_loss.plot(epochs, [e[key] for e in stage1_log], label=label)
    if stage2_log:
        ax_loss.plot([e["epoch"] for e in stage2_log],
                     [e["l_total"] for e in stage2_log],
                     linestyle="--", color="black", label="total (stage 2)")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("training loss")
    ax_loss.legend(fontsize=8)

    ax_hm.plot(epochs, [e["val_hm"] for e in stage1_log], marker="o")
    ax_hm.set_xlabel("epoch")
    ax_hm.set_ylabel("validation HM")
    ax_hm.set_ylim(0.0, 1.05)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_calibration_sweep(sweep, best_gamma, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    if sweep:
        gammas = [g for g, _ in sweep]
        hms = [h for _, h in sweep]
        ax.plot(gammas, hms)
        ax.axvline(best_gamma, color="red", linestyle="--",
                   label=f"selected gamma = {best_gamma:.2f}")
        ax.legend(fontsize=8)
    ax.set_xlabel("calibration penalty")
    ax.set_ylabel("harmonic mean")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_per_class(report, path) -> None:
    rows = sorted(report.per_class, key=lambda r: (not r.seen, r.class_id))
    fig, ax = plt.subplots(figsize=(max(6, 0.4 * len(rows)), 4))
    colors = ["tab:blue" if r.seen else "tab:orange" for r in rows]
    ax.bar(range(len(rows)), [r.accuracy for r in rows], color=colors)
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels([r.name for r in rows], rotation=75, fontsize=7)
    ax.set_ylabel("per-class accuracy")
    ax.set_ylim(0.0, 1.05)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
