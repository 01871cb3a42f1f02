"""Report writers: metrics as JSON + CSV, training curves, and the figures
rendered next to them (training curve, class-diversity bars, ablation gap)."""

from __future__ import annotations

import csv
import hashlib
import json
import time
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from . import __version__


def write_json(payload: dict, path: Path) -> None:
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def write_csv_rows(rows: list[dict], path: Path) -> None:
    if not rows:
        return
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


def write_metrics(metrics: dict, out_dir: Path, stem: str = "metrics") -> None:
    write_json(metrics, out_dir / f"{stem}.json")
    write_csv_rows([metrics], out_dir / f"{stem}.csv")


def dataset_fingerprint(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir: Path, command: str, config: dict, seed: int,
                   data_paths: list, artifacts: list[str]) -> None:
    """One manifest per output directory; same inputs reproduce the same run."""
    manifest = {
        "library_version": __version__,
        "command": command,
        "config": config,
        "seed": seed,
        "datasets": [{"path": str(p), "sha256": dataset_fingerprint(p)} for p in data_paths],
        "artifacts": sorted(artifacts),
        "created_unix": time.time(),
    }
    write_json(manifest, out_dir / "manifest.json")


# ---------------------------------------------------------------------------
# figures


def plot_training_curve(curve: list[dict], path: Path) -> None:
    if not curve:
        return
    epochs = [row["epoch"] for row in curve]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.plot(epochs, [row["loss"] for row in curve], marker="o", ms=3)
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("training loss")
    ax2.plot(epochs, [row["per_event_ll"] for row in curve], marker="o", ms=3, color="tab:green")
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("train log-likelihood per event")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_class_diversity(classes_in_test: int, classes_hit: int, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(4, 3.5))
    ax.bar(["in test data", "correctly hit"], [classes_in_test, classes_hit],
           color=["tab:gray", "tab:blue"])
    ax.set_ylabel("distinct event types")
    for i, v in enumerate([classes_in_test, classes_hit]):
        ax.text(i, v, str(v), ha="center", va="bottom")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_ablation(report: dict, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    ax.bar(["ODE solver", f"Monte Carlo\n({report['n_mc_samples']} samples)"],
           [report["ode_per_event_ll"], report["mc_per_event_ll"]],
           color=["tab:blue", "tab:orange"])
    ax.set_ylabel("log-likelihood per event")
    ax.set_title(f"non-event integral: gap {report['gap']:+.4f} nats total")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
