"""Figures written next to the delimited reports."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .evaluation import MEAN_ROW, CountryReport  # noqa: E402
from .training import TrainLog  # noqa: E402

STYLE = {
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "legend.fontsize": 8,
    "figure.dpi": 120,
}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_country_accuracy(
    reports: Mapping[str, Sequence[CountryReport]],
    path,
    baseline: float | None = None,
    title: str = "",
) -> Path:
    """Grouped bars (mean ± std across seeds) per country, one group member per model."""
    labels = list(reports)
    countries = sorted({r.country for rows in reports.values() for r in rows if r.country != MEAN_ROW})
    if any(r.country == MEAN_ROW for rows in reports.values() for r in rows):
        countries.append(MEAN_ROW)
    width = 0.8 / max(len(labels), 1)
    x = np.arange(len(countries))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(4.0, 0.45 * len(countries) * max(1, len(labels)) ** 0.5 + 2), 3.2))
        for k, label in enumerate(labels):
            by_country = {r.country: r for r in reports[label]}
            means = [by_country[c].mean_accuracy if c in by_country else np.nan for c in countries]
            stds = [by_country[c].std_accuracy if c in by_country else 0.0 for c in countries]
            ax.bar(x + (k - (len(labels) - 1) / 2) * width, means, width, yerr=stds, capsize=2, label=label)
        if baseline is not None:
            ax.axhline(baseline, color="0.3", linestyle="--", linewidth=1, label="random tags")
        ax.set_xticks(x)
        ax.set_xticklabels(countries, rotation=90 if len(countries) > 12 else 0)
        ax.set_ylabel("accuracy (%)")
        ax.set_ylim(0, 105)
        if title:
            ax.set_title(title)
        if len(labels) > 1 or baseline is not None:
            ax.legend(loc="lower right", frameon=False)
        return _save(fig, path)


def plot_training_curves(logs: Mapping[str, TrainLog], path) -> Path:
    """Train/validation loss and validation accuracy per epoch; one line per run."""
    with plt.rc_context(STYLE):
        fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(8, 3))
        for label, log in logs.items():
            epochs = [r.epoch for r in log.records]
            line, = ax_loss.plot(epochs, [r.val_loss for r in log.records], label=f"{label} val")
            ax_loss.plot(epochs, [r.train_loss for r in log.records], color=line.get_color(), linestyle=":", linewidth=1)
            ax_acc.plot(epochs, [100 * r.val_accuracy for r in log.records], color=line.get_color(), label=label)
            if log.best_epoch:
                ax_loss.axvline(log.best_epoch, color=line.get_color(), alpha=0.3, linewidth=1)
        ax_loss.set_yscale("log")
        ax_loss.set_xlabel("epoch")
        ax_loss.set_ylabel("cross-entropy (dotted: train)")
        ax_acc.set_xlabel("epoch")
        ax_acc.set_ylabel("validation token accuracy (%)")
        ax_acc.legend(frameon=False)
        fig.tight_layout()
        return _save(fig, path)


def plot_attention(alpha: np.ndarray, tokens: Sequence[str], predicted: Sequence[str], path) -> Path:
    """Heat map of decoder-step (rows) by encoder-position (columns) attention weights."""
    with plt.rc_context(STYLE | {"axes.grid": False}):
        fig, ax = plt.subplots(figsize=(0.5 * len(tokens) + 1.5, 0.4 * len(predicted) + 1.2))
        im = ax.imshow(alpha, vmin=0, vmax=1, cmap="Blues", aspect="auto")
        ax.set_xticks(range(len(tokens)))
        ax.set_xticklabels(tokens, rotation=45, ha="right")
        ax.set_yticks(range(len(predicted)))
        ax.set_yticklabels(predicted)
        fig.colorbar(im, ax=ax, fraction=0.05)
        return _save(fig, path)
