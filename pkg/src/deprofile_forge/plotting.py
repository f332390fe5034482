"""Report figures. Everything renders off-screen with the Agg backend."""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from pathlib import Path
from typing import Any

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "font.family": "DejaVu Sans",
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "axes.grid.axis": "y",
    "grid.alpha": 0.3,
    "legend.frameon": False,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}

# PNG text chunks otherwise carry the matplotlib version, which breaks byte equality
_NO_METADATA = {"Software": None}


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="png", metadata=_NO_METADATA)
    plt.close(fig)
    return path


def _bars(values: Mapping[str, float], title: str, ylabel: str, path: Path, ylim: tuple[float, float] | None):
    keys = sorted(values)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(4.0, 0.35 * len(keys) + 1.5), 3.0))
        ax.bar(range(len(keys)), [values[k] for k in keys], color="#4C72B0", width=0.7)
        ax.set_xticks(range(len(keys)))
        ax.set_xticklabels(keys, rotation=60, ha="right", fontsize=7)
        ax.set_title(title)
        ax.set_ylabel(ylabel)
        if ylim:
            ax.set_ylim(*ylim)
        return _save(fig, path)


def plot_realism(per_patient: Mapping[str, float], variant: str, path: Path) -> Path:
    return _bars(per_patient, f"Realism per patient ({variant})", "cosine to real utterances", path, (-1.0, 1.0))


def plot_diversity(per_question: Mapping[str, float], variant: str, path: Path) -> Path:
    return _bars(per_question, f"Q-Centroid diversity per question ({variant})", "mean distance to centroid", path, None)


SUMMARY_PANELS = (
    ("Embedding metrics", ("realism", "diversity_qcentroid")),
    ("Judge means (1-5)", ("event_richness", "persona_faithfulness", "symptom_consistency")),
)


def plot_summary(rows: Sequence[Mapping[str, Any]], path: Path, panels=SUMMARY_PANELS) -> Path:
    """Grouped bars, one group per metric and one bar per variant. Missing cells are left blank."""
    variants = [str(r["variant"]) for r in rows]
    n = max(1, len(variants))
    width = 0.8 / n
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(
            1, len(panels), figsize=(8.0, 3.2), gridspec_kw={"width_ratios": [len(m) for _, m in panels]}
        )
        cmap = plt.get_cmap("tab10")
        for ax, (title, metrics) in zip(axes, panels):
            for i, row in enumerate(rows):
                xs, ys = [], []
                for j, metric in enumerate(metrics):
                    value = row.get(metric)
                    if value is not None:
                        xs.append(j - 0.4 + width * (i + 0.5))
                        ys.append(float(value))
                ax.bar(xs, ys, width=width, label=variants[i], color=cmap(i % 10))
            ax.axhline(0, color="black", linewidth=0.6)
            ax.set_xticks(range(len(metrics)))
            ax.set_xticklabels([m.replace("_", "\n") for m in metrics])
            ax.set_title(title)
        handles, labels = axes[0].get_legend_handles_labels()
        fig.legend(handles, labels, fontsize=7, ncol=min(6, n), loc="lower center", bbox_to_anchor=(0.5, -0.08))
        return _save(fig, path)
