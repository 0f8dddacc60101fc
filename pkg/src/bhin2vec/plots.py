"""Figure rendering for the report commands.

Figures are written next to the delimited output; the CSV stays the
canonical artifact and every figure can be rebuilt from it.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt


def transition_figure(history_rows, path, source_type=None, dpi=150):
    """Line chart of outgoing transition probabilities over training steps.

    ``history_rows`` are (epoch, step, source_type, target_type, probability)
    tuples; one panel per source type, one line per target type.
    """
    sources = []
    series = {}
    for _, step, src, tgt, prob in history_rows:
        if source_type is not None and src != source_type:
            continue
        if src not in sources:
            sources.append(src)
        series.setdefault((src, tgt), ([], []))
        series[(src, tgt)][0].append(step)
        series[(src, tgt)][1].append(prob)
    if not sources:
        raise ValueError("no matching history rows to plot")

    fig, axes = plt.subplots(len(sources), 1, figsize=(7, 2.2 * len(sources)),
                             sharex=True, squeeze=False)
    for ax, src in zip(axes[:, 0], sources):
        for (s, tgt), (steps, probs) in series.items():
            if s != src:
                continue
            ax.plot(steps, probs, marker=".", markersize=3, label=f"to {tgt}")
        ax.set_ylabel(f"from {src}")
        ax.set_ylim(-0.05, 1.05)
        ax.legend(loc="upper right", fontsize=8)
        ax.grid(alpha=0.3)
    axes[-1, 0].set_xlabel("walks")
    fig.suptitle("Type transition probabilities")
    fig.tight_layout()
    fig.savefig(path, dpi=dpi)
    plt.close(fig)


def metric_bars_figure(task_names, values, stds, path, ylabel, title, dpi=150):
    """Bar chart of one metric per task with optional std error bars."""
    fig, ax = plt.subplots(figsize=(max(5, 0.9 * len(task_names) + 2), 3.5))
    positions = range(len(task_names))
    ax.bar(positions, values, yerr=stds if any(stds) else None, capsize=3, color="#4878b0")
    ax.set_xticks(list(positions))
    ax.set_xticklabels(task_names, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=dpi)
    plt.close(fig)


def grouped_bars_figure(group_names, series, path, ylabel, title, dpi=150):
    """Grouped bars: ``series`` maps a label to one value per group."""
    labels = list(series)
    n_groups = len(group_names)
    width = 0.8 / max(len(labels), 1)
    fig, ax = plt.subplots(figsize=(max(5, 0.9 * n_groups + 2), 3.5))
    for i, label in enumerate(labels):
        offsets = [g + i * width for g in range(n_groups)]
        ax.bar(offsets, series[label], width=width, label=label)
    ax.set_xticks([g + width * (len(labels) - 1) / 2 for g in range(n_groups)])
    ax.set_xticklabels(group_names, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend(fontsize=8)
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=dpi)
    plt.close(fig)
