"""Figures written next to the CLI's text reports."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

PALETTE = "tab20"


def _save(fig, path):
    fig.tight_layout()
    # fixed metadata keeps repeated runs byte-identical
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)


def angle_histogram_figure(counts, path, title="Vertical-neighbour angles"):
    counts = np.asarray(counts)
    total = max(int(counts.sum()), 1)
    fig, ax = plt.subplots(figsize=(6, 3.2))
    edges = np.arange(len(counts))
    colours = ["#3b7dd8" if e < 10 else "#e07b39" if e >= 80 else "#9a9a9a" for e in edges]
    ax.bar(edges + 0.5, counts / total, width=1.0, color=colours)
    ax.set_xlim(0, 90)
    ax.set_xticks(range(0, 91, 10))
    ax.set_xlabel("angle to floor plane (deg)")
    ax.set_ylabel("fraction of pairs")
    ax.set_title(title)
    _save(fig, path)


def label_map_figure(labels, path, title="Plane instances"):
    labels = np.asarray(labels)
    fig, ax = plt.subplots(figsize=(8, 4.2))
    shown = np.ma.masked_where(labels == 0, labels % 20)
    ax.imshow(np.zeros_like(labels), cmap="gray", vmin=0, vmax=1)
    ax.imshow(shown, cmap=PALETTE, vmin=0, vmax=19, interpolation="nearest")
    ax.set_axis_off()
    ax.set_title(title)
    _save(fig, path)


def class_map_figure(pcm_labels, path):
    from matplotlib.colors import ListedColormap

    cmap = ListedColormap(["#bbbbbb", "#3b7dd8", "#e07b39", "#000000"])
    fig, ax = plt.subplots(figsize=(8, 4.2))
    ax.imshow(np.asarray(pcm_labels), cmap=cmap, vmin=0, vmax=3, interpolation="nearest")
    ax.set_axis_off()
    ax.set_title("H (blue) / V (orange) / other (grey)")
    _save(fig, path)


def orientation_figure(theta_prime, mask, path, title="Yaw-invariant V orientation"):
    fig, ax = plt.subplots(figsize=(8, 4.2))
    shown = np.ma.masked_where(~np.asarray(mask, dtype=bool), theta_prime)
    im = ax.imshow(shown, cmap="twilight", vmin=-np.pi, vmax=np.pi, interpolation="nearest")
    fig.colorbar(im, ax=ax, fraction=0.025, label="rad")
    ax.set_axis_off()
    ax.set_title(title)
    _save(fig, path)


def recall_figure(thresholds, per_plane, per_pixel, path):
    t_cm = np.asarray(thresholds) * 100
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    ax.plot(t_cm, per_plane, "o-", label="plane recall")
    ax.plot(t_cm, per_pixel, "s--", label="pixel recall")
    ax.set_ylim(-0.02, 1.02)
    ax.set_xlabel("depth threshold (cm)")
    ax.set_ylabel("recall")
    ax.legend(loc="lower right")
    _save(fig, path)
