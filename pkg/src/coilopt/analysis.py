"""Convergence diagnostics over campaign states.

Lengthscale evolution of the objective GP (per iteration, per dimension),
their distributions, a per-parameter variability score (normalised inverse
lengthscale), and an export of the design vectors with label columns for
external embedding tools.  Everything is a deterministic, read-only
function of the campaign state.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .campaign import CampaignState


@dataclass
class VariabilityReport:
    """Per-parameter variability: normalised inverse lengthscale.

    The most influential parameter (smallest lengthscale) reads exactly 1;
    all values are positive.
    """

    values: np.ndarray
    labels: tuple[str, ...]
    source_iteration: int = -1

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if np.any(self.values <= 0):
            raise ValueError("variability values must be positive")


def lengthscale_history(state: CampaignState) -> tuple[np.ndarray, tuple[str, ...]]:
    """Objective-GP lengthscales per iteration (rows) and dimension (cols).

    Lengthscales are in normalised input units (relative to the design-space
    box) so rows are comparable as data accumulate.
    """
    if not state.gp_snapshots:
        raise ValueError("campaign has no GP snapshots")
    rows = [snap["objective"]["lengthscales"] for snap in state.gp_snapshots]
    labels = state.space.x_labels + state.space.z_labels
    matrix = np.asarray(rows, dtype=float)
    if matrix.shape[1] != len(labels):
        raise ValueError("snapshot dimension does not match the design space")
    return matrix, labels


def lengthscale_histograms(matrix: np.ndarray, bins: int = 12) -> tuple[np.ndarray, np.ndarray]:
    """Per-iteration histograms of the lengthscale distribution.

    Returns (bin_edges, counts) with one row of counts per iteration; bins
    are shared log-spaced edges over the observed range.
    """
    lo = max(float(np.min(matrix)), 1e-12)
    hi = float(np.max(matrix))
    if hi <= lo:
        hi = lo * 10.0
    edges = np.geomspace(lo, hi, bins + 1)
    counts = np.vstack([np.histogram(row, bins=edges)[0] for row in matrix])
    return edges, counts


def parameter_variability(lengthscales, labels=None,
                          source_iteration: int = -1) -> VariabilityReport:
    """v_i = (1 / l_i) / max_j (1 / l_j); the shortest lengthscale maps to 1."""
    ls = np.asarray(lengthscales, dtype=float).ravel()
    if np.any(ls <= 0):
        raise ValueError("lengthscales must be strictly positive")
    inv = 1.0 / ls
    values = inv / np.max(inv)
    if labels is None:
        labels = tuple(f"p{i}" for i in range(ls.size))
    return VariabilityReport(values=values, labels=tuple(labels),
                             source_iteration=source_iteration)


def final_variability(state: CampaignState) -> VariabilityReport:
    """Variability of the design dimensions from the last snapshot."""
    matrix, labels = lengthscale_history(state)
    dx = state.space.dim_x
    return parameter_variability(matrix[-1, :dx], labels[:dx],
                                 source_iteration=matrix.shape[0] - 1)


def export_embedding_data(state: CampaignState, path=None) -> str:
    """CSV of design vectors with label columns, one row per evaluation.

    Columns: the x dimensions (no fidelity values among them), then axial
    and radial fidelity, the objective, and the iteration index.  Design of
    experiments rows carry negative iteration indices; failed evaluations
    are skipped (they have no objective).
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(state.space.x_labels)
                    + list(state.space.z_labels) + ["objective", "iteration"])
    for i, e in enumerate(state.history):
        if e.failed:
            continue
        iteration = i - state.n_doe
        writer.writerow([repr(float(v)) for v in e.x]
                        + [repr(float(v)) for v in e.z]
                        + [repr(float(e.f)), iteration])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def render_lengthscale_svg(matrix: np.ndarray, labels, path) -> None:
    """Line plot of lengthscale evolution plus a per-iteration heatmap."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, 2, figsize=(11, 4))
    it = np.arange(matrix.shape[0])
    for j in range(matrix.shape[1]):
        axes[0].plot(it, matrix[:, j], lw=1, label=labels[j])
    axes[0].set_yscale("log")
    axes[0].set_xlabel("iteration")
    axes[0].set_ylabel("lengthscale (normalised)")
    if matrix.shape[1] <= 14:
        axes[0].legend(fontsize=6, ncol=2)
    im = axes[1].imshow(np.log10(matrix.T), aspect="auto", origin="lower",
                        cmap="viridis")
    axes[1].set_xlabel("iteration")
    axes[1].set_ylabel("dimension")
    fig.colorbar(im, ax=axes[1], label="log10 lengthscale")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def render_variability_svg(report: VariabilityReport, path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(max(4, 0.35 * len(report.labels)), 3.2))
    ax.bar(np.arange(report.values.size), report.values)
    ax.set_xticks(np.arange(report.values.size))
    ax.set_xticklabels(report.labels, rotation=90, fontsize=6)
    ax.set_ylabel("parameter variability")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
