"""Figure rendering for the report command.

All figures are written as PNG files via the Agg backend, so they work in
headless environments. PNG metadata is pinned to keep outputs byte-identical
across reruns on the same inputs.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .report import ReportBundle

_PNG_METADATA = {"Software": "cobra"}


def _save(fig, path: Path) -> None:
    tmp = path.with_name(path.name + ".tmp")
    fig.savefig(tmp, dpi=150, format="png", metadata=_PNG_METADATA)
    plt.close(fig)
    tmp.replace(path)


def fig_confidence_density(bundle: ReportBundle, path: Path | str) -> None:
    """Histogram of per-datapoint confidences with the KDE curve on top."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(
        bundle.confidences, bins=30, density=True,
        color="#9ecae1", edgecolor="white", label="histogram",
    )
    if bundle.density is not None:
        ax.plot(
            bundle.density.grid, bundle.density.density,
            color="#08519c", linewidth=1.8,
            label=f"KDE (h={bundle.density.bandwidth:.4g})",
        )
    ax.set_xlabel("model confidence")
    ax.set_ylabel("density")
    ax.legend(frameon=False)
    fig.tight_layout()
    _save(fig, Path(path))


def fig_score_scatter(bundle: ReportBundle, path: Path | str) -> None:
    """Subject score against the clinical score, annotated with ρ and CI."""
    pairs = bundle.cobra.pairs
    xs = np.asarray([p[2] for p in pairs])
    ys = np.asarray([p[1] for p in pairs])
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.scatter(xs, ys, s=24, color="#3182bd", alpha=0.8, edgecolors="none")
    r = bundle.cobra.report
    ax.set_title(
        f"ρ = {r.rho:.3f}  ({int(r.level * 100)}% CI [{r.ci_low:.3f}, {r.ci_high:.3f}], n = {r.n})",
        fontsize=10,
    )
    ax.set_xlabel("clinical score")
    ax.set_ylabel("subject score")
    fig.tight_layout()
    _save(fig, Path(path))


def fig_group_correlations(bundle: ReportBundle, path: Path | str) -> None:
    """Per-group ρ with CI whiskers; groups without a correlation are listed
    with no marker."""
    rows = bundle.per_group
    fig, ax = plt.subplots(figsize=(6, max(2.5, 0.5 * len(rows) + 1)))
    ypos = np.arange(len(rows))[::-1]
    for y, row in zip(ypos, rows):
        if row.report is None:
            ax.text(0.0, y, "n/a", va="center", ha="center", fontsize=8, color="gray")
            continue
        r = row.report
        ax.plot([r.ci_low, r.ci_high], [y, y], color="#6baed6", linewidth=2)
        ax.plot([r.rho], [y], marker="o", color="#08519c")
    ax.axvline(0.0, color="gray", linewidth=0.8, linestyle=":")
    ax.set_yticks(ypos)
    ax.set_yticklabels([row.group for row in rows])
    ax.set_xlim(-1.05, 1.05)
    ax.set_xlabel("Pearson ρ (with CI)")
    fig.tight_layout()
    _save(fig, Path(path))


def fig_relevance_contrast(bundle: ReportBundle, path: Path | str) -> None:
    """|ρ| of the relevant / non-relevant / all-classes score variants."""
    names, heights, errs = [], [], []
    for name in ("relevant", "non_relevant", "all"):
        report = bundle.contrast.get(name)
        if report is None:
            continue
        names.append(name.replace("_", "-"))
        heights.append(abs(report.rho))
        half = (report.ci_high - report.ci_low) / 2.0
        errs.append(half)
    fig, ax = plt.subplots(figsize=(5, 4))
    xs = np.arange(len(names))
    ax.bar(xs, heights, yerr=errs, capsize=4, color="#9ecae1", edgecolor="#08519c")
    ax.set_xticks(xs)
    ax.set_xticklabels(names)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("|ρ| vs clinical score")
    fig.tight_layout()
    _save(fig, Path(path))


def render_all(bundle: ReportBundle, out_dir: Path | str) -> list[Path]:
    """Render every figure the bundle supports; returns written paths."""
    out_dir = Path(out_dir)
    written: list[Path] = []
    targets = [
        (fig_confidence_density, out_dir / "confidence_density.png"),
        (fig_score_scatter, out_dir / "score_scatter.png"),
        (fig_group_correlations, out_dir / "group_correlations.png"),
        (fig_relevance_contrast, out_dir / "relevance_contrast.png"),
    ]
    for renderer, path in targets:
        renderer(bundle, path)
        written.append(path)
    return written
