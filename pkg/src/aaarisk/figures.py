"""Static SVG figures. The numbers behind each one are written separately."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams["svg.hashsalt"] = "aaarisk"
plt.rcParams["svg.fonttype"] = "none"

GROUP_COLORS = ("tab:blue", "tab:red")


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def violins(screening, violin_by_feature, path, ncols: int = 7):
    rows = screening.rows
    nrows = max(1, int(np.ceil(len(rows) / ncols)))
    fig, axes = plt.subplots(nrows, ncols, figsize=(2.2 * ncols, 2.4 * nrows), squeeze=False)
    for ax in axes.ravel():
        ax.set_visible(False)
    for ax, row in zip(axes.ravel(), rows):
        ax.set_visible(True)
        for g, vd in violin_by_feature[row.feature].items():
            if vd.degenerate:
                ax.plot([g, g], [vd.minimum, vd.maximum], color=GROUP_COLORS[g])
                continue
            width = 0.4 * vd.density / vd.density.max()
            ax.fill_betweenx(vd.grid, g - width, g + width, color=GROUP_COLORS[g], alpha=0.5)
            ax.plot([g - 0.1, g + 0.1], [vd.quartiles[1]] * 2, color="k")
            ax.plot([g, g], [vd.quartiles[0], vd.quartiles[2]], color="k", lw=3)
        ax.set_xticks([0, 1], ["elective", "emergent"], fontsize=7)
        ax.set_title(f"{row.feature}  p={row.p:.2g}", fontsize=8)
        ax.tick_params(axis="y", labelsize=6)
    fig.tight_layout()
    _save(fig, path)


def scatter_matrix(features, labels, names, path):
    m = len(names)
    fig, axes = plt.subplots(m, m, figsize=(1.2 * m + 1, 1.2 * m + 1), squeeze=False)
    colors = np.array(GROUP_COLORS)[np.asarray(labels)]
    for i in range(m):
        for j in range(m):
            ax = axes[i, j]
            ax.set_xticks([])
            ax.set_yticks([])
            if i == j:
                ax.text(0.5, 0.5, names[i], ha="center", va="center", fontsize=7, transform=ax.transAxes)
            else:
                ax.scatter(features[:, j], features[:, i], s=2, c=colors)
    fig.tight_layout(pad=0.2)
    _save(fig, path)


def risk_curves(reports, path):
    n = len(reports)
    fig, axes = plt.subplots(1, max(n, 1), figsize=(3 * max(n, 1), 3), squeeze=False)
    for ax, rep in zip(axes[0], reports):
        cur = rep.curve
        ax.plot(cur.grid, cur.c0s, label="P(h=1|Y=0)", color=GROUP_COLORS[0])
        ax.plot(cur.grid, cur.c1s, label="P(h=0|Y=1)", color=GROUP_COLORS[1])
        ax.plot(cur.grid, (cur.c0s + cur.c1s) / 2, label="normalized risk", color="k")
        ax.axvline(rep.bayes_cutoff, color="grey", ls="--")
        ax.set_title(rep.pipeline, fontsize=9)
        ax.set_xlabel("cutoff")
    axes[0][0].legend(fontsize=6)
    fig.tight_layout()
    _save(fig, path)


def intervals(reports, path):
    fig, axes = plt.subplots(1, 3, figsize=(9, 3))
    names = [r.pipeline for r in reports]
    for ax, key, title in zip(axes, ("c0", "c1", "normalized_risk"),
                              ("misclassified elective", "misclassified emergent", "normalized risk")):
        for i, r in enumerate(reports):
            if r.ci is None:
                continue
            lo, hi = getattr(r.ci, key)
            ax.plot([lo, hi], [i, i], color="k")
            ax.plot([getattr(r, key)], [i], "o", color="k", ms=3)
        ax.set_yticks(range(len(names)), names, fontsize=7)
        ax.set_title(title, fontsize=9)
    fig.tight_layout()
    _save(fig, path)


def roc(reports, path):
    fig, ax = plt.subplots(figsize=(4, 4))
    for r in reports:
        ax.plot(r.roc.fpr, r.roc.tpr, label=f"{r.pipeline} ({r.auc:.3f})", drawstyle="default")
    ax.plot([0, 1], [0, 1], color="grey", ls=":")
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.legend(fontsize=6)
    fig.tight_layout()
    _save(fig, path)


def overlap_strip(overlap, n0, path):
    m = overlap.matrix
    fig, ax = plt.subplots(figsize=(10, 0.4 * m.shape[1] + 1))
    shade = overlap.intensity / max(1, m.shape[1])
    for j in range(m.shape[1]):
        rows = np.flatnonzero(m[:, j])
        ax.scatter(rows, np.full(len(rows), j), c=shade[rows], cmap="Reds", vmin=0, vmax=1, s=12)
    ax.axvline(n0 - 0.5, color="k")
    ax.set_yticks(range(m.shape[1]), overlap.names, fontsize=7)
    ax.set_xlabel("observation (elective first)")
    fig.tight_layout()
    _save(fig, path)


def importance_panels(panels, path):
    fig, axes = plt.subplots(1, len(panels), figsize=(3.2 * len(panels), 4), squeeze=False)
    for ax, (title, rows) in zip(axes[0], panels):
        if not rows:
            ax.text(0.5, 0.5, "intercept-only", ha="center", va="center", transform=ax.transAxes)
        else:
            names = [r[0] for r in rows][::-1]
            vals = [r[1] for r in rows][::-1]
            colors = [{"increasing": "tab:red", "decreasing": "tab:green"}.get(r[2], "tab:gray")
                      for r in rows][::-1]
            ax.barh(range(len(rows)), vals, color=colors)
            ax.set_yticks(range(len(rows)), names, fontsize=6)
        ax.set_title(title, fontsize=9)
    fig.tight_layout()
    _save(fig, path)
