"""Benchmark report serialization and figure rendering."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


@dataclass
class BenchReport:
    name: str
    per_seed: list = field(default_factory=list)  # one dict per seed
    aggregates: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def aggregate(self, key):
        vals = [row[key] for row in self.per_seed if key in row]
        import numpy as np

        return float(np.mean(vals)), float(np.std(vals))


def write_report(report, out_dir):
    """Emit report.json, report.csv (per-seed rows), and report.txt."""
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "report.json", "w", encoding="utf-8") as fh:
        json.dump(
            {
                "name": report.name,
                "per_seed": report.per_seed,
                "aggregates": report.aggregates,
                "notes": report.notes,
            },
            fh,
            indent=2,
            default=float,
        )
        fh.write("\n")
    if report.per_seed:
        keys = sorted({k for row in report.per_seed for k in row})
        with open(out_dir / "report.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(keys)
            for row in report.per_seed:
                writer.writerow([row.get(k, "") for k in keys])
    lines = [f"experiment: {report.name}"]
    for k, v in sorted(report.aggregates.items()):
        lines.append(f"  {k}: {v}")
    for note in report.notes:
        lines.append(f"  note: {note}")
    (out_dir / "report.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def scatter_figure(path, coords, labels, highlight=(), title=""):
    """2-D embedding scatter, optionally highlighting flagged points in red."""
    fig, ax = plt.subplots(figsize=(6, 5))
    classes = sorted(set(labels), key=str)
    for cls in classes:
        pts = [(x, y) for (x, y), l in zip(coords, labels) if l == cls]
        ax.scatter(*zip(*pts), s=14, alpha=0.7, label=str(cls))
    if highlight:
        hx = [coords[i][0] for i in highlight]
        hy = [coords[i][1] for i in highlight]
        ax.scatter(hx, hy, s=60, facecolors="none", edgecolors="red", linewidths=1.5,
                   label="outliers")
    ax.set_xlabel("MDS 1")
    ax.set_ylabel("MDS 2")
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def scaling_figure(path, sizes, pf_evals, title=""):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(sizes, pf_evals, "o-", label="PF distance evals / query")
    ax.plot(sizes, sizes, "s--", color="gray", label="KNN (= N)")
    ax.set_xscale("log", base=2)
    ax.set_yscale("log", base=2)
    ax.set_xlabel("training size N")
    ax.set_ylabel("distance evaluations per query")
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def bars_figure(path, labels, groups, title="", ylabel="accuracy"):
    """Grouped bars: groups = {series name: [value per label]}."""
    import numpy as np

    fig, ax = plt.subplots(figsize=(6, 4))
    x = np.arange(len(labels))
    width = 0.8 / max(1, len(groups))
    for k, (name, vals) in enumerate(sorted(groups.items())):
        ax.bar(x + k * width, vals, width, label=name)
    ax.set_xticks(x + width * (len(groups) - 1) / 2)
    ax.set_xticklabels(labels, rotation=20, fontsize=8)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
