#!/usr/bin/env python3
"""Scatter plot of the journal interest map from map.tsv.

Usage: plot_map.py ARTIFACTS_DIR [OUT.png] [--labels N]
Labels the N busiest journals (by |x|+|y|) to keep the plot readable.
"""

import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def main() -> int:
    args = [a for a in sys.argv[1:] if not a.startswith("--")]
    artifacts = Path(args[0]) if args else Path("artifacts")
    out = Path(args[1]) if len(args) > 1 else Path("journal_map.png")
    n_labels = 12
    for arg in sys.argv[1:]:
        if arg.startswith("--labels"):
            n_labels = int(arg.split("=", 1)[1])

    points = []
    with open(artifacts / "map.tsv", encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#"):
                continue
            label, x, y = line.rstrip("\n").split("\t")
            points.append((label, float(x), float(y)))
    if not points:
        print("map.tsv is empty", file=sys.stderr)
        return 1

    titles = {}
    journals = artifacts / "journals.tsv"
    if journals.exists():
        with open(journals, encoding="utf-8") as fh:
            for line in fh:
                key, title = line.rstrip("\n").split("\t")
                titles[key] = title

    fig, ax = plt.subplots(figsize=(7, 6))
    ax.scatter([p[1] for p in points], [p[2] for p in points], s=14, alpha=0.7)
    for label, x, y in sorted(points, key=lambda p: -(abs(p[1]) + abs(p[2])))[:n_labels]:
        ax.annotate(titles.get(label, label), (x, y), fontsize=7,
                    xytext=(3, 3), textcoords="offset points")
    ax.set_xlabel("component 1")
    ax.set_ylabel("component 2")
    ax.set_title("Journal interest map (usage similarity)")
    ax.axhline(0, color="gray", linewidth=0.5)
    ax.axvline(0, color="gray", linewidth=0.5)
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
