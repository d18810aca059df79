#!/usr/bin/env python3
"""Log-log rank/frequency plot of requester activity from agents.tsv.

Flagged heavy hitters (proxies, crawlers, localhost) are drawn in red; the
remainder should fall on a power line.

Usage: plot_requesters.py ARTIFACTS_DIR [OUT.png]
"""

import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def main() -> int:
    artifacts = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("artifacts")
    out = Path(sys.argv[2]) if len(sys.argv) > 2 else Path("requester_frequency.png")
    ranks, counts, flags = [], [], []
    with open(artifacts / "agents.tsv", encoding="utf-8") as fh:
        fh.readline()
        for line in fh:
            rank, _, count, flagged = line.rstrip("\n").split("\t")
            ranks.append(int(rank))
            counts.append(int(count))
            flags.append(flagged == "1")
    if not ranks:
        print("agents.tsv is empty", file=sys.stderr)
        return 1

    fig, ax = plt.subplots(figsize=(6, 4.5))
    tail = [(r, c) for r, c, f in zip(ranks, counts, flags) if not f]
    head = [(r, c) for r, c, f in zip(ranks, counts, flags) if f]
    if tail:
        ax.loglog(*zip(*tail), ".", markersize=3, color="tab:blue", label="requesters")
    if head:
        ax.loglog(*zip(*head), "o", markersize=6, color="tab:red", label="flagged heavy hitters")
    ax.set_xlabel("rank")
    ax.set_ylabel("request count")
    ax.set_title("Requester rank/frequency")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
