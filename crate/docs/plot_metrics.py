#!/usr/bin/env python3
"""Plot gradient-norm curves from sweep output.

Not part of the simulator; any CSV-reading plotter works. Usage:

    python docs/plot_metrics.py out/benchmark rate.png

Expects the directory layout `gossipgrad sweep` produces:
<out>/<axis>=<value>/seed-<seed>/metrics.csv, and averages repeats
within each value.
"""

import csv
import sys
from collections import defaultdict
from pathlib import Path

import matplotlib.pyplot as plt


def load_series(csv_path: Path):
    rounds, grads = [], []
    with csv_path.open() as fh:
        for row in csv.DictReader(fh):
            rounds.append(int(row["round"]))
            grads.append(float(row["grad_norm_sq"]))
    return rounds, grads


def main() -> int:
    if len(sys.argv) != 3:
        print(__doc__)
        return 1
    sweep_dir, out_path = Path(sys.argv[1]), sys.argv[2]

    by_value = defaultdict(list)
    for csv_path in sorted(sweep_dir.glob("*/*/metrics.csv")):
        value = csv_path.parent.parent.name  # e.g. "zeta2=25"
        by_value[value].append(load_series(csv_path))

    if not by_value:
        print(f"no metrics.csv under {sweep_dir}")
        return 1

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for value, series in sorted(by_value.items()):
        rounds = series[0][0]
        mean = [
            sum(s[1][i] for s in series) / len(series) for i in range(len(rounds))
        ]
        ax.plot(rounds, mean, label=f"{value} ({len(series)} seeds)")
    ax.set_yscale("log")
    ax.set_xlabel("round")
    ax.set_ylabel(r"$\|\nabla f(\bar{x})\|^2$")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    print(f"wrote {out_path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
