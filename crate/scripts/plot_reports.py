"""Optional plots from comot CSV reports (needs pandas and matplotlib).

  python plot_reports.py OUT_DIR

Draws whichever of these inputs exist in OUT_DIR:
  error_median.csv  sampling error vs k (log-log), one line per sampler
  rho_summary.csv   LP cost and nDCG@10 vs rho
  summary.csv       mean wall time per evaluation source
"""

import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd


def main(out):
    out = Path(out)
    if (out / "error_median.csv").exists():
        df = pd.read_csv(out / "error_median.csv")
        fig, ax = plt.subplots()
        for sampler, g in df.groupby("sampler"):
            ax.plot(g["k"], g["median_sq_error"], marker="o", label=sampler)
            ax.fill_between(g["k"], g["min_sq_error"], g["max_sq_error"], alpha=0.2)
        ax.set(xscale="log", yscale="log", xlabel="k", ylabel="squared error")
        ax.legend()
        fig.savefig(out / "error_curve.png", dpi=150)
    if (out / "rho_summary.csv").exists():
        df = pd.read_csv(out / "rho_summary.csv")
        df = df[df["rho"] != float("inf")]
        fig, ax = plt.subplots()
        ax.plot(df["rho"], df["cost"], marker="o", label="cost")
        ax2 = ax.twinx()
        ax2.plot(df["rho"], df["ndcg10"], marker="s", color="C1", label="nDCG@10")
        ax.set(xscale="log", xlabel="rho", ylabel="transport cost")
        ax2.set_ylabel("nDCG@10")
        fig.savefig(out / "rho_sweep.png", dpi=150)
    if (out / "summary.csv").exists():
        df = pd.read_csv(out / "summary.csv")
        fig, ax = plt.subplots()
        ax.bar(df["source"], df["wall_ms"])
        ax.set(yscale="log", ylabel="mean wall time per query (ms)")
        fig.savefig(out / "timing.png", dpi=150)


if __name__ == "__main__":
    if len(sys.argv) != 2:
        sys.exit(__doc__)
    main(sys.argv[1])
