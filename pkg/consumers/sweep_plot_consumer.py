"""
sweep_plot_consumer.py

Read the long-format benchmark results written by `quilt benchmark`
and draw TPR / FDP curves per method against block size or block count.

Usage:

    python -m consumers.sweep_plot_consumer outputs/gamma/results.csv
"""

#####################################
# Imports
#####################################

import pathlib
import sys
from typing import Optional

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import pandas as pd
import seaborn as sns

from utils.utils_config import get_output_dir
from utils.utils_logger import logger

#####################################
# Config & Paths
#####################################

PANELS = (("tpr", "True positive rate"), ("fdp", "False discovery proportion"))
METHOD_ORDER = ["madgq-npn", "bsvd-npn", "zero-impute"]
PALETTE = {"madgq-npn": "#134E6F", "bsvd-npn": "#E76F6A", "zero-impute": "#F2B24D"}

#####################################
# Plot
#####################################


def sweep_axis(results: pd.DataFrame) -> str:
    """'o' when the sweep varies block size, 'K' when it varies the block count."""
    return "K" if results["K"].nunique() > 1 else "o"


def plot_results(results: pd.DataFrame, out_file: pathlib.Path) -> pathlib.Path:
    ok = results[results["status"] == "ok"] if "status" in results.columns else results
    if ok.empty:
        msg = "no successful runs to plot"
        logger.error(msg)
        raise ValueError(msg)
    axis = sweep_axis(ok)
    methods = [m for m in METHOD_ORDER if m in set(ok["method"])]

    sns.set_theme(style="whitegrid")
    fig, axes = plt.subplots(1, len(PANELS), figsize=(10, 4), sharex=True)
    for ax, (metric, label) in zip(axes, PANELS):
        sns.lineplot(
            data=ok,
            x=axis,
            y=metric,
            hue="method",
            hue_order=methods,
            palette=PALETTE,
            marker="o",
            errorbar="sd",
            ax=ax,
        )
        ax.set_xlabel("Block size o" if axis == "o" else "Number of blocks K")
        ax.set_ylabel(label)
        ax.set_ylim(-0.02, 1.02)
    fig.tight_layout()
    out_file.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_file, dpi=150)
    plt.close(fig)
    logger.info(f"Saved sweep plot to {out_file}")
    return out_file


#####################################
# Main
#####################################


def main(argv: Optional[list[str]] = None) -> int:
    logger.info("START sweep plot consumer.")
    argv = sys.argv[1:] if argv is None else argv
    results_file = pathlib.Path(argv[0]) if argv else get_output_dir() / "results.csv"
    if not results_file.exists():
        logger.error(f"Results file not found: {results_file}. Exiting.")
        return 4
    results = pd.read_csv(results_file)
    try:
        plot_results(results, results_file.with_name("sweep_plot.png"))
    except ValueError as e:
        logger.error(f"Cannot plot {results_file}: {e}")
        return 2
    logger.info("END sweep plot consumer.")
    return 0


if __name__ == "__main__":
    sys.exit(main())
