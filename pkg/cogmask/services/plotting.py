"""
Static line plots of the trade-off curves
"""
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from cogmask.core.config import settings  # noqa: E402

# fixed ids and no timestamp keep the SVG bytes stable across runs
plt.rcParams["svg.hashsalt"] = "cogmask"
plt.rcParams["svg.fonttype"] = "none"


def _save(fig, stem: Path, formats: Sequence[str]) -> list:
    written = []
    for fmt in formats:
        target = stem.with_suffix(f".{fmt}")
        fig.savefig(target, format=fmt, metadata={"Date": None} if fmt == "svg" else None)
        written.append(target)
    plt.close(fig)
    return written


def plot_eta_sweep(frame: pd.DataFrame, stem: Path, title: str = "", formats: Sequence[str] = None) -> list:
    """Loss against eta, with the margin after masking on a twin axis."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(frame["eta"], frame["loss"], marker="o", label="utility loss")
    ax.set_xlabel("eta")
    ax.set_ylabel("utility loss")
    twin = ax.twinx()
    twin.plot(frame["eta"], frame["margin_after"], marker="s", linestyle="--", color="tab:orange", label="margin")
    twin.set_ylabel("margin after masking")
    ax.set_title(title)
    fig.tight_layout()
    return _save(fig, stem, formats or settings.PLOT_FORMATS)


def plot_lambda_sweep(frame: pd.DataFrame, stem: Path, title: str = "", formats: Sequence[str] = None) -> list:
    """Loss and conditional Type-I error against lambda, one line per significance level."""
    fig, (left, right) = plt.subplots(1, 2, figsize=(9, 3.5))
    for gamma, group in frame.groupby("gamma", sort=True):
        group = group.sort_values("lambda")
        left.plot(group["lambda"], group["loss"], marker="o", label=f"gamma={gamma:g}")
        right.plot(group["lambda"], group["cond_type1"], marker="o", label=f"gamma={gamma:g}")
    for ax, label in ((left, "utility loss"), (right, "conditional Type-I error")):
        ax.set_xscale("log")
        ax.set_xlabel("lambda")
        ax.set_ylabel(label)
        ax.legend(fontsize="small")
    fig.suptitle(title)
    fig.tight_layout()
    return _save(fig, stem, formats or settings.PLOT_FORMATS)
