"""Report figures written to image files (no display needed)."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .privacy import UserPrivacyReport  # noqa: E402

plt.rc("axes", linewidth=0.6, titlesize=10, labelsize=9)
plt.rc("xtick", labelsize=8)
plt.rc("ytick", labelsize=8)
plt.rc("savefig", dpi=120, bbox="tight")


def _ecdf(ax, values: Sequence[float], label: str, log: bool = False) -> None:
    v = np.sort(np.asarray([x for x in values if x is not None], dtype=float))
    if not len(v):
        ax.text(0.5, 0.5, "no data", ha="center", va="center", transform=ax.transAxes)
    else:
        ax.step(v, np.arange(1, len(v) + 1) / len(v), where="post", lw=1.2)
        if log and v.min() > 0:
            ax.set_xscale("log")
    ax.set_xlabel(label)
    ax.set_ylabel("CDF")
    ax.set_ylim(0, 1.02)
    ax.grid(alpha=0.3)


def plot_user_cdfs(reports: Sequence[UserPrivacyReport], path: Path) -> Path:
    fig, axes = plt.subplots(2, 2, figsize=(8, 6))
    _ecdf(axes[0, 0], [r.csync_per_request for r in reports], "CSync per request")
    _ecdf(axes[0, 1], [r.diffusion_factor for r in reports], "diffusion factor")
    _ecdf(axes[1, 0], [r.time_to_first_csync / 1000 for r in reports if r.time_to_first_csync is not None],
          "time to first CSync (s)", log=True)
    per_id = [c for r in reports for c in r.per_id_receiver_counts.values()]
    _ecdf(axes[1, 1], per_id, "receivers per synced ID")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def _bars(ax, shares: dict[str, float], title: str) -> None:
    names = list(shares)
    ax.bar(range(len(names)), [shares[n] for n in names], color="0.35", width=0.6)
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=30, ha="right")
    ax.set_ylim(0, 1)
    ax.set_ylabel("share")
    ax.set_title(title)


def plot_splits(summary: dict, categories: dict[str, float], path: Path) -> Path:
    fig, axes = plt.subplots(1, 3, figsize=(11, 3.4))
    _bars(axes[0], summary.get("carrier_split", {}), "carrier")
    _bars(axes[1], summary.get("initiator_split", {}), "initiator")
    _bars(axes[2], categories, "receiver category")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def render_report(reports: Sequence[UserPrivacyReport], summary: dict, categories: dict[str, float],
                  out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return [plot_user_cdfs(reports, out / "user_cdfs.png"),
            plot_splits(summary, categories, out / "splits.png")]
