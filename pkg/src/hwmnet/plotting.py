"""Report figures written next to the CSV/text outputs."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# One mm in inches.
mm = 0.0393701
FIG_WIDTH = 120 * mm


def configure_matplotlib() -> None:
    plt.rc("font", family="serif", size=8)
    plt.rc("axes", grid=True)
    plt.rc("grid", alpha=0.3)


def save_fig(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_loss_curve(rows, path, window: int = 50) -> Path:
    """Loss (log scale) with a moving average, and the learning rate underneath."""
    configure_matplotlib()
    t = np.array([r[0] for r in rows])
    lr = np.array([r[1] for r in rows])
    loss = np.array([r[2] for r in rows])
    fig, (ax, ax_lr) = plt.subplots(2, 1, sharex=True, figsize=(FIG_WIDTH, FIG_WIDTH * 0.75),
                                    gridspec_kw={"height_ratios": [3, 1]})
    ax.semilogy(t, loss, lw=0.6, alpha=0.5, label="loss")
    if len(loss) >= window:
        avg = np.convolve(loss, np.ones(window) / window, mode="valid")
        ax.semilogy(t[window - 1:], avg, lw=1.2, label=f"mean of {window}")
    ax.set_ylabel("Charbonnier loss")
    ax.legend(frameon=False)
    ax_lr.plot(t, lr, lw=1.0, color="k")
    ax_lr.set_xlabel("iteration")
    ax_lr.set_ylabel("lr")
    ax_lr.ticklabel_format(axis="y", style="sci", scilimits=(0, 0))
    return save_fig(fig, path)


def plot_metrics(report, path) -> Path:
    """Per-image PSNR and SSIM bars with the dataset mean as a dashed line."""
    configure_matplotlib()
    x = np.arange(len(report.names))
    fig, (a1, a2) = plt.subplots(2, 1, sharex=True, figsize=(FIG_WIDTH, FIG_WIDTH * 0.7))
    a1.bar(x, report.psnr, color="C0")
    a1.axhline(report.mean_psnr, ls="--", color="k", lw=0.8)
    a1.set_ylabel("PSNR (dB)")
    a2.bar(x, report.ssim, color="C1")
    a2.axhline(report.mean_ssim, ls="--", color="k", lw=0.8)
    a2.set_ylabel("SSIM")
    a2.set_xticks(x)
    a2.set_xticklabels(report.names, rotation=60, ha="right", fontsize=6)
    return save_fig(fig, path)


def plot_cost(report, path, reference_flops: float | None = None) -> Path:
    """FLOPs by layer kind, plus the total against a reference figure when given."""
    configure_matplotlib()
    kinds = sorted(report.by_kind().items(), key=lambda kv: -kv[1])
    fig, ax = plt.subplots(figsize=(FIG_WIDTH, FIG_WIDTH * 0.5))
    labels = [k for k, _ in kinds] + ["total"]
    values = [v / 1e9 for _, v in kinds] + [report.flops / 1e9]
    ax.barh(labels, values, color=["C0"] * len(kinds) + ["C2"])
    if reference_flops:
        ax.axvline(reference_flops / 1e9, ls="--", color="C3", lw=1.0, label=f"reference {reference_flops / 1e12:.2f} T")
        ax.legend(frameon=False)
    ax.set_xscale("log")
    ax.set_xlabel("GFLOPs")
    ax.invert_yaxis()
    return save_fig(fig, path)
