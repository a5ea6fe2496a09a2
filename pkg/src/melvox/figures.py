"""Figure rendering for evaluation reports and training manifests.

Everything renders through the Agg backend straight to image files; no
display is ever required.
"""

from __future__ import annotations

import json

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from . import autodiff as ad
from .errors import DataError
from .signal import MelConfig, mel_spectrogram


def metric_histograms(report, path: str) -> str:
    """Side-by-side per-clip metric distributions."""
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    for ax, metric, title in zip(axes, ("mr_stft", "mr_mel"), ("MR-STFT", "MR-MEL")):
        values = [r[metric] for r in report.rows]
        ax.hist(values, bins=min(20, max(3, len(values) // 2)), color="#4878a8", edgecolor="black")
        ax.axvline(float(np.mean(values)), color="#c44e52", linestyle="--", label="mean")
        ax.set_title(title)
        ax.set_xlabel("metric value")
        ax.set_ylabel("clips")
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def mel_comparison(reference, output, mel_cfg: MelConfig, path: str) -> str:
    """Reference / output / absolute-error log-mel panels for one clip."""
    with ad.no_grad():
        mx = mel_spectrogram(reference, mel_cfg).data
        my = mel_spectrogram(output, mel_cfg).data
    fig, axes = plt.subplots(3, 1, figsize=(8, 7), sharex=True)
    for ax, data, title in zip(
        axes, (mx, my, np.abs(mx - my)), ("reference", "output", "|error|")
    ):
        im = ax.imshow(data, origin="lower", aspect="auto", cmap="magma")
        ax.set_title(title)
        ax.set_ylabel("mel bin")
        fig.colorbar(im, ax=ax)
    axes[-1].set_xlabel("frame")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def loss_curves(manifest_path: str, path: str) -> str:
    """Loss components and learning rate over training steps."""
    steps, series = [], {}
    transitions = []
    with open(manifest_path) as f:
        for line in f:
            row = json.loads(line)
            if row.get("event") == "stage_transition":
                transitions.append(row["step"])
                continue
            if "event" in row or "step" not in row:
                continue
            steps.append(row["step"])
            for key in ("total", "d_loss", "mel", "stft", "wav", "dac", "gen", "feat"):
                if key in row:
                    series.setdefault(key, []).append(row[key])
    if not steps:
        raise DataError(f"loss_curves: no step records in {manifest_path}")
    fig, (ax_g, ax_d) = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    for key in ("total", "mel", "stft", "wav", "dac"):
        if key in series:
            ax_g.plot(steps, series[key], label=key, linewidth=1.0)
    ax_g.set_yscale("log")
    ax_g.set_ylabel("generator losses")
    ax_g.legend(ncol=3, fontsize=8)
    for key in ("d_loss", "gen", "feat"):
        if key in series:
            ax_d.plot(steps, series[key], label=key, linewidth=1.0)
    ax_d.set_yscale("log")
    ax_d.set_ylabel("adversarial terms")
    ax_d.set_xlabel("step")
    ax_d.legend(fontsize=8)
    for ax in (ax_g, ax_d):
        for t in transitions:
            ax.axvline(t, color="gray", linestyle=":", linewidth=1.0)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
