"""Objective evaluation: MR-STFT and MR-MEL metrics over file pairs, plus
corpus reports with per-clip rows, mean/std summaries, and rendered
figures alongside the delimited output."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, DataError, MelvoxError, ShapeError
from .generator import GeneratorModel, generator_forward
from .losses import MultiScaleConfig, default_multiscale, loss_multiscale_spec
from .signal import AudioSegment, MelConfig, SpectralConfig, _as_tensor, magnitude, stft
from .wavio import read_wav

LOG_FLOOR = 1e-5
MIN_EVAL_SAMPLES = 2048  # shortest crop the generator's analysis chain accepts


def _default_stft_scales():
    return (
        SpectralConfig(n_fft=2048, win_length=2048, hop_length=512),
        SpectralConfig(n_fft=1024, win_length=1024, hop_length=256),
        SpectralConfig(n_fft=512, win_length=512, hop_length=128),
    )


@dataclass(frozen=True)
class MetricConfig:
    mr_stft_scales: tuple = field(default_factory=_default_stft_scales)
    mr_mel: MultiScaleConfig = field(default_factory=lambda: default_multiscale(3))

    def __post_init__(self):
        if not self.mr_stft_scales:
            raise ConfigError("MetricConfig: need at least one MR-STFT scale")


def mr_stft_metric(x, x_hat, cfg: MetricConfig | None = None) -> float:
    """Sum over scales of spectral convergence + log-magnitude L1."""
    cfg = cfg or MetricConfig()
    xt, yt = _as_tensor(x), _as_tensor(x_hat)
    if xt.shape != yt.shape:
        raise ShapeError(f"mr_stft_metric: length mismatch {xt.shape} vs {yt.shape}")
    total = 0.0
    with ad.no_grad():
        for sc in cfg.mr_stft_scales:
            mx = magnitude(stft(xt, sc)).data.astype(np.float64)
            my = magnitude(stft(yt, sc)).data.astype(np.float64)
            ref = float(np.linalg.norm(mx))
            conv = float(np.linalg.norm(mx - my)) / ref if ref > 0.0 else 0.0
            logs = np.abs(np.log(np.maximum(mx, LOG_FLOOR)) - np.log(np.maximum(my, LOG_FLOOR)))
            total += conv + float(np.mean(logs))
    return total


def mr_mel_metric(x, x_hat, cfg: MetricConfig | None = None, sample_rate: int = 44100) -> float:
    """Multi-resolution log-mel L1; shares the training loss implementation."""
    cfg = cfg or MetricConfig()
    xt, yt = _as_tensor(x), _as_tensor(x_hat)
    if xt.shape != yt.shape:
        raise ShapeError(f"mr_mel_metric: length mismatch {xt.shape} vs {yt.shape}")
    if isinstance(x, AudioSegment):
        sample_rate = x.sample_rate
    with ad.no_grad():
        value = loss_multiscale_spec(xt, yt, cfg.mr_mel, "mel", sample_rate)
    return float(value.data)


@dataclass
class EvalReport:
    rows: list      # per clip: {"clip", "mr_stft", "mr_mel"}
    skipped: list   # per clip: {"clip", "reason"}

    def summary(self) -> dict:
        out = {}
        for metric in ("mr_stft", "mr_mel"):
            values = np.array([r[metric] for r in self.rows], dtype=np.float64)
            if values.size:
                out[metric] = {"mean": float(values.mean()), "std": float(values.std())}
            else:
                out[metric] = {"mean": float("nan"), "std": float("nan")}
        return out

    def to_tsv(self) -> str:
        lines = ["clip\tmr_stft\tmr_mel"]
        for r in self.rows:
            lines.append(f"{r['clip']}\t{r['mr_stft']:.6f}\t{r['mr_mel']:.6f}")
        s = self.summary()
        for stat in ("mean", "std"):
            lines.append(f"{stat}\t{s['mr_stft'][stat]:.6f}\t{s['mr_mel'][stat]:.6f}")
        for sk in self.skipped:
            lines.append(f"# skipped\t{sk['clip']}\t{sk['reason']}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> dict:
        return {"rows": self.rows, "skipped": self.skipped, "summary": self.summary()}


def _crop(seg: AudioSegment) -> AudioSegment | None:
    t = len(seg) - len(seg) % 512
    if t < MIN_EVAL_SAMPLES:
        return None
    return AudioSegment(seg.samples[:t], seg.sample_rate)


def evaluate_forward(forward, data_dir: str, cfg: MetricConfig | None = None) -> EvalReport:
    """Evaluate any segment->segment callable over a directory of WAV files.

    Returns per-clip metrics; the first successfully evaluated (reference,
    output) pair is kept on the report as `.example` for figure rendering.
    """
    cfg = cfg or MetricConfig()
    names = sorted(f for f in os.listdir(data_dir) if f.endswith(".wav"))
    if not names:
        raise DataError(f"evaluate_forward: no .wav files in {data_dir}")
    rows, skipped = [], []
    example = None
    for name in names:
        path = os.path.join(data_dir, name)
        try:
            clip = _crop(read_wav(path))
            if clip is None:
                skipped.append({"clip": name, "reason": f"shorter than {MIN_EVAL_SAMPLES} samples"})
                continue
            out = forward(clip)
            rows.append(
                {
                    "clip": name,
                    "mr_stft": mr_stft_metric(clip, out, cfg),
                    "mr_mel": mr_mel_metric(clip, out, cfg),
                }
            )
            if example is None:
                example = (clip, out)
        except MelvoxError as e:
            skipped.append({"clip": name, "reason": str(e)})
    report = EvalReport(rows=rows, skipped=skipped)
    report.example = example
    return report


def evaluate_model(
    gen: GeneratorModel, mel_cfg: MelConfig, data_dir: str, cfg: MetricConfig | None = None
) -> EvalReport:
    """Per-clip generator resynthesis metrics over a corpus directory."""
    return evaluate_forward(lambda seg: generator_forward(seg, gen, mel_cfg), data_dir, cfg)


def write_report(
    report: EvalReport,
    out_dir: str,
    figures: bool = True,
    manifest_path: str | None = None,
    mel_cfg: MelConfig | None = None,
) -> dict:
    """report.tsv + report.json, plus rendered figures when enabled."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "tsv": os.path.join(out_dir, "report.tsv"),
        "json": os.path.join(out_dir, "report.json"),
    }
    with open(paths["tsv"], "w") as f:
        f.write(report.to_tsv())
    with open(paths["json"], "w") as f:
        json.dump(report.to_json(), f, indent=2, sort_keys=True)
        f.write("\n")
    if figures:
        from . import figures as figs

        if report.rows:
            paths["histogram"] = figs.metric_histograms(report, os.path.join(out_dir, "metrics_hist.png"))
        example = getattr(report, "example", None)
        if example is not None:
            paths["mel_compare"] = figs.mel_comparison(
                example[0], example[1], mel_cfg or MelConfig(), os.path.join(out_dir, "mel_compare.png")
            )
        if manifest_path:
            paths["loss_curves"] = figs.loss_curves(manifest_path, os.path.join(out_dir, "loss_curves.png"))
    return paths
