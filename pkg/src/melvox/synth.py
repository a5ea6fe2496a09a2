"""Synthetic music-like corpus: harmonic voice stacks, exponentially
decaying broadband percussive bursts, and a low noise floor. Every clip is
a pure function of (seed, clip index), so corpora regenerate bitwise and
parallel generation cannot change the data.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .signal import AudioSegment, normalize_audio
from .wavio import write_wav


@dataclass(frozen=True)
class SyntheticDatasetSpec:
    n_clips: int = 64
    clip_seconds: float = 2.0
    sample_rate: int = 44100
    min_voices: int = 1
    max_voices: int = 8
    f0_range: tuple = (100.0, 2000.0)
    percussive_rate: float = 4.0  # expected bursts per second
    noise_floor: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.n_clips < 1 or self.clip_seconds <= 0 or self.sample_rate < 1:
            raise ConfigError("SyntheticDatasetSpec: need clips, positive duration and sample rate")
        if not 1 <= self.min_voices <= self.max_voices:
            raise ConfigError(
                f"SyntheticDatasetSpec: bad voice range [{self.min_voices}, {self.max_voices}]"
            )
        lo, hi = self.f0_range
        if not 0 < lo < hi or hi >= self.sample_rate / 2:
            raise ConfigError(f"SyntheticDatasetSpec: f0 range {self.f0_range} outside (0, Nyquist)")
        if self.percussive_rate < 0 or self.noise_floor < 0:
            raise ConfigError("SyntheticDatasetSpec: rates and floors must be >= 0")

    @property
    def clip_samples(self) -> int:
        return int(round(self.clip_seconds * self.sample_rate))


def _harmonic_voice(rng: np.random.Generator, t: np.ndarray, spec: SyntheticDatasetSpec) -> np.ndarray:
    lo, hi = spec.f0_range
    f0 = float(np.exp(rng.uniform(np.log(lo), np.log(hi))))  # log-uniform pitch
    nyquist = spec.sample_rate / 2.0
    n_harm = min(8, max(1, int(nyquist / f0) - 1))
    voice = np.zeros_like(t)
    for h in range(1, n_harm + 1):
        amp = rng.uniform(0.2, 1.0) / h
        phase = rng.uniform(0.0, 2.0 * np.pi)
        voice += amp * np.sin(2.0 * np.pi * h * f0 * t + phase)
    # slow amplitude envelope so voices swell and fade inside the clip
    env_rate = rng.uniform(0.25, 2.0)
    env_phase = rng.uniform(0.0, 2.0 * np.pi)
    env = 0.5 * (1.0 + np.sin(2.0 * np.pi * env_rate * t + env_phase))
    return voice * env


def _percussive_events(rng: np.random.Generator, n: int, spec: SyntheticDatasetSpec) -> np.ndarray:
    out = np.zeros(n, dtype=np.float64)
    n_events = rng.poisson(spec.percussive_rate * spec.clip_seconds)
    for _ in range(n_events):
        onset = int(rng.integers(0, n))
        tau = rng.uniform(0.005, 0.05) * spec.sample_rate
        length = min(n - onset, int(6.0 * tau))
        if length < 8:
            continue
        burst = rng.normal(size=length) * np.exp(-np.arange(length) / tau)
        out[onset : onset + length] += rng.uniform(0.5, 1.5) * burst
    return out


def synth_clip(spec: SyntheticDatasetSpec, index: int) -> AudioSegment:
    """Clip `index` of the corpus; depends only on (spec.seed, index)."""
    rng = np.random.default_rng([spec.seed, index])
    n = spec.clip_samples
    t = np.arange(n, dtype=np.float64) / spec.sample_rate
    mix = np.zeros(n, dtype=np.float64)
    n_voices = int(rng.integers(spec.min_voices, spec.max_voices + 1))
    for _ in range(n_voices):
        mix += _harmonic_voice(rng, t, spec)
    mix += _percussive_events(rng, n, spec)
    mix += spec.noise_floor * rng.normal(size=n)
    return normalize_audio(mix.astype(np.float32), spec.sample_rate)


def synth_dataset(spec: SyntheticDatasetSpec, out_dir: str) -> list:
    """Write the corpus as float32 WAV files; returns the file paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for i in range(spec.n_clips):
        clip = synth_clip(spec, i)
        path = os.path.join(out_dir, f"clip_{i:04d}.wav")
        write_wav(path, clip, fmt="f32")
        paths.append(path)
    return paths
