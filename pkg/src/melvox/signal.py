"""Deterministic DSP front-end.

STFT, HTK mel filterbank, log-mel extraction, per-file peak normalization,
and the anti-aliased half-band resamplers used inside generator blocks.
Everything routes through the autodiff ops, so spectra of model output stay
differentiable; plain arrays and AudioSegments ride along as constants.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ContractError, DataError


@dataclass(frozen=True)
class SpectralConfig:
    n_fft: int = 1024
    win_length: int = 1024
    hop_length: int = 256
    center: bool = True

    def __post_init__(self):
        if self.n_fft < 1 or self.win_length < 1 or self.hop_length < 1:
            raise ConfigError("SpectralConfig: n_fft, win_length and hop_length must be positive")
        if self.win_length > self.n_fft:
            raise ConfigError(f"SpectralConfig: win_length {self.win_length} exceeds n_fft {self.n_fft}")
        if self.hop_length > self.win_length:
            raise ConfigError(f"SpectralConfig: hop_length {self.hop_length} exceeds win_length {self.win_length}")

    @property
    def n_bins(self) -> int:
        return self.n_fft // 2 + 1


@dataclass(frozen=True)
class MelConfig:
    spectral: SpectralConfig = field(default_factory=SpectralConfig)
    n_mels: int = 128
    f_min: float = 0.0
    f_max: float | None = None  # None: Nyquist of the sample rate in use
    log_floor: float = 1e-5

    def __post_init__(self):
        if self.n_mels < 1:
            raise ConfigError("MelConfig: n_mels must be >= 1")
        if self.log_floor <= 0:
            raise ConfigError("MelConfig: log_floor must be positive")
        if self.f_min < 0:
            raise ConfigError("MelConfig: f_min must be >= 0")
        if self.f_max is not None and self.f_max <= self.f_min:
            raise ConfigError(f"MelConfig: f_max {self.f_max} must exceed f_min {self.f_min}")


@dataclass
class AudioSegment:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples)
        if self.samples.ndim != 1:
            raise DataError(f"AudioSegment: expected mono 1-D samples, got shape {self.samples.shape}")
        if self.samples.size and not np.all(np.isfinite(self.samples)):
            raise DataError("AudioSegment: non-finite sample")
        if self.sample_rate < 1:
            raise DataError(f"AudioSegment: bad sample rate {self.sample_rate}")

    def __len__(self) -> int:
        return self.samples.shape[0]


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if isinstance(x, AudioSegment):
        return Tensor(x.samples)
    return Tensor(np.asarray(x))


def hann_periodic(length: int) -> np.ndarray:
    n = np.arange(length)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / length)


def stft(x, cfg: SpectralConfig) -> Tensor:
    """[T] samples -> [2, n_fft/2+1, frames] (real, imag), differentiable.

    With center=True the signal is reflect-padded by n_fft/2 on both sides
    and the frame count is floor(T/hop) + 1, trimmed to exactly T/hop by
    dropping the last frame when hop divides T; that keeps mel frames in a
    fixed integer ratio to the sample count.
    """
    xt = _as_tensor(x)
    if xt.data.ndim != 1:
        raise ContractError(f"stft: expected 1-D samples, got shape {xt.shape}")
    t = xt.shape[0]
    if t < cfg.hop_length:
        raise ContractError(f"stft: segment of {t} samples is shorter than one hop ({cfg.hop_length})")

    if cfg.center:
        half = cfg.n_fft // 2
        if t <= half:
            raise ContractError(
                f"stft: centered mode needs more than n_fft/2 = {half} samples, got {t}"
            )
        padded = ad.reflect_pad1d(xt, half, half)
        n_frames = t // cfg.hop_length + (0 if t % cfg.hop_length == 0 else 1)
    else:
        if t < cfg.n_fft:
            raise ContractError(f"stft: uncentered mode needs at least n_fft = {cfg.n_fft} samples, got {t}")
        padded = xt
        n_frames = (t - cfg.n_fft) // cfg.hop_length + 1

    frames = ad.frame_signal(padded, cfg.n_fft, cfg.hop_length, n_frames)

    win = hann_periodic(cfg.win_length)
    if cfg.win_length < cfg.n_fft:
        lead = (cfg.n_fft - cfg.win_length) // 2
        win = np.pad(win, (lead, cfg.n_fft - cfg.win_length - lead))
    win_rows = np.broadcast_to(win.astype(xt.dtype), (n_frames, cfg.n_fft)).copy()
    spec = ad.rdft(ad.mul(frames, Tensor(win_rows)))
    return ad.transpose(spec, (0, 2, 1))


def magnitude(spec: Tensor) -> Tensor:
    """[2, F, N] -> [F, N]; sqrt(re^2 + im^2 + 1e-20) keeps the slope finite at 0.

    The epsilon sits far below the mel log floor so silent input still lands
    exactly on the floor after filterbank summation.
    """
    f, n = spec.shape[1], spec.shape[2]
    re = ad.reshape(ad.narrow(spec, 0, 0, 1), (f, n))
    im = ad.reshape(ad.narrow(spec, 0, 1, 1), (f, n))
    return ad.sqrt(ad.add(ad.add(ad.square(re), ad.square(im)), 1e-20))


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(cfg: MelConfig, sample_rate: int) -> np.ndarray:
    """Triangular filters on the HTK mel scale: [n_mels, n_fft/2+1]."""
    nyquist = sample_rate / 2.0
    f_max = nyquist if cfg.f_max is None else cfg.f_max
    if f_max > nyquist:
        raise ConfigError(f"mel_filterbank: f_max {f_max} exceeds Nyquist {nyquist}")
    if cfg.f_min >= f_max:
        raise ConfigError(f"mel_filterbank: f_min {cfg.f_min} must lie below f_max {f_max}")

    n_bins = cfg.spectral.n_bins
    if cfg.n_mels > n_bins:
        raise ConfigError(
            f"mel_filterbank: {cfg.n_mels} filters over {n_bins} FFT bins leaves empty filters"
        )
    edges = mel_to_hz(np.linspace(hz_to_mel(cfg.f_min), hz_to_mel(f_max), cfg.n_mels + 2))
    bin_freqs = np.arange(n_bins) * sample_rate / cfg.spectral.n_fft

    fb = np.zeros((cfg.n_mels, n_bins))
    for i in range(cfg.n_mels):
        lo, center, hi = edges[i], edges[i + 1], edges[i + 2]
        rise = (bin_freqs - lo) / max(center - lo, 1e-12)
        fall = (hi - bin_freqs) / max(hi - center, 1e-12)
        fb[i] = np.maximum(0.0, np.minimum(rise, fall))
        if fb[i].sum() == 0.0:
            # triangle narrower than the bin spacing: keep the row live by
            # assigning full weight to the bin nearest its center
            fb[i, int(np.argmin(np.abs(bin_freqs - center)))] = 1.0
    return fb


def mel_spectrogram(x, cfg: MelConfig, sample_rate: int | None = None) -> Tensor:
    """log(max(filterbank . |STFT|, log_floor)) -> [n_mels, frames]."""
    if isinstance(x, AudioSegment):
        sample_rate = x.sample_rate
    if sample_rate is None:
        raise ContractError("mel_spectrogram: sample_rate is required unless x is an AudioSegment")
    xt = _as_tensor(x)
    spec = stft(xt, cfg.spectral)
    mag = magnitude(spec)
    fb = Tensor(mel_filterbank(cfg, sample_rate).astype(xt.dtype))
    mel = ad.matmul(fb, mag)
    return ad.log(ad.maximum_const(mel, cfg.log_floor))


def normalize_audio(samples, sample_rate: int) -> AudioSegment:
    """Peak normalization per file; silence passes through untouched."""
    arr = np.asarray(samples, dtype=np.float32)
    if arr.ndim != 1 or arr.size == 0:
        raise DataError(f"normalize_audio: expected non-empty mono samples, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError("normalize_audio: non-finite sample")
    peak = float(np.max(np.abs(arr)))
    if peak > 0.0:
        arr = arr / np.float32(peak)
    return AudioSegment(arr, sample_rate)


def halfband_kernel() -> np.ndarray:
    """25-tap Kaiser (beta=8) windowed sinc at the half-band cutoff.

    Odd length keeps the filter zero-phase under same-length application;
    12 nonzero off-center taps form the interpolating polyphase branch.
    """
    n = 25
    center = n // 2
    offsets = np.arange(n) - center
    h = 0.5 * np.sinc(0.5 * offsets) * np.kaiser(n, 8.0)
    return h / h.sum()


_HALFBAND = halfband_kernel()


def resample2x(x: Tensor, direction: str) -> Tensor:
    """[C, T] -> [C, 2T] (up) or [C, T/2] (down), anti-aliased, differentiable."""
    if direction == "up":
        return ad.fir1d(ad.zero_stuff2(x), 2.0 * _HALFBAND)
    if direction == "down":
        return ad.decimate2(ad.fir1d(x, _HALFBAND))
    raise ContractError(f"resample2x: direction must be 'up' or 'down', got {direction!r}")
