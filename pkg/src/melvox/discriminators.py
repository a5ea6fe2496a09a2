"""Adversarial critics: a multi-period discriminator over periodic 2-D
foldings of the waveform and a multi-resolution spectrogram discriminator
over sub-banded complex STFTs. Every conv layer's output is recorded so
the feature-matching loss can reach all of them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor, kaiming_uniform
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import ConfigError, ContractError, ShapeError
from .signal import SpectralConfig, stft


@dataclass(frozen=True)
class MPDConfig:
    periods: tuple = (2, 3, 5, 7, 11)
    channels: tuple = (4, 8, 16)
    slope: float = 0.1

    def __post_init__(self):
        if len(self.periods) != 5 or len(set(self.periods)) != 5:
            raise ConfigError(f"MPDConfig: need 5 distinct periods, got {self.periods}")
        if any(p < 1 for p in self.periods) or not self.channels:
            raise ConfigError("MPDConfig: bad periods or empty channel schedule")


def _default_resolutions():
    return tuple(
        SpectralConfig(n_fft=n, win_length=n, hop_length=n // 4) for n in (2048, 1024, 512)
    )


@dataclass(frozen=True)
class MRSDConfig:
    resolutions: tuple = field(default_factory=_default_resolutions)
    band_edges: tuple = (0.0, 0.1, 0.25, 0.5, 0.75, 1.0)
    channels: tuple = (4, 8)
    slope: float = 0.1

    def __post_init__(self):
        if len(self.resolutions) != 3:
            raise ConfigError(f"MRSDConfig: need exactly 3 resolutions, got {len(self.resolutions)}")
        e = self.band_edges
        if e[0] != 0.0 or e[-1] != 1.0 or any(a >= b for a, b in zip(e, e[1:])):
            raise ConfigError(f"MRSDConfig: band edges must rise strictly from 0 to 1, got {e}")
        if not self.channels:
            raise ConfigError("MRSDConfig: empty channel schedule")


@dataclass
class DiscriminatorOutput:
    """logits[i] and features[i][j] for sub-discriminator i, layer j;
    feature_counts mirrors features with each layer's channel count N_j."""

    logits: list
    features: list
    feature_counts: list


@dataclass
class DiscriminatorModel:
    mpd: MPDConfig
    mrsd: MRSDConfig
    params: dict

    def parameters(self) -> list:
        return list(self.params.values())


def band_slices(n_bins: int, edges) -> list:
    """Partition [0, n_bins) at edge fractions of Nyquist; every band non-empty."""
    bounds = [round(frac * n_bins) for frac in edges]
    slices = [(a, b) for a, b in zip(bounds, bounds[1:])]
    if any(b <= a for a, b in slices):
        raise ConfigError(f"band_slices: empty band in {slices} for {n_bins} bins")
    return slices


def _conv2d_param(params, rng, name, c_out, c_in, kh, kw):
    fan_in = c_in * kh * kw
    params[name + ".w"] = Parameter(name + ".w", kaiming_uniform(rng, (c_out, c_in, kh, kw), fan_in))
    params[name + ".b"] = Parameter(name + ".b", np.zeros(c_out, dtype=np.float32))


def build_discriminators(mpd: MPDConfig | None = None, mrsd: MRSDConfig | None = None, seed: int = 0) -> DiscriminatorModel:
    mpd = mpd or MPDConfig()
    mrsd = mrsd or MRSDConfig()
    rng = np.random.default_rng(seed)
    params: dict = {}
    for pi in range(len(mpd.periods)):
        chans = [1] + list(mpd.channels)
        for li in range(len(mpd.channels)):
            _conv2d_param(params, rng, f"mpd{pi}.conv{li}", chans[li + 1], chans[li], 5, 1)
        _conv2d_param(params, rng, f"mpd{pi}.post", 1, chans[-1], 3, 1)
    n_bands = len(mrsd.band_edges) - 1
    for ri in range(len(mrsd.resolutions)):
        for bi in range(n_bands):
            chans = [2] + list(mrsd.channels)
            for li in range(len(mrsd.channels)):
                _conv2d_param(params, rng, f"mrsd{ri}.band{bi}.conv{li}", chans[li + 1], chans[li], 3, 3)
            _conv2d_param(params, rng, f"mrsd{ri}.band{bi}.post", 1, chans[-1], 3, 3)
    return DiscriminatorModel(mpd=mpd, mrsd=mrsd, params=params)


def fold_periodic(x: Tensor, period: int) -> Tensor:
    """[T] -> [1, ceil(T/period), period]; the tail is reflect-padded."""
    t = x.shape[0]
    pad = (-t) % period
    h = ad.reflect_pad1d(x, 0, pad) if pad else x
    return ad.reshape(h, (1, (t + pad) // period, period))


def mpd_forward(wave: Tensor, m: DiscriminatorModel) -> DiscriminatorOutput:
    """[1, T] (or [T]) waveform -> logits + per-layer features per period."""
    x = wave if wave.data.ndim == 1 else ad.reshape(wave, (wave.shape[-1],))
    t = x.shape[0]
    if t == 0:
        raise ContractError("mpd_forward: empty input")
    cfg = m.mpd
    if t < max(cfg.periods):
        raise ContractError(f"mpd_forward: length {t} shorter than max period {max(cfg.periods)}")
    logits, features, counts = [], [], []
    for pi, period in enumerate(cfg.periods):
        h = fold_periodic(x, period)
        feats, ns = [], []
        for li in range(len(cfg.channels)):
            w = m.params[f"mpd{pi}.conv{li}.w"].tensor
            b = m.params[f"mpd{pi}.conv{li}.b"].tensor
            h = ad.conv2d(h, w, b, stride=(3, 1), padding=(2, 0))
            h = ad.leaky_relu(h, cfg.slope)
            feats.append(h)
            ns.append(h.shape[0])
        w = m.params[f"mpd{pi}.post.w"].tensor
        b = m.params[f"mpd{pi}.post.b"].tensor
        h = ad.conv2d(h, w, b, padding=(1, 0))
        feats.append(h)
        ns.append(h.shape[0])
        logits.append(h)
        features.append(feats)
        counts.append(ns)
    return DiscriminatorOutput(logits=logits, features=features, feature_counts=counts)


def mrsd_forward(wave: Tensor, m: DiscriminatorModel) -> DiscriminatorOutput:
    """[1, T] (or [T]) waveform -> per-resolution sub-band logits + features."""
    x = wave if wave.data.ndim == 1 else ad.reshape(wave, (wave.shape[-1],))
    if x.shape[0] == 0:
        raise ContractError("mrsd_forward: empty input")
    cfg = m.mrsd
    logits, features, counts = [], [], []
    for ri, sc in enumerate(cfg.resolutions):
        spec = stft(x, sc)  # [2, F, frames]
        feats, ns, band_logits = [], [], []
        for bi, (lo, hi) in enumerate(band_slices(spec.shape[1], cfg.band_edges)):
            h = ad.narrow(spec, 1, lo, hi - lo)
            for li in range(len(cfg.channels)):
                w = m.params[f"mrsd{ri}.band{bi}.conv{li}.w"].tensor
                b = m.params[f"mrsd{ri}.band{bi}.conv{li}.b"].tensor
                h = ad.conv2d(h, w, b, stride=(1, 2), padding=(1, 1))
                h = ad.leaky_relu(h, cfg.slope)
                feats.append(h)
                ns.append(h.shape[0])
            w = m.params[f"mrsd{ri}.band{bi}.post.w"].tensor
            b = m.params[f"mrsd{ri}.band{bi}.post.b"].tensor
            h = ad.conv2d(h, w, b, padding=(1, 1))
            feats.append(h)
            ns.append(h.shape[0])
            band_logits.append(h)
        logits.append(ad.concat(band_logits, axis=1))
        features.append(feats)
        counts.append(ns)
    return DiscriminatorOutput(logits=logits, features=features, feature_counts=counts)


def discriminate(wave: Tensor, m: DiscriminatorModel) -> DiscriminatorOutput:
    """All 8 sub-discriminators (5 MPD + 3 MRSD) in one flat output."""
    a = mpd_forward(wave, m)
    b = mrsd_forward(wave, m)
    return DiscriminatorOutput(
        logits=a.logits + b.logits,
        features=a.features + b.features,
        feature_counts=a.feature_counts + b.feature_counts,
    )


def save_discriminators(path, m: DiscriminatorModel) -> None:
    config = {
        "component": "discriminators",
        "mpd": {"periods": list(m.mpd.periods), "channels": list(m.mpd.channels), "slope": m.mpd.slope},
        "mrsd": {
            "resolutions": [[sc.n_fft, sc.win_length, sc.hop_length] for sc in m.mrsd.resolutions],
            "band_edges": list(m.mrsd.band_edges),
            "channels": list(m.mrsd.channels),
            "slope": m.mrsd.slope,
        },
    }
    save_checkpoint(path, config, {name: p.data for name, p in m.params.items()}, state={})


def load_discriminators(path) -> DiscriminatorModel:
    config, tensors, _ = load_checkpoint(path)
    if config.get("component") != "discriminators":
        raise ContractError(
            f"load_discriminators: checkpoint holds component {config.get('component')!r}"
        )
    mpd = MPDConfig(
        periods=tuple(config["mpd"]["periods"]),
        channels=tuple(config["mpd"]["channels"]),
        slope=config["mpd"]["slope"],
    )
    mrsd = MRSDConfig(
        resolutions=tuple(
            SpectralConfig(n_fft=n, win_length=w, hop_length=h)
            for n, w, h in config["mrsd"]["resolutions"]
        ),
        band_edges=tuple(config["mrsd"]["band_edges"]),
        channels=tuple(config["mrsd"]["channels"]),
        slope=config["mrsd"]["slope"],
    )
    m = build_discriminators(mpd, mrsd, seed=0)
    for name, p in m.params.items():
        if tensors[name].shape != p.data.shape:
            raise ShapeError(f"load_discriminators: tensor {name} has shape {tensors[name].shape}")
        p.data = tensors[name]
    return m
