"""Training objectives: reconstruction, latent alignment, multi-scale
spectral distances, least-squares adversarial terms, feature matching,
and their weighted aggregation.

All functions return scalar (0-d) tensors wired into the autodiff graph,
so a single backward() call from the aggregate distributes gradients to
every contributing parameter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ContractError, NumericError, ShapeError
from .signal import MelConfig, SpectralConfig, _as_tensor, magnitude, mel_spectrogram, stft


@dataclass(frozen=True)
class LossWeights:
    """Per-term weights of the aggregate objective."""

    lambda_wav: float = 1.0
    lambda_dac: float = 15.0
    lambda_mel: float = 15.0
    lambda_stft: float = 1.0
    lambda_gen: float = 1.0
    lambda_feat: float = 2.0

    def __post_init__(self):
        for name, value in vars(self).items():
            v = float(value)
            if not np.isfinite(v) or v < 0.0:
                raise ConfigError(f"LossWeights.{name} must be finite and >= 0, got {value!r}")


@dataclass(frozen=True)
class MultiScaleConfig:
    """Family of spectral analysis settings for the multi-resolution losses.

    Each scale pairs a SpectralConfig with an optional mel-bin count; the
    mel count may be None for scales only used by the stft kind.
    """

    scales: tuple

    def __post_init__(self):
        if not self.scales:
            raise ConfigError("MultiScaleConfig: needs at least one scale")
        sizes = [sc.n_fft for sc, _ in self.scales]
        if len(set(sizes)) != len(sizes):
            raise ConfigError(f"MultiScaleConfig: duplicate FFT sizes {sizes}")


_PYRAMID = ((2048, 160), (1024, 128), (512, 64), (256, 32), (128, 16))


def default_multiscale(n_scales: int = 5) -> MultiScaleConfig:
    """Window/FFT pyramid 2048..128 with hop = window/4 and matching mel bins.

    Smaller presets keep the largest windows first, so trimming drops the
    finest time resolutions rather than the coarse envelope terms.
    """
    if not 1 <= n_scales <= len(_PYRAMID):
        raise ConfigError(f"default_multiscale: n_scales must be in [1, {len(_PYRAMID)}]")
    scales = tuple(
        (SpectralConfig(n_fft=w, win_length=w, hop_length=w // 4), bins)
        for w, bins in _PYRAMID[:n_scales]
    )
    return MultiScaleConfig(scales=scales)


def _one_minus(t: Tensor) -> Tensor:
    return ad.add(ad.mul(t, -1.0), 1.0)


def loss_waveform(x, x_hat) -> Tensor:
    """Mean absolute error between two equal-length sample vectors."""
    a, b = _as_tensor(x), _as_tensor(x_hat)
    if a.shape != b.shape:
        raise ShapeError(f"loss_waveform: length mismatch {a.shape} vs {b.shape}")
    return ad.tmean(ad.absolute(ad.sub(a, b)))


def loss_latent_align(enc_out: Tensor, teacher_latent: Tensor) -> Tensor:
    """Mean absolute error against a frozen teacher latent.

    The teacher side is a constant by contract; passing a tensor that
    requires gradient is an error rather than a silent detach, because it
    almost always means the teacher was not actually frozen.
    """
    teacher = _as_tensor(teacher_latent)
    if teacher.requires_grad:
        raise ContractError("loss_latent_align: teacher latent must not require gradient")
    if enc_out.shape != teacher.shape:
        raise ShapeError(f"loss_latent_align: shape mismatch {enc_out.shape} vs {teacher.shape}")
    return ad.tmean(ad.absolute(ad.sub(enc_out, teacher)))


def loss_multiscale_spec(x, x_hat, cfg: MultiScaleConfig, kind: str, sample_rate: int = 44100) -> Tensor:
    """Sum over scales of the mean-L1 spectral distance.

    kind "mel" compares log-mel spectrograms, kind "stft" linear magnitudes.
    """
    if kind not in ("mel", "stft"):
        raise ConfigError(f"loss_multiscale_spec: unknown kind {kind!r}")
    a, b = _as_tensor(x), _as_tensor(x_hat)
    if a.shape != b.shape:
        raise ShapeError(f"loss_multiscale_spec: length mismatch {a.shape} vs {b.shape}")
    total = None
    for sc, bins in cfg.scales:
        if kind == "mel":
            if bins is None:
                raise ConfigError(f"loss_multiscale_spec: scale n_fft={sc.n_fft} has no mel bin count")
            mc = MelConfig(spectral=sc, n_mels=bins)
            ra = mel_spectrogram(a, mc, sample_rate)
            rb = mel_spectrogram(b, mc, sample_rate)
        else:
            ra = magnitude(stft(a, sc))
            rb = magnitude(stft(b, sc))
        term = ad.tmean(ad.absolute(ad.sub(ra, rb)))
        total = term if total is None else ad.add(total, term)
    return total


def loss_adv_generator(fake_logits) -> Tensor:
    """Least-squares generator loss: sum_i mean((1 - D_i(G(x)))^2)."""
    if not fake_logits:
        raise ContractError("loss_adv_generator: no sub-discriminator outputs")
    total = None
    for d in fake_logits:
        if d is None:
            raise ContractError("loss_adv_generator: missing sub-discriminator output")
        term = ad.tmean(ad.square(_one_minus(d)))
        total = term if total is None else ad.add(total, term)
    return total


def loss_adv_discriminator(real_logits, fake_logits) -> Tensor:
    """Least-squares discriminator loss: sum_i mean(D_i(G(x))^2) + mean((1 - D_i(x))^2)."""
    if not real_logits or not fake_logits or len(real_logits) != len(fake_logits):
        raise ContractError(
            f"loss_adv_discriminator: sub-discriminator sets differ "
            f"({len(real_logits)} real vs {len(fake_logits)} fake)"
        )
    total = None
    for r, f in zip(real_logits, fake_logits):
        if r is None or f is None:
            raise ContractError("loss_adv_discriminator: missing sub-discriminator output")
        term = ad.add(ad.tmean(ad.square(f)), ad.tmean(ad.square(_one_minus(r))))
        total = term if total is None else ad.add(total, term)
    return total


def loss_feature_matching(real_feats, fake_feats) -> Tensor:
    """Layer-wise L1 between discriminator feature maps, weighted 1/N per layer.

    N is the layer's channel count (feature elements per frame position).
    The real side is detached internally: gradient reaches the generator only.
    """
    if len(real_feats) != len(fake_feats):
        raise ContractError(
            f"loss_feature_matching: {len(real_feats)} real vs {len(fake_feats)} fake sub-discriminators"
        )
    total = None
    for sub_idx, (rs, fs) in enumerate(zip(real_feats, fake_feats)):
        if len(rs) != len(fs):
            raise ContractError(f"loss_feature_matching: layer count mismatch in sub-discriminator {sub_idx}")
        for r, f in zip(rs, fs):
            rt, ft = _as_tensor(r), _as_tensor(f)
            if rt.shape != ft.shape:
                raise ShapeError(f"loss_feature_matching: feature shape mismatch {rt.shape} vs {ft.shape}")
            const = Tensor(rt.data)
            term = ad.mul(ad.tmean(ad.absolute(ad.sub(ft, const))), 1.0 / rt.shape[0])
            total = term if total is None else ad.add(total, term)
    if total is None:
        raise ContractError("loss_feature_matching: no feature maps")
    return total


_COMPONENTS = ("wav", "dac", "mel", "stft", "gen", "feat")


def loss_total(components: dict, w: LossWeights) -> Tensor:
    """Weighted sum over the six named components.

    components maps {wav, dac, mel, stft, gen, feat} to scalar tensors (or
    plain floats for terms disabled in the current stage).
    """
    weights = {
        "wav": w.lambda_wav,
        "dac": w.lambda_dac,
        "mel": w.lambda_mel,
        "stft": w.lambda_stft,
        "gen": w.lambda_gen,
        "feat": w.lambda_feat,
    }
    missing = [name for name in _COMPONENTS if name not in components]
    if missing:
        raise ContractError(f"loss_total: missing components {missing}")
    total = None
    for name in _COMPONENTS:
        comp = components[name]
        value = comp if isinstance(comp, Tensor) else Tensor(np.asarray(float(comp), dtype=np.float32))
        if not np.all(np.isfinite(value.data)):
            raise NumericError(f"loss_total: component '{name}' is not finite")
        term = ad.mul(value, weights[name])
        total = term if total is None else ad.add(total, term)
    return total
