"""Mel-to-waveform generator: convolutional encoder with anti-aliased
periodic activations over mel frames, a x2 temporal reduction down to the
codec frame rate, projection into the teacher's bottleneck, and the
grafted teacher decoder.

The encoder's residual branches and the skip-path projection are
zero-initialized, so a fresh generator starts out as "teacher decoder fed
through a linear probe" and later stages switch on smoothly.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor, kaiming_uniform
from .checkpoint import load_checkpoint, save_checkpoint
from .codec import LATENT_HOP, CodecConfig, CodecModel, build_rvq_stack, decoder_forward, desk_codec_config
from .errors import ConfigError, ContractError, ShapeError, StateError
from .signal import MelConfig, _as_tensor, mel_spectrogram


@dataclass(frozen=True)
class BottleneckMode:
    """Which latent the encoder predicts: stacked codebook entries or Z."""

    variant: str
    width: int


@dataclass
class AMPBlockConfig:
    """One residual stack: per-dilation snake + dilated conv branches.

    alphas/weights/biases hold the Parameter objects for each branch in
    dilation order; use_resampling guards the activation between 2x
    up/downsampling to keep its harmonics below Nyquist.
    """

    channels: int
    dilations: tuple
    kernel: int
    use_resampling: bool
    alphas: list = field(default_factory=list)
    weights: list = field(default_factory=list)
    biases: list = field(default_factory=list)


@dataclass(frozen=True)
class GeneratorConfig:
    mel_bins: int = 128
    c0: int = 48
    c1: int = 64
    n_amp_blocks: int = 2
    amp_kernel: int = 3
    dilations: tuple = (1, 3, 5)
    use_resampling: bool = True
    mode: str = "Z"
    codec: CodecConfig = field(default_factory=desk_codec_config)

    def __post_init__(self):
        if self.mode not in ("QL", "Z"):
            raise ConfigError(f"GeneratorConfig: mode must be 'QL' or 'Z', got {self.mode!r}")
        if not self.dilations or any(d < 1 for d in self.dilations):
            raise ConfigError(f"GeneratorConfig: dilations must be positive, got {self.dilations}")
        if self.amp_kernel % 2 != 1:
            raise ConfigError("GeneratorConfig: amp_kernel must be odd")
        if min(self.mel_bins, self.c0, self.c1, self.n_amp_blocks) < 1:
            raise ConfigError("GeneratorConfig: sizes must be >= 1")

    @property
    def bottleneck_width(self) -> int:
        if self.mode == "QL":
            return self.codec.n_stages * self.codec.codebook_dim
        return self.codec.latent_width


def parameter_manifest(cfg: GeneratorConfig) -> dict:
    """name -> shape for every trainable tensor; pure function of config."""
    shapes = {}
    shapes["encoder.stem.w"] = (cfg.c0, cfg.mel_bins, 7)
    shapes["encoder.stem.b"] = (cfg.c0,)
    for i in range(cfg.n_amp_blocks):
        for j in range(len(cfg.dilations)):
            shapes[f"encoder.amp{i}.d{j}.log_alpha"] = (cfg.c0,)
            shapes[f"encoder.amp{i}.d{j}.w"] = (cfg.c0, cfg.c0, cfg.amp_kernel)
            shapes[f"encoder.amp{i}.d{j}.b"] = (cfg.c0,)
    shapes["encoder.down.w"] = (cfg.c1, cfg.c0, 4)
    shapes["encoder.down.b"] = (cfg.c1,)
    shapes["encoder.head.w"] = (cfg.bottleneck_width, cfg.c1, 1)
    shapes["encoder.head.b"] = (cfg.bottleneck_width,)
    d = cfg.codec.latent_width
    shapes["skip.proj.w"] = (d, cfg.c0, 1)
    shapes["skip.proj.b"] = (d,)
    chans = [cfg.codec.stem_channels] + list(cfg.codec.stage_channels)
    rchans = chans[::-1]
    shapes["decoder.stem.w"] = (rchans[0], d, 3)
    shapes["decoder.stem.b"] = (rchans[0],)
    for j, s in enumerate(cfg.codec.strides):
        shapes[f"decoder.up{j}.w"] = (rchans[j], rchans[j + 1], 2 * s)
        shapes[f"decoder.up{j}.b"] = (rchans[j + 1],)
    shapes["decoder.head.w"] = (1, rchans[-1], 7)
    shapes["decoder.head.b"] = (1,)
    return shapes


def parameter_count(cfg: GeneratorConfig) -> int:
    return sum(math.prod(shape) for shape in parameter_manifest(cfg).values())


@dataclass
class GeneratorModel:
    config: GeneratorConfig
    params: dict
    amp_blocks: list
    mode: BottleneckMode
    up_proj: list  # teacher up-projections, used to decode QL predictions
    skip_enabled: bool = False

    def parameters(self) -> list:
        return list(self.params.values())

    def decoder_parameters(self) -> list:
        return [p for name, p in self.params.items() if name.startswith("decoder.")]

    def freeze_decoder(self) -> None:
        for p in self.decoder_parameters():
            p.freeze()

    def unfreeze_decoder(self) -> None:
        for p in self.decoder_parameters():
            p.unfreeze()

    def enable_skip(self) -> None:
        self.skip_enabled = True


def build_generator(cfg: GeneratorConfig, codec: CodecModel | None = None, seed: int = 0) -> GeneratorModel:
    """Allocate per the manifest; graft the teacher decoder when given.

    The decoder starts frozen and the skip path disabled (stage-1 state).
    Without a teacher the decoder is freshly initialized, which only makes
    sense for shape tests.
    """
    if codec is not None and codec.config != cfg.codec:
        raise ContractError("build_generator: teacher codec config does not match cfg.codec")
    rng = np.random.default_rng(seed)
    params: dict = {}
    for name, shape in parameter_manifest(cfg).items():
        zero_init = (
            name.startswith("skip.")
            or name.startswith("encoder.amp")
            or name.endswith(".b")
        )
        if zero_init:
            data = np.zeros(shape, dtype=np.float32)
        else:
            fan_in = math.prod(shape[1:]) if len(shape) > 1 else shape[0]
            data = kaiming_uniform(rng, shape, fan_in)
        params[name] = Parameter(name, data)
    if codec is not None:
        for name, p in params.items():
            if name.startswith("decoder."):
                p.data = codec.params[name].data.copy()
    blocks = []
    for i in range(cfg.n_amp_blocks):
        block = AMPBlockConfig(
            channels=cfg.c0,
            dilations=tuple(cfg.dilations),
            kernel=cfg.amp_kernel,
            use_resampling=cfg.use_resampling,
        )
        for j in range(len(cfg.dilations)):
            block.alphas.append(params[f"encoder.amp{i}.d{j}.log_alpha"])
            block.weights.append(params[f"encoder.amp{i}.d{j}.w"])
            block.biases.append(params[f"encoder.amp{i}.d{j}.b"])
        blocks.append(block)
    if codec is not None:
        up = [w.copy() for w in codec.rvq.up_proj]
    else:
        up = [w.copy() for w in build_rvq_stack(cfg.codec, np.random.default_rng(seed)).up_proj]
    mode = BottleneckMode(variant=cfg.mode, width=cfg.bottleneck_width)
    model = GeneratorModel(config=cfg, params=params, amp_blocks=blocks, mode=mode, up_proj=up)
    model.freeze_decoder()
    return model


def amp_block_forward(x: Tensor, cfg: AMPBlockConfig) -> Tensor:
    """Residual sum of snake+dilated-conv branches; shape preserved."""
    if x.shape[0] != cfg.channels:
        raise ShapeError(f"amp_block_forward: {x.shape[0]} channels, block expects {cfg.channels}")
    y = x
    half = cfg.kernel // 2
    for d, alpha, w, b in zip(cfg.dilations, cfg.alphas, cfg.weights, cfg.biases):
        a = ad.exp(alpha.tensor)
        if cfg.use_resampling:
            from .signal import resample2x

            h = resample2x(y, "up")
            h = ad.snake(h, a)
            h = resample2x(h, "down")
        else:
            h = ad.snake(y, a)
        h = ad.conv1d(h, w.tensor, b.tensor, dilation=d, padding=d * half)
        y = ad.add(y, h)
    return y


def encoder_forward(mel: Tensor, g: GeneratorModel) -> dict:
    """[mel_bins, Tm] -> {"latent": [width, Tm/2], "first_conv_out": [C0, Tm]}."""
    cfg = g.config
    if mel.data.ndim != 2 or mel.shape[0] != cfg.mel_bins:
        raise ShapeError(f"encoder_forward: expected [{cfg.mel_bins}, frames] mel, got {mel.shape}")
    if mel.shape[1] % 2:
        raise ContractError(f"encoder_forward: frame count {mel.shape[1]} must be even")
    p = g.params
    h0 = ad.conv1d(mel, p["encoder.stem.w"].tensor, p["encoder.stem.b"].tensor, padding=3)
    h = h0
    for block in g.amp_blocks:
        h = amp_block_forward(h, block)
    h = ad.leaky_relu(h)
    h = ad.conv1d(h, p["encoder.down.w"].tensor, p["encoder.down.b"].tensor, stride=2, padding=1)
    h = ad.leaky_relu(h)
    latent = ad.conv1d(h, p["encoder.head.w"].tensor, p["encoder.head.b"].tensor)
    return {"latent": latent, "first_conv_out": h0}


def skip_pool(first_conv_out: Tensor, g: GeneratorModel) -> Tensor:
    """Average-pool the stem output to the latent rate and project to D."""
    if not g.skip_enabled:
        raise StateError("skip_pool: skip path is disabled")
    pooled = ad.avg_pool1d(first_conv_out, 2, 2)
    return ad.conv1d(pooled, g.params["skip.proj.w"].tensor, g.params["skip.proj.b"].tensor)


def decoder_input(latent: Tensor, g: GeneratorModel) -> Tensor:
    """Bottleneck -> decoder width: identity in Z mode, up-projection in QL."""
    if g.mode.variant == "Z":
        return latent
    dim = g.config.codec.codebook_dim
    z = None
    for i, w in enumerate(g.up_proj):
        block = ad.narrow(latent, 0, i * dim, dim)
        term = ad.matmul(Tensor(w.astype(np.float32)), block)
        z = term if z is None else ad.add(z, term)
    return z


def generator_forward_parts(xt: Tensor, g: GeneratorModel, mel_cfg: MelConfig) -> dict:
    """Differentiable path with intermediates kept for the training losses.

    [T] samples -> {"wave": unclamped [T], "latent": encoder bottleneck,
    "first_conv_out": stem activations feeding the skip path}.
    """
    t = xt.shape[0]
    if t == 0 or t % LATENT_HOP:
        raise ContractError(f"generator_forward: length {t} must be a positive multiple of {LATENT_HOP}")
    if mel_cfg.spectral.hop_length != LATENT_HOP // 2:
        raise ContractError(
            f"generator_forward: mel hop {mel_cfg.spectral.hop_length} breaks the "
            f"2:1 mel-to-latent rate (need {LATENT_HOP // 2})"
        )
    mel = mel_spectrogram(xt, mel_cfg, g.config.codec.sample_rate)
    enc = encoder_forward(mel, g)
    z = decoder_input(enc["latent"], g)
    if g.skip_enabled:
        z = ad.add(z, skip_pool(enc["first_conv_out"], g))
    wave = decoder_forward(g.params, g.config.codec, z)
    return {"wave": wave, "latent": enc["latent"], "first_conv_out": enc["first_conv_out"]}


def generator_forward_tensor(xt: Tensor, g: GeneratorModel, mel_cfg: MelConfig) -> Tensor:
    """Differentiable path: [T] samples -> unclamped [T] reconstruction."""
    return generator_forward_parts(xt, g, mel_cfg)["wave"]


def generator_forward(x, g: GeneratorModel, mel_cfg: MelConfig):
    """AudioSegment in, AudioSegment out (same length, clamped to [-1, 1])."""
    from .signal import AudioSegment

    xt = _as_tensor(x)
    with ad.no_grad():
        wave = generator_forward_tensor(Tensor(xt.data), g, mel_cfg)
    return AudioSegment(np.clip(wave.data, -1.0, 1.0), g.config.codec.sample_rate)


# ---------------------------------------------------------------------------
# persistence


def save_generator(path, g: GeneratorModel) -> None:
    tensors = {name: p.data for name, p in g.params.items()}
    for i, w in enumerate(g.up_proj):
        tensors[f"bottleneck.up{i}"] = w
    config = {
        "component": "generator",
        "config": asdict(g.config),
        "skip_enabled": g.skip_enabled,
        "decoder_frozen": all(p.frozen for p in g.decoder_parameters()),
    }
    save_checkpoint(path, config, tensors, state={})


def load_generator(path) -> GeneratorModel:
    config, tensors, _ = load_checkpoint(path)
    if config.get("component") != "generator":
        raise ContractError(f"load_generator: checkpoint holds component {config.get('component')!r}")
    raw = dict(config["config"])
    cc = dict(raw.pop("codec"))
    cc["strides"] = tuple(cc["strides"])
    cc["stage_channels"] = tuple(cc["stage_channels"])
    raw["dilations"] = tuple(raw["dilations"])
    cfg = GeneratorConfig(codec=CodecConfig(**cc), **raw)
    g = build_generator(cfg, codec=None, seed=0)
    for name, p in g.params.items():
        if tensors[name].shape != p.data.shape:
            raise ShapeError(f"load_generator: tensor {name} has shape {tensors[name].shape}")
        p.data = tensors[name]
    g.up_proj = [tensors[f"bottleneck.up{i}"] for i in range(len(g.up_proj))]
    if config["skip_enabled"]:
        g.enable_skip()
    if config["decoder_frozen"]:
        g.freeze_decoder()
    else:
        g.unfreeze_decoder()
    return g
