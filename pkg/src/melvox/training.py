"""Two-stage adversarial training loop.

Stage 1 trains the mel encoder against the frozen teacher decoder with the
latent-alignment term active; the transition unfreezes the decoder, zeroes
that term's weight, and switches on the zero-initialized skip path, so the
generator's output is unchanged at the boundary. Steps are 0-indexed: the
transition runs before step `stage_switch_step`, and the logged learning
rate at step n is exactly lr * gamma**n.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .checkpoint import load_checkpoint, save_checkpoint
from .codec import CodecConfig, CodecModel, codec_encode, rvq_quantize
from .discriminators import (
    DiscriminatorModel,
    MPDConfig,
    MRSDConfig,
    build_discriminators,
    discriminate,
)
from .errors import ConfigError, ContractError, DataError, NumericError, StateError
from .generator import GeneratorConfig, GeneratorModel, build_generator, generator_forward_parts, save_generator
from .losses import (
    LossWeights,
    MultiScaleConfig,
    default_multiscale,
    loss_adv_discriminator,
    loss_adv_generator,
    loss_feature_matching,
    loss_latent_align,
    loss_multiscale_spec,
    loss_total,
    loss_waveform,
)
from .optim import AdamW, clip_gradients, decay_lr
from .signal import AudioSegment, MelConfig, SpectralConfig

MEL_HOP = 256  # generator analysis hop; half the codec latent hop


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    beta1: float = 0.8
    beta2: float = 0.99
    gamma: float = 0.9995
    clip_threshold: float = 1e3
    weight_decay: float = 0.01
    weights: LossWeights = field(default_factory=LossWeights)
    segment_length: int = 16384
    batch_size: int = 4
    stage_switch_step: int = 100_000
    total_steps: int = 200_000
    mel_n_fft: int = 1024
    n_scales: int = 5
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError(f"TrainConfig: gamma {self.gamma} outside (0, 1]")
        if self.clip_threshold <= 0 or self.lr <= 0:
            raise ConfigError("TrainConfig: lr and clip threshold must be positive")
        if self.segment_length % 512 or self.segment_length < 2048:
            raise ConfigError(
                f"TrainConfig: segment_length {self.segment_length} must be a multiple of 512, >= 2048"
            )
        if self.batch_size < 1 or self.total_steps < 1 or self.stage_switch_step < 0:
            raise ConfigError("TrainConfig: batch, steps and switch step must be positive")
        if self.segment_length <= self.mel_n_fft // 2:
            raise ConfigError("TrainConfig: segment shorter than half the mel analysis window")


@dataclass
class TrainState:
    """step counts completed steps and names the next step to run."""

    step: int = 0
    stage: int = 1
    rng: np.random.Generator = field(default_factory=np.random.default_rng)


@dataclass
class TrainModels:
    generator: GeneratorModel
    discriminators: DiscriminatorModel
    teacher: CodecModel
    g_opt: AdamW
    d_opt: AdamW
    mel_cfg: MelConfig
    ms_cfg: MultiScaleConfig


def make_train_models(
    gen: GeneratorModel, disc: DiscriminatorModel, teacher: CodecModel, cfg: TrainConfig
) -> TrainModels:
    if teacher.config != gen.config.codec:
        raise ContractError("make_train_models: teacher codec config differs from the generator's")
    if not teacher.frozen:
        raise ContractError("make_train_models: teacher codec must be frozen")
    mel_cfg = MelConfig(
        spectral=SpectralConfig(n_fft=cfg.mel_n_fft, win_length=cfg.mel_n_fft, hop_length=MEL_HOP),
        n_mels=gen.config.mel_bins,
    )
    return TrainModels(
        generator=gen,
        discriminators=disc,
        teacher=teacher,
        g_opt=AdamW(gen.parameters(), cfg.beta1, cfg.beta2, weight_decay=cfg.weight_decay),
        d_opt=AdamW(disc.parameters(), cfg.beta1, cfg.beta2, weight_decay=cfg.weight_decay),
        mel_cfg=mel_cfg,
        ms_cfg=default_multiscale(cfg.n_scales),
    )


def active_weights(cfg: TrainConfig, stage: int) -> LossWeights:
    """Stage 2 drops the latent-alignment term."""
    if stage == 1:
        return cfg.weights
    return dataclasses.replace(cfg.weights, lambda_dac=0.0)


def sample_segment(clip: AudioSegment, cfg: TrainConfig, rng: np.random.Generator) -> AudioSegment:
    """Uniform contiguous window of exactly segment_length samples."""
    n = len(clip)
    if n < cfg.segment_length:
        raise ContractError(f"sample_segment: clip of {n} samples shorter than segment {cfg.segment_length}")
    offset = int(rng.integers(0, n - cfg.segment_length + 1))
    return AudioSegment(clip.samples[offset : offset + cfg.segment_length], clip.sample_rate)


def stage_transition(state: TrainState, tm: TrainModels) -> dict:
    """Unfreeze the decoder, enable the skip path, move to stage 2."""
    if state.stage != 1:
        raise StateError("stage_transition: already in stage 2")
    tm.generator.unfreeze_decoder()
    tm.generator.enable_skip()
    state.stage = 2
    return {"event": "stage_transition", "step": state.step, "stage": 2}


def _teacher_target(x: Tensor, tm: TrainModels) -> Tensor:
    with ad.no_grad():
        z_e = codec_encode(Tensor(x.data), tm.teacher)
        q = rvq_quantize(z_e, tm.teacher.rvq)
    key = "ql" if tm.generator.mode.variant == "QL" else "z_q"
    return Tensor(q[key].data)


def _mean(tensors: list, inv: float) -> Tensor:
    total = tensors[0]
    for t in tensors[1:]:
        total = ad.add(total, t)
    return ad.mul(total, inv)


def train_step(segments: list, tm: TrainModels, state: TrainState, cfg: TrainConfig) -> dict:
    """One discriminator update then one generator update over the batch."""
    if not segments:
        raise ContractError("train_step: empty batch")
    try:
        return _train_step(segments, tm, state, cfg)
    except NumericError as e:
        raise NumericError(f"step {state.step} (stage {state.stage}): {e}") from e


def _train_step(segments, tm, state, cfg):
    g, d = tm.generator, tm.discriminators
    sr = g.config.codec.sample_rate
    lr_t = decay_lr(cfg.lr, cfg.gamma, state.step)
    w = active_weights(cfg, state.stage)
    inv_b = 1.0 / len(segments)

    xs = [Tensor(np.asarray(s.samples, dtype=np.float32)) for s in segments]
    parts = [generator_forward_parts(x, g, tm.mel_cfg) for x in xs]

    # discriminator phase: fakes detached so only critics learn
    d_terms = []
    for x, pt in zip(xs, parts):
        real = discriminate(x, d)
        fake = discriminate(Tensor(pt["wave"].data), d)
        d_terms.append(loss_adv_discriminator(real.logits, fake.logits))
    d_loss = _mean(d_terms, inv_b)
    tm.d_opt.zero_grad()
    ad.backward(d_loss)
    grad_norm_d = clip_gradients(d.parameters(), cfg.clip_threshold)
    tm.d_opt.step(lr_t)

    # generator phase against the updated critics
    comps = {name: [] for name in ("wav", "dac", "mel", "stft", "gen", "feat")}
    for x, pt in zip(xs, parts):
        y = pt["wave"]
        real = discriminate(x, d)
        fake = discriminate(y, d)
        comps["wav"].append(loss_waveform(x, y))
        if state.stage == 1:
            comps["dac"].append(loss_latent_align(pt["latent"], _teacher_target(x, tm)))
        comps["mel"].append(loss_multiscale_spec(x, y, tm.ms_cfg, "mel", sr))
        comps["stft"].append(loss_multiscale_spec(x, y, tm.ms_cfg, "stft", sr))
        comps["gen"].append(loss_adv_generator(fake.logits))
        comps["feat"].append(loss_feature_matching(real.features, fake.features))
    mean_comps = {
        name: _mean(terms, inv_b) if terms else 0.0 for name, terms in comps.items()
    }
    total = loss_total(mean_comps, w)
    tm.g_opt.zero_grad()
    ad.backward(total)
    grad_norm_g = clip_gradients(g.parameters(), cfg.clip_threshold)
    tm.g_opt.step(lr_t)

    report = {"step": state.step, "stage": state.stage, "lr": lr_t}
    for name, value in mean_comps.items():
        report[name] = float(value.data) if isinstance(value, Tensor) else float(value)
    report["total"] = float(total.data)
    report["d_loss"] = float(d_loss.data)
    report["grad_norm_g"] = grad_norm_g
    report["grad_norm_d"] = grad_norm_d
    state.step += 1
    return report


def usable_clips(clips: list, cfg: TrainConfig) -> tuple:
    """Split the corpus into segment-sized clips and skipped (too short)."""
    good, skipped = [], []
    for i, clip in enumerate(clips):
        (good if len(clip) >= cfg.segment_length else skipped).append(i)
    return [clips[i] for i in good], skipped


def train(
    tm: TrainModels,
    state: TrainState,
    cfg: TrainConfig,
    clips: list,
    out_dir: str,
    checkpoint_every: int = 0,
) -> dict:
    """Run (or resume) the loop until cfg.total_steps; returns a summary.

    Writes manifest.jsonl (appending on resume), train_state.ckpt, and the
    inference checkpoint generator.ckpt.
    """
    good, skipped = usable_clips(clips, cfg)
    if not good:
        raise DataError(f"train: no clip reaches segment_length {cfg.segment_length}")
    os.makedirs(out_dir, exist_ok=True)
    manifest = os.path.join(out_dir, "manifest.jsonl")
    ckpt = os.path.join(out_dir, "train_state.ckpt")
    last = None
    with open(manifest, "a" if state.step else "w") as log:
        if state.step == 0 and skipped:
            log.write(json.dumps({"event": "skipped_short_clips", "indices": skipped}, sort_keys=True) + "\n")
        while state.step < cfg.total_steps:
            if state.stage == 1 and state.step >= cfg.stage_switch_step:
                log.write(json.dumps(stage_transition(state, tm), sort_keys=True) + "\n")
            segments = []
            for _ in range(cfg.batch_size):
                clip = good[int(state.rng.integers(0, len(good)))]
                segments.append(sample_segment(clip, cfg, state.rng))
            last = train_step(segments, tm, state, cfg)
            log.write(json.dumps(last, sort_keys=True) + "\n")
            if checkpoint_every and state.step % checkpoint_every == 0:
                save_train_checkpoint(ckpt, tm, state, cfg)
    save_train_checkpoint(ckpt, tm, state, cfg)
    save_generator(os.path.join(out_dir, "generator.ckpt"), tm.generator)
    return {"steps": state.step, "stage": state.stage, "last": last, "manifest": manifest}


# ---------------------------------------------------------------------------
# persistence: full training snapshot (models + optimizers + RNG)


def save_train_checkpoint(path, tm: TrainModels, state: TrainState, cfg: TrainConfig) -> None:
    g, d = tm.generator, tm.discriminators
    tensors = {}
    for name, p in g.params.items():
        tensors[f"gen.{name}"] = p.data
    for i, up in enumerate(g.up_proj):
        tensors[f"gen.bottleneck.up{i}"] = up
    for name, p in d.params.items():
        tensors[f"disc.{name}"] = p.data
    for tag, opt in (("adamg", tm.g_opt), ("adamd", tm.d_opt)):
        for name, m in opt.m.items():
            tensors[f"{tag}.m.{name}"] = m
            tensors[f"{tag}.v.{name}"] = opt.v[name]
    config = {
        "component": "train",
        "generator": asdict(g.config),
        "mpd": asdict(d.mpd),
        "mrsd": {
            "resolutions": [[sc.n_fft, sc.win_length, sc.hop_length] for sc in d.mrsd.resolutions],
            "band_edges": list(d.mrsd.band_edges),
            "channels": list(d.mrsd.channels),
            "slope": d.mrsd.slope,
        },
        "train": asdict(cfg),
    }
    run_state = {
        "step": state.step,
        "stage": state.stage,
        "skip_enabled": g.skip_enabled,
        "decoder_frozen": all(p.frozen for p in g.decoder_parameters()),
        "rng": state.rng.bit_generator.state,
        "tg": tm.g_opt.t,
        "td": tm.d_opt.t,
    }
    save_checkpoint(path, config, tensors, run_state)


def load_train_checkpoint(path, teacher: CodecModel) -> tuple:
    """-> (TrainModels, TrainState, TrainConfig); teacher supplied by caller."""
    config, tensors, run_state = load_checkpoint(path)
    if config.get("component") != "train":
        raise ContractError(f"load_train_checkpoint: checkpoint holds {config.get('component')!r}")

    raw = dict(config["generator"])
    cc = dict(raw.pop("codec"))
    cc["strides"] = tuple(cc["strides"])
    cc["stage_channels"] = tuple(cc["stage_channels"])
    raw["dilations"] = tuple(raw["dilations"])
    gen_cfg = GeneratorConfig(codec=CodecConfig(**cc), **raw)
    gen = build_generator(gen_cfg, codec=None, seed=0)
    for name, p in gen.params.items():
        p.data = tensors[f"gen.{name}"]
    gen.up_proj = [tensors[f"gen.bottleneck.up{i}"] for i in range(len(gen.up_proj))]
    if run_state["skip_enabled"]:
        gen.enable_skip()
    if run_state["decoder_frozen"]:
        gen.freeze_decoder()
    else:
        gen.unfreeze_decoder()

    mpd = MPDConfig(
        periods=tuple(config["mpd"]["periods"]),
        channels=tuple(config["mpd"]["channels"]),
        slope=config["mpd"]["slope"],
    )
    mrsd = MRSDConfig(
        resolutions=tuple(
            SpectralConfig(n_fft=n, win_length=wl, hop_length=h)
            for n, wl, h in config["mrsd"]["resolutions"]
        ),
        band_edges=tuple(config["mrsd"]["band_edges"]),
        channels=tuple(config["mrsd"]["channels"]),
        slope=config["mrsd"]["slope"],
    )
    disc = build_discriminators(mpd, mrsd, seed=0)
    for name, p in disc.params.items():
        p.data = tensors[f"disc.{name}"]

    tr = dict(config["train"])
    tr["weights"] = LossWeights(**tr["weights"])
    cfg = TrainConfig(**tr)

    tm = make_train_models(gen, disc, teacher, cfg)
    for tag, opt, counts in (("adamg", tm.g_opt, run_state["tg"]), ("adamd", tm.d_opt, run_state["td"])):
        for name, t in counts.items():
            opt.m[name] = tensors[f"{tag}.m.{name}"]
            opt.v[name] = tensors[f"{tag}.v.{name}"]
            opt.t[name] = int(t)

    rng = np.random.default_rng(0)
    rng.bit_generator.state = run_state["rng"]
    state = TrainState(step=int(run_state["step"]), stage=int(run_state["stage"]), rng=rng)
    return tm, state, cfg
