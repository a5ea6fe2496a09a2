"""Teacher codec: strided-conv encoder at hop 512, residual vector
quantizer, and transposed-conv decoder.

The quantizer projects each stage's residual into a private 8-d subspace.
The per-stage projection frames are fixed (non-trained) blocks of one
orthonormal basis, and entry 0 of every codebook is a reserved zero vector
that never moves. Together these give two properties the trainable parts
cannot break: nearest-neighbor selection can never increase the residual
energy on the quantized subspace, and stages never interfere with each
other's selections. Codebooks learn by EMA with dead-entry reseeding, not
by gradient.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor, kaiming_uniform
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import ConfigError, ContractError, ShapeError
from .losses import default_multiscale, loss_multiscale_spec, loss_waveform
from .optim import AdamW, clip_gradients, decay_lr
from .signal import AudioSegment, _as_tensor

LATENT_HOP = 512


@dataclass(frozen=True)
class CodecConfig:
    """Architecture of one codec model; all presets keep total stride 512."""

    latent_width: int = 1024
    n_stages: int = 9
    codebook_size: int = 1024
    codebook_dim: int = 8
    strides: tuple = (8, 8, 4, 2)
    stem_channels: int = 32
    stage_channels: tuple = (64, 128, 256, 512)
    sample_rate: int = 44100

    def __post_init__(self):
        if math.prod(self.strides) != LATENT_HOP:
            raise ConfigError(f"CodecConfig: strides {self.strides} must multiply to {LATENT_HOP}")
        if len(self.stage_channels) != len(self.strides):
            raise ConfigError("CodecConfig: one channel count per stride stage")
        if self.latent_width < self.n_stages * self.codebook_dim:
            raise ConfigError(
                f"CodecConfig: latent width {self.latent_width} cannot host "
                f"{self.n_stages} disjoint {self.codebook_dim}-d stage subspaces"
            )
        if self.n_stages < 1 or self.codebook_size < 2:
            raise ConfigError("CodecConfig: need >= 1 stage and >= 2 entries")


def desk_codec_config() -> CodecConfig:
    """Small preset: same stride arithmetic, narrow channels."""
    return CodecConfig(
        latent_width=64,
        n_stages=4,
        codebook_size=64,
        stem_channels=16,
        stage_channels=(24, 32, 48, 64),
    )


def paper_codec_config() -> CodecConfig:
    return CodecConfig()


@dataclass
class Codebook:
    """One stage's entry table plus its EMA and usage state.

    entries[0] is the reserved zero vector; EMA updates and reseeding skip
    it so selecting it always leaves the residual untouched.
    """

    entries: np.ndarray          # [K, dim] float32
    usage_counts: np.ndarray     # [K] int64, selections since reset
    ema_counts: np.ndarray       # [K] float64
    ema_sums: np.ndarray         # [K, dim] float64
    steps_since_use: np.ndarray  # [K] int64

    def reset_usage(self) -> None:
        self.usage_counts[:] = 0


@dataclass
class RVQStack:
    codebooks: list
    down_proj: list  # per stage [dim, D] float64, transpose of up_proj
    up_proj: list    # per stage [D, dim] float64, orthonormal columns
    width: int


def build_rvq_stack(cfg: CodecConfig, rng: np.random.Generator) -> RVQStack:
    d, dim, stages, k = cfg.latent_width, cfg.codebook_dim, cfg.n_stages, cfg.codebook_size
    basis = rng.normal(size=(d, stages * dim))
    q, r = np.linalg.qr(basis)
    q = q * np.sign(np.diag(r))  # fix the QR sign convention for determinism
    codebooks, down, up = [], [], []
    for i in range(stages):
        w = np.ascontiguousarray(q[:, i * dim : (i + 1) * dim])
        up.append(w)
        down.append(np.ascontiguousarray(w.T))
        entries = rng.normal(scale=0.1, size=(k, dim)).astype(np.float32)
        entries[0] = 0.0
        codebooks.append(
            Codebook(
                entries=entries,
                usage_counts=np.zeros(k, dtype=np.int64),
                ema_counts=np.zeros(k, dtype=np.float64),
                ema_sums=np.zeros((k, dim), dtype=np.float64),
                steps_since_use=np.zeros(k, dtype=np.int64),
            )
        )
    return RVQStack(codebooks=codebooks, down_proj=down, up_proj=up, width=d)


@dataclass
class CodecModel:
    config: CodecConfig
    params: dict
    rvq: RVQStack
    frozen: bool = False

    def freeze(self) -> None:
        for p in self.params.values():
            p.freeze()
        self.frozen = True

    def parameters(self) -> list:
        return list(self.params.values())


def _conv_param(params, rng, name, c_out, c_in, k):
    params[name + ".w"] = Parameter(name + ".w", kaiming_uniform(rng, (c_out, c_in, k), c_in * k))
    params[name + ".b"] = Parameter(name + ".b", np.zeros(c_out, dtype=np.float32))


def _tconv_param(params, rng, name, c_in, c_out, k):
    params[name + ".w"] = Parameter(name + ".w", kaiming_uniform(rng, (c_in, c_out, k), c_in * k))
    params[name + ".b"] = Parameter(name + ".b", np.zeros(c_out, dtype=np.float32))


def build_codec(cfg: CodecConfig, seed: int = 0) -> CodecModel:
    rng = np.random.default_rng(seed)
    chans = [cfg.stem_channels] + list(cfg.stage_channels)
    params: dict = {}
    _conv_param(params, rng, "encoder.stem", chans[0], 1, 7)
    for j, s in enumerate(reversed(cfg.strides)):
        _conv_param(params, rng, f"encoder.down{j}", chans[j + 1], chans[j], 2 * s)
    _conv_param(params, rng, "encoder.head", cfg.latent_width, chans[-1], 3)
    rchans = chans[::-1]
    _conv_param(params, rng, "decoder.stem", rchans[0], cfg.latent_width, 3)
    for j, s in enumerate(cfg.strides):
        _tconv_param(params, rng, f"decoder.up{j}", rchans[j], rchans[j + 1], 2 * s)
    _conv_param(params, rng, "decoder.head", 1, rchans[-1], 7)
    rvq = build_rvq_stack(cfg, rng)
    return CodecModel(config=cfg, params=params, rvq=rvq)


# ---------------------------------------------------------------------------
# quantization


def _scan_stage(p: np.ndarray, entries: np.ndarray) -> np.ndarray:
    """Nearest entry per column of p [dim, frames]; lowest index on ties."""
    diff = p[None, :, :] - entries[:, :, None]
    dist = np.sum(diff * diff, axis=1)
    return np.argmin(dist, axis=0)


def _quantize_arrays(values: np.ndarray, stack: RVQStack, n_stages: int):
    """Greedy residual quantization in float64 on a [D, frames] array.

    Returns (indices [S,F] int64, ql [S*dim,F] f32, z_q [D,F] f32,
    projected: per-stage residual projections [dim,F] f64 for EMA updates).
    """
    r = values.astype(np.float64)
    z_acc = np.zeros_like(r)
    frames = r.shape[1]
    indices = np.empty((n_stages, frames), dtype=np.int64)
    ql_blocks, projected = [], []
    for i in range(n_stages):
        p = stack.down_proj[i] @ r
        entries64 = stack.codebooks[i].entries.astype(np.float64)
        idx = _scan_stage(p, entries64)
        chosen = entries64[idx].T  # [dim, frames]
        step = stack.up_proj[i] @ chosen
        r = r - step
        z_acc = z_acc + step
        indices[i] = idx
        ql_blocks.append(stack.codebooks[i].entries[idx].T)
        projected.append(p)
    ql = np.concatenate(ql_blocks, axis=0).astype(np.float32)
    return indices, ql, z_acc.astype(np.float32), projected


def rvq_quantize(z_e: Tensor, stack: RVQStack, n_stages: int | None = None) -> dict:
    """Quantize latents [D, frames] through the residual stack.

    Returns {"indices": [stages, frames] int64, "ql": [stages*dim, frames],
    "z_q": [D, frames]} plus "projected", the per-stage residual
    projections the training loop feeds to the EMA updates. z_q carries a
    straight-through gradient into z_e; ql is a constant. Selection is
    read-only; usage accounting is the explicit record_usage call.
    """
    if z_e.data.ndim != 2 or z_e.shape[0] != stack.width:
        raise ShapeError(f"rvq_quantize: expected [{stack.width}, frames] latents, got {z_e.shape}")
    if z_e.shape[1] < 1:
        raise ContractError("rvq_quantize: need at least one frame")
    stages = len(stack.codebooks) if n_stages is None else n_stages
    if not 1 <= stages <= len(stack.codebooks):
        raise ContractError(f"rvq_quantize: n_stages {stages} outside [1, {len(stack.codebooks)}]")
    indices, ql, z_q_val, projected = _quantize_arrays(z_e.data, stack, stages)
    return {
        "indices": indices,
        "ql": Tensor(ql),
        "z_q": ad.straight_through(z_e, z_q_val),
        "projected": projected,
    }


def ql_to_z(ql, stack: RVQStack) -> np.ndarray:
    """Sum the up-projected 8-d blocks of ql back to a [D, frames] latent.

    Accumulates in float64 in stage order, matching rvq_quantize bit for bit.
    """
    q = ql.data if isinstance(ql, Tensor) else np.asarray(ql)
    dim = stack.up_proj[0].shape[1]
    stages = len(stack.up_proj)
    if q.ndim != 2 or q.shape[0] != stages * dim:
        raise ShapeError(f"ql_to_z: expected [{stages * dim}, frames], got {q.shape}")
    z = np.zeros((stack.width, q.shape[1]), dtype=np.float64)
    for i in range(stages):
        z = z + stack.up_proj[i] @ q[i * dim : (i + 1) * dim].astype(np.float64)
    return z.astype(np.float32)


def record_usage(stack: RVQStack, indices: np.ndarray) -> None:
    """Fold one batch of selections into the per-entry usage counters."""
    for i, cb in enumerate(stack.codebooks):
        counts = np.bincount(indices[i], minlength=cb.entries.shape[0])
        cb.usage_counts += counts.astype(np.int64)


# ---------------------------------------------------------------------------
# encoder / decoder


def _encoder_forward(params: dict, cfg: CodecConfig, xt: Tensor) -> Tensor:
    h = ad.conv1d(xt, params["encoder.stem.w"].tensor, params["encoder.stem.b"].tensor, padding=3)
    for j, s in enumerate(reversed(cfg.strides)):
        h = ad.leaky_relu(h)
        h = ad.conv1d(
            h,
            params[f"encoder.down{j}.w"].tensor,
            params[f"encoder.down{j}.b"].tensor,
            stride=s,
            padding=s // 2,
        )
    h = ad.leaky_relu(h)
    return ad.conv1d(h, params["encoder.head.w"].tensor, params["encoder.head.b"].tensor, padding=1)


def decoder_forward(params: dict, cfg: CodecConfig, z: Tensor) -> Tensor:
    """[D, frames] -> unclamped waveform [frames * 512].

    Shared by the codec and by any model that grafts the codec decoder
    (params keyed "decoder.*").
    """
    h = ad.conv1d(z, params["decoder.stem.w"].tensor, params["decoder.stem.b"].tensor, padding=1)
    for j, s in enumerate(cfg.strides):
        h = ad.leaky_relu(h)
        h = ad.conv_transpose1d(
            h,
            params[f"decoder.up{j}.w"].tensor,
            params[f"decoder.up{j}.b"].tensor,
            stride=s,
            padding=s // 2,
        )
    h = ad.leaky_relu(h)
    h = ad.conv1d(h, params["decoder.head.w"].tensor, params["decoder.head.b"].tensor, padding=3)
    return ad.reshape(h, (h.shape[1],))


def codec_encode(x, m: CodecModel) -> Tensor:
    """AudioSegment (or [T] tensor) -> latents [D, len(x)/512], zero-padded up."""
    xt = _as_tensor(x)
    if xt.data.ndim != 1:
        raise ShapeError(f"codec_encode: expected 1-D samples, got {xt.shape}")
    t = xt.shape[0]
    if t == 0:
        raise ContractError("codec_encode: empty input")
    pad = (-t) % LATENT_HOP
    if pad:
        xt = ad.pad1d(xt, 0, pad)
    return _encoder_forward(m.params, m.config, ad.reshape(xt, (1, t + pad)))


def codec_decode(z_q, m: CodecModel) -> AudioSegment:
    """[D, frames] -> AudioSegment of frames*512 samples, clamped to [-1, 1]."""
    zt = _as_tensor(z_q)
    if zt.data.ndim != 2 or zt.shape[0] != m.config.latent_width:
        raise ShapeError(
            f"codec_decode: expected [{m.config.latent_width}, frames] latents, got {zt.shape}"
        )
    with ad.no_grad():
        wave = decoder_forward(m.params, m.config, Tensor(zt.data))
    return AudioSegment(np.clip(wave.data, -1.0, 1.0), m.config.sample_rate)


# ---------------------------------------------------------------------------
# persistence


def save_codec(path, m: CodecModel) -> None:
    tensors = {name: p.data for name, p in m.params.items()}
    for i, cb in enumerate(m.rvq.codebooks):
        tensors[f"rvq.codebook{i}.entries"] = cb.entries
        tensors[f"rvq.codebook{i}.usage"] = cb.usage_counts
        tensors[f"rvq.codebook{i}.ema_counts"] = cb.ema_counts
        tensors[f"rvq.codebook{i}.ema_sums"] = cb.ema_sums
        tensors[f"rvq.codebook{i}.idle"] = cb.steps_since_use
        tensors[f"rvq.down{i}"] = m.rvq.down_proj[i]
        tensors[f"rvq.up{i}"] = m.rvq.up_proj[i]
    config = {"component": "codec", "config": asdict(m.config), "frozen": m.frozen}
    save_checkpoint(path, config, tensors, state={})


def load_codec(path) -> CodecModel:
    config, tensors, _ = load_checkpoint(path)
    if config.get("component") != "codec":
        raise ContractError(f"load_codec: checkpoint holds component {config.get('component')!r}")
    raw = dict(config["config"])
    raw["strides"] = tuple(raw["strides"])
    raw["stage_channels"] = tuple(raw["stage_channels"])
    cfg = CodecConfig(**raw)
    m = build_codec(cfg, seed=0)
    for name, p in m.params.items():
        if tensors[name].shape != p.data.shape:
            raise ShapeError(f"load_codec: tensor {name} has shape {tensors[name].shape}")
        p.data = tensors[name]
    for i, cb in enumerate(m.rvq.codebooks):
        cb.entries = tensors[f"rvq.codebook{i}.entries"]
        cb.usage_counts = tensors[f"rvq.codebook{i}.usage"]
        cb.ema_counts = tensors[f"rvq.codebook{i}.ema_counts"]
        cb.ema_sums = tensors[f"rvq.codebook{i}.ema_sums"]
        cb.steps_since_use = tensors[f"rvq.codebook{i}.idle"]
        m.rvq.down_proj[i] = tensors[f"rvq.down{i}"]
        m.rvq.up_proj[i] = tensors[f"rvq.up{i}"]
    if config["frozen"]:
        m.freeze()
    return m


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class CodecTrainConfig:
    model: CodecConfig
    steps: int = 800
    segment_len: int = 16384
    lr: float = 3e-4
    lr_gamma: float = 0.9995
    commitment_weight: float = 0.25
    ema_gamma: float = 0.99
    reseed_after: int = 200
    mel_scales: int = 3
    seed: int = 0
    log_path: str | None = None
    log_every: int = 25

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigError("CodecTrainConfig: steps must be >= 1")
        if self.segment_len % LATENT_HOP:
            raise ConfigError(f"CodecTrainConfig: segment_len must be a multiple of {LATENT_HOP}")


def _draw_segment(dataset, length: int, rng: np.random.Generator) -> np.ndarray:
    clip = dataset[int(rng.integers(len(dataset)))].samples
    if len(clip) <= length:
        out = np.zeros(length, dtype=np.float32)
        out[: len(clip)] = clip
        return out
    start = int(rng.integers(len(clip) - length))
    return np.ascontiguousarray(clip[start : start + length], dtype=np.float32)


def _ema_update(stack: RVQStack, indices, projected, gamma, reseed_after, rng) -> None:
    """Online k-means on the projected residuals; entry 0 never moves."""
    for i, cb in enumerate(stack.codebooks):
        k, dim = cb.entries.shape
        idx, p = indices[i], projected[i]
        counts = np.bincount(idx, minlength=k).astype(np.float64)
        sums = np.zeros((k, dim), dtype=np.float64)
        np.add.at(sums, idx, p.T)
        cb.ema_counts = gamma * cb.ema_counts + (1.0 - gamma) * counts
        cb.ema_sums = gamma * cb.ema_sums + (1.0 - gamma) * sums
        live = (cb.ema_counts > 1e-3) & (np.arange(k) > 0)
        cb.entries[live] = (cb.ema_sums[live] / cb.ema_counts[live, None]).astype(np.float32)
        used = np.zeros(k, dtype=bool)
        used[idx] = True
        cb.steps_since_use[used] = 0
        cb.steps_since_use[~used] += 1
        dead = (cb.steps_since_use > reseed_after) & (np.arange(k) > 0)
        n_dead = int(dead.sum())
        if n_dead:
            cols = rng.integers(p.shape[1], size=n_dead)
            seeds = p[:, cols].T
            cb.entries[dead] = seeds.astype(np.float32)
            cb.ema_counts[dead] = 1.0
            cb.ema_sums[dead] = seeds
            cb.steps_since_use[dead] = 0


def train_codec(dataset, config: CodecTrainConfig) -> CodecModel:
    """Fit the teacher on L1 waveform + multi-scale mel + commitment.

    Codebooks move by EMA with dead-entry reseeding. The returned model is
    frozen; per-step scalars go to config.log_path as JSON lines.
    """
    if not dataset:
        raise ConfigError("train_codec: empty dataset")
    cfg = config
    m = build_codec(cfg.model, seed=cfg.seed)
    rng = np.random.default_rng([cfg.seed, 0xC0DEC])
    opt = AdamW(m.parameters())
    ms_cfg = default_multiscale(cfg.mel_scales)
    rate = cfg.model.sample_rate
    log_lines = []
    for step in range(cfg.steps):
        x = _draw_segment(dataset, cfg.segment_len, rng)
        xt = Tensor(x)
        z_e = _encoder_forward(m.params, m.config, ad.reshape(xt, (1, cfg.segment_len)))
        q = rvq_quantize(z_e, m.rvq)
        x_hat = decoder_forward(m.params, m.config, q["z_q"])
        l_wav = loss_waveform(xt, x_hat)
        l_mel = loss_multiscale_spec(xt, x_hat, ms_cfg, "mel", rate)
        l_commit = ad.tmean(ad.square(ad.sub(z_e, Tensor(q["z_q"].data))))
        total = ad.add(ad.add(l_wav, l_mel), ad.mul(l_commit, cfg.commitment_weight))
        opt.zero_grad()
        ad.backward(total)
        grad_norm = clip_gradients(m.parameters(), 1e3)
        opt.step(decay_lr(cfg.lr, cfg.lr_gamma, step))
        _ema_update(m.rvq, q["indices"], q["projected"], cfg.ema_gamma, cfg.reseed_after, rng)
        record_usage(m.rvq, q["indices"])
        log_lines.append(
            json.dumps(
                {
                    "step": step,
                    "loss": float(total.item()),
                    "wav": float(l_wav.item()),
                    "mel": float(l_mel.item()),
                    "commit": float(l_commit.item()),
                    "lr": decay_lr(cfg.lr, cfg.lr_gamma, step),
                    "grad_norm": grad_norm,
                }
            )
        )
    if cfg.log_path is not None:
        with open(cfg.log_path, "w") as fh:
            fh.write("\n".join(log_lines) + "\n")
    m.freeze()
    return m
