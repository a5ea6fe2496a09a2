"""Named presets at three scales.

``tiny`` is the fast desk-test generator (about 200k parameters on the desk
codec); ``paper-220m`` and ``paper-430m`` are shape-faithful stand-ins for
the published models, with channel schedules chosen so the total parameter
count lands on the reported 220M/430M figures. ``PARAMETER_COUNTS`` freezes
the expected totals; `parameter_count` over a named preset must reproduce
them exactly.
"""

from dataclasses import replace

from .codec import CodecTrainConfig, desk_codec_config, paper_codec_config
from .errors import ConfigError
from .generator import GeneratorConfig
from .signal import MelConfig, SpectralConfig
from .training import MEL_HOP, TrainConfig

# Frozen totals per (preset, mode); pure functions of the configs below.
PARAMETER_COUNTS = {
    ("tiny", "Z"): 194633,
    ("tiny", "QL"): 193065,
    ("paper-220m", "Z"): 220252929,
    ("paper-220m", "QL"): 219764553,
    ("paper-430m", "Z"): 432544257,
    ("paper-430m", "QL"): 432055881,
}


def tiny_generator_config(mode: str = "Z") -> GeneratorConfig:
    """Desk-test generator over the desk codec."""
    return GeneratorConfig(
        mel_bins=128,
        c0=48,
        c1=48,
        n_amp_blocks=2,
        dilations=(1, 3, 5),
        mode=mode,
        codec=desk_codec_config(),
    )


def paper_220m_config(mode: str = "Z") -> GeneratorConfig:
    return GeneratorConfig(
        mel_bins=128,
        c0=2752,
        c1=512,
        n_amp_blocks=3,
        dilations=(1, 3, 5),
        mode=mode,
        codec=paper_codec_config(),
    )


def paper_430m_config(mode: str = "Z") -> GeneratorConfig:
    return GeneratorConfig(
        mel_bins=128,
        c0=3392,
        c1=512,
        n_amp_blocks=4,
        dilations=(1, 3, 5),
        mode=mode,
        codec=paper_codec_config(),
    )


GENERATOR_PRESETS = {
    "tiny": tiny_generator_config,
    "paper-220m": paper_220m_config,
    "paper-430m": paper_430m_config,
}

CODEC_PRESETS = {
    "desk": desk_codec_config,
    "paper": paper_codec_config,
}


def generator_preset(name: str, mode: str = "Z") -> GeneratorConfig:
    if name not in GENERATOR_PRESETS:
        raise ConfigError(
            f"unknown generator preset {name!r}; choose from {sorted(GENERATOR_PRESETS)}"
        )
    return GENERATOR_PRESETS[name](mode)


def codec_preset(name: str):
    if name not in CODEC_PRESETS:
        raise ConfigError(
            f"unknown codec preset {name!r}; choose from {sorted(CODEC_PRESETS)}"
        )
    return CODEC_PRESETS[name]()


def preset_mel_config(gen_cfg: GeneratorConfig, n_fft: int = 1024) -> MelConfig:
    """Mel front end matching a generator config at the training hop."""
    return MelConfig(
        spectral=SpectralConfig(n_fft=n_fft, win_length=n_fft, hop_length=MEL_HOP),
        n_mels=gen_cfg.mel_bins,
    )


def desk_train_config() -> TrainConfig:
    """Two-stage desk schedule: 2,000 steps with the switch at 500."""
    return TrainConfig(stage_switch_step=500, total_steps=2000, batch_size=4)


def paper_train_config() -> TrainConfig:
    return TrainConfig()


TRAIN_PRESETS = {
    "desk": desk_train_config,
    "paper": paper_train_config,
}


def train_preset(name: str) -> TrainConfig:
    if name not in TRAIN_PRESETS:
        raise ConfigError(
            f"unknown train preset {name!r}; choose from {sorted(TRAIN_PRESETS)}"
        )
    return TRAIN_PRESETS[name]()


def desk_codec_train_config(**overrides) -> CodecTrainConfig:
    """Teacher-fitting schedule for the desk codec."""
    cfg = CodecTrainConfig(model=desk_codec_config())
    return replace(cfg, **overrides) if overrides else cfg
