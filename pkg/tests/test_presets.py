import pytest

from melvox.errors import ConfigError
from melvox.generator import build_generator, generator_forward, parameter_count
from melvox.presets import (
    CODEC_PRESETS,
    GENERATOR_PRESETS,
    PARAMETER_COUNTS,
    TRAIN_PRESETS,
    codec_preset,
    desk_codec_train_config,
    desk_train_config,
    generator_preset,
    preset_mel_config,
    train_preset,
)

import numpy as np


class TestStoredCounts:
    def test_every_preset_matches_frozen_manifest(self):
        for (name, mode), want in PARAMETER_COUNTS.items():
            assert parameter_count(generator_preset(name, mode)) == want

    def test_paper_presets_hit_published_totals(self):
        for mode in ("Z", "QL"):
            assert abs(parameter_count(generator_preset("paper-220m", mode)) - 220e6) <= 0.02 * 220e6
            assert abs(parameter_count(generator_preset("paper-430m", mode)) - 430e6) <= 0.02 * 430e6

    def test_tiny_is_desk_sized(self):
        n = parameter_count(generator_preset("tiny"))
        assert 150_000 <= n <= 250_000

    def test_manifest_covers_exactly_the_registry(self):
        assert {name for name, _ in PARAMETER_COUNTS} == set(GENERATOR_PRESETS)


class TestConfigs:
    def test_tiny_builds_and_runs(self):
        cfg = generator_preset("tiny")
        g = build_generator(cfg, seed=0)
        x = np.random.default_rng(0).standard_normal(2048).astype(np.float32)
        y = generator_forward(x, g, preset_mel_config(cfg, n_fft=512))
        assert y.samples.shape == (2048,)

    def test_modes_change_only_the_bottleneck(self):
        z = generator_preset("tiny", "Z")
        ql = generator_preset("tiny", "QL")
        assert z.mode == "Z" and ql.mode == "QL"
        assert z.c0 == ql.c0 and z.codec == ql.codec

    def test_paper_presets_use_paper_codec(self):
        cfg = generator_preset("paper-220m", "QL")
        assert cfg.codec.latent_width == 1024
        assert cfg.codec.n_stages == 9
        assert cfg.bottleneck_width == 72

    def test_unknown_names_raise(self):
        with pytest.raises(ConfigError, match="preset"):
            generator_preset("huge")
        with pytest.raises(ConfigError, match="preset"):
            codec_preset("tiny2")
        with pytest.raises(ConfigError, match="preset"):
            train_preset("warp")

    def test_codec_registry(self):
        assert codec_preset("desk").latent_width == 64
        assert codec_preset("paper").latent_width == 1024
        assert set(CODEC_PRESETS) == {"desk", "paper"}


class TestTrainPresets:
    def test_desk_schedule(self):
        cfg = desk_train_config()
        assert cfg.stage_switch_step == 500
        assert cfg.total_steps == 2000
        assert cfg.batch_size == 4

    def test_paper_schedule_keeps_defaults(self):
        cfg = train_preset("paper")
        assert cfg.total_steps == 200_000
        assert cfg.stage_switch_step == 100_000
        assert set(TRAIN_PRESETS) == {"desk", "paper"}

    def test_codec_train_overrides(self):
        cfg = desk_codec_train_config(steps=10, seed=3)
        assert cfg.steps == 10 and cfg.seed == 3
        assert cfg.model.latent_width == 64
