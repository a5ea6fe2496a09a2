"""Acceptance gate: one test per shipping criterion.

Each test prints a single [PASS]/[FAIL] line (visible with `pytest -s`,
or in the captured output on failure). Criteria that train models carry
the `slow` marker; the whole module is expected to pass, slow included.
"""

import dataclasses
import hashlib
import json
import time
from contextlib import contextmanager

import numpy as np
import pytest
from click.testing import CliRunner

from melvox import autodiff as ad
from melvox.autodiff import Tensor
from melvox.cli import main as cli_main
from melvox.codec import (
    CodecTrainConfig,
    build_rvq_stack,
    desk_codec_config,
    rvq_quantize,
    train_codec,
)
from melvox.discriminators import build_discriminators
from melvox.errors import StateError
from melvox.evaluate import mr_mel_metric
from melvox.generator import (
    build_generator,
    generator_forward,
    generator_forward_parts,
    load_generator,
    parameter_count,
    save_generator,
)
from melvox.gradcheck import model_cases, op_cases, run_cases, weighted_sum
from melvox.losses import (
    LossWeights,
    default_multiscale,
    loss_adv_discriminator,
    loss_adv_generator,
    loss_feature_matching,
    loss_latent_align,
    loss_multiscale_spec,
    loss_total,
    loss_waveform,
)
from melvox.presets import (
    PARAMETER_COUNTS,
    generator_preset,
    paper_220m_config,
    paper_430m_config,
    preset_mel_config,
    tiny_generator_config,
)
from melvox.signal import AudioSegment, SpectralConfig, mel_spectrogram, stft
from melvox.synth import SyntheticDatasetSpec, synth_clip
from melvox.training import (
    TrainConfig,
    TrainState,
    active_weights,
    load_train_checkpoint,
    make_train_models,
    sample_segment,
    stage_transition,
    train,
    train_step,
)
from melvox.wavio import read_wav, write_wav


@contextmanager
def criterion(n: int, desc: str):
    try:
        yield
    except Exception as e:
        print(f"[FAIL] criterion {n:2d}: {desc} ({type(e).__name__}: {e})")
        raise
    print(f"[PASS] criterion {n:2d}: {desc}")


def _sha(arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()


def _decoder_sha(gen) -> str:
    return _sha([p.data for name, p in sorted(gen.params.items())
                 if name.startswith("decoder.")])


# --- shared expensive fixtures -------------------------------------------

@pytest.fixture(scope="module")
def corpus():
    spec = SyntheticDatasetSpec(n_clips=64, clip_seconds=2.0, seed=0)
    return [synth_clip(spec, i) for i in range(spec.n_clips)]


@pytest.fixture(scope="module")
def held_out():
    spec = SyntheticDatasetSpec(n_clips=10, clip_seconds=2.0, seed=1000)
    return [synth_clip(spec, i) for i in range(spec.n_clips)]


@pytest.fixture(scope="module")
def teacher(corpus):
    cfg = CodecTrainConfig(model=desk_codec_config(), steps=300, segment_len=8192, seed=0)
    return train_codec(corpus, cfg)


def _fresh_setup(teacher, cfg, mode="Z", seed=0):
    gen = build_generator(tiny_generator_config(mode), codec=teacher, seed=seed)
    discs = build_discriminators(seed=seed + 1)
    tm = make_train_models(gen, discs, teacher, cfg)
    state = TrainState(rng=np.random.default_rng(cfg.seed))
    return tm, state


# --- 1: gradient suite ----------------------------------------------------

def test_criterion_01_gradient_suite():
    with criterion(1, "all diff ops + full tiny model graphs vs central FD "
                      "(f32<=1e-3, f64<=1e-6, >=20 probes, <5 min)"):
        t0 = time.perf_counter()
        results = run_cases(op_cases() + model_cases())
        elapsed = time.perf_counter() - t0
        for r in results:
            assert r.probes >= 20, f"{r.name}: only {r.probes} probes"
            assert r.err_f32 <= 1e-3, f"{r.name}: f32 err {r.err_f32:.2e}"
            assert r.err_f64 <= 1e-6, f"{r.name}: f64 err {r.err_f64:.2e}"
        assert elapsed < 300.0, f"suite took {elapsed:.0f}s"


# --- 2: shape chain -------------------------------------------------------

def _assert_chain(cfg, latent_width):
    g = build_generator(cfg, codec=None, seed=0)
    x = (0.1 * np.sin(np.arange(16384) / 7.0)).astype(np.float32)
    with ad.no_grad():
        parts = generator_forward_parts(Tensor(x), g, preset_mel_config(cfg))
    assert parts["latent"].shape == (latent_width, 32), parts["latent"].shape
    assert parts["wave"].shape == (16384,), parts["wave"].shape


@pytest.mark.slow
def test_criterion_02_shape_chain():
    with criterion(2, "16,384 samples -> mel [128, 64] -> latent [., 32] -> "
                      "16,384 out, tiny and paper presets"):
        x = (0.1 * np.sin(np.arange(16384) / 7.0)).astype(np.float32)
        with ad.no_grad():
            mel = mel_spectrogram(x, preset_mel_config(tiny_generator_config()), 44100)
        assert mel.shape == (128, 64), mel.shape

        _assert_chain(tiny_generator_config("QL"), 32)   # 4 codebooks x 8
        _assert_chain(tiny_generator_config("Z"), 64)    # desk latent width
        _assert_chain(paper_220m_config("QL"), 72)       # 9 codebooks x 8
        _assert_chain(paper_220m_config("Z"), 1024)


# --- 3: loss identities ---------------------------------------------------

def test_criterion_03_loss_identities():
    with criterion(3, "losses vanish at their fixed points; unit-component "
                      "totals 35 (stage 1) / 20 (stage 2)"):
        rng = np.random.default_rng(3)
        x = rng.standard_normal(4096).astype(np.float32)
        z = rng.standard_normal((16, 8)).astype(np.float32)
        ms = default_multiscale(3)

        assert float(loss_waveform(Tensor(x), Tensor(x.copy())).data) == 0.0
        assert float(loss_latent_align(Tensor(z), Tensor(z.copy())).data) == 0.0
        assert float(loss_multiscale_spec(Tensor(x), Tensor(x.copy()), ms, "mel").data) == 0.0
        assert float(loss_multiscale_spec(Tensor(x), Tensor(x.copy()), ms, "stft").data) == 0.0

        feats = [[Tensor(rng.standard_normal((4, 9)).astype(np.float32)) for _ in range(3)]]
        mirror = [[Tensor(f.data.copy()) for f in sub] for sub in feats]
        assert float(loss_feature_matching(feats, mirror).data) == 0.0

        ones = [Tensor(np.ones((3, 5), dtype=np.float32))]
        zeros = [Tensor(np.zeros((3, 5), dtype=np.float32))]
        assert float(loss_adv_discriminator(ones, zeros).data) == 0.0  # ideal logits
        assert float(loss_adv_generator(ones).data) == 0.0             # unit fake logits

        unit = {k: 1.0 for k in ("wav", "dac", "mel", "stft", "gen", "feat")}
        assert float(loss_total(dict(unit), LossWeights()).data) == 35.0
        assert float(loss_total(dict(unit), active_weights(TrainConfig(), 2)).data) == 20.0


# --- 4: RVQ oracle --------------------------------------------------------

def test_criterion_04_rvq_exhaustive_oracle():
    with criterion(4, "RVQ matches exhaustive NN scan on 1,000 inputs across "
                      "random codebooks; residual energy non-increasing"):
        rng = np.random.default_rng(4)
        total = 0
        for trial in range(10):
            cfg = desk_codec_config()
            stack = build_rvq_stack(cfg, np.random.default_rng(100 + trial))
            for cb in stack.codebooks:
                cb.entries = np.concatenate(
                    [np.zeros((1, cfg.codebook_dim)),
                     rng.standard_normal((cfg.codebook_size - 1, cfg.codebook_dim))]
                ).astype(np.float32)
            z = rng.standard_normal((cfg.latent_width, 100)).astype(np.float32)
            q = rvq_quantize(Tensor(z), stack)
            # independent exhaustive scan, stage by stage
            residual = z.astype(np.float64).copy()
            energy = float((residual * residual).sum())
            for s, cb in enumerate(stack.codebooks):
                ent = cb.entries.astype(np.float64)
                down = stack.down_proj[s] @ residual
                d2 = ((down.T[:, None, :] - ent[None, :, :]) ** 2).sum(-1)
                want = d2.argmin(axis=1)
                assert np.array_equal(q["indices"][s], want), f"stage {s} mismatch"
                residual = residual - stack.up_proj[s] @ ent[want].T
                after = float((residual * residual).sum())
                assert after <= energy + 1e-9, f"residual energy rose at stage {s}"
                energy = after
            total += z.shape[1]
        assert total == 1000


# --- 5: two-stage contract ------------------------------------------------

@pytest.mark.slow
def test_criterion_05_two_stage_contract(teacher, corpus):
    with criterion(5, "1,000-step run, switch 500: decoder frozen through 499, "
                      "dac zero from 500, bitwise-continuous transition, "
                      "decoder changed by 505"):
        cfg = TrainConfig(segment_length=2048, batch_size=1, stage_switch_step=500,
                          total_steps=1000, mel_n_fft=512, n_scales=3, seed=5)
        tm, state = _fresh_setup(teacher, cfg, seed=5)
        probe = corpus[0].samples[:2048].astype(np.float32)
        good = [c for c in corpus if len(c.samples) >= cfg.segment_length]

        decoder_sha_init = _decoder_sha(tm.generator)
        rows = []
        while state.step < cfg.total_steps:
            if state.stage == 1 and state.step >= cfg.stage_switch_step:
                assert _decoder_sha(tm.generator) == decoder_sha_init, \
                    "decoder moved during stage 1"
                with ad.no_grad():
                    before = generator_forward(probe, tm.generator, tm.mel_cfg).samples
                stage_transition(state, tm)
                with ad.no_grad():
                    after = generator_forward(probe, tm.generator, tm.mel_cfg).samples
                assert np.array_equal(before, after), "transition not bitwise-continuous"
                with pytest.raises(StateError):
                    stage_transition(state, tm)
            segs = [sample_segment(good[int(state.rng.integers(len(good)))], cfg, state.rng)]
            rows.append(train_step(segs, tm, state, cfg))
            if state.step == 505:
                assert _decoder_sha(tm.generator) != decoder_sha_init, \
                    "decoder still frozen after the switch"
        for r in rows:
            if r["step"] < 500:
                assert r["stage"] == 1 and r["dac"] > 0.0, r
            else:
                assert r["stage"] == 2 and r["dac"] == 0.0, r
        assert active_weights(cfg, 2).lambda_dac == 0.0


# --- 6: desk training smoke ----------------------------------------------

@pytest.mark.slow
def test_criterion_06_desk_smoke(teacher, corpus, held_out, tmp_path):
    with criterion(6, "2,000-step desk run: final 100-step G-total avg <= 0.8x "
                      "step-100 avg; trained beats random init on >= 90% of "
                      "held-out MR-MEL; wall <= 45 min"):
        t0 = time.perf_counter()
        cfg = TrainConfig(segment_length=4096, batch_size=1, stage_switch_step=500,
                          total_steps=2000, seed=0)
        tm, state = _fresh_setup(teacher, cfg, seed=0)
        train(tm, state, cfg, corpus, str(tmp_path / "run"))

        with open(tmp_path / "run" / "manifest.jsonl") as f:
            rows = [r for r in map(json.loads, f) if "total" in r]
        assert len(rows) == 2000
        early = float(np.mean([r["total"] for r in rows[:100]]))
        final = float(np.mean([r["total"] for r in rows[-100:]]))
        assert final <= 0.8 * early, f"loss ratio {final / early:.3f} > 0.8"

        mel_cfg = preset_mel_config(tiny_generator_config())
        random_gen = build_generator(tiny_generator_config("Z"), codec=teacher, seed=777)
        wins = 0
        for clip in held_out:
            n = len(clip.samples) - len(clip.samples) % 512
            x = clip.samples[:n]
            trained = generator_forward(x, tm.generator, mel_cfg).samples
            random_ = generator_forward(x, random_gen, mel_cfg).samples
            wins += mr_mel_metric(x, trained) < mr_mel_metric(x, random_)
        assert wins >= 9, f"trained beat random on only {wins}/10 held-out clips"
        assert time.perf_counter() - t0 <= 45 * 60


# --- 7: determinism and resume -------------------------------------------

@pytest.mark.slow
def test_criterion_07_determinism_and_resume(teacher, corpus, tmp_path):
    with criterion(7, "identical seeds give bitwise 50-step traces; checkpoint "
                      "resume matches the uninterrupted 100-step run"):
        def run(out, total, resume_from=None):
            if resume_from is None:
                cfg = TrainConfig(segment_length=2048, batch_size=1,
                                  stage_switch_step=75, total_steps=total,
                                  mel_n_fft=512, n_scales=3, seed=7)
                tm, state = _fresh_setup(teacher, cfg, seed=7)
            else:
                tm, state, saved = load_train_checkpoint(resume_from, teacher)
                cfg = dataclasses.replace(saved, total_steps=total)
            train(tm, state, cfg, corpus, out)
            with open(out + "/manifest.jsonl") as f:
                return f.read()

        a = run(str(tmp_path / "a"), 50)
        b = run(str(tmp_path / "b"), 50)
        assert a == b, "identical seeds gave different 50-step traces"

        full = run(str(tmp_path / "full"), 100)
        part = run(str(tmp_path / "part"), 50)
        resumed = run(str(tmp_path / "part"), 100,
                      resume_from=str(tmp_path / "part" / "train_state.ckpt"))
        assert part == a
        assert resumed == full, "resumed trace differs from the uninterrupted run"


# --- 8: STFT oracles ------------------------------------------------------

def test_criterion_08_stft_oracles():
    with criterion(8, "FFT STFT vs naive DFT <= 1e-4 abs; adjoint identity "
                      "<= 1e-5 rel (f64)"):
        rng = np.random.default_rng(8)
        x = rng.standard_normal(4096)
        n_fft, win, hop = 512, 512, 128
        got = stft(x, SpectralConfig(n_fft, win, hop)).data

        xp = np.pad(x, (n_fft // 2, n_fft // 2), mode="reflect")
        frames = len(x) // hop
        w = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(win) / win)
        ks = np.arange(n_fft // 2 + 1)
        ang = 2.0 * np.pi * np.outer(ks, np.arange(n_fft)) / n_fft
        want = np.zeros((2, n_fft // 2 + 1, frames))
        for i in range(frames):
            fr = xp[i * hop: i * hop + n_fft] * w
            want[0, :, i] = np.cos(ang) @ fr
            want[1, :, i] = -(np.sin(ang) @ fr)
        assert got.shape == want.shape
        assert float(np.max(np.abs(got - want))) <= 1e-4

        xt = Tensor(x, requires_grad=True)
        y = stft(xt, SpectralConfig(n_fft, win, hop))
        cot = rng.standard_normal(y.shape)
        ad.backward(weighted_sum(y, cot))
        lhs = float((y.data * cot).sum())
        rhs = float((x * xt.grad).sum())
        assert abs(lhs - rhs) / max(abs(lhs), 1e-12) <= 1e-5


# --- 9: I/O ---------------------------------------------------------------

@pytest.mark.slow
def test_criterion_09_io(tmp_path):
    with criterion(9, "f32 WAV round trip bitwise; checkpoint save/load/save "
                      "byte-identical; gradcheck CLI exits 0"):
        rng = np.random.default_rng(9)
        x = rng.uniform(-1, 1, 5000).astype(np.float32)
        write_wav(str(tmp_path / "x.wav"), AudioSegment(x, 44100), fmt="f32")
        back = read_wav(str(tmp_path / "x.wav"))
        assert back.sample_rate == 44100
        assert np.array_equal(back.samples, x)

        g = build_generator(tiny_generator_config("QL"), codec=None, seed=9)
        p1, p2 = str(tmp_path / "g1.ckpt"), str(tmp_path / "g2.ckpt")
        save_generator(p1, g)
        save_generator(p2, load_generator(p1))
        with open(p1, "rb") as f1, open(p2, "rb") as f2:
            assert f1.read() == f2.read()

        res = CliRunner().invoke(cli_main, ["gradcheck", "--out", str(tmp_path / "gc")])
        assert res.exit_code == 0, res.output


# --- 10: parameter counts -------------------------------------------------

def test_criterion_10_parameter_counts():
    with criterion(10, "220M/430M presets within 2% of the published totals "
                       "(shape-only) and equal to the stored manifest"):
        for mode in ("Z", "QL"):
            c220 = parameter_count(paper_220m_config(mode))
            c430 = parameter_count(paper_430m_config(mode))
            assert abs(c220 - 220e6) <= 0.02 * 220e6, c220
            assert abs(c430 - 430e6) <= 0.02 * 430e6, c430
            assert c220 == PARAMETER_COUNTS[("paper-220m", mode)]
            assert c430 == PARAMETER_COUNTS[("paper-430m", mode)]
        assert parameter_count(generator_preset("tiny")) == PARAMETER_COUNTS[("tiny", "Z")]
