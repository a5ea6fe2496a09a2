"""Front-end tests against independent DFT/filterbank oracles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import melvox.autodiff as ad
import melvox.gradcheck as gc
from melvox.autodiff import Tensor
from melvox.errors import ConfigError, ContractError, DataError
from melvox.signal import (
    AudioSegment,
    MelConfig,
    SpectralConfig,
    hz_to_mel,
    magnitude,
    mel_filterbank,
    mel_spectrogram,
    normalize_audio,
    resample2x,
    stft,
)


# ---------------------------------------------------------------------------
# oracle: direct O(N^2) DFT over explicitly built frames


def naive_stft(x, n_fft, win_length, hop):
    t = len(x)
    xp = np.pad(np.asarray(x, dtype=np.float64), (n_fft // 2, n_fft // 2), mode="reflect")
    n_frames = t // hop if t % hop == 0 else t // hop + 1
    w = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(win_length) / win_length)
    if win_length < n_fft:
        lead = (n_fft - win_length) // 2
        w = np.pad(w, (lead, n_fft - win_length - lead))
    ks = np.arange(n_fft // 2 + 1)
    ang = 2.0 * np.pi * np.outer(ks, np.arange(n_fft)) / n_fft
    cos_m, sin_m = np.cos(ang), np.sin(ang)
    out = np.zeros((2, n_fft // 2 + 1, n_frames))
    for i in range(n_frames):
        fr = xp[i * hop : i * hop + n_fft] * w
        out[0, :, i] = cos_m @ fr
        out[1, :, i] = -(sin_m @ fr)
    return out


def naive_filterbank(n_mels, n_fft, sample_rate, f_min, f_max):
    mel = lambda f: 2595.0 * np.log10(1.0 + f / 700.0)
    inv = lambda m: 700.0 * (10.0 ** (m / 2595.0) - 1.0)
    edges = inv(np.linspace(mel(f_min), mel(f_max), n_mels + 2))
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    fb = np.zeros((n_mels, n_fft // 2 + 1))
    for i in range(n_mels):
        lo, c, hi = edges[i], edges[i + 1], edges[i + 2]
        fb[i] = np.maximum(0.0, np.minimum((freqs - lo) / (c - lo), (hi - freqs) / (hi - c)))
        if fb[i].sum() == 0.0:
            fb[i, np.argmin(np.abs(freqs - c))] = 1.0
    return fb, edges


# ---------------------------------------------------------------------------
# stft


def test_stft_zeros_gives_zero_spectrogram():
    out = stft(np.zeros(1024), SpectralConfig(256, 256, 64))
    assert out.shape == (2, 129, 16)
    np.testing.assert_array_equal(out.data, 0.0)


def test_stft_matches_naive_dft_f32():
    rng = np.random.default_rng(31)
    x = rng.uniform(-1, 1, 2048).astype(np.float32)
    cfg = SpectralConfig(256, 256, 64)
    got = stft(Tensor(x), cfg)
    want = naive_stft(x.astype(np.float64), 256, 256, 64)
    assert got.dtype == np.float32
    np.testing.assert_allclose(got.data, want, atol=1e-4)


def test_stft_short_window_zero_padded():
    rng = np.random.default_rng(32)
    x = rng.uniform(-1, 1, 1200)
    got = stft(Tensor(x), SpectralConfig(n_fft=256, win_length=200, hop_length=50))
    want = naive_stft(x, 256, 200, 50)
    np.testing.assert_allclose(got.data, want, atol=1e-10)


def test_stft_sine_peaks_at_predicted_bin():
    sr, n = 44100, 16384
    x = np.sin(2.0 * np.pi * 440.0 * np.arange(n) / sr)
    out = stft(Tensor(x), SpectralConfig(1024, 1024, 256))
    mag = np.hypot(out.data[0], out.data[1])
    want_bin = round(440 * 1024 / sr)
    assert want_bin == 10
    for frame in range(5, 60):
        assert int(np.argmax(mag[:, frame])) == want_bin


def test_stft_frame_count_hop_divisible():
    # 16384 samples, hop 256: exactly 64 frames after the trim
    out = stft(np.zeros(16384), SpectralConfig(1024, 1024, 256))
    assert out.shape == (2, 513, 64)


def test_stft_is_linear():
    rng = np.random.default_rng(33)
    cfg = SpectralConfig(128, 128, 32)
    x, y = rng.standard_normal(512), rng.standard_normal(512)
    lhs = stft(Tensor(2.5 * x - 1.25 * y), cfg).data
    rhs = 2.5 * stft(Tensor(x), cfg).data - 1.25 * stft(Tensor(y), cfg).data
    np.testing.assert_allclose(lhs, rhs, rtol=1e-10, atol=1e-12)


def test_stft_backward_is_adjoint():
    rng = np.random.default_rng(34)
    xv = rng.standard_normal(1024)
    x = Tensor(xv, requires_grad=True)
    y = stft(x, SpectralConfig(256, 256, 64))
    cot = rng.standard_normal(y.shape)
    ad.backward(gc.weighted_sum(y, cot))
    lhs = float((y.data * cot).sum())
    rhs = float((xv * x.grad).sum())
    assert abs(lhs - rhs) / max(abs(lhs), 1e-12) <= 1e-5


def test_stft_rejects_short_segment():
    with pytest.raises(ContractError, match="hop"):
        stft(np.zeros(100), SpectralConfig(1024, 1024, 256))


@settings(max_examples=30, deadline=None)
@given(t=st.integers(200, 1500))
def test_stft_frame_count_property(t):
    out = stft(np.zeros(t), SpectralConfig(128, 128, 64))
    want = t // 64 if t % 64 == 0 else t // 64 + 1
    assert out.shape[2] == want


# ---------------------------------------------------------------------------
# mel


def test_filterbank_rows_nonnegative_with_support():
    fb = mel_filterbank(MelConfig(SpectralConfig(1024, 1024, 256), n_mels=128), 44100)
    assert fb.shape == (128, 513)
    assert np.all(fb >= 0)
    assert np.all(fb.sum(axis=1) > 0)


def test_filterbank_centers_monotone():
    cfg = MelConfig(SpectralConfig(1024, 1024, 256), n_mels=80)
    fb = mel_filterbank(cfg, 44100)
    _, edges = naive_filterbank(80, 1024, 44100, 0.0, 22050.0)
    assert np.all(np.diff(edges) > 0)
    peaks = fb.argmax(axis=1)
    assert np.all(np.diff(peaks) >= 0)


def test_filterbank_single_triangle():
    cfg = MelConfig(SpectralConfig(512, 512, 128), n_mels=1, f_min=1000.0, f_max=4000.0)
    fb = mel_filterbank(cfg, 16000)
    freqs = np.arange(257) * 16000 / 512
    inside = (freqs > 1000.0) & (freqs < 4000.0)
    assert np.all(fb[0][~inside] == 0)
    assert fb[0][inside].max() > 0


def test_filterbank_matches_independent_construction():
    fb = mel_filterbank(MelConfig(SpectralConfig(1024, 1024, 256), n_mels=64), 44100)
    want, _ = naive_filterbank(64, 1024, 44100, 0.0, 22050.0)
    np.testing.assert_allclose(fb, want, rtol=1e-12, atol=1e-12)


def test_filterbank_too_many_mels_is_config_error():
    with pytest.raises(ConfigError):
        mel_filterbank(MelConfig(SpectralConfig(64, 64, 16), n_mels=200), 44100)


def test_filterbank_rejects_f_max_above_nyquist():
    with pytest.raises(ConfigError, match="Nyquist"):
        mel_filterbank(MelConfig(SpectralConfig(), f_max=30000.0), 44100)


def test_mel_spectrogram_paper_shape():
    out = mel_spectrogram(np.zeros(16384), MelConfig(), sample_rate=44100)
    assert out.shape == (128, 64)


def test_mel_spectrogram_silence_hits_log_floor():
    cfg = MelConfig(log_floor=1e-5)
    out = mel_spectrogram(np.zeros(16384), cfg, sample_rate=44100)
    np.testing.assert_allclose(out.data, np.log(1e-5), rtol=1e-6)


def test_mel_spectrogram_compositional_oracle():
    rng = np.random.default_rng(35)
    x = rng.uniform(-1, 1, 4096)
    cfg = MelConfig(SpectralConfig(512, 512, 128), n_mels=40)
    got = mel_spectrogram(Tensor(x), cfg, sample_rate=22050)
    spec = naive_stft(x, 512, 512, 128)
    mag = np.sqrt(spec[0] ** 2 + spec[1] ** 2 + 1e-20)
    fb, _ = naive_filterbank(40, 512, 22050, 0.0, 11025.0)
    want = np.log(np.maximum(fb @ mag, 1e-5))
    np.testing.assert_allclose(got.data, want, rtol=1e-9, atol=1e-10)


def test_mel_spectrogram_requires_rate_for_raw_arrays():
    with pytest.raises(ContractError, match="sample_rate"):
        mel_spectrogram(np.zeros(16384), MelConfig())


def test_mel_uses_segment_rate():
    seg = AudioSegment(np.zeros(16384, dtype=np.float32), 44100)
    out = mel_spectrogram(seg, MelConfig())
    assert out.shape == (128, 64)


# ---------------------------------------------------------------------------
# normalization


def test_normalize_scales_to_peak_one():
    seg = normalize_audio([0.5, -0.25], 44100)
    np.testing.assert_allclose(seg.samples, [1.0, -0.5])


def test_normalize_silence_passthrough():
    seg = normalize_audio(np.zeros(16), 44100)
    np.testing.assert_array_equal(seg.samples, 0.0)


def test_normalize_idempotent():
    rng = np.random.default_rng(36)
    x = rng.uniform(-0.3, 0.3, 100)
    once = normalize_audio(x, 44100)
    twice = normalize_audio(once.samples, 44100)
    np.testing.assert_array_equal(once.samples, twice.samples)
    assert np.max(np.abs(once.samples)) <= 1.0


def test_normalize_rejects_nan():
    with pytest.raises(DataError):
        normalize_audio([0.1, np.nan], 44100)


# ---------------------------------------------------------------------------
# resampling


def test_resample_dc_preserved():
    x = Tensor(np.full((1, 512), 0.7))
    down = resample2x(x, "down")
    up = resample2x(x, "up")
    assert down.shape == (1, 256)
    assert up.shape == (1, 1024)
    np.testing.assert_allclose(down.data, 0.7, atol=1e-3)
    np.testing.assert_allclose(up.data, 0.7, atol=1e-3)


def test_resample_tone_round_trip():
    # 0.2 * Nyquist tone; down then up should nearly reconstruct it
    n = 4096
    x = np.sin(2.0 * np.pi * 0.1 * np.arange(n) + 0.3)
    y = resample2x(resample2x(Tensor(x[None, :]), "down"), "up")
    rel = np.linalg.norm(y.data[0] - x) / np.linalg.norm(x)
    assert rel <= 5e-2


def test_resample_zeros():
    y = resample2x(Tensor(np.zeros((2, 64))), "up")
    np.testing.assert_array_equal(y.data, 0.0)


def test_resample_rejects_odd_length_down():
    with pytest.raises(ContractError):
        resample2x(Tensor(np.zeros((1, 65))), "down")


def test_resample_rejects_unknown_direction():
    with pytest.raises(ContractError):
        resample2x(Tensor(np.zeros((1, 64))), "sideways")


# ---------------------------------------------------------------------------
# config validation


def test_spectral_config_invariants():
    with pytest.raises(ConfigError):
        SpectralConfig(n_fft=256, win_length=512, hop_length=64)
    with pytest.raises(ConfigError):
        SpectralConfig(n_fft=256, win_length=256, hop_length=512)
    with pytest.raises(ConfigError):
        SpectralConfig(n_fft=0, win_length=0, hop_length=0)


def test_mel_config_invariants():
    with pytest.raises(ConfigError):
        MelConfig(n_mels=0)
    with pytest.raises(ConfigError):
        MelConfig(log_floor=0.0)
    with pytest.raises(ConfigError):
        MelConfig(f_min=500.0, f_max=100.0)


def test_magnitude_matches_hypot():
    rng = np.random.default_rng(37)
    spec = rng.standard_normal((2, 5, 7))
    got = magnitude(Tensor(spec))
    np.testing.assert_allclose(got.data, np.sqrt(spec[0] ** 2 + spec[1] ** 2 + 1e-20), rtol=1e-12)
