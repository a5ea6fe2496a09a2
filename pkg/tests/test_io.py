"""WAV container and checkpoint container round trips, plus failure modes."""

import struct

import numpy as np
import pytest

from melvox.checkpoint import load_checkpoint, save_checkpoint
from melvox.errors import CorruptionError, ParseError, UnsupportedFormatError
from melvox.signal import AudioSegment
from melvox.wavio import read_wav, write_wav


# ---------------------------------------------------------------------------
# wav


def test_f32_round_trip_bitwise(tmp_path):
    rng = np.random.default_rng(51)
    x = rng.uniform(-1, 1, 4410).astype(np.float32)
    p = str(tmp_path / "a.wav")
    write_wav(p, AudioSegment(x, 44100), "f32")
    back = read_wav(p)
    assert back.sample_rate == 44100
    np.testing.assert_array_equal(back.samples, x)


def test_pcm16_round_trip_quantization_bound(tmp_path):
    rng = np.random.default_rng(52)
    x = rng.uniform(-1, 1, 2000).astype(np.float32)
    p = str(tmp_path / "a.wav")
    write_wav(p, AudioSegment(x, 22050), "pcm16")
    back = read_wav(p)
    assert np.max(np.abs(back.samples - x)) <= 1.0 / 32768.0


def test_pcm16_negative_full_scale():
    # the int16 value -32768 decodes to exactly -1.0
    raw = struct.pack("<h", -32768)
    blob = _build_wav(raw, audio_format=1, bits=16, channels=1, rate=8000)
    p = "/tmp/fullscale.wav"
    with open(p, "wb") as f:
        f.write(blob)
    seg = read_wav(p)
    assert seg.samples[0] == -1.0


def test_pcm16_round_half_away_from_zero(tmp_path):
    # 0.5/32768 rounds away to 1; -0.5/32768 rounds away to -1
    x = np.array([0.5 / 32768.0, -0.5 / 32768.0, 0.4 / 32768.0], dtype=np.float32)
    p = str(tmp_path / "r.wav")
    write_wav(p, AudioSegment(x, 8000), "pcm16")
    back = read_wav(p)
    np.testing.assert_array_equal(back.samples * 32768.0, [1.0, -1.0, 0.0])


def test_pcm16_clamps_overrange(tmp_path):
    x = np.array([1.5, -1.5], dtype=np.float32)
    p = str(tmp_path / "c.wav")
    write_wav(p, AudioSegment(x, 8000), "pcm16")
    back = read_wav(p)
    np.testing.assert_array_equal(back.samples * 32768.0, [32767.0, -32768.0])


def _build_wav(payload, audio_format, bits, channels, rate):
    block = channels * bits // 8
    fmt = b"fmt " + struct.pack("<IHHIIHH", 16, audio_format, channels, rate, rate * block, block, bits)
    data = b"data" + struct.pack("<I", len(payload)) + payload
    body = fmt + data
    return b"RIFF" + struct.pack("<I", 4 + len(body)) + b"WAVE" + body


def test_stereo_downmix_averages(tmp_path):
    frames = struct.pack("<4f", 1.0, 0.0, 0.5, 0.5)  # L,R interleaved
    blob = _build_wav(frames, audio_format=3, bits=32, channels=2, rate=44100)
    p = str(tmp_path / "st.wav")
    with open(p, "wb") as f:
        f.write(blob)
    seg = read_wav(p)
    np.testing.assert_allclose(seg.samples, [0.5, 0.5])


def test_reader_skips_unknown_chunks(tmp_path):
    payload = struct.pack("<2f", 0.25, -0.25)
    fmt = b"fmt " + struct.pack("<IHHIIHH", 16, 3, 1, 44100, 44100 * 4, 4, 32)
    junk = b"LIST" + struct.pack("<I", 5) + b"abcde" + b"\x00"  # odd size: padded
    data = b"data" + struct.pack("<I", len(payload)) + payload
    body = fmt + junk + data
    blob = b"RIFF" + struct.pack("<I", 4 + len(body)) + b"WAVE" + body
    p = str(tmp_path / "junk.wav")
    with open(p, "wb") as f:
        f.write(blob)
    np.testing.assert_allclose(read_wav(p).samples, [0.25, -0.25])


def test_missing_riff_tag_offset_zero(tmp_path):
    p = str(tmp_path / "bad.wav")
    with open(p, "wb") as f:
        f.write(b"JUNKxxxxWAVE" + b"\x00" * 20)
    with pytest.raises(ParseError, match=r"byte offset 0"):
        read_wav(p)


def test_bad_wave_tag_offset_eight(tmp_path):
    p = str(tmp_path / "bad.wav")
    with open(p, "wb") as f:
        f.write(b"RIFF" + struct.pack("<I", 24) + b"NOPE" + b"\x00" * 20)
    with pytest.raises(ParseError, match=r"byte offset 8"):
        read_wav(p)


def test_truncated_data_chunk_reports_offset(tmp_path):
    payload = struct.pack("<2f", 0.1, 0.2)
    blob = _build_wav(payload, 3, 32, 1, 8000)
    p = str(tmp_path / "tr.wav")
    with open(p, "wb") as f:
        f.write(blob[:-4])  # chop payload but keep declared size
    with pytest.raises(ParseError):
        read_wav(p)


def test_unsupported_codec(tmp_path):
    blob = _build_wav(b"\x00" * 8, audio_format=6, bits=8, channels=1, rate=8000)  # a-law
    p = str(tmp_path / "alaw.wav")
    with open(p, "wb") as f:
        f.write(blob)
    with pytest.raises(UnsupportedFormatError):
        read_wav(p)


def test_header_length_fields_match_payload(tmp_path):
    x = np.zeros(100, dtype=np.float32)
    p = str(tmp_path / "h.wav")
    write_wav(p, AudioSegment(x, 44100), "pcm16")
    with open(p, "rb") as f:
        blob = f.read()
    riff_size = struct.unpack_from("<I", blob, 4)[0]
    assert riff_size + 8 == len(blob)
    data_at = blob.find(b"data")
    data_size = struct.unpack_from("<I", blob, data_at + 4)[0]
    assert data_size == 200
    assert data_at + 8 + data_size == len(blob)


# ---------------------------------------------------------------------------
# checkpoint


def _fixture():
    rng = np.random.default_rng(53)
    config = {"preset": "tiny", "mel": {"n_mels": 16}, "zz": 1}
    tensors = {
        "decoder.0.weight": rng.standard_normal((3, 2, 4)).astype(np.float32),
        "decoder.0.bias": rng.standard_normal(3).astype(np.float32),
        "encoder.proj": rng.standard_normal((2, 2)).astype(np.float64),
        "codebook.usage": rng.integers(0, 100, 7).astype(np.int64),
    }
    state = {"step": 123, "stage": 1, "rng": {"state": 2**100 + 7}, "t": {"a": 5}}
    return config, tensors, state


def test_checkpoint_round_trip_bitwise(tmp_path):
    config, tensors, state = _fixture()
    p1 = str(tmp_path / "a.ckpt")
    p2 = str(tmp_path / "b.ckpt")
    save_checkpoint(p1, config, tensors, state)
    c2, t2, s2 = load_checkpoint(p1)
    assert c2 == config
    assert s2 == state
    assert set(t2) == set(tensors)
    for k in tensors:
        assert t2[k].dtype == tensors[k].dtype
        np.testing.assert_array_equal(t2[k], tensors[k])
    save_checkpoint(p2, c2, t2, s2)
    with open(p1, "rb") as f1, open(p2, "rb") as f2:
        assert f1.read() == f2.read()


def test_checkpoint_truncation_is_corruption(tmp_path):
    config, tensors, state = _fixture()
    p = str(tmp_path / "a.ckpt")
    save_checkpoint(p, config, tensors, state)
    with open(p, "rb") as f:
        blob = f.read()
    for cut in (10, len(blob) // 2, len(blob) - 5):
        with open(p, "wb") as f:
            f.write(blob[:cut])
        with pytest.raises(CorruptionError):
            load_checkpoint(p)


def test_checkpoint_bitflip_fails_checksum(tmp_path):
    config, tensors, state = _fixture()
    p = str(tmp_path / "a.ckpt")
    save_checkpoint(p, config, tensors, state)
    with open(p, "rb") as f:
        blob = bytearray(f.read())
    blob[len(blob) // 3] ^= 0x40
    with open(p, "wb") as f:
        f.write(bytes(blob))
    with pytest.raises(CorruptionError, match="checksum"):
        load_checkpoint(p)


def test_checkpoint_version_mismatch(tmp_path):
    import hashlib

    config, tensors, state = _fixture()
    p = str(tmp_path / "a.ckpt")
    save_checkpoint(p, config, tensors, state)
    with open(p, "rb") as f:
        blob = bytearray(f.read()[:-32])
    blob[4:8] = struct.pack("<I", 99)
    blob = bytes(blob)
    with open(p, "wb") as f:
        f.write(blob + hashlib.sha256(blob).digest())
    with pytest.raises(UnsupportedFormatError, match="version 99"):
        load_checkpoint(p)


def test_checkpoint_decoder_prefix_mapping(tmp_path):
    # a codec checkpoint's decoder tensors select by the "decoder." prefix
    config, tensors, state = _fixture()
    p = str(tmp_path / "codec.ckpt")
    save_checkpoint(p, config, tensors, state)
    _, loaded, _ = load_checkpoint(p)
    decoder = {k: v for k, v in loaded.items() if k.startswith("decoder.")}
    assert sorted(decoder) == ["decoder.0.bias", "decoder.0.weight"]
    np.testing.assert_array_equal(decoder["decoder.0.weight"], tensors["decoder.0.weight"])


def test_checkpoint_loaded_tensors_are_writable(tmp_path):
    config, tensors, state = _fixture()
    p = str(tmp_path / "a.ckpt")
    save_checkpoint(p, config, tensors, state)
    _, loaded, _ = load_checkpoint(p)
    loaded["decoder.0.bias"][0] = 99.0  # must not raise
