"""RIFF/WAVE reading and writing.

Hand-rolled because the stdlib module cannot express IEEE-float payloads.
The reader walks chunks, tolerates unknown ones (with the RIFF odd-size pad
byte), downmixes multi-channel audio to mono by averaging, and reports
malformed structure as a parse error carrying the absolute byte offset of
the violation. PCM16 samples map to float via the 1/32768 convention; the
writer quantizes with round-half-away-from-zero and clamps to int16 range.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import DataError, ParseError, UnsupportedFormatError
from .signal import AudioSegment

_PCM = 1
_IEEE_FLOAT = 3


def read_wav(path: str) -> AudioSegment:
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 12:
        raise ParseError("file too short for a RIFF header", offset=0)
    if blob[0:4] != b"RIFF":
        raise ParseError("missing RIFF tag", offset=0)
    if blob[8:12] != b"WAVE":
        raise ParseError("missing WAVE form type", offset=8)
    riff_size = struct.unpack_from("<I", blob, 4)[0]
    if riff_size + 8 > len(blob):
        raise ParseError(f"RIFF size {riff_size} overruns file of {len(blob)} bytes", offset=4)

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(blob):
        cid = blob[pos : pos + 4]
        size = struct.unpack_from("<I", blob, pos + 4)[0]
        body = pos + 8
        if body + size > len(blob):
            raise ParseError(f"chunk {cid!r} of {size} bytes overruns file", offset=pos + 4)
        if cid == b"fmt ":
            if size < 16:
                raise ParseError(f"fmt chunk of {size} bytes, need 16", offset=pos + 4)
            fmt = struct.unpack_from("<HHIIHH", blob, body)
        elif cid == b"data":
            data = (body, size)
        pos = body + size + (size & 1)  # RIFF pads odd chunks

    if fmt is None:
        raise ParseError("no fmt chunk", offset=pos)
    if data is None:
        raise ParseError("no data chunk", offset=pos)

    audio_format, channels, sample_rate, _byte_rate, _block_align, bits = fmt
    if channels < 1:
        raise ParseError("fmt chunk declares zero channels", offset=12)
    body, size = data

    if audio_format == _PCM and bits == 16:
        count = size // 2
        raw = np.frombuffer(blob, dtype="<i2", count=count, offset=body)
        samples = raw.astype(np.float32) / np.float32(32768.0)
    elif audio_format == _IEEE_FLOAT and bits == 32:
        count = size // 4
        samples = np.frombuffer(blob, dtype="<f4", count=count, offset=body).astype(np.float32)
    else:
        raise UnsupportedFormatError(
            f"unsupported codec: format tag {audio_format}, {bits} bits per sample"
        )

    if channels > 1:
        frames = samples.shape[0] // channels
        samples = samples[: frames * channels].reshape(frames, channels).mean(axis=1)
        samples = samples.astype(np.float32)
    return AudioSegment(samples, sample_rate)


def write_wav(path: str, segment: AudioSegment, fmt: str = "f32") -> None:
    samples = np.asarray(segment.samples, dtype=np.float32)
    if not np.all(np.isfinite(samples)):
        raise DataError("write_wav: non-finite sample")

    if fmt == "pcm16":
        scaled = samples.astype(np.float64) * 32768.0
        rounded = np.copysign(np.floor(np.abs(scaled) + 0.5), scaled)
        payload = np.clip(rounded, -32768, 32767).astype("<i2").tobytes()
        audio_format, bits = _PCM, 16
    elif fmt == "f32":
        payload = samples.astype("<f4").tobytes()
        audio_format, bits = _IEEE_FLOAT, 32
    else:
        raise UnsupportedFormatError(f"write_wav: unknown format {fmt!r}")

    channels = 1
    block_align = channels * bits // 8
    byte_rate = segment.sample_rate * block_align
    fmt_chunk = b"fmt " + struct.pack(
        "<IHHIIHH", 16, audio_format, channels, segment.sample_rate, byte_rate, block_align, bits
    )
    chunks = fmt_chunk
    if audio_format == _IEEE_FLOAT:
        # non-PCM formats carry a fact chunk with the frame count
        chunks += b"fact" + struct.pack("<II", 4, samples.shape[0])
    chunks += b"data" + struct.pack("<I", len(payload)) + payload
    riff = b"RIFF" + struct.pack("<I", 4 + len(chunks)) + b"WAVE" + chunks
    with open(path, "wb") as f:
        f.write(riff)
