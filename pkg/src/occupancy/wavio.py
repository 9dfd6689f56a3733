"""PCM 16-bit mono RIFF/WAVE reading and writing.

Only one encoding is supported, so every file this module writes can be read
back bit-exactly. Anything else is rejected with a specific error.
"""

from __future__ import annotations

import logging
import struct
from pathlib import Path

import numpy as np

from .audio import AudioClip

log = logging.getLogger(__name__)

_SCALE = 32768.0


class WavError(Exception):
    pass


class MalformedWavError(WavError):
    """Truncated or structurally invalid RIFF/WAVE data."""


class UnsupportedEncodingError(WavError):
    """Valid WAVE file that is not 16-bit integer PCM."""


class MultiChannelError(UnsupportedEncodingError):
    """Valid 16-bit PCM file with more than one channel."""


def _chunks(data: bytes):
    pos = 12
    while pos + 8 <= len(data):
        cid, size = struct.unpack_from("<4sI", data, pos)
        body = data[pos + 8 : pos + 8 + size]
        if len(body) < size:
            raise MalformedWavError(f"chunk {cid!r} truncated: declared {size} bytes, {len(body)} present")
        yield cid, body
        pos += 8 + size + (size & 1)


def decode_wav(data: bytes) -> AudioClip:
    if len(data) < 12:
        raise MalformedWavError("file shorter than RIFF header")
    riff, _, wave = struct.unpack_from("<4sI4s", data, 0)
    if riff != b"RIFF" or wave != b"WAVE":
        raise MalformedWavError("missing RIFF/WAVE signature")

    fmt = None
    pcm = None
    for cid, body in _chunks(data):
        if cid == b"fmt ":
            if len(body) < 16:
                raise MalformedWavError("fmt chunk shorter than 16 bytes")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif cid == b"data":
            pcm = body
    if fmt is None:
        raise MalformedWavError("no fmt chunk")
    if pcm is None:
        raise MalformedWavError("no data chunk")

    audio_format, channels, rate, _, block_align, bits = fmt
    if audio_format != 1:
        raise UnsupportedEncodingError(f"audio_format {audio_format} is not integer PCM")
    if bits != 16:
        raise UnsupportedEncodingError(f"{bits}-bit samples are not supported (16-bit only)")
    if channels != 1:
        raise MultiChannelError(f"{channels} channels; only mono is supported")
    if rate == 0 or block_align != 2:
        raise MalformedWavError(f"inconsistent fmt chunk (rate={rate}, block_align={block_align})")

    ints = np.frombuffer(pcm[: len(pcm) // 2 * 2], dtype="<i2")
    return AudioClip(ints.astype(np.float64) / _SCALE, int(rate))


def encode_wav(clip: AudioClip) -> tuple[bytes, int]:
    """Return the file bytes and the number of samples clamped to [-1, 1]."""
    x = clip.samples
    clamped = int(np.count_nonzero((x > 1.0) | (x < -1.0)))
    ints = np.clip(np.round(np.clip(x, -1.0, 1.0) * _SCALE), -32768, 32767).astype("<i2")
    payload = ints.tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(payload), b"WAVE",
        b"fmt ", 16, 1, 1, clip.sample_rate, clip.sample_rate * 2, 2, 16,
        b"data", len(payload),
    )
    return header + payload, clamped


def read_wav(path: str | Path) -> AudioClip:
    return decode_wav(Path(path).read_bytes())


def write_wav(path: str | Path, clip: AudioClip) -> int:
    data, clamped = encode_wav(clip)
    if clamped:
        log.warning("%s: clamped %d samples outside [-1, 1]", path, clamped)
    Path(path).write_bytes(data)
    return clamped
