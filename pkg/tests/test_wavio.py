import io
import struct
import wave

import numpy as np
import pytest

from occupancy.audio import AudioClip
from occupancy.wavio import (
    MalformedWavError,
    MultiChannelError,
    UnsupportedEncodingError,
    decode_wav,
    encode_wav,
    read_wav,
    write_wav,
)


def stdlib_wav(ints, rate=16000, channels=1, width=2):
    buf = io.BytesIO()
    with wave.open(buf, "wb") as w:
        w.setnchannels(channels)
        w.setsampwidth(width)
        w.setframerate(rate)
        w.writeframes(np.asarray(ints, dtype=f"<i{width}").tobytes() if width > 1 else bytes(ints))
    return buf.getvalue()


def test_sine_round_trip(tmp_path):
    t = np.arange(16000) / 16000
    clip = AudioClip(0.9 * np.sin(2 * np.pi * 440 * t), 16000)
    assert write_wav(tmp_path / "s.wav", clip) == 0
    back = read_wav(tmp_path / "s.wav")
    assert back.sample_rate == 16000 and len(back) == 16000
    assert np.max(np.abs(back.samples - clip.samples)) <= 1 / 32768


def test_output_readable_by_stdlib(tmp_path):
    clip = AudioClip(np.linspace(-1, 1, 101), 8000)
    write_wav(tmp_path / "r.wav", clip)
    with wave.open(str(tmp_path / "r.wav")) as w:
        assert (w.getnchannels(), w.getsampwidth(), w.getframerate(), w.getnframes()) == (1, 2, 8000, 101)
        ints = np.frombuffer(w.readframes(101), "<i2")
    np.testing.assert_array_equal(ints, np.clip(np.round(clip.samples * 32768), -32768, 32767))


def test_reads_stdlib_written_file_exactly():
    ints = np.array([-32768, -1, 0, 1, 32767, 1234])
    clip = decode_wav(stdlib_wav(ints, 22050))
    assert clip.sample_rate == 22050
    np.testing.assert_array_equal(clip.samples, ints / 32768)


def test_bit_exact_for_quantised_samples():
    ints = np.arange(-32768, 32768, 7)
    clip = AudioClip(ints / 32768, 16000)
    data, clamped = encode_wav(clip)
    assert clamped == 0
    np.testing.assert_array_equal(decode_wav(data).samples, clip.samples)


def test_clamping_is_counted(caplog, tmp_path):
    clip = AudioClip([2.0, -3.0, 0.5, 1.0], 16000)
    with caplog.at_level("WARNING"):
        assert write_wav(tmp_path / "c.wav", clip) == 2
    assert "clamped 2" in caplog.text
    np.testing.assert_array_equal(read_wav(tmp_path / "c.wav").samples, [32767 / 32768, -1.0, 0.5, 32767 / 32768])


def test_encoding_is_deterministic():
    clip = AudioClip(np.sin(np.arange(1000)), 16000)
    assert encode_wav(clip)[0] == encode_wav(clip)[0]


@pytest.mark.parametrize("cut", [0, 5, 11, 30, 43])
def test_truncated_header(cut):
    data = stdlib_wav(np.zeros(10, int))
    with pytest.raises(MalformedWavError):
        decode_wav(data[:cut])


def test_bad_signature():
    data = bytearray(stdlib_wav(np.zeros(4, int)))
    data[:4] = b"RIFX"
    with pytest.raises(MalformedWavError):
        decode_wav(bytes(data))


def test_eight_bit_rejected():
    with pytest.raises(UnsupportedEncodingError) as info:
        decode_wav(stdlib_wav([128, 130, 120], width=1))
    assert not isinstance(info.value, MultiChannelError)


def test_stereo_rejected():
    with pytest.raises(MultiChannelError):
        decode_wav(stdlib_wav(np.zeros(8, int), channels=2))


def test_float_format_rejected():
    fmt = struct.pack("<HHIIHH", 3, 1, 16000, 64000, 4, 32)
    payload = np.zeros(4, "<f4").tobytes()
    body = b"WAVE" + b"fmt " + struct.pack("<I", 16) + fmt + b"data" + struct.pack("<I", len(payload)) + payload
    with pytest.raises(UnsupportedEncodingError):
        decode_wav(b"RIFF" + struct.pack("<I", len(body)) + body)


def test_skips_unknown_chunks():
    data = stdlib_wav([1, 2, 3])
    extra = b"LIST" + struct.pack("<I", 3) + b"abc" + b"\x00"
    patched = data[:12] + extra + data[12:]
    np.testing.assert_array_equal(decode_wav(patched).samples, np.array([1, 2, 3]) / 32768)
