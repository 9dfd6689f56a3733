"""Signal types, framing, windowing and short-time energy."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

DEFAULT_SAMPLE_RATE = 16000


class InvalidSpecError(ValueError):
    """A frame specification or window request that cannot be honoured."""


class Window(str, Enum):
    RECTANGULAR = "rectangular"
    HAMMING = "hamming"


@dataclass(frozen=True, eq=False)
class AudioClip:
    """Mono signal with its sample rate.

    Samples are stored as a read-only float64 array with nominal range [-1, 1].
    """

    samples: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64).reshape(-1)
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def scaled(self, gain: float) -> AudioClip:
        return AudioClip(self.samples * gain, self.sample_rate)

    def head(self, n_samples: int) -> AudioClip:
        return AudioClip(self.samples[:n_samples], self.sample_rate)


@dataclass(frozen=True)
class FrameSpec:
    frame_ms: float = 50.0
    step_ms: float = 25.0
    window: Window = Window.HAMMING

    def __post_init__(self):
        object.__setattr__(self, "window", Window(self.window))
        if not (self.frame_ms > 0 and self.step_ms > 0):
            raise InvalidSpecError("frame and step durations must be positive")
        if self.step_ms > self.frame_ms:
            raise InvalidSpecError("step must not exceed frame length")

    def frame_samples(self, sample_rate: int) -> int:
        n = int(round(self.frame_ms * sample_rate / 1000.0))
        if n < 1:
            raise InvalidSpecError(f"{self.frame_ms} ms is shorter than one sample at {sample_rate} Hz")
        return n

    def step_samples(self, sample_rate: int) -> int:
        n = int(round(self.step_ms * sample_rate / 1000.0))
        if n < 1:
            raise InvalidSpecError(f"{self.step_ms} ms is shorter than one sample at {sample_rate} Hz")
        return n

    def to_dict(self) -> dict:
        return {"frame_ms": self.frame_ms, "step_ms": self.step_ms, "window": self.window.value}

    @classmethod
    def from_dict(cls, d: dict) -> FrameSpec:
        return cls(float(d["frame_ms"]), float(d["step_ms"]), Window(d["window"]))


@dataclass(frozen=True, eq=False)
class SteSeries:
    values: np.ndarray
    frame_spec: FrameSpec
    source_duration: float

    def __len__(self) -> int:
        return self.values.size


def frame_count(total_samples: int, frame_len: int, step: int) -> int:
    if total_samples < frame_len:
        return 0
    return (total_samples - frame_len) // step + 1


def frame_array(samples: np.ndarray, frame_len: int, step: int) -> np.ndarray:
    """Strided read-only view of shape (n_frames, frame_len); trailing partial frame dropped."""
    n = frame_count(samples.size, frame_len, step)
    if n == 0:
        return np.empty((0, frame_len), dtype=samples.dtype)
    view = np.lib.stride_tricks.sliding_window_view(samples, frame_len)
    return view[: (n - 1) * step + 1 : step]


def frame_signal(clip: AudioClip, spec: FrameSpec) -> np.ndarray:
    return frame_array(clip.samples, spec.frame_samples(clip.sample_rate), spec.step_samples(clip.sample_rate))


def make_window(kind: Window | str, n: int) -> np.ndarray:
    """Window weights of length ``n``.

    The Hamming window is the symmetric form 0.54 - 0.46 cos(2 pi k / (n - 1));
    a single-point window is ``[1.0]`` for every kind.
    """
    kind = Window(kind)
    if n < 1:
        raise InvalidSpecError(f"window length must be >= 1, got {n}")
    if kind is Window.RECTANGULAR or n == 1:
        return np.ones(n)
    k = np.arange(n)
    return 0.54 - 0.46 * np.cos(2.0 * np.pi * k / (n - 1))


def short_time_energy(frame: np.ndarray, window: np.ndarray) -> float:
    """(1/N) * sum(w(n) * |x(n)|^2); the window weights the squared signal."""
    frame = np.asarray(frame, dtype=np.float64)
    window = np.asarray(window, dtype=np.float64)
    if frame.shape != window.shape or frame.ndim != 1 or frame.size < 1:
        raise InvalidSpecError(f"frame {frame.shape} and window {window.shape} must be equal 1-D lengths")
    return float(np.dot(window, frame * frame) / frame.size)


def frame_energies(samples: np.ndarray, frame_len: int, step: int, window: np.ndarray) -> np.ndarray:
    """Vectorised short_time_energy over every full frame of ``samples``."""
    frames = frame_array(samples, frame_len, step)
    if frames.shape[0] == 0:
        return np.zeros(0)
    return (frames * frames) @ window / frame_len


def ste_series(clip: AudioClip, spec: FrameSpec) -> SteSeries:
    n = spec.frame_samples(clip.sample_rate)
    step = spec.step_samples(clip.sample_rate)
    values = frame_energies(clip.samples, n, step, make_window(spec.window, n))
    return SteSeries(values, spec, clip.duration)
