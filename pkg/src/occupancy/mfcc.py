"""MFCC extraction with context stacking."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.fft import dct

from .audio import DEFAULT_SAMPLE_RATE, AudioClip, frame_array, make_window

LOG_FLOOR = 1e-10


class FeatureError(ValueError):
    pass


@dataclass(frozen=True)
class MfccConfig:
    frame_ms: float = 20.0
    step_ms: float = 10.0
    mel_filters: int = 24
    cepstral_coeffs: int = 20
    context_frames: int = 6
    sample_rate: int = DEFAULT_SAMPLE_RATE
    preemphasis: float = 0.97
    # frames below this fraction of the clip's median frame energy are dropped
    vad_ratio: float = 0.01
    drop_c0: bool = False

    def __post_init__(self):
        if self.cepstral_coeffs > self.mel_filters:
            raise FeatureError("cepstral_coeffs must not exceed mel_filters")
        if self.context_frames < 1:
            raise FeatureError("context_frames must be >= 1")
        if self.frame_ms <= 0 or self.step_ms <= 0:
            raise FeatureError("frame and step must be positive")

    @property
    def frame_len(self) -> int:
        return int(round(self.frame_ms * self.sample_rate / 1000))

    @property
    def step(self) -> int:
        return int(round(self.step_ms * self.sample_rate / 1000))

    @property
    def nfft(self) -> int:
        return 1 << (self.frame_len - 1).bit_length()

    @property
    def per_frame_dim(self) -> int:
        return self.cepstral_coeffs - (1 if self.drop_c0 else 0)

    @property
    def stacked_dim(self) -> int:
        return self.per_frame_dim * self.context_frames

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> MfccConfig:
        return cls(**d)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def mel_filterbank(n_filters: int, nfft: int, sample_rate: int) -> np.ndarray:
    """Triangular filters equally spaced in mel from 0 Hz to Nyquist, (n_filters, nfft//2 + 1)."""
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2), n_filters + 2))
    freqs = np.arange(nfft // 2 + 1) * sample_rate / nfft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lo) / (mid - lo)
    falling = (hi - freqs) / (hi - mid)
    return np.maximum(0.0, np.minimum(rising, falling))


def cepstra(clip: AudioClip, config: MfccConfig) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame cepstral coefficients and frame energies.

    Returns arrays of shape (n_frames, cepstral_coeffs) and (n_frames,).
    """
    if clip.sample_rate != config.sample_rate:
        raise FeatureError(f"clip is {clip.sample_rate} Hz, config expects {config.sample_rate} Hz")
    x = clip.samples
    x = np.append(x[:1], x[1:] - config.preemphasis * x[:-1])
    frames = frame_array(x, config.frame_len, config.step)
    if frames.shape[0] == 0:
        return np.empty((0, config.cepstral_coeffs)), np.empty(0)
    windowed = frames * make_window("hamming", config.frame_len)
    mag = np.abs(np.fft.rfft(windowed, config.nfft))
    fb = mel_filterbank(config.mel_filters, config.nfft, config.sample_rate)
    logmel = np.log(np.maximum(mag @ fb.T, LOG_FLOOR))
    c = dct(logmel, type=2, axis=1, norm="ortho")[:, : config.cepstral_coeffs]
    return c, np.mean(frames * frames, axis=1)


def stack(frames: np.ndarray, context: int) -> np.ndarray:
    """Concatenate each frame with its ``context - 1`` successors."""
    n = frames.shape[0] - context + 1
    if n <= 0:
        return np.empty((0, frames.shape[1] * context))
    return np.hstack([frames[i : i + n] for i in range(context)])


def mfcc_features(clip: AudioClip, config: MfccConfig = MfccConfig(), vad: bool = False) -> np.ndarray:
    """Stacked MFCC vectors, shape (n_vectors, config.stacked_dim).

    With ``vad`` set, a stacked vector is kept only when all of its frames
    carry at least ``vad_ratio`` times the clip's median frame energy.
    Frames of zero energy never count as voiced.
    """
    c, energy = cepstra(clip, config)
    if c.shape[0] < config.context_frames:
        raise FeatureError(
            f"clip yields {c.shape[0]} frames; {config.context_frames} needed for one stacked vector"
        )
    if config.drop_c0:
        c = c[:, 1:]
    feats = stack(c, config.context_frames)
    if vad:
        voiced = (energy > 0) & (energy >= config.vad_ratio * np.median(energy))
        keep = stack(voiced[:, None].astype(float), config.context_frames).all(axis=1)
        feats = feats[keep]
    return feats
