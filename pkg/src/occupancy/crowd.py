"""Party-mode crowd-size estimation from short-time energy.

Calibration simulates each candidate crowd size many times in one room,
pools the frame STE values, fits a kernel density and records its mode
(the MAP level) and spread. A measured clip is then assigned the candidate
size with the highest likelihood.

Three placement protocols are supported. In all of them every trial draws
fresh speech and fresh background noise.

``quantile`` (default)
    A crowd of ``n`` sits at the (i + 0.5)/n quantiles of the distance from
    the microphone to a uniformly occupied room, one representative seating
    per size. The level of a size then depends on the room and ``n`` only,
    not on the luck of one random draw.
``fixed``
    One seeded random seating layout per room. A crowd of ``n`` occupies its
    first ``n`` seats, so larger crowds contain smaller ones.
``fresh``
    Every trial draws a new random placement.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .audio import AudioClip, FrameSpec, frame_count, frame_energies, make_window
from .kde import PdfCurve, fit_kde, map_level
from .room import (
    NoiseSpec,
    Placement,
    RoomSpec,
    check_density,
    default_noise_std,
    place_speakers,
    quantile_placement,
)
from .seeds import child_seed, rng as seeded_rng
from .synth import DEFAULT_RMS, Corpus

log = logging.getLogger(__name__)

CALIBRATION_FORMAT = "occupancy-ste-calibration"
CALIBRATION_VERSION = 1
PLACEMENTS = ("quantile", "fixed", "fresh")
SCORING_MODES = ("mean", "map", "kde")


class CrowdError(ValueError):
    pass


class ClipTooShortError(CrowdError):
    pass


class FrameSpecMismatchError(CrowdError):
    pass


class NonMonotoneCalibrationWarning(UserWarning):
    pass


class SpeechPool:
    """Corpus utterances as one float32 matrix, extended for wrap-around reads.

    A crowd member is an utterance read from a random offset, wrapping to the
    start when it runs off the end. Members take distinct speakers while the
    corpus has enough of them.
    """

    def __init__(self, corpus: Corpus):
        corpus.validate()
        clips = [(spk, c) for spk in corpus.speakers for c in corpus.utterances[spk]]
        length = min(len(c) for _, c in clips)
        self.sample_rate = corpus.sample_rate
        self.length = length
        self.speaker_of = np.array([corpus.speakers.index(spk) for spk, _ in clips])
        self.n_speakers = len(corpus.speakers)
        self._by_speaker = [np.flatnonzero(self.speaker_of == s) for s in range(self.n_speakers)]
        self._signals = np.stack([c.samples[:length] for _, c in clips]).astype(np.float32)
        self._extended = self._signals
        self.rms = float(np.sqrt(np.mean(self._signals.astype(np.float64) ** 2)))

    def _ensure(self, n_samples: int) -> None:
        need = self.length + n_samples
        if self._extended.shape[1] >= need:
            return
        reps = int(math.ceil(need / self.length))
        self._extended = np.tile(self._signals, (1, reps))[:, :need]

    def choose(self, g: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Utterance rows and start offsets for ``n`` crowd members."""
        order = np.concatenate([g.permutation(self.n_speakers) for _ in range(n // self.n_speakers + 1)])[:n]
        rows = np.array([self._by_speaker[s][g.integers(self._by_speaker[s].size)] for s in order], dtype=int)
        offsets = g.integers(self.length, size=n)
        return rows, offsets

    def segment(self, row: int, offset: int, n_samples: int) -> np.ndarray:
        self._ensure(n_samples)
        return self._extended[row, offset : offset + n_samples]

    def mix(self, g: np.random.Generator, gains: np.ndarray, n_samples: int) -> np.ndarray:
        """Weighted sum of ``len(gains)`` freshly drawn members."""
        out = np.zeros(n_samples)
        if gains.size == 0:
            return out
        rows, offsets = self.choose(g, gains.size)
        self._ensure(n_samples)
        for gain, row, off in zip(gains, rows, offsets):
            out += gain * self._extended[row, off : off + n_samples]
        return out


@dataclass
class SimulationSetup:
    """Everything needed to synthesise a microphone recording for a crowd size."""

    room: RoomSpec
    pool: SpeechPool
    frame_spec: FrameSpec = field(default_factory=FrameSpec)
    noise_std: float | None = None
    noise_mean: float = 0.0
    placement: str = "quantile"
    layout_seed: int = 0

    def __post_init__(self):
        if self.placement not in PLACEMENTS:
            raise CrowdError(f"placement must be one of {PLACEMENTS}, got {self.placement!r}")
        if self.noise_std is None:
            self.noise_std = default_noise_std(self.room, self.pool.rms or DEFAULT_RMS)
        self._layout: Placement | None = None
        self._quantile: dict[int, Placement] = {}
        sr = self.pool.sample_rate
        self.frame_len = self.frame_spec.frame_samples(sr)
        self.step = self.frame_spec.step_samples(sr)
        self.window = make_window(self.frame_spec.window, self.frame_len)

    @property
    def sample_rate(self) -> int:
        return self.pool.sample_rate

    @property
    def layout(self) -> Placement:
        if self._layout is None:
            from .room import max_occupancy

            self._layout = place_speakers(self.room, max_occupancy(self.room), self.layout_seed)
        return self._layout

    def placement_for(self, size: int, trial_seed: int) -> Placement:
        check_density(self.room, size)
        if self.placement == "quantile":
            if size not in self._quantile:
                self._quantile[size] = quantile_placement(self.room, size, self.layout_seed)
            return self._quantile[size]
        if self.placement == "fixed":
            return self.layout.head(size)
        return place_speakers(self.room, size, trial_seed)

    def noise(self, seed: int) -> NoiseSpec:
        return NoiseSpec(self.noise_mean, self.noise_std, seed)

    def simulate(self, size: int, duration: float, seed: int) -> np.ndarray:
        """Microphone samples for one trial; deterministic in ``seed``."""
        n = int(round(duration * self.sample_rate))
        g = seeded_rng(seed, "speech")
        placement = self.placement_for(size, child_seed(seed, "placement"))
        gains = self.room.a0 * self.room.r0 / placement.distances
        x = self.pool.mix(g, gains, n)
        noise = self.noise(child_seed(seed, "noise"))
        if not noise.silent:
            x += seeded_rng(noise.seed, "awgn").normal(noise.mean, noise.std_dev, n)
        return x

    def energies(self, samples: np.ndarray) -> np.ndarray:
        return frame_energies(samples, self.frame_len, self.step, self.window)

    def describe(self) -> dict:
        return {
            "room": self.room.to_dict(),
            "frame_spec": self.frame_spec.to_dict(),
            "noise": {"mean": self.noise_mean, "std_dev": self.noise_std},
            "placement": self.placement,
            "layout_seed": self.layout_seed,
            "sample_rate": self.sample_rate,
        }


def trial_seed(seed: int, stage: str, size: int, duration: float, trial: int) -> int:
    return child_seed(seed, stage, size, f"{duration:g}", trial)


def collect_trials(setup: SimulationSetup, size: int, trials: int, duration: float, seed: int,
                   stage: str = "calibrate") -> list[np.ndarray]:
    """Frame STE series of each trial, in trial order."""
    if trials < 1:
        raise CrowdError(f"trials must be >= 1, got {trials}")
    check_density(setup.room, size)
    return [setup.energies(setup.simulate(size, duration, trial_seed(seed, stage, size, duration, t)))
            for t in range(trials)]


def collect_ste_samples(setup: SimulationSetup, size: int, trials: int, duration: float, seed: int) -> np.ndarray:
    """All frame STE values of ``trials`` simulated recordings, pooled."""
    return np.concatenate(collect_trials(setup, size, trials, duration, seed))


@dataclass
class SizeStats:
    curve: PdfCurve
    map_level: float
    spread: float
    mean: float
    sample_count: int

    def to_dict(self) -> dict:
        return {
            "map_level": self.map_level,
            "spread": self.spread,
            "mean": self.mean,
            "sample_count": self.sample_count,
            "kde": self.curve.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> SizeStats:
        return cls(PdfCurve.from_dict(d["kde"]), float(d["map_level"]), float(d["spread"]),
                   float(d["mean"]), int(d["sample_count"]))


@dataclass
class SteCalibration:
    room: RoomSpec
    frame_spec: FrameSpec
    sizes: list[int]
    per_size: dict[int, SizeStats]
    sample_rate: int
    scoring: str = "mean"
    setup: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "format": CALIBRATION_FORMAT,
            "version": CALIBRATION_VERSION,
            "toolkit_version": __version__,
            "room": self.room.to_dict(),
            "frame_spec": self.frame_spec.to_dict(),
            "sample_rate": self.sample_rate,
            "scoring": self.scoring,
            "sizes": list(self.sizes),
            "per_size": {str(n): self.per_size[n].to_dict() for n in self.sizes},
            "setup": self.setup,
            "seeds": self.seeds,
            "warnings": self.warnings,
        }

    @classmethod
    def from_dict(cls, d: dict) -> SteCalibration:
        if d.get("format") != CALIBRATION_FORMAT:
            raise CrowdError("not an STE calibration document")
        if int(d.get("version", 0)) != CALIBRATION_VERSION:
            raise CrowdError(f"unsupported calibration version {d.get('version')}")
        sizes = [int(n) for n in d["sizes"]]
        return cls(
            room=RoomSpec.from_dict(d["room"]),
            frame_spec=FrameSpec.from_dict(d["frame_spec"]),
            sizes=sizes,
            per_size={n: SizeStats.from_dict(d["per_size"][str(n)]) for n in sizes},
            sample_rate=int(d["sample_rate"]),
            scoring=d.get("scoring", "mean"),
            setup=d.get("setup", {}),
            seeds=d.get("seeds", {}),
            warnings=list(d.get("warnings", [])),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> SteCalibration:
        return cls.from_dict(json.loads(Path(path).read_text()))

    def map_levels(self) -> list[float]:
        return [self.per_size[n].map_level for n in self.sizes]

    def spreads(self) -> list[float]:
        return [self.per_size[n].spread for n in self.sizes]


def size_stats(samples: np.ndarray, bandwidth: float | None = None) -> SizeStats:
    curve = fit_kde(samples, bandwidth)
    return SizeStats(curve, map_level(curve), float(np.std(samples, ddof=1)), float(np.mean(samples)), int(samples.size))


def calibrate(setup: SimulationSetup, sizes, trials: int, duration: float, seed: int,
              scoring: str = "mean") -> SteCalibration:
    sizes = sorted({int(n) for n in sizes})
    if not sizes:
        raise CrowdError("no candidate sizes")
    if scoring not in SCORING_MODES:
        raise CrowdError(f"scoring must be one of {SCORING_MODES}, got {scoring!r}")
    for n in sizes:
        check_density(setup.room, n)
    per_size = {}
    for n in sizes:
        per_size[n] = size_stats(collect_ste_samples(setup, n, trials, duration, seed))
        log.info("size %d: map level %.4g, spread %.4g", n, per_size[n].map_level, per_size[n].spread)

    notes = []
    levels = [per_size[n].map_level for n in sizes]
    if any(b <= a for a, b in zip(levels, levels[1:])):
        msg = f"MAP levels not strictly increasing over sizes {sizes}: {levels}; increase trials"
        warnings.warn(msg, NonMonotoneCalibrationWarning, stacklevel=2)
        notes.append(msg)
    return SteCalibration(
        room=setup.room,
        frame_spec=setup.frame_spec,
        sizes=sizes,
        per_size=per_size,
        sample_rate=setup.sample_rate,
        scoring=scoring,
        setup=setup.describe(),
        seeds={"calibration": seed, "trials": trials, "duration": duration},
        warnings=notes,
    )


@dataclass
class OccupancyEstimate:
    predicted: int
    scores: dict[int, float]
    duration: float
    frames_used: int
    scoring: str = "mean"

    def to_dict(self) -> dict:
        return {
            "predicted": self.predicted,
            "scores": {str(k): v for k, v in self.scores.items()},
            "duration": self.duration,
            "frames_used": self.frames_used,
            "scoring": self.scoring,
        }


def score_energies(energies: np.ndarray, cal: SteCalibration, scoring: str | None = None) -> dict[int, float]:
    """Log-likelihood of a frame-STE series under each candidate size.

    ``mean``
        The series mean E over K frames, modelled as Normal(m, spread^2 / K)
        where m is the calibrated mean frame STE.
    ``map``
        As ``mean`` but centred on the MAP level. Frame STE is right-skewed,
        so the mode sits below the mean and this biases long recordings
        toward larger crowds; kept for comparison.
    ``kde``
        Sum over frames of the log calibrated density.
    """
    scoring = scoring or cal.scoring
    k = energies.size
    scores = {}
    if scoring in ("mean", "map"):
        e_bar = float(energies.mean())
        for n in cal.sizes:
            s = cal.per_size[n]
            centre = s.mean if scoring == "mean" else s.map_level
            var = s.spread**2 / k
            scores[n] = -0.5 * math.log(2 * math.pi * var) - (e_bar - centre) ** 2 / (2 * var)
    elif scoring == "kde":
        for n in cal.sizes:
            dens = cal.per_size[n].curve(energies)
            scores[n] = float(np.sum(np.log(np.maximum(dens, 1e-300))))
    else:
        raise CrowdError(f"unknown scoring mode {scoring!r}")
    return scores


def pick(scores: dict[int, float]) -> int:
    """Highest score; ties go to the smaller size."""
    best = max(scores.values())
    return min(n for n, v in scores.items() if v == best)


def estimate_occupancy(clip: AudioClip, cal: SteCalibration, scoring: str | None = None) -> OccupancyEstimate:
    if clip.sample_rate != cal.sample_rate:
        raise FrameSpecMismatchError(f"clip is {clip.sample_rate} Hz, calibration is {cal.sample_rate} Hz")
    fl = cal.frame_spec.frame_samples(clip.sample_rate)
    step = cal.frame_spec.step_samples(clip.sample_rate)
    if frame_count(len(clip), fl, step) == 0:
        raise ClipTooShortError(f"clip of {clip.duration:.3f} s is shorter than one {cal.frame_spec.frame_ms} ms frame")
    energies = frame_energies(clip.samples, fl, step, make_window(cal.frame_spec.window, fl))
    scoring = scoring or cal.scoring
    scores = score_energies(energies, cal, scoring)
    return OccupancyEstimate(pick(scores), scores, clip.duration, int(energies.size), scoring)


def check_compatible(setup: SimulationSetup, cal: SteCalibration) -> None:
    if setup.frame_spec != cal.frame_spec:
        raise FrameSpecMismatchError(f"frame spec {setup.frame_spec} differs from calibration {cal.frame_spec}")
    if setup.sample_rate != cal.sample_rate:
        raise FrameSpecMismatchError(f"sample rate {setup.sample_rate} differs from calibration {cal.sample_rate}")


@dataclass
class AccuracyMatrix:
    sizes: list[int]
    times: list[float]
    accuracy: np.ndarray  # (len(sizes), len(times))
    trials: int
    predictions: dict = field(default_factory=dict)
    # per-trial mean frame STE, keyed by (size, time)
    mean_ste: dict = field(default_factory=dict)

    def cell(self, size: int, time: float) -> float:
        return float(self.accuracy[self.sizes.index(size), self.times.index(time)])

    def to_csv(self) -> str:
        lines = ["size," + ",".join(f"{t:g}" for t in self.times)]
        for i, n in enumerate(self.sizes):
            lines.append(f"{n}," + ",".join(f"{a:.4f}" for a in self.accuracy[i]))
        return "\n".join(lines) + "\n"

    def curves_csv(self) -> str:
        """Long format (size, time, accuracy) for plotting accuracy over time."""
        lines = ["size,time,accuracy"]
        for i, n in enumerate(self.sizes):
            for j, t in enumerate(self.times):
                lines.append(f"{n},{t:g},{self.accuracy[i, j]:.4f}")
        return "\n".join(lines) + "\n"

    def mean_ste_spread(self, size: int, time: float) -> float:
        """Across-trial standard deviation of the mean frame STE."""
        return float(np.std(self.mean_ste[(size, float(time))], ddof=1)) if self.trials > 1 else 0.0

    def spread_csv(self) -> str:
        """(size, time, std of mean STE) rows; the spread should shrink like 1/sqrt(time)."""
        lines = ["size,time,mean_ste_std"]
        for n in self.sizes:
            for t in self.times:
                lines.append(f"{n},{t:g},{self.mean_ste_spread(n, t):.6e}")
        return "\n".join(lines) + "\n"


def evaluate_accuracy(cal: SteCalibration, setup: SimulationSetup, sizes, times, trials: int, seed: int,
                      scoring: str | None = None) -> AccuracyMatrix:
    """Fraction of fresh simulated recordings assigned their true size.

    Evaluation trials use the ``evaluate`` seed stage, disjoint from the
    calibration draws.
    """
    check_compatible(setup, cal)
    if trials < 1:
        raise CrowdError(f"trials must be >= 1, got {trials}")
    sizes = [int(n) for n in sizes]
    times = [float(t) for t in times]
    acc = np.zeros((len(sizes), len(times)))
    predictions, mean_ste = {}, {}
    for i, n in enumerate(sizes):
        for j, t in enumerate(times):
            series = collect_trials(setup, n, trials, t, seed, stage="evaluate")
            preds = [pick(score_energies(e, cal, scoring)) for e in series]
            acc[i, j] = np.mean(np.array(preds) == n)
            predictions[(n, t)] = preds
            mean_ste[(n, t)] = [float(e.mean()) for e in series]
            log.info("size %d, %g s: accuracy %.3f", n, t, acc[i, j])
    return AccuracyMatrix(sizes, times, acc, trials, predictions, mean_ste)
