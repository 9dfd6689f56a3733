"""Room geometry, speaker placement and microphone mixing.

Speakers are lossless point sources. A source at distance r from the
microphone reaches it with amplitude gain ``a0 * r0 / r``; the microphone
signal is the gain-weighted sum of all sources plus white Gaussian background
noise added at the microphone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .audio import AudioClip
from .seeds import rng as seeded_rng

DEFAULT_R0 = 0.5
DEFAULT_A0 = 1.0
DENSITY_CAP = 1.0  # speakers per square metre


class RoomError(ValueError):
    pass


class DensityViolationError(RoomError):
    pass


class TooCloseError(RoomError):
    pass


class CountMismatchError(RoomError):
    pass


class RateMismatchError(RoomError):
    pass


class Shape(str, Enum):
    RECTANGULAR = "rectangular"
    CIRCULAR = "circular"


class MicPosition(str, Enum):
    CENTER = "center"
    CORNER = "corner"


@dataclass(frozen=True)
class RoomSpec:
    """A rectangular room spans [0, length] x [0, width]; a circular room is
    centred on the origin."""

    shape: Shape = Shape.RECTANGULAR
    length: float = 10.0
    width: float = 8.0
    radius: float = 0.0
    mic: MicPosition = MicPosition.CORNER
    r0: float = DEFAULT_R0
    a0: float = DEFAULT_A0

    def __post_init__(self):
        object.__setattr__(self, "shape", Shape(self.shape))
        object.__setattr__(self, "mic", MicPosition(self.mic))
        if self.shape is Shape.RECTANGULAR:
            if not (self.length > 0 and self.width > 0):
                raise RoomError("rectangular room needs positive length and width")
        elif not self.radius > 0:
            raise RoomError("circular room needs a positive radius")
        if self.shape is Shape.CIRCULAR and self.mic is MicPosition.CORNER:
            raise RoomError("a corner microphone needs a rectangular room")
        if not (self.r0 > 0 and self.a0 > 0):
            raise RoomError("r0 and a0 must be positive")

    @classmethod
    def rectangular(cls, length: float, width: float, mic="corner", r0=DEFAULT_R0, a0=DEFAULT_A0) -> RoomSpec:
        return cls(Shape.RECTANGULAR, length, width, 0.0, MicPosition(mic), r0, a0)

    @classmethod
    def circular(cls, radius: float, r0=DEFAULT_R0, a0=DEFAULT_A0) -> RoomSpec:
        return cls(Shape.CIRCULAR, 0.0, 0.0, radius, MicPosition.CENTER, r0, a0)

    @property
    def mic_xy(self) -> np.ndarray:
        if self.shape is Shape.CIRCULAR:
            return np.zeros(2)
        if self.mic is MicPosition.CORNER:
            return np.zeros(2)
        return np.array([self.length / 2, self.width / 2])

    def contains(self, xy: np.ndarray) -> np.ndarray:
        xy = np.atleast_2d(xy)
        if self.shape is Shape.CIRCULAR:
            return np.hypot(xy[:, 0], xy[:, 1]) <= self.radius
        return (xy[:, 0] >= 0) & (xy[:, 0] <= self.length) & (xy[:, 1] >= 0) & (xy[:, 1] <= self.width)

    def to_dict(self) -> dict:
        d = {"shape": self.shape.value, "mic": self.mic.value, "r0": self.r0, "a0": self.a0}
        if self.shape is Shape.CIRCULAR:
            d["radius"] = self.radius
        else:
            d["length"], d["width"] = self.length, self.width
        return d

    @classmethod
    def from_dict(cls, d: dict) -> RoomSpec:
        return cls(
            Shape(d.get("shape", "rectangular")),
            float(d.get("length", 0.0)),
            float(d.get("width", 0.0)),
            float(d.get("radius", 0.0)),
            MicPosition(d.get("mic", "corner")),
            float(d.get("r0", DEFAULT_R0)),
            float(d.get("a0", DEFAULT_A0)),
        )


@dataclass(frozen=True, eq=False)
class Placement:
    positions: np.ndarray  # (n, 2) metres
    distances: np.ndarray  # (n,) metres to the microphone

    def __len__(self) -> int:
        return self.distances.size

    def head(self, n: int) -> Placement:
        return Placement(self.positions[:n], self.distances[:n])

    def to_dict(self) -> dict:
        return {
            "positions": self.positions.tolist(),
            "distances": self.distances.tolist(),
        }


@dataclass(frozen=True)
class NoiseSpec:
    mean: float = 0.0
    std_dev: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.std_dev < 0:
            raise RoomError("noise std_dev must be >= 0")

    @property
    def silent(self) -> bool:
        return self.mean == 0 and self.std_dev == 0


def room_area(room: RoomSpec) -> float:
    if room.shape is Shape.CIRCULAR:
        return math.pi * room.radius**2
    return room.length * room.width


def max_occupancy(room: RoomSpec) -> int:
    return int(math.floor(room_area(room) * DENSITY_CAP + 1e-9))


def check_density(room: RoomSpec, n: int) -> None:
    cap = max_occupancy(room)
    if n < 0:
        raise RoomError(f"speaker count must be >= 0, got {n}")
    if n > cap:
        raise DensityViolationError(
            f"{n} speakers exceed the density cap of {cap} for a {room_area(room):g} m^2 room"
        )


def _uniform_points(room: RoomSpec, n: int, g: np.random.Generator) -> np.ndarray:
    """``n`` uniform points in the room outside the r0 disc, by rejection."""
    mic = room.mic_xy
    if room.shape is Shape.CIRCULAR:
        lo, hi = np.array([-room.radius] * 2), np.array([room.radius] * 2)
    else:
        lo, hi = np.zeros(2), np.array([room.length, room.width])
    accepted = np.empty((0, 2))
    while accepted.shape[0] < n:
        cand = g.uniform(lo, hi, size=(2 * (n - accepted.shape[0]) + 8, 2))
        ok = room.contains(cand) & (np.hypot(*(cand - mic).T) > room.r0)
        accepted = np.vstack([accepted, cand[ok]])
    return accepted[:n]


def place_speakers(room: RoomSpec, n: int, seed: int) -> Placement:
    """Uniform positions over the room minus the r0 disc around the mic, by rejection."""
    check_density(room, n)
    pos = _uniform_points(room, n, seeded_rng(seed, "placement"))
    return Placement(pos, np.hypot(*(pos - room.mic_xy).T) if n else np.zeros(0))


def quantile_placement(room: RoomSpec, n: int, seed: int, reference: int = 100_000) -> Placement:
    """Representative placement: speaker i sits at the ((i + 0.5) / n)-quantile
    of the mic distance under uniform placement.

    The quantiles are read off ``reference`` seeded uniform points, so any
    room shape works; each speaker takes the reference point at its rank.
    """
    check_density(room, n)
    if n == 0:
        return Placement(np.empty((0, 2)), np.zeros(0))
    pts = _uniform_points(room, reference, seeded_rng(seed, "quantile-placement"))
    d = np.hypot(*(pts - room.mic_xy).T)
    order = np.argsort(d, kind="stable")
    ranks = np.floor((np.arange(n) + 0.5) / n * reference).astype(int)
    pos = pts[order[ranks]]
    return Placement(pos, d[order[ranks]])


def gain(r: float, room: RoomSpec) -> float:
    if not r > room.r0:
        raise TooCloseError(f"distance {r} m is not beyond r0 = {room.r0} m")
    return room.a0 * room.r0 / r


def attenuate(clip: AudioClip, r: float, room: RoomSpec) -> AudioClip:
    return clip.scaled(gain(r, room))


def noise_samples(noise: NoiseSpec, n: int) -> np.ndarray:
    if noise.silent:
        return np.zeros(n)
    return seeded_rng(noise.seed, "awgn").normal(noise.mean, noise.std_dev, n)


def mix_signals(signals: np.ndarray, distances: np.ndarray, room: RoomSpec) -> np.ndarray:
    """a0 * r0 * sum_i x_i / r_i for a (n_speakers, n_samples) array; no noise."""
    distances = np.asarray(distances, dtype=np.float64)
    if np.any(distances <= room.r0):
        raise TooCloseError(f"a speaker is within r0 = {room.r0} m of the microphone")
    return (room.a0 * room.r0 / distances) @ signals


def mix_room(utterances: list[AudioClip], placement: Placement, room: RoomSpec, noise: NoiseSpec) -> AudioClip:
    if len(utterances) != len(placement):
        raise CountMismatchError(f"{len(utterances)} utterances for {len(placement)} placed speakers")
    if not utterances:
        raise CountMismatchError("nothing to mix")
    rate = utterances[0].sample_rate
    if any(u.sample_rate != rate for u in utterances):
        raise RateMismatchError("utterances have different sample rates")
    n = min(len(u) for u in utterances)
    stacked = np.stack([u.samples[:n] for u in utterances])
    return AudioClip(mix_signals(stacked, placement.distances, room) + noise_samples(noise, n), rate)


def default_noise_std(room: RoomSpec, speech_rms: float, ratio: float = 0.01) -> float:
    """Noise std giving noise energy = ``ratio`` x the energy of one speaker at r0."""
    return math.sqrt(ratio) * room.a0 * speech_rms
