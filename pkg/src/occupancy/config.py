"""Run configuration: sectioned key-value files, flag overrides, defaults.

Precedence is flag > file > default. Every field below has a default, and a
resolved config serialises back to the same text.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import asdict, dataclass, field, fields

from .audio import FrameSpec, Window
from .room import MicPosition, RoomSpec, Shape


class ConfigError(ValueError):
    pass


def _floats(text: str) -> list[float]:
    return [float(t) for t in str(text).replace(" ", "").split(",") if t]


def _ints(text: str) -> list[int]:
    return [int(t) for t in str(text).replace(" ", "").split(",") if t]


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ",".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return f"{value:g}" if value == float(f"{value:g}") else repr(value)
    return "" if value is None else str(value)


@dataclass
class RunSection:
    seed: int = 0
    out_dir: str = "occupancy-out"
    verbose: bool = False


@dataclass
class RoomSection:
    shape: str = "rectangular"
    length: float = 10.0
    width: float = 8.0
    radius: float = 0.0
    mic: str = "corner"
    r0: float = 0.5
    a0: float = 1.0


@dataclass
class FrameSection:
    frame_ms: float = 50.0
    step_ms: float = 25.0
    window: str = "hamming"


@dataclass
class CorpusSection:
    # empty directory means a synthetic corpus built from the fields below
    directory: str = ""
    speakers: int = 20
    utterances: int = 4
    duration: float = 5.0
    sample_rate: int = 16000
    rms: float = 0.05
    test_utterances: int = 1


@dataclass
class PartySection:
    sizes: list[int] = field(default_factory=lambda: [5, 10, 20, 40, 80])
    times: list[float] = field(default_factory=lambda: [5.0, 10.0, 15.0, 20.0, 25.0])
    trials: int = 200
    calibration_trials: int = 200
    calibration_duration: float = 5.0
    scoring: str = "mean"
    placement: str = "quantile"
    # negative means 10% of the speech RMS at r0 (1% power)
    noise_std: float = -1.0
    noise_mean: float = 0.0
    pool_directory: str = ""
    pool_speakers: int = 16
    pool_utterances: int = 2
    pool_duration: float = 120.0


@dataclass
class SpeakerSection:
    d_pca: int = 60
    # 0 means the rank bound min(d_pca, speakers - 1)
    d_lda: int = 0
    mixtures: int = 16
    sweep: list[int] = field(default_factory=lambda: [1, 2, 4, 8, 16, 32])
    # empty means one pool holding every corpus speaker
    pool_sizes: list[int] = field(default_factory=list)
    min_frames: int = 50
    # leave the frame log energy (c0) out of the speaker features
    drop_c0: bool = True


_SECTIONS = {
    "run": RunSection,
    "room": RoomSection,
    "frame": FrameSection,
    "corpus": CorpusSection,
    "party": PartySection,
    "speaker": SpeakerSection,
}


def _parse(kind, text: str, where: str):
    try:
        if kind == "bool":
            low = text.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "list[int]":
            return _ints(text)
        if kind == "list[float]":
            return _floats(text)
        return text.strip()
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse {text!r} as {kind}") from exc


@dataclass
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    room: RoomSection = field(default_factory=RoomSection)
    frame: FrameSection = field(default_factory=FrameSection)
    corpus: CorpusSection = field(default_factory=CorpusSection)
    party: PartySection = field(default_factory=PartySection)
    speaker: SpeakerSection = field(default_factory=SpeakerSection)

    def set(self, section: str, key: str, value) -> None:
        """Set one field, parsing ``value`` when it is a string."""
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        obj = getattr(self, section)
        types = {f.name: f.type for f in fields(obj)}
        if key not in types:
            raise ConfigError(f"unknown key {key!r} in [{section}]")
        if isinstance(value, str):
            value = _parse(types[key], value, f"[{section}] {key}")
        setattr(obj, key, value)

    def to_dict(self) -> dict:
        return {name: asdict(getattr(self, name)) for name in _SECTIONS}

    def to_text(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        for name in _SECTIONS:
            cp[name] = {k: _fmt(v) for k, v in asdict(getattr(self, name)).items()}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str, base: RunConfig | None = None) -> RunConfig:
        cp = configparser.ConfigParser(interpolation=None)
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config: {exc}") from exc
        cfg = base or cls()
        for section in cp.sections():
            for key, value in cp[section].items():
                cfg.set(section, key, value)
        return cfg

    def validate(self) -> None:
        try:
            self.room_spec()
            self.frame_spec()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        p = self.party
        if p.scoring not in ("mean", "map", "kde"):
            raise ConfigError(f"[party] scoring must be mean, map or kde, got {p.scoring!r}")
        if p.placement not in ("quantile", "fixed", "fresh"):
            raise ConfigError(f"[party] placement must be quantile, fixed or fresh, got {p.placement!r}")
        if not p.sizes or not p.times:
            raise ConfigError("[party] sizes and times must be non-empty")
        if p.trials < 1 or p.calibration_trials < 1:
            raise ConfigError("[party] trial counts must be >= 1")
        if any(t <= 0 for t in p.times) or p.calibration_duration <= 0:
            raise ConfigError("[party] durations must be positive")
        c = self.corpus
        if c.speakers < 1 or c.utterances < 2 or c.duration <= 0:
            raise ConfigError("[corpus] needs >= 1 speaker, >= 2 utterances and a positive duration")
        s = self.speaker
        if s.mixtures < 1 or any(k < 1 for k in s.sweep):
            raise ConfigError("[speaker] mixture counts must be >= 1")

    def room_spec(self) -> RoomSpec:
        r = self.room
        return RoomSpec(Shape(r.shape), r.length, r.width, r.radius, MicPosition(r.mic), r.r0, r.a0)

    def frame_spec(self) -> FrameSpec:
        f = self.frame
        return FrameSpec(f.frame_ms, f.step_ms, Window(f.window))


def parse_room(text: str) -> dict:
    """Parse a ``--room`` value.

    ``10x8`` is a rectangle with the microphone in a corner, ``10x8@center``
    puts it in the middle, and ``circle:5`` is a circular room of radius 5 m.
    """
    text = text.strip().lower()
    try:
        if text.startswith("circle:"):
            return {"shape": "circular", "radius": float(text.split(":", 1)[1]), "mic": "center"}
        dims, _, mic = text.partition("@")
        length, width = (float(v) for v in dims.split("x"))
        return {"shape": "rectangular", "length": length, "width": width, "mic": mic or "corner"}
    except ValueError as exc:
        raise ConfigError(f"cannot parse room {text!r}; use LxW, LxW@center or circle:R") from exc
