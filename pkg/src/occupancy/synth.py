"""Deterministic synthetic speakers and corpora.

A source-filter stand-in for recorded speech. Each utterance is a semi-Markov
sequence of voiced, unvoiced and pause segments (mean lengths 200/100/150 ms).
Voiced segments are a jittered glottal pulse train through four cascaded
resonators: three formants (the speaker's neutral formants scaled by the
speaker's rendering of a per-segment vowel) and a fixed upper resonance.
Unvoiced segments are resonator-filtered white noise; pauses are silent.
On top of that, an utterance is read as a run of sentences (mean 2.5 s)
separated by silent gaps (mean 0.4 s), each sentence at its own log-normal
loudness, so energy also varies on a time scale of seconds as in read
speech. The finished utterance is scaled to the speaker's RMS target.

Real recordings can be loaded with :func:`ingest_directory` into the same
:class:`Corpus` container.
"""

from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.signal import lfilter, sosfilt

from .audio import DEFAULT_SAMPLE_RATE, AudioClip
from .seeds import child_seed, rng as seeded_rng
from .wavio import WavError, read_wav

PITCH_RANGE = (60.0, 400.0)
# (mean, std) pitch of the two voice groups a profile is drawn from
PITCH_GROUPS = ((120.0, 22.0), (215.0, 32.0))
NEUTRAL_FORMANTS = (500.0, 1500.0, 2500.0)
NEUTRAL_BANDWIDTHS = (70.0, 100.0, 160.0)
TRACT_SCALE_RANGE = (0.82, 1.22)
VOICING_RANGE = (0.35, 0.55)
DEFAULT_RMS = 0.05

# Formant ratios to the neutral vowel, shared by all speakers.
VOWEL_RATIOS = np.array([
    [1.46, 0.73, 0.98],  # a
    [0.54, 1.53, 1.20],  # i
    [0.60, 0.58, 0.90],  # u
    [1.06, 1.23, 0.99],  # e
    [1.14, 0.56, 0.96],  # o
    [1.00, 1.00, 1.00],  # schwa
])

MEAN_SEGMENT_MS = {"voiced": 200.0, "unvoiced": 100.0, "pause": 150.0}
# relative RMS of a segment before the final utterance normalisation
SEGMENT_LEVEL = {"voiced": 1.0, "unvoiced": 0.3}
_MIN_SEGMENT_MS = 30.0
# sentence layer: (mean, minimum) lengths in seconds and log-gain std
SENTENCE_S = (2.5, 0.8)
SENTENCE_GAP_S = (0.4, 0.15)
SENTENCE_GAIN_STD = 0.3
_EDGE_MS = 10.0


class CorpusError(ValueError):
    pass


class EmptyCorpusError(CorpusError):
    pass


class MixedSampleRateError(CorpusError):
    pass


class TooFewUtterancesError(CorpusError):
    pass


class UnreadableFileError(CorpusError):
    pass


@dataclass(frozen=True)
class SpeakerProfile:
    id: str
    pitch_hz: float
    formants: tuple[float, float, float]
    bandwidths: tuple[float, float, float]
    voicing_rate: float
    rms_target: float
    seed: int

    def __post_init__(self):
        if not PITCH_RANGE[0] <= self.pitch_hz <= PITCH_RANGE[1]:
            raise ValueError(f"pitch {self.pitch_hz} Hz outside {PITCH_RANGE}")
        f = self.formants
        if not (len(f) == 3 and 0 < f[0] < f[1] < f[2]):
            raise ValueError(f"formants must be three increasing frequencies, got {f}")
        if not 0.0 < self.rms_target <= 1.0:
            raise ValueError(f"rms_target must be in (0, 1], got {self.rms_target}")
        if not 0.0 <= self.voicing_rate <= 1.0:
            raise ValueError(f"voicing_rate must be in [0, 1], got {self.voicing_rate}")


def generate_profile(speaker_id: str, seed: int, rms_target: float = DEFAULT_RMS) -> SpeakerProfile:
    """Draw a speaker from fixed parameter ranges; deterministic in (id, seed)."""
    g = seeded_rng(seed, "profile", speaker_id)
    mean, std = PITCH_GROUPS[int(g.integers(2))]
    pitch = float(np.clip(g.normal(mean, std), PITCH_RANGE[0], PITCH_RANGE[1]))
    scale = g.uniform(*TRACT_SCALE_RANGE)
    formants = np.array(NEUTRAL_FORMANTS) * scale * g.uniform(0.94, 1.06, 3)
    bandwidths = np.array(NEUTRAL_BANDWIDTHS) * g.uniform(0.8, 1.25, 3)
    return SpeakerProfile(
        id=str(speaker_id),
        pitch_hz=round(pitch, 6),
        formants=tuple(round(float(f), 6) for f in formants),
        bandwidths=tuple(round(float(b), 6) for b in bandwidths),
        voicing_rate=round(float(g.uniform(*VOICING_RANGE)), 6),
        rms_target=float(rms_target),
        seed=int(seed),
    )


@lru_cache(maxsize=1024)
def voice_traits(profile: SpeakerProfile) -> dict:
    """Secondary voice characteristics derived from the profile seed.

    Per-speaker vowel targets (each shared vowel ratio perturbed by a
    log-normal factor), glottal source tilt, a fourth resonance and the
    fricative noise centre.
    """
    g = seeded_rng(profile.seed, "traits", profile.id)
    scale = profile.formants[1] / NEUTRAL_FORMANTS[1]
    return {
        "vowels": VOWEL_RATIOS * np.exp(g.normal(0.0, 0.12, VOWEL_RATIOS.shape)),
        "glottal_pole": g.uniform(0.90, 0.98),
        "f4": (3500.0 * scale * g.uniform(0.95, 1.15), 250.0 * g.uniform(0.8, 1.3)),
        "fricative": profile.formants[2] * g.uniform(1.3, 2.0),
    }


def _voiced_entry_prob(voicing_rate: float) -> float:
    """Probability of entering a voiced segment from unvoiced/pause such that
    the long-run voiced time fraction equals ``voicing_rate``.

    From voiced, the chain moves to unvoiced or pause with equal odds.
    """
    mv, mu, mp = MEAN_SEGMENT_MS["voiced"], MEAN_SEGMENT_MS["unvoiced"], MEAN_SEGMENT_MS["pause"]

    def frac(q):
        p = np.array([[0, 0.5, 0.5], [q, 0, 1 - q], [q, 1 - q, 0]])
        w, v = np.linalg.eig(p.T)
        pi = np.real(v[:, np.argmin(np.abs(w - 1))])
        pi = pi / pi.sum()
        t = pi * np.array([mv, mu, mp])
        return t[0] / t.sum()

    lo, hi = 1e-6, 1.0
    target = min(voicing_rate, frac(1.0))
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if frac(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _segments(g: np.random.Generator, n_samples: int, sr: int, voicing_rate: float):
    q = _voiced_entry_prob(voicing_rate)
    states = ("voiced", "unvoiced", "pause")
    out = []
    pos, state = 0, "voiced"
    min_len = int(_MIN_SEGMENT_MS * sr / 1000)
    while pos < n_samples:
        length = max(min_len, int(g.exponential(MEAN_SEGMENT_MS[state]) * sr / 1000))
        length = min(length, n_samples - pos)
        out.append((state, pos, length))
        pos += length
        if state == "voiced":
            state = states[1 + int(g.integers(2))]
        else:
            other = "pause" if state == "unvoiced" else "unvoiced"
            state = "voiced" if g.random() < q else other
    return out


def _sentence_envelope(g: np.random.Generator, n: int, sr: int) -> np.ndarray:
    """Piecewise loudness envelope: sentences at random gains, silent gaps."""
    env = np.zeros(n)
    edge = int(0.05 * sr)
    pos = int(g.uniform(0.0, SENTENCE_S[0]) * sr) if n > SENTENCE_S[0] * sr else 0
    # the first sentence may already be under way at the utterance start
    first = True
    while pos < n:
        mean, low = SENTENCE_S
        length = int(max(low, g.exponential(mean - low) + low) * sr)
        start = 0 if first else pos
        stop = min(n, pos + length)
        env[start:stop] = np.exp(g.normal(0.0, SENTENCE_GAIN_STD)) * _envelope(stop - start, edge)
        first = False
        mean, low = SENTENCE_GAP_S
        pos = stop + int(max(low, g.exponential(mean - low) + low) * sr)
    return env


def _resonator_sos(freqs, bws, sr):
    sos = []
    for f, b in zip(freqs, bws):
        f = min(f, 0.45 * sr)
        r = np.exp(-np.pi * b / sr)
        theta = 2 * np.pi * f / sr
        a1, a2 = -2 * r * np.cos(theta), r * r
        sos.append([1 + a1 + a2, 0.0, 0.0, 1.0, a1, a2])  # unit gain at DC
    return np.array(sos)


def _envelope(n: int, edge: int) -> np.ndarray:
    env = np.ones(n)
    e = min(edge, n // 2)
    if e > 0:
        ramp = 0.5 - 0.5 * np.cos(np.pi * np.arange(e) / e)
        env[:e] = ramp
        env[n - e :] = ramp[::-1]
    return env


def synth_utterance(
    profile: SpeakerProfile,
    duration: float,
    utterance_seed: int,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
) -> AudioClip:
    if not duration > 0:
        raise ValueError(f"duration must be positive, got {duration}")
    n = int(round(duration * sample_rate))
    g = seeded_rng(profile.seed, "utterance", profile.id, utterance_seed)
    x = np.zeros(n)
    edge = int(_EDGE_MS * sample_rate / 1000)
    tail = int(0.03 * sample_rate)
    traits = voice_traits(profile)
    pole = traits["glottal_pole"]
    glottal = ([1.0], [1.0, -2 * pole, pole * pole])
    fric_centre = traits["fricative"]
    f4, bw4 = traits["f4"]

    for state, start, length in _segments(g, n, sample_rate, profile.voicing_rate):
        if state == "pause":
            continue
        gain = np.exp(g.normal(0.0, 0.35))
        if state == "voiced":
            f0 = profile.pitch_hz * np.exp(g.normal(0.0, 0.06))
            f1 = f0 * np.exp(g.normal(0.0, 0.05))
            contour = np.linspace(f0, f1, length) * (1 + 0.01 * g.standard_normal(length))
            phase = np.cumsum(contour / sample_rate) + g.random()
            exc = np.diff(np.floor(phase), prepend=np.floor(phase[0])).astype(float)
            exc = lfilter(*glottal, exc)
            vowel = traits["vowels"][int(g.integers(len(VOWEL_RATIOS)))]
            freqs = np.sort(np.array(profile.formants) * vowel * g.uniform(0.98, 1.02, 3))
            sos = _resonator_sos([*freqs, f4], [*profile.bandwidths, bw4], sample_rate)
        else:
            exc = g.standard_normal(length)
            sos = _resonator_sos([fric_centre * g.uniform(0.9, 1.1)], [fric_centre * 0.4], sample_rate)
        seg = sosfilt(sos, np.concatenate([exc * _envelope(length, edge), np.zeros(tail)]))
        level = np.sqrt(np.mean(seg[:length] ** 2))
        if level == 0:
            continue
        seg *= gain * SEGMENT_LEVEL[state] / level
        end = min(n, start + seg.size)
        x[start:end] += seg[: end - start]

    x *= _sentence_envelope(seeded_rng(profile.seed, "sentences", profile.id, utterance_seed), n, sample_rate)
    x -= x.mean()
    rms = np.sqrt(np.mean(x * x))
    if rms > 0:
        x *= profile.rms_target / rms
    return AudioClip(x, sample_rate)


@dataclass
class Corpus:
    """Utterances grouped by speaker, all at one sample rate."""

    sample_rate: int
    utterances: dict[str, list[AudioClip]] = field(default_factory=dict)
    profiles: dict[str, SpeakerProfile] = field(default_factory=dict)
    sources: dict[str, list[str]] = field(default_factory=dict)
    master_seed: int | None = None

    @property
    def speakers(self) -> list[str]:
        return sorted(self.utterances)

    def __len__(self) -> int:
        return len(self.utterances)

    def total_samples(self) -> int:
        return sum(len(c) for clips in self.utterances.values() for c in clips)

    def validate(self) -> None:
        if not self.utterances:
            raise EmptyCorpusError("corpus has no speakers")
        for spk, clips in self.utterances.items():
            if len(clips) < 2:
                raise TooFewUtterancesError(f"speaker {spk!r} has {len(clips)} utterance(s); need >= 2")
            for c in clips:
                if c.sample_rate != self.sample_rate:
                    raise MixedSampleRateError(f"speaker {spk!r} has a {c.sample_rate} Hz clip in a {self.sample_rate} Hz corpus")

    def split(self, n_test: int = 1) -> tuple[Corpus, Corpus]:
        """Per speaker, the last ``n_test`` utterances form the test corpus."""
        train = Corpus(self.sample_rate, master_seed=self.master_seed, profiles=dict(self.profiles))
        test = Corpus(self.sample_rate, master_seed=self.master_seed, profiles=dict(self.profiles))
        for spk in self.speakers:
            clips = self.utterances[spk]
            if len(clips) <= n_test:
                raise TooFewUtterancesError(f"speaker {spk!r}: cannot hold out {n_test} of {len(clips)}")
            train.utterances[spk] = clips[:-n_test]
            test.utterances[spk] = clips[-n_test:]
        return train, test

    def manifest(self) -> dict:
        speakers = []
        for spk in self.speakers:
            entry = {
                "id": spk,
                "durations": [c.duration for c in self.utterances[spk]],
            }
            if spk in self.profiles:
                entry["profile"] = asdict(self.profiles[spk])
                entry["utterance_seeds"] = list(range(len(self.utterances[spk])))
            if spk in self.sources:
                entry["files"] = self.sources[spk]
            speakers.append(entry)
        return {
            "format": "occupancy-corpus",
            "version": 1,
            "sample_rate": self.sample_rate,
            "master_seed": self.master_seed,
            "seed_rule": "profile seed = child_seed(master_seed, 'speaker', id)",
            "speakers": speakers,
        }

    def write_manifest(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.manifest(), indent=2, sort_keys=True) + "\n")


def speaker_ids(n: int) -> list[str]:
    width = max(3, len(str(n - 1)))
    return [f"spk{i:0{width}d}" for i in range(n)]


def build_corpus(
    n_speakers: int,
    utterances_per_speaker: int,
    duration: float,
    master_seed: int,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
    rms_target: float = DEFAULT_RMS,
) -> Corpus:
    if n_speakers < 1:
        raise CorpusError(f"need at least one speaker, got {n_speakers}")
    if utterances_per_speaker < 2:
        raise TooFewUtterancesError(f"need at least 2 utterances per speaker, got {utterances_per_speaker}")
    corpus = Corpus(sample_rate, master_seed=master_seed)
    for spk in speaker_ids(n_speakers):
        profile = generate_profile(spk, child_seed(master_seed, "speaker", spk), rms_target)
        corpus.profiles[spk] = profile
        corpus.utterances[spk] = [
            synth_utterance(profile, duration, j, sample_rate) for j in range(utterances_per_speaker)
        ]
    return corpus


_NAME = re.compile(r"^(?P<speaker>.+)_(?P<utt>[^_]+)\.wav$", re.IGNORECASE)


def ingest_directory(path: str | Path) -> Corpus:
    """Load ``<speaker_id>_<utt>.wav`` files into a corpus.

    Files not matching the naming convention are ignored.
    """
    path = Path(path)
    files = sorted(p for p in path.iterdir() if p.is_file() and _NAME.match(p.name))
    if not files:
        raise EmptyCorpusError(f"no <speaker>_<utt>.wav files in {path}")
    rate = None
    corpus = Corpus(0)
    for f in files:
        try:
            clip = read_wav(f)
        except (OSError, WavError) as exc:
            raise UnreadableFileError(f"{f}: {exc}") from exc
        if rate is None:
            rate = clip.sample_rate
        elif clip.sample_rate != rate:
            raise MixedSampleRateError(f"{f.name} is {clip.sample_rate} Hz, expected {rate} Hz")
        spk = _NAME.match(f.name).group("speaker")
        corpus.utterances.setdefault(spk, []).append(clip)
        corpus.sources.setdefault(spk, []).append(f.name)
    corpus.sample_rate = rate
    corpus.validate()
    return corpus
