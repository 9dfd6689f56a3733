"""Meeting-mode occupancy: speaker recognition over PCA/LDA-projected MFCCs.

Training pools the stacked MFCCs of every enrolled speaker, fits PCA on the
pool and LDA on the PCA projection with speaker labels, then fits one
diagonal GMM per speaker in the LDA space. A test clip is assigned to the
speaker whose GMM gives its frames the highest total log-likelihood
(uniform speaker prior). Meeting occupancy is the number of distinct
speakers recognised over a set of single-speaker segments.

By default the 0th cepstral coefficient (frame log energy) is left out of the
stacked features, so recognition does not depend on recording level.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .audio import AudioClip
from .gmm import GmmModel, train_gmm
from .mfcc import MfccConfig, mfcc_features
from .seeds import child_seed, rng as seeded_rng
from .synth import Corpus, synth_utterance
from .transforms import FeatureTransform, fit_lda, fit_pca

log = logging.getLogger(__name__)

BANK_FORMAT = "occupancy-speaker-bank"
BANK_VERSION = 1
DEFAULT_D_PCA = 60
DEFAULT_MIXTURES = 16
MIXTURE_SWEEP = (1, 2, 4, 8, 16, 32)
MEETING_TURN_SECONDS = 20.0


def speaker_mfcc(sample_rate: int, drop_c0: bool = True) -> MfccConfig:
    """MFCC settings for speaker recognition: the defaults, minus c0 unless asked."""
    return MfccConfig(sample_rate=sample_rate, drop_c0=drop_c0)


class SpeakerIdError(ValueError):
    pass


class EmptyFeaturesError(SpeakerIdError):
    pass


class AllSegmentsTooShortError(SpeakerIdError):
    pass


@dataclass(eq=False)
class SpeakerBank:
    transform: FeatureTransform
    models: dict[str, GmmModel]
    mfcc: MfccConfig
    seeds: dict = field(default_factory=dict)

    @property
    def speakers(self) -> list[str]:
        return sorted(self.models)

    def features(self, clip: AudioClip) -> np.ndarray:
        return self.transform(mfcc_features(clip, self.mfcc, vad=True))

    def scores(self, feats: np.ndarray) -> dict[str, float]:
        return {spk: self.models[spk].score(feats) for spk in self.speakers}

    def to_dict(self) -> dict:
        return {
            "format": BANK_FORMAT,
            "version": BANK_VERSION,
            "toolkit_version": __version__,
            "mfcc": self.mfcc.to_dict(),
            "transform": self.transform.to_dict(),
            "models": {spk: self.models[spk].to_dict() for spk in self.speakers},
            "seeds": self.seeds,
        }

    @classmethod
    def from_dict(cls, d: dict) -> SpeakerBank:
        if d.get("format") != BANK_FORMAT:
            raise SpeakerIdError("not a speaker bank document")
        if int(d.get("version", 0)) != BANK_VERSION:
            raise SpeakerIdError(f"unsupported speaker bank version {d.get('version')}")
        return cls(
            FeatureTransform.from_dict(d["transform"]),
            {spk: GmmModel.from_dict(m) for spk, m in d["models"].items()},
            MfccConfig.from_dict(d["mfcc"]),
            d.get("seeds", {}),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> SpeakerBank:
        return cls.from_dict(json.loads(Path(path).read_text()))


def corpus_features(corpus: Corpus, config: MfccConfig) -> dict[str, np.ndarray]:
    return {
        spk: np.vstack([mfcc_features(c, config, vad=True) for c in corpus.utterances[spk]])
        for spk in corpus.speakers
    }


def fit_transform(feats: dict[str, np.ndarray], d_pca: int, d_lda: int | None) -> FeatureTransform:
    speakers = sorted(feats)
    x = np.vstack([feats[s] for s in speakers])
    labels = np.concatenate([np.full(feats[s].shape[0], i) for i, s in enumerate(speakers)])
    pca = fit_pca(x, d_pca)
    if d_lda is None:
        d_lda = min(d_pca, len(speakers) - 1)
    lda = fit_lda(pca.project(x), labels, d_lda)
    return FeatureTransform(pca, lda)


def train_models(projected: dict[str, np.ndarray], k: int, seed: int) -> dict[str, GmmModel]:
    return {spk: train_gmm(projected[spk], k, child_seed(seed, "gmm", spk)) for spk in sorted(projected)}


def train_bank(corpus: Corpus, config: MfccConfig | None = None, d_pca: int = DEFAULT_D_PCA,
               d_lda: int | None = None, k: int = DEFAULT_MIXTURES, seed: int = 0) -> SpeakerBank:
    """Enrol every speaker of ``corpus`` (training utterances only).

    ``d_lda`` defaults to the rank bound min(d_pca, speakers - 1).
    """
    config = config or speaker_mfcc(corpus.sample_rate)
    if len(corpus) < 2:
        raise SpeakerIdError("need at least two speakers to train a bank")
    feats = corpus_features(corpus, config)
    transform = fit_transform(feats, d_pca, d_lda)
    models = train_models({s: transform(f) for s, f in feats.items()}, k, seed)
    return SpeakerBank(transform, models, config, {"seed": seed, "k": k, "d_pca": d_pca,
                                                    "d_lda": transform.output_dim})


def pick_speaker(scores: dict[str, float]) -> str:
    """Highest score; ties go to the lexicographically smallest id."""
    best = max(scores.values())
    return min(s for s, v in scores.items() if v == best)


def recognize(clip: AudioClip, bank: SpeakerBank) -> tuple[str, dict[str, float]]:
    feats = bank.features(clip)
    if feats.shape[0] == 0:
        raise EmptyFeaturesError("clip has no voiced stacked feature vectors")
    scores = bank.scores(feats)
    return pick_speaker(scores), scores


@dataclass
class MeetingCount:
    count: int
    labels: list[str | None]
    skipped: list[int]


def count_meeting_occupancy(segments: list[AudioClip], bank: SpeakerBank, min_frames: int = 50) -> MeetingCount:
    """Occupancy as the number of distinct speakers recognised across segments.

    Segments yielding fewer than ``min_frames`` feature vectors are skipped.
    """
    labels: list[str | None] = []
    skipped = []
    for i, seg in enumerate(segments):
        try:
            feats = bank.features(seg)
        except ValueError:
            feats = np.empty((0, 0))
        if feats.shape[0] < min_frames:
            labels.append(None)
            skipped.append(i)
            continue
        labels.append(pick_speaker(bank.scores(feats)))
    if len(skipped) == len(segments):
        raise AllSegmentsTooShortError(f"all {len(segments)} segments are shorter than {min_frames} feature frames")
    if skipped:
        log.info("skipped %d short segment(s): %s", len(skipped), skipped)
    return MeetingCount(len({l for l in labels if l is not None}), labels, skipped)


@dataclass
class MixtureSweep:
    """Held-out accuracy for each (pool size, mixture count) pair."""

    pool_sizes: list[int]
    mixtures: list[int]
    accuracy: np.ndarray  # (len(pool_sizes), len(mixtures))
    em_monotone: bool
    test_counts: list[int]

    def best(self, pool_size: int) -> tuple[int, float]:
        """Best mixture count (smallest on ties) and its accuracy."""
        row = self.accuracy[self.pool_sizes.index(pool_size)]
        j = int(np.argmax(row))
        return self.mixtures[j], float(row[j])

    def to_csv(self) -> str:
        lines = ["pool_size," + ",".join(str(k) for k in self.mixtures)]
        for i, n in enumerate(self.pool_sizes):
            lines.append(f"{n}," + ",".join(f"{a:.4f}" for a in self.accuracy[i]))
        return "\n".join(lines) + "\n"


def _monotone(model: GmmModel, tol: float = 1e-8) -> bool:
    return bool(np.all(np.diff(model.log_likelihoods) >= -tol))


def evaluate_speakers(corpus: Corpus, mixtures=MIXTURE_SWEEP, pool_sizes=None, n_test: int = 1,
                      d_pca: int = DEFAULT_D_PCA, d_lda: int | None = None, seed: int = 0,
                      config: MfccConfig | None = None) -> MixtureSweep:
    """Recognition accuracy on held-out utterances over a mixture-count sweep.

    A pool of size n uses the first n speakers of the corpus. The feature
    transform is fitted once per pool; only the GMMs change with k.
    """
    config = config or speaker_mfcc(corpus.sample_rate)
    pool_sizes = list(pool_sizes or [len(corpus)])
    mixtures = [int(k) for k in mixtures]
    if max(pool_sizes) > len(corpus) or min(pool_sizes) < 2:
        raise SpeakerIdError(f"pool sizes {pool_sizes} must lie in [2, {len(corpus)}]")
    train, test = corpus.split(n_test)
    acc = np.zeros((len(pool_sizes), len(mixtures)))
    monotone = True
    counts = []
    for i, n in enumerate(pool_sizes):
        spk = corpus.speakers[:n]
        feats = {s: np.vstack([mfcc_features(c, config, vad=True) for c in train.utterances[s]]) for s in spk}
        transform = fit_transform(feats, d_pca, d_lda)
        projected = {s: transform(f) for s, f in feats.items()}
        tests = [(s, transform(mfcc_features(c, config, vad=True))) for s in spk for c in test.utterances[s]]
        counts.append(len(tests))
        for j, k in enumerate(mixtures):
            models = train_models(projected, k, seed)
            monotone &= all(_monotone(m) for m in models.values())
            hits = [pick_speaker({t: models[t].score(x) for t in spk}) == s for s, x in tests]
            acc[i, j] = np.mean(hits)
            log.info("pool %d, k=%d: accuracy %.3f", n, k, acc[i, j])
    return MixtureSweep(pool_sizes, mixtures, acc, monotone, counts)


def simulate_meeting(corpus: Corpus, bank: SpeakerBank, n_speakers: int, seed: int,
                     turn_seconds: float = MEETING_TURN_SECONDS) -> tuple[list[str], list[AudioClip]]:
    """One pre-segmented meeting: ``n_speakers`` enrolled speakers, one fresh turn each.

    Needs synthetic speaker profiles. Turn utterances are drawn with seeds
    derived from ``seed``, never the enrolment utterance seeds.
    """
    enrolled = [s for s in bank.speakers if s in corpus.profiles]
    if n_speakers > len(enrolled):
        raise SpeakerIdError(f"meeting of {n_speakers} needs that many enrolled synthetic speakers, have {len(enrolled)}")
    g = seeded_rng(seed, "meeting")
    chosen = sorted(g.choice(enrolled, n_speakers, replace=False).tolist())
    turns = [synth_utterance(corpus.profiles[s], turn_seconds, child_seed(seed, "turn", s), corpus.sample_rate)
             for s in chosen]
    return chosen, turns


@dataclass
class MeetingEvaluation:
    trials: int
    exact: int
    counts: list[int]

    @property
    def exact_rate(self) -> float:
        return self.exact / self.trials


def evaluate_meetings(corpus: Corpus, bank: SpeakerBank, n_speakers: int, trials: int, seed: int,
                      turn_seconds: float = MEETING_TURN_SECONDS, min_frames: int = 50) -> MeetingEvaluation:
    """Count occupants of ``trials`` simulated meetings; trial t uses seed child_seed(seed, 'meeting', t)."""
    if trials < 1:
        raise SpeakerIdError(f"trials must be >= 1, got {trials}")
    counts = []
    for t in range(trials):
        _, turns = simulate_meeting(corpus, bank, n_speakers, child_seed(seed, "meeting", t), turn_seconds)
        counts.append(count_meeting_occupancy(turns, bank, min_frames).count)
    return MeetingEvaluation(trials, sum(c == n_speakers for c in counts), counts)
