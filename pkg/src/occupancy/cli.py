"""Command-line interface.

Every run writes ``run_report.json`` into the output directory, including
on failure. Exit codes: 0 success, 1 unexpected error, 2 configuration or
usage error, 3 file or I/O error, 4 constraint violation (density cap,
frame-spec mismatch, unusable data).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .config import ConfigError, RunConfig, parse_room
from .crowd import CrowdError, SimulationSetup, SpeechPool, SteCalibration, calibrate, estimate_occupancy, evaluate_accuracy
from .gmm import GmmError
from .kde import KdeError
from .mfcc import FeatureError
from .room import RoomError, check_density
from .seeds import child_seed
from .speaker import (
    SpeakerBank,
    SpeakerIdError,
    count_meeting_occupancy,
    evaluate_speakers,
    recognize,
    speaker_mfcc,
    train_bank,
)
from .synth import Corpus, CorpusError, build_corpus, ingest_directory
from .transforms import TransformError
from .wavio import WavError, read_wav, write_wav

log = logging.getLogger("occupancy")

OUT_DIR_ENV = "OCCUPANCY_OUT_DIR"

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_CONSTRAINT = 4


@dataclass
class RunReport:
    command: str
    config: dict
    status: str = "running"
    exit_code: int = EXIT_OK
    error: str | None = None
    artifacts: list[str] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    results: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "toolkit_version": __version__,
            "command": self.command,
            "status": self.status,
            "exit_code": self.exit_code,
            "error": self.error,
            "config": self.config,
            "artifacts": self.artifacts,
            "timings": self.timings,
            "warnings": self.warnings,
            "results": self.results,
        }


class Run:
    """Output directory, report bookkeeping and timed stages for one command."""

    def __init__(self, command: str, cfg: RunConfig):
        self.cfg = cfg
        self.out = Path(cfg.run.out_dir)
        self.report = RunReport(command, cfg.to_dict())

    def path(self, name: str) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        return self.out / name

    def write_text(self, name: str, text: str) -> Path:
        p = self.path(name)
        p.write_text(text)
        self.report.artifacts.append(str(p))
        return p

    def write_json(self, name: str, obj) -> Path:
        return self.write_text(name, json.dumps(obj, indent=2, sort_keys=True) + "\n")

    def timed(self, stage: str):
        run = self

        class _Timer:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                run.report.timings[stage] = round(time.perf_counter() - self.t0, 3)

        return _Timer()

    def finish(self) -> None:
        try:
            self.out.mkdir(parents=True, exist_ok=True)
            (self.out / "run_report.json").write_text(json.dumps(self.report.to_dict(), indent=2, sort_keys=True) + "\n")
        except OSError as exc:
            print(f"error: cannot write run report: {exc}", file=sys.stderr)


# corpus helpers


def speaker_corpus(cfg: RunConfig) -> Corpus:
    c = cfg.corpus
    if c.directory:
        return ingest_directory(c.directory)
    return build_corpus(c.speakers, c.utterances, c.duration, cfg.run.seed, c.sample_rate, c.rms)


def party_pool(cfg: RunConfig) -> Corpus:
    p = cfg.party
    if p.pool_directory:
        return ingest_directory(p.pool_directory)
    return build_corpus(p.pool_speakers, p.pool_utterances, p.pool_duration, cfg.run.seed,
                        cfg.corpus.sample_rate, cfg.corpus.rms)


def simulation_setup(cfg: RunConfig, pool: Corpus) -> SimulationSetup:
    p = cfg.party
    return SimulationSetup(
        cfg.room_spec(),
        SpeechPool(pool),
        cfg.frame_spec(),
        noise_std=None if p.noise_std < 0 else p.noise_std,
        noise_mean=p.noise_mean,
        placement=p.placement,
        layout_seed=child_seed(cfg.run.seed, "layout"),
    )


def write_corpus(corpus: Corpus, directory: Path) -> list[Path]:
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for spk in corpus.speakers:
        for j, clip in enumerate(corpus.utterances[spk]):
            p = directory / f"{spk}_{j:03d}.wav"
            write_wav(p, clip)
            paths.append(p)
    return paths


# commands


def cmd_synth(run: Run, args) -> int:
    with run.timed("synthesis"):
        c = run.cfg.corpus
        corpus = build_corpus(c.speakers, c.utterances, c.duration, run.cfg.run.seed, c.sample_rate, c.rms)
    with run.timed("write"):
        paths = write_corpus(corpus, run.path("corpus"))
        run.report.artifacts.extend(str(p) for p in paths)
        corpus.write_manifest(run.path("corpus") / "manifest.json")
        run.report.artifacts.append(str(run.path("corpus") / "manifest.json"))
    run.report.results = {"speakers": len(corpus), "files": len(paths)}
    print(f"wrote {len(paths)} utterances from {len(corpus)} speakers to {run.path('corpus')}")
    return EXIT_OK


def cmd_ingest(run: Run, args) -> int:
    with run.timed("ingest"):
        corpus = ingest_directory(args.directory)
    run.write_json("ingest_manifest.json", corpus.manifest())
    n_utts = sum(len(v) for v in corpus.utterances.values())
    run.report.results = {"speakers": len(corpus), "utterances": n_utts, "sample_rate": corpus.sample_rate}
    print(f"{len(corpus)} speakers, {n_utts} utterances at {corpus.sample_rate} Hz")
    return EXIT_OK


def _calibration(run: Run, setup: SimulationSetup) -> SteCalibration:
    p = run.cfg.party
    with run.timed("calibration"):
        return calibrate(setup, p.sizes, p.calibration_trials, p.calibration_duration,
                         run.cfg.run.seed, scoring=p.scoring)


def cmd_calibrate(run: Run, args) -> int:
    for n in run.cfg.party.sizes:
        check_density(run.cfg.room_spec(), n)
    with run.timed("pool"):
        setup = simulation_setup(run.cfg, party_pool(run.cfg))
    cal = _calibration(run, setup)
    path = run.path("calibration.json")
    cal.save(path)
    run.report.artifacts.append(str(path))
    print("size,map_level,mean,spread")
    for n in cal.sizes:
        s = cal.per_size[n]
        print(f"{n},{s.map_level:.6e},{s.mean:.6e},{s.spread:.6e}")
    run.report.results = {"sizes": cal.sizes, "map_levels": cal.map_levels()}
    return EXIT_OK


def cmd_estimate(run: Run, args) -> int:
    cal = SteCalibration.load(args.calibration)
    clip = read_wav(args.clip)
    est = estimate_occupancy(clip, cal, args.scoring_mode)
    run.write_json("estimate.json", {"clip": str(args.clip), **est.to_dict()})
    print(f"predicted size: {est.predicted}")
    print(f"duration: {est.duration:g} s ({est.frames_used} frames, {est.scoring} scoring)")
    for n, v in est.scores.items():
        print(f"  {n}: {v:.6g}")
    run.report.results = est.to_dict()
    return EXIT_OK


def cmd_eval_party(run: Run, args) -> int:
    p = run.cfg.party
    for n in p.sizes:
        check_density(run.cfg.room_spec(), n)
    with run.timed("pool"):
        setup = simulation_setup(run.cfg, party_pool(run.cfg))
    if args.calibration:
        cal = SteCalibration.load(args.calibration)
    else:
        cal = _calibration(run, setup)
        cal.save(run.path("calibration.json"))
        run.report.artifacts.append(str(run.path("calibration.json")))
    with run.timed("evaluation"):
        matrix = evaluate_accuracy(cal, setup, p.sizes, p.times, p.trials, run.cfg.run.seed, p.scoring)
    run.write_text("accuracy.csv", matrix.to_csv())
    run.write_text("accuracy_curves.csv", matrix.curves_csv())
    run.write_text("ste_spread.csv", matrix.spread_csv())
    sys.stdout.write(matrix.to_csv())
    run.report.results = {"accuracy": matrix.accuracy.tolist(), "seeds": {"master": run.cfg.run.seed,
                          "calibration_stage": "calibrate", "evaluation_stage": "evaluate"}}
    return EXIT_OK


def _d_lda(cfg: RunConfig):
    return cfg.speaker.d_lda or None


def cmd_train_speakers(run: Run, args) -> int:
    s = run.cfg.speaker
    with run.timed("corpus"):
        train, _ = speaker_corpus(run.cfg).split(run.cfg.corpus.test_utterances)
    with run.timed("training"):
        bank = train_bank(train, speaker_mfcc(train.sample_rate, s.drop_c0), d_pca=s.d_pca,
                          d_lda=_d_lda(run.cfg), k=s.mixtures, seed=run.cfg.run.seed)
    path = run.path("speaker_bank.json")
    bank.save(path)
    run.report.artifacts.append(str(path))
    run.report.results = {"speakers": bank.speakers, **bank.seeds}
    print(f"enrolled {len(bank.speakers)} speakers, k={s.mixtures}, d_lda={bank.transform.output_dim}")
    return EXIT_OK


def cmd_recognize(run: Run, args) -> int:
    bank = SpeakerBank.load(args.bank)
    target = Path(args.target)
    files = sorted(target.glob("*.wav")) if target.is_dir() else [target]
    if not files:
        raise FileNotFoundError(f"no .wav files in {target}")
    clips = [read_wav(f) for f in files]
    lines = ["segment,predicted,top1,score1,top2,score2,top3,score3"]
    for f, clip in zip(files, clips):
        spk, scores = recognize(clip, bank)
        ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))[:3]
        cells = [f"{name},{score:.6f}" for name, score in ranked]
        cells += [","] * (3 - len(ranked))
        lines.append(f"{f.name},{spk}," + ",".join(cells))
    run.write_text("recognition.csv", "\n".join(lines) + "\n")
    meeting = count_meeting_occupancy(clips, bank, run.cfg.speaker.min_frames)
    print("\n".join(lines))
    print(f"distinct speakers: {meeting.count}")
    run.report.results = {"count": meeting.count, "skipped": [files[i].name for i in meeting.skipped]}
    return EXIT_OK


def cmd_eval_speakers(run: Run, args) -> int:
    s = run.cfg.speaker
    with run.timed("corpus"):
        corpus = speaker_corpus(run.cfg)
    with run.timed("sweep"):
        sweep = evaluate_speakers(corpus, s.sweep, s.pool_sizes, run.cfg.corpus.test_utterances,
                                  s.d_pca, _d_lda(run.cfg), run.cfg.run.seed,
                                  speaker_mfcc(corpus.sample_rate, s.drop_c0))
    run.write_text("speaker_accuracy.csv", sweep.to_csv())
    sys.stdout.write(sweep.to_csv())
    run.report.results = {
        "best": {str(n): dict(zip(("k", "accuracy"), sweep.best(n))) for n in sweep.pool_sizes},
        "em_monotone": sweep.em_monotone,
        "test_utterances": sweep.test_counts,
    }
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "ingest": cmd_ingest,
    "calibrate": cmd_calibrate,
    "estimate": cmd_estimate,
    "eval-party": cmd_eval_party,
    "train-speakers": cmd_train_speakers,
    "recognize": cmd_recognize,
    "eval-speakers": cmd_eval_speakers,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="sectioned key-value config file")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--out-dir", help=f"output directory (overrides ${OUT_DIR_ENV})")
    common.add_argument("--room", help="LxW, LxW@center or circle:R")
    common.add_argument("--sizes", help="comma-separated candidate crowd sizes")
    common.add_argument("--times", help="comma-separated measurement times in seconds")
    common.add_argument("--trials", type=int, help="Monte-Carlo trials per cell")
    common.add_argument("--scoring-mode", choices=("mean", "map", "kde"), help="crowd-size scoring")
    common.add_argument("--mixtures", help="GMM mixture count, or a comma-separated sweep for eval-speakers")
    common.add_argument("-v", "--verbose", action="store_true", default=None, help="progress logging")

    parser = argparse.ArgumentParser(prog="occupancy", description="Room occupancy estimation from audio.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="generate a synthetic speaker corpus")
    p = sub.add_parser("ingest", parents=[common], help="load and validate a directory of speaker WAV files")
    p.add_argument("directory")
    sub.add_parser("calibrate", parents=[common], help="build an STE calibration by simulation")
    p = sub.add_parser("estimate", parents=[common], help="estimate crowd size of a recorded clip")
    p.add_argument("clip")
    p.add_argument("calibration")
    p = sub.add_parser("eval-party", parents=[common], help="accuracy matrix over sizes and measurement times")
    p.add_argument("--calibration", help="use an existing calibration instead of building one")
    sub.add_parser("train-speakers", parents=[common], help="enrol speakers into a GMM bank")
    p = sub.add_parser("recognize", parents=[common], help="recognise speakers of a clip or directory of clips")
    p.add_argument("target")
    p.add_argument("bank")
    sub.add_parser("eval-speakers", parents=[common], help="accuracy against GMM mixture count")
    return parser


def resolve_config(args) -> RunConfig:
    """Defaults, then the config file, then the environment, then flags."""
    cfg = RunConfig()
    if args.config:
        cfg = RunConfig.from_text(Path(args.config).read_text(), cfg)
    if os.environ.get(OUT_DIR_ENV):
        cfg.run.out_dir = os.environ[OUT_DIR_ENV]
    if args.seed is not None:
        cfg.run.seed = args.seed
    if args.out_dir:
        cfg.run.out_dir = args.out_dir
    if args.verbose:
        cfg.run.verbose = True
    if args.room:
        for k, v in parse_room(args.room).items():
            cfg.set("room", k, v)
    if args.sizes:
        cfg.set("party", "sizes", args.sizes)
    if args.times:
        cfg.set("party", "times", args.times)
    if args.trials is not None:
        cfg.party.trials = args.trials
    if args.scoring_mode:
        cfg.party.scoring = args.scoring_mode
    if args.mixtures:
        if args.command == "eval-speakers":
            cfg.set("speaker", "sweep", args.mixtures)
        else:
            cfg.set("speaker", "mixtures", args.mixtures)
    cfg.validate()
    return cfg


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, (OSError, WavError)):
        return EXIT_IO
    if isinstance(exc, (RoomError, CrowdError, SpeakerIdError, CorpusError, KdeError, GmmError,
                        TransformError, FeatureError)):
        return EXIT_CONSTRAINT
    return EXIT_UNEXPECTED


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "scoring_mode"):
        args.scoring_mode = None

    try:
        cfg = resolve_config(args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        cfg = RunConfig()
        if os.environ.get(OUT_DIR_ENV):
            cfg.run.out_dir = os.environ[OUT_DIR_ENV]
        if args.out_dir:
            cfg.run.out_dir = args.out_dir
        run = Run(args.command, cfg)
        run.report.status, run.report.exit_code, run.report.error = "error", _exit_code(exc), str(exc)
        run.finish()
        return run.report.exit_code

    logging.basicConfig(level=logging.INFO if cfg.run.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    run = Run(args.command, cfg)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            code = COMMANDS[args.command](run, args)
            run.report.status = "ok"
        except Exception as exc:  # the report is written whatever happens
            code = _exit_code(exc)
            run.report.status, run.report.error = "error", f"{type(exc).__name__}: {exc}"
            print(f"error: {exc}", file=sys.stderr)
            if code == EXIT_UNEXPECTED:
                log.exception("unexpected failure")
    for w in caught:
        run.report.warnings.append(str(w.message))
        print(f"warning: {w.message}", file=sys.stderr)
    run.report.exit_code = code
    run.finish()
    return code


if __name__ == "__main__":
    sys.exit(main())
