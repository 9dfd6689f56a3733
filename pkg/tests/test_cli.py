import json
from pathlib import Path

import pytest

from occupancy.cli import OUT_DIR_ENV, build_parser, main, resolve_config
from occupancy.config import RunConfig

SMALL = """\
[corpus]
speakers = 4
utterances = 3
duration = 1.5

[party]
sizes = 5,10
times = 1,2
trials = 3
calibration_trials = 3
calibration_duration = 1
pool_speakers = 4
pool_utterances = 2
pool_duration = 6

[speaker]
mixtures = 2
sweep = 1,2
"""


@pytest.fixture
def small_cfg(tmp_path):
    p = tmp_path / "small.ini"
    p.write_text(SMALL)
    return p


def run(out: Path, *argv) -> int:
    return main([*argv, "--out-dir", str(out)])


def report(out: Path) -> dict:
    return json.loads((out / "run_report.json").read_text())


def artifacts(out: Path) -> dict[str, bytes]:
    return {str(p.relative_to(out)): p.read_bytes() for p in sorted(out.rglob("*"))
            if p.is_file() and p.name != "run_report.json"}


def test_synth_writes_twenty_by_four_corpus(tmp_path):
    out = tmp_path / "out"
    assert run(out, "synth", "--seed", "3") == 0
    wavs = sorted((out / "corpus").glob("*.wav"))
    assert len(wavs) == 80
    assert wavs[0].name == "spk000_000.wav"
    manifest = json.loads((out / "corpus" / "manifest.json").read_text())
    assert manifest["master_seed"] == 3 and len(manifest["speakers"]) == 20
    r = report(out)
    assert r["status"] == "ok" and r["exit_code"] == 0 and r["results"]["files"] == 80


def test_ingest_round_trips_a_synth_corpus(tmp_path, small_cfg):
    out = tmp_path / "out"
    assert run(out, "synth", "--config", str(small_cfg)) == 0
    assert run(out, "ingest", str(out / "corpus"), "--config", str(small_cfg)) == 0
    m = json.loads((out / "ingest_manifest.json").read_text())
    assert len(m["speakers"]) == 4 and all(len(s["files"]) == 3 for s in m["speakers"])


@pytest.mark.parametrize("argv,files", [
    (["synth"], ["corpus/manifest.json"]),
    (["calibrate"], ["calibration.json"]),
    (["eval-party"], ["accuracy.csv", "accuracy_curves.csv", "ste_spread.csv", "calibration.json"]),
    (["train-speakers"], ["speaker_bank.json"]),
    (["eval-speakers"], ["speaker_accuracy.csv"]),
])
def test_reruns_are_byte_identical(tmp_path, small_cfg, argv, files):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(a, *argv, "--config", str(small_cfg)) == 0
    assert run(b, *argv, "--config", str(small_cfg)) == 0
    first, second = artifacts(a), artifacts(b)
    assert set(files) <= set(first)
    assert first == second


def test_estimate_and_recognize_pipeline(tmp_path, small_cfg):
    out = tmp_path / "out"
    cfg = ["--config", str(small_cfg)]
    assert run(out, "synth", *cfg) == 0
    assert run(out, "calibrate", *cfg) == 0
    clip = out / "corpus" / "spk000_000.wav"
    assert run(out, "estimate", str(clip), str(out / "calibration.json"), *cfg) == 0
    est = json.loads((out / "estimate.json").read_text())
    assert est["predicted"] in (5, 10) and est["scoring"] == "mean"

    assert run(out, "train-speakers", *cfg) == 0
    assert run(out, "recognize", str(out / "corpus"), str(out / "speaker_bank.json"), *cfg) == 0
    rows = (out / "recognition.csv").read_text().splitlines()
    assert rows[0].startswith("segment,predicted,top1")
    assert len(rows) == 1 + 12
    assert 1 <= report(out)["results"]["count"] <= 4


def test_eval_party_accepts_existing_calibration(tmp_path, small_cfg):
    out = tmp_path / "out"
    assert run(out, "calibrate", "--config", str(small_cfg)) == 0
    cal = out / "calibration.json"
    assert run(out, "eval-party", "--calibration", str(cal), "--config", str(small_cfg), "--trials", "2") == 0
    rows = (out / "accuracy.csv").read_text().splitlines()
    assert rows[0] == "size,1,2" and len(rows) == 3


def test_bad_room_is_a_config_error_with_report(tmp_path):
    out = tmp_path / "out"
    assert run(out, "calibrate", "--room", "ten-by-eight") == 2
    r = report(out)
    assert r["status"] == "error" and r["exit_code"] == 2 and "room" in r["error"]


def test_bad_config_file_is_a_config_error(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[party]\nscoring = loudest\n")
    assert run(tmp_path / "out", "calibrate", "--config", str(bad)) == 2


def test_missing_file_is_an_io_error(tmp_path):
    out = tmp_path / "out"
    assert run(out, "estimate", str(tmp_path / "none.wav"), str(tmp_path / "none.json")) == 3
    assert report(out)["exit_code"] == 3


def test_density_cap_is_a_constraint_violation(tmp_path, small_cfg):
    out = tmp_path / "out"
    assert run(out, "calibrate", "--config", str(small_cfg), "--sizes", "5,81") == 4
    r = report(out)
    assert r["status"] == "error" and "81" in r["error"]
    assert not (out / "calibration.json").exists()


def test_precedence_flag_env_file_default(tmp_path, monkeypatch):
    cfg_file = tmp_path / "c.ini"
    cfg_file.write_text("[run]\nout_dir = from-file\nseed = 9\n")
    parse = build_parser().parse_args

    monkeypatch.delenv(OUT_DIR_ENV, raising=False)
    assert resolve_config(parse(["synth"])).run.out_dir == RunConfig().run.out_dir
    assert resolve_config(parse(["synth", "--config", str(cfg_file)])).run.out_dir == "from-file"
    monkeypatch.setenv(OUT_DIR_ENV, "from-env")
    cfg = resolve_config(parse(["synth", "--config", str(cfg_file)]))
    assert cfg.run.out_dir == "from-env" and cfg.run.seed == 9
    cfg = resolve_config(parse(["synth", "--config", str(cfg_file), "--out-dir", "from-flag", "--seed", "4"]))
    assert cfg.run.out_dir == "from-flag" and cfg.run.seed == 4


def test_mixtures_flag_targets_sweep_for_eval_speakers():
    parse = build_parser().parse_args
    assert resolve_config(parse(["eval-speakers", "--mixtures", "1,4"])).speaker.sweep == [1, 4]
    assert resolve_config(parse(["train-speakers", "--mixtures", "8"])).speaker.mixtures == 8


def test_run_report_records_config(tmp_path, small_cfg):
    out = tmp_path / "out"
    assert run(out, "calibrate", "--config", str(small_cfg), "--seed", "2") == 0
    r = report(out)
    assert r["command"] == "calibrate" and r["config"]["run"]["seed"] == 2
    assert r["config"]["party"]["sizes"] == [5, 10]
    assert "calibration" in r["timings"]
