import math
import warnings

import numpy as np
import pytest

from occupancy.audio import AudioClip, FrameSpec
from occupancy.crowd import (
    FrameSpecMismatchError,
    ClipTooShortError,
    NonMonotoneCalibrationWarning,
    SimulationSetup,
    SizeStats,
    SpeechPool,
    SteCalibration,
    calibrate,
    collect_ste_samples,
    collect_trials,
    estimate_occupancy,
    evaluate_accuracy,
    pick,
    score_energies,
)
from occupancy.kde import fit_kde
from occupancy.room import DensityViolationError, RoomSpec
from occupancy.synth import build_corpus


@pytest.fixture(scope="module")
def pool():
    return SpeechPool(build_corpus(6, 2, 8.0, master_seed=3))


@pytest.fixture(scope="module")
def setup(party_setup):
    return party_setup


@pytest.fixture(scope="module")
def cal(setup):
    return calibrate(setup, [5, 20, 80], trials=40, duration=5.0, seed=1)


def test_pool_members_use_distinct_speakers(pool):
    rows, offsets = pool.choose(np.random.default_rng(0), 6)
    assert sorted(pool.speaker_of[rows]) == list(range(6))
    assert np.all((offsets >= 0) & (offsets < pool.length))


def test_pool_wraps_around(pool):
    seg = pool.segment(0, pool.length - 10, 30)
    np.testing.assert_array_equal(seg[10:], pool._signals[0, :20])


def test_mix_matches_explicit_sum(pool):
    gains = np.array([0.5, 0.25, 0.1])
    x = pool.mix(np.random.default_rng(9), gains, 5000)
    rows, offsets = pool.choose(np.random.default_rng(9), 3)
    ref = sum(gn * pool.segment(r, o, 5000).astype(float) for gn, r, o in zip(gains, rows, offsets))
    np.testing.assert_allclose(x, ref, rtol=1e-6, atol=1e-12)


def test_one_trial_five_seconds_gives_199_samples(setup):
    assert collect_ste_samples(setup, 10, 1, 5.0, seed=0).size == 199


def test_silent_empty_room(pool):
    quiet = SimulationSetup(RoomSpec(), pool, noise_std=0.0)
    assert np.all(collect_ste_samples(quiet, 0, 2, 1.0, seed=0) == 0)


def test_collection_is_deterministic(setup):
    a = collect_ste_samples(setup, 5, 3, 2.0, seed=4)
    np.testing.assert_array_equal(a, collect_ste_samples(setup, 5, 3, 2.0, seed=4))
    assert not np.array_equal(a, collect_ste_samples(setup, 5, 3, 2.0, seed=5))


def test_quantile_layout_is_per_size_and_trial_independent(pool):
    q = SimulationSetup(RoomSpec(), pool)
    assert q.placement == "quantile"
    np.testing.assert_array_equal(q.placement_for(10, 1).positions, q.placement_for(10, 2).positions)
    d = q.placement_for(10, 1).distances
    assert np.all(np.diff(d) > 0)


def test_fixed_layout_is_nested_and_fresh_varies(pool):
    fixed = SimulationSetup(RoomSpec(), pool, placement="fixed")
    np.testing.assert_array_equal(fixed.placement_for(5, 1).positions, fixed.placement_for(20, 2).positions[:5])
    fresh = SimulationSetup(RoomSpec(), pool, placement="fresh")
    assert not np.array_equal(fresh.placement_for(5, 1).positions, fresh.placement_for(5, 2).positions)


def test_density_violation(setup):
    with pytest.raises(DensityViolationError):
        collect_trials(setup, 81, 1, 1.0, seed=0)
    with pytest.raises(DensityViolationError):
        calibrate(setup, [5, 81], 2, 1.0, seed=0)


def test_calibration_invariants(cal):
    assert cal.sizes == [5, 20, 80]
    for n in cal.sizes:
        s = cal.per_size[n]
        assert abs(s.curve.integral() - 1) <= 1e-3
        assert s.spread > 0 and s.map_level > 0 and np.all(s.curve.density >= 0)
    levels = cal.map_levels()
    assert levels[0] < levels[1] < levels[2]
    means = [cal.per_size[n].mean for n in cal.sizes]
    assert means[0] < means[1] < means[2]


def test_single_size_calibration(setup):
    c = calibrate(setup, [5], trials=3, duration=2.0, seed=0)
    assert list(c.per_size) == [5]


def test_non_monotone_levels_warn(setup):
    with pytest.warns(NonMonotoneCalibrationWarning):
        c = calibrate(SimulationSetup(RoomSpec(), setup.pool, placement="fresh"), [79, 80], 1, 0.3, seed=2)
    assert c.warnings


def test_calibration_round_trip(tmp_path, cal):
    cal.save(tmp_path / "c.json")
    back = SteCalibration.load(tmp_path / "c.json")
    assert back.sizes == cal.sizes and back.map_levels() == cal.map_levels()
    assert back.to_dict() == cal.to_dict()


def gaussian_score(e_bar, centre, spread, k):
    var = spread**2 / k
    return -0.5 * math.log(2 * math.pi * var) - (e_bar - centre) ** 2 / (2 * var)


def test_mean_scoring_oracle(cal, g):
    e = g.gamma(2.0, 1e-4, size=150)
    scores = score_energies(e, cal, "mean")
    for n in cal.sizes:
        s = cal.per_size[n]
        assert scores[n] == pytest.approx(gaussian_score(e.mean(), s.mean, s.spread, 150), rel=1e-12)
    mp = score_energies(e, cal, "map")
    for n in cal.sizes:
        s = cal.per_size[n]
        assert mp[n] == pytest.approx(gaussian_score(e.mean(), s.map_level, s.spread, 150), rel=1e-12)


def test_kde_scoring_oracle(cal, g):
    e = g.gamma(2.0, 1e-4, size=50)
    scores = score_energies(e, cal, "kde")
    for n in cal.sizes:
        c = cal.per_size[n].curve
        ref = sum(math.log(max(float(np.interp(v, c.grid, c.density, left=0, right=0)), 1e-300)) for v in e)
        assert scores[n] == pytest.approx(ref, rel=1e-10)


def test_pick_ties_to_smaller():
    assert pick({5: 1.0, 10: 1.0, 20: 0.5}) == 5
    assert pick({5: -3.0, 10: -1.0}) == 10


def test_estimate_at_own_mean_and_silence(cal):
    for n in cal.sizes:
        e = np.full(199, cal.per_size[n].mean)
        assert pick(score_energies(e, cal, "mean")) == n
    est = estimate_occupancy(AudioClip(np.zeros(80000)), cal)
    assert est.predicted == 5 and est.frames_used == 199 and est.duration == 5.0


def test_singleton_candidate_set_always_wins(setup, g):
    single = calibrate(setup, [20], trials=3, duration=2.0, seed=0)
    for _ in range(5):
        assert estimate_occupancy(AudioClip(g.normal(0, g.uniform(0.001, 1), 16000)), single).predicted == 20


def test_estimate_errors(cal):
    with pytest.raises(ClipTooShortError):
        estimate_occupancy(AudioClip(np.zeros(100)), cal)
    with pytest.raises(FrameSpecMismatchError):
        estimate_occupancy(AudioClip(np.zeros(80000), 8000), cal)


def test_evaluation_rejects_mismatched_setup(cal, pool):
    other = SimulationSetup(RoomSpec(), pool, frame_spec=FrameSpec(40, 20))
    with pytest.raises(FrameSpecMismatchError):
        evaluate_accuracy(cal, other, [5], [5.0], 1, seed=0)


def test_accuracy_matrix_shape_and_determinism(cal, setup):
    m = evaluate_accuracy(cal, setup, [5, 20, 80], [2.0, 4.0], trials=1, seed=8)
    assert m.accuracy.shape == (3, 2)
    assert set(np.unique(m.accuracy)) <= {0.0, 1.0}
    again = evaluate_accuracy(cal, setup, [5, 20, 80], [2.0, 4.0], trials=1, seed=8)
    assert m.to_csv() == again.to_csv()
    lines = m.to_csv().splitlines()
    assert lines[0] == "size,2,4" and [l.split(",")[0] for l in lines[1:]] == ["5", "20", "80"]
    assert len(m.curves_csv().splitlines()) == 1 + 6


def test_evaluation_uses_fresh_draws(cal, setup):
    a = collect_trials(setup, 5, 1, 5.0, 1, stage="calibrate")[0]
    b = collect_trials(setup, 5, 1, 5.0, 1, stage="evaluate")[0]
    assert not np.array_equal(a, b)


def test_coefficient_of_variation_decreases(cal):
    cv = [cal.per_size[n].spread / cal.per_size[n].mean for n in cal.sizes]
    assert cv[0] > cv[1] > cv[2]
