"""DET/EER computation, trial running, and the evaluation file formats."""

import numpy as np
import pytest

from tipm.codebook import Codebook
from tipm.evaluation import (
    SummaryRow,
    TrialEntry,
    TrialError,
    aggregate_retention,
    compute_det,
    improvement,
    pair_retention_report,
    read_retention_csv,
    read_scores_csv,
    read_trial_list,
    run_trials,
    write_det_csv,
    write_retention_csv,
    write_scores_csv,
    write_summary_csv,
    write_trial_list,
)
from tipm.feature_io import FeatureSet, FormatError
from tipm.matcher import MatchConfig, MatchResult
from tipm.procrustes import PairSet
from tipm.scoring import TrialScore, ZNormStats


def scores_from(targets, nontargets):
    out = [TrialScore("m", f"t{i}", v, v, "target") for i, v in enumerate(targets)]
    out += [TrialScore("m", f"n{i}", v, v, "nontarget") for i, v in enumerate(nontargets)]
    return out


def test_eer_perfect_separation_is_zero():
    det = compute_det(scores_from([0.9, 0.8, 0.7], [0.1, 0.2, 0.3]))
    assert det.eer == 0.0


def test_eer_identical_distributions_is_half():
    det = compute_det(scores_from([0.0, 1.0], [0.0, 1.0]))
    assert det.eer == 0.5


def test_eer_hand_worked_interpolation():
    det = compute_det(scores_from([0.8, 0.6, 0.4], [0.7, 0.3, 0.2, 0.1]))
    # FAR-FRR changes sign between thresholds 0.4 (diff 1/4) and 0.6
    # (diff -1/12); FAR is flat at 1/4 across that segment.
    assert abs(det.eer - 0.25) < 1e-15
    assert abs(det.eer_threshold - 0.55) < 1e-12


def test_det_curve_shape_and_endpoints():
    rng = np.random.default_rng(0)
    det = compute_det(
        scores_from(rng.normal(1.0, 1.0, 200), rng.normal(0.0, 1.0, 300))
    )
    assert det.far[0] == 1.0 and det.frr[0] == 0.0
    assert det.far[-1] == 0.0 and det.frr[-1] == 1.0
    assert np.all(np.diff(det.far) <= 0.0)
    assert np.all(np.diff(det.frr) >= 0.0)
    assert np.all(np.diff(det.thresholds) > 0.0)
    assert det.thresholds.shape == det.far.shape == det.frr.shape


def test_eer_invariant_under_increasing_transforms():
    rng = np.random.default_rng(1)
    tar = rng.normal(0.6, 0.2, 150)
    non = rng.normal(0.4, 0.2, 250)
    base = compute_det(scores_from(tar, non)).eer
    assert compute_det(scores_from(3.0 * tar - 2.0, 3.0 * non - 2.0)).eer == base
    assert compute_det(scores_from(np.exp(tar), np.exp(non))).eer == base


def test_compute_det_score_column_switch():
    scores = [
        TrialScore("m", "a", 0.9, -0.9, "target"),
        TrialScore("m", "b", 0.8, -0.8, "target"),
        TrialScore("m", "c", 0.1, -0.1, "nontarget"),
        TrialScore("m", "d", 0.2, -0.2, "nontarget"),
    ]
    assert compute_det(scores, use_normalized=False).eer == 0.0
    # Negation flips the ordering: normalized column separates the wrong way.
    assert compute_det(scores, use_normalized=True).eer == 1.0


def test_compute_det_needs_both_classes():
    with pytest.raises(ValueError, match="at least one target"):
        compute_det(scores_from([0.5], []))
    with pytest.raises(ValueError, match="at least one target"):
        compute_det(scores_from([], [0.5]))


def test_improvement_definition():
    cases = [
        (16.9, 14.6, 2.3, 13.609467455621307),
        (8.34, 7.12, 1.22, 14.628297362110312),
        (18.2, 16.9, 1.3, 7.142857142857142),
        (14.66, 13.86, 0.80, 5.4570259208731254),
        (18.34, 16.88, 1.46, 7.960741548527811),
    ]
    for baseline, treatment, want_abs, want_rel in cases:
        got_abs, got_rel = improvement(baseline, treatment)
        assert abs(got_abs - want_abs) < 1e-12
        assert abs(got_rel - want_rel) < 1e-9
    assert improvement(0.0, 0.0) == (0.0, 0.0)
    got_abs, got_rel = improvement(0.1, 0.2)
    assert got_abs == pytest.approx(-0.1)
    assert got_rel == pytest.approx(-100.0)


def make_result(n_frames, n_initial, n_removed, n_recycled):
    def pairs(k):
        return PairSet(
            np.zeros((k, 2)), np.zeros((k, 2)), np.stack([np.arange(k)] * 2, axis=1)
        )

    from tipm.matcher import RemovedPair

    removed = [
        RemovedPair((90 + i, 90 + i), np.zeros(2), np.zeros(2), i)
        for i in range(n_removed)
    ]
    recycled = removed[:n_recycled]
    n_final = n_initial - n_removed + n_recycled
    return MatchResult(pairs(n_initial), removed, recycled, pairs(n_final), [], n_frames)


def test_pair_retention_report_means():
    results = [make_result(10, 6, 2, 1), make_result(20, 10, 4, 0)]
    rep = pair_retention_report(results)
    assert rep.n_trials == 2
    assert rep.initial_ratio == pytest.approx((0.6 + 0.5) / 2)
    assert rep.after_stage1_ratio == pytest.approx((0.4 + 0.3) / 2)
    assert rep.final_ratio == pytest.approx((0.5 + 0.3) / 2)
    with pytest.raises(ValueError, match="no match results"):
        pair_retention_report([])
    with pytest.raises(ValueError, match="no test frames"):
        pair_retention_report([make_result(0, 0, 0, 0)])


def tiny_world():
    """Two separable codebooks plus three utterances with known scores."""
    rng = np.random.default_rng(4)
    ca = rng.normal(size=(6, 3)) + 20.0
    cb = rng.normal(size=(6, 3)) - 20.0
    models = {"A": Codebook("A", ca), "B": Codebook("B", cb)}
    utts = {
        "ua": FeatureSet(np.vstack([ca, rng.normal(size=(6, 3))]), "ua"),
        "ub": FeatureSet(np.vstack([cb, rng.normal(size=(6, 3))]), "ub"),
    }
    trials = [
        TrialEntry("A", "ua", "target"),
        TrialEntry("A", "ub", "nontarget"),
        TrialEntry("B", "ub", "target"),
        TrialEntry("B", "ua", "nontarget"),
    ]
    return models, utts, trials


def test_run_trials_scores_and_order():
    models, utts, trials = tiny_world()
    out = run_trials(models, trials, utts.__getitem__, MatchConfig(epsilon_t=1.0))
    assert [s.utterance_id for s in out.scores] == ["ua", "ub", "ub", "ua"]
    assert [s.label for s in out.scores] == ["target", "nontarget", "target", "nontarget"]
    assert out.errors == []
    assert len(out.results) == len(out.scores)
    # Separable by construction: targets score 0.5, impostors 0.
    assert [s.raw for s in out.scores] == [0.5, 0.0, 0.5, 0.0]
    # No stats supplied: the normalized column repeats the raw column.
    assert all(s.normalized == s.raw for s in out.scores)


def test_run_trials_applies_znorm_stats():
    models, utts, trials = tiny_world()
    stats = {"A": ZNormStats("A", 0.1, 0.2, 9)}
    out = run_trials(
        models, trials, utts.__getitem__, MatchConfig(epsilon_t=1.0), stats
    )
    byid = {(s.model_id, s.utterance_id): s for s in out.scores}
    assert byid[("A", "ua")].normalized == pytest.approx((0.5 - 0.1) / 0.2)
    assert byid[("B", "ub")].normalized == 0.5  # no stats for model B


def test_run_trials_records_errors_and_continues():
    models, utts, trials = tiny_world()
    trials = trials + [
        TrialEntry("C", "ua", "target"),
        TrialEntry("A", "missing", "nontarget"),
    ]

    def load(name):
        if name == "missing":
            raise OSError("no such utterance")
        return utts[name]

    out = run_trials(models, trials, load, MatchConfig(epsilon_t=1.0))
    assert len(out.scores) == 4
    assert len(out.errors) == 2
    assert out.errors[0] == TrialError("C", "ua", "unknown model id")
    assert out.errors[1].reason == "no such utterance"


def test_run_trials_jobs_do_not_change_results():
    models, utts, trials = tiny_world()
    one = run_trials(models, trials, utts.__getitem__, MatchConfig(epsilon_t=1.0))
    four = run_trials(
        models, trials, utts.__getitem__, MatchConfig(epsilon_t=1.0), jobs=4
    )
    assert one.scores == four.scores
    with pytest.raises(ValueError, match="jobs"):
        run_trials(models, trials, utts.__getitem__, jobs=0)


def test_run_trials_baseline_mode_uses_initial_counts():
    rng = np.random.default_rng(9)
    C = rng.normal(size=(8, 3)) * 5.0
    # Six aligned frames plus two threshold-passing junk frames that the
    # stages strip but the baseline keeps.
    frames = np.vstack([C[:6], C[6:] + 0.9 * rng.normal(size=(2, 3))])
    models = {"A": Codebook("A", C)}
    utts = {"u": FeatureSet(frames, "u")}
    trials = [TrialEntry("A", "u", "target")]
    cfg = MatchConfig(epsilon_t=3.0, delta=0.95, min_pairs=3)
    on = run_trials(models, trials, utts.__getitem__, cfg)
    off = run_trials(
        models, trials, utts.__getitem__, cfg, baseline=True, run_stages=False
    )
    assert off.scores[0].raw >= on.scores[0].raw
    assert off.results[0].discarded == []


def test_trial_list_roundtrip_and_errors(tmp_path):
    entries = [
        TrialEntry("spk00", "test/u1.vqf", "target"),
        TrialEntry("spk01", "test/u1.vqf", "nontarget"),
    ]
    path = tmp_path / "trials.tsv"
    write_trial_list(path, entries)
    assert read_trial_list(path) == entries

    path.write_text("a\tb\n")
    with pytest.raises(FormatError, match="trials\\.tsv:1"):
        read_trial_list(path)
    path.write_text("a\tb\tmaybe\n")
    with pytest.raises(FormatError, match="label"):
        read_trial_list(path)
    with pytest.raises(ValueError, match="label"):
        TrialEntry("a", "b", "impostor")


def test_scores_csv_roundtrip(tmp_path):
    scores = [
        TrialScore("m0", "u0", 0.125, 1.625, "target"),
        TrialScore("m1", "u1", 0.0, -0.4375, "nontarget"),
    ]
    path = tmp_path / "scores.csv"
    write_scores_csv(path, scores)
    text = path.read_text()
    assert text.startswith("model_id,utterance_id,raw,normalized,label\n")
    assert read_scores_csv(path) == scores


def test_scores_csv_errors(tmp_path):
    path = tmp_path / "s.csv"
    path.write_text("nope\n")
    with pytest.raises(FormatError, match="unexpected scores header"):
        read_scores_csv(path)
    path.write_text("model_id,utterance_id,raw,normalized,label\nm,u,0.1,0.1\n")
    with pytest.raises(FormatError, match="5 columns"):
        read_scores_csv(path)
    path.write_text("model_id,utterance_id,raw,normalized,label\nm,u,0.1,0.1,spoof\n")
    with pytest.raises(FormatError, match="bad label"):
        read_scores_csv(path)


def test_det_csv_format(tmp_path):
    det = compute_det(scores_from([0.8, 0.6], [0.2, 0.4]))
    path = tmp_path / "det.csv"
    write_det_csv(path, det)
    lines = path.read_text().splitlines()
    assert lines[0] == "threshold,far,frr"
    assert len(lines) == 1 + len(det.thresholds)
    cols = lines[1].split(",")
    assert float(cols[0]) == det.thresholds[0]
    assert float(cols[1]) == det.far[0]


def test_summary_csv_format(tmp_path):
    row = SummaryRow("clean", "", 0.25, 0.125, 0.125, 50.0)
    path = tmp_path / "summary.csv"
    write_summary_csv(path, row)
    assert path.read_text() == (
        "condition,snr,baseline_eer,treatment_eer,abs_improvement,rel_improvement_pct\n"
        "clean,,0.25,0.125,0.125,50.0\n"
    )


def test_retention_csv_roundtrip_and_aggregate(tmp_path):
    scores = [
        TrialScore("A", "u0", 0.5, 0.5, "target"),
        TrialScore("B", "u1", 0.25, 0.25, "nontarget"),
    ]
    results = [make_result(10, 6, 2, 1), make_result(20, 10, 4, 0)]
    path = tmp_path / "retention.csv"
    write_retention_csv(path, scores, results)
    rows = read_retention_csv(path)
    assert rows == [("A", "u0", 10, 6, 4, 5), ("B", "u1", 20, 10, 6, 6)]
    rep = aggregate_retention(rows)
    direct = pair_retention_report(results)
    assert rep == direct

    with pytest.raises(ValueError, match="parallel"):
        write_retention_csv(path, scores, results[:1])
    with pytest.raises(ValueError, match="no retention rows"):
        aggregate_retention([])


def test_retention_csv_errors(tmp_path):
    path = tmp_path / "r.csv"
    path.write_text("bad header\n")
    with pytest.raises(FormatError, match="unexpected retention header"):
        read_retention_csv(path)
    path.write_text(
        "model_id,utterance_id,n_frames,n_initial,n_after_stage1,n_final\nm,u,10,5,4\n"
    )
    with pytest.raises(FormatError, match="6 columns"):
        read_retention_csv(path)
    path.write_text(
        "model_id,utterance_id,n_frames,n_initial,n_after_stage1,n_final\nm,u,10,5,4,x\n"
    )
    with pytest.raises(FormatError, match="r\\.csv:2"):
        read_retention_csv(path)
