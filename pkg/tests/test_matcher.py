"""Initial matching and the two-stage refinement loop."""

import numpy as np
import pytest

from tipm.codebook import Codebook
from tipm.feature_io import FeatureSet
from tipm.matcher import (
    MatchConfig,
    MatchResult,
    initial_match,
    match,
    stage1_remove,
    stage2_recycle,
)
from tipm.procrustes import PairSet, align
from tipm.synth import planted_outliers, planted_rotation


def pair_ids(items):
    return sorted(p.pair_id for p in items)


def id_set(ps):
    return {tuple(row) for row in ps.pair_ids}


def test_initial_match_identical_sets():
    rng = np.random.default_rng(0)
    C = rng.normal(size=(6, 3))
    cb = Codebook("s", C)
    got = initial_match(cb, FeatureSet(C.copy()), MatchConfig(epsilon_t=0.5))
    assert len(got) == 6
    assert np.array_equal(got.pair_ids, np.stack([np.arange(6)] * 2, axis=1))
    assert np.array_equal(got.left, got.right)


def test_initial_match_threshold_excludes_everything():
    cb = Codebook("s", np.zeros((3, 2)) + 5.0)
    got = initial_match(cb, FeatureSet(np.zeros((4, 2))), MatchConfig(epsilon_t=0.01))
    assert len(got) == 0


def test_initial_match_frame_claimed_by_closer_codeword():
    # Codewords 0 and 1 both nearest frame 0; codeword 0 is closer and
    # claims it, codeword 1 ends up with no pair at all.
    cb = Codebook("s", np.array([[0.0, 0.0], [0.5, 0.0], [10.0, 0.0]]))
    frames = np.array([[0.1, 0.0], [10.0, 0.0]])
    got = initial_match(cb, FeatureSet(frames), MatchConfig(epsilon_t=5.0))
    assert got.pair_ids.tolist() == [[0, 0], [2, 1]]


def test_initial_match_orders_by_codeword_and_never_reuses_frames():
    rng = np.random.default_rng(1)
    cb = Codebook("s", rng.normal(size=(20, 4)))
    feats = FeatureSet(rng.normal(size=(15, 4)))
    got = initial_match(cb, feats, MatchConfig(epsilon_t=10.0))
    cws = got.pair_ids[:, 0]
    frs = got.pair_ids[:, 1]
    assert np.all(np.diff(cws) > 0)
    assert len(np.unique(frs)) == len(frs)
    # Every pair is the codeword's nearest frame within the threshold.
    for cw, fr in got.pair_ids:
        dists = np.linalg.norm(feats.vectors - cb.centroids[cw], axis=1)
        assert dists[fr] <= 10.0
        assert dists[fr] == dists.min()


def test_initial_match_epsilon_resolution():
    cb = Codebook("s", np.array([[0.0, 0.0]]), mean_quant_dist=2.0)
    near = FeatureSet(np.array([[2.9, 0.0]]))
    # Default scale 1.5 x mean quant dist 2.0 = 3.0 admits the frame.
    assert len(initial_match(cb, near, MatchConfig())) == 1
    assert len(initial_match(cb, near, MatchConfig(epsilon_scale=1.0))) == 0
    # Explicit epsilon_t wins over the scale.
    assert len(initial_match(cb, near, MatchConfig(epsilon_t=1.0))) == 0

    bare = Codebook("s", np.array([[0.0, 0.0]]))
    with pytest.raises(ValueError, match="mean"):
        initial_match(bare, near, MatchConfig())


def test_initial_match_input_errors():
    cb = Codebook("s", np.zeros((2, 3)))
    with pytest.raises(ValueError, match="empty test"):
        initial_match(cb, FeatureSet(np.zeros((0, 3))), MatchConfig(epsilon_t=1.0))
    with pytest.raises(ValueError, match="dim"):
        initial_match(cb, FeatureSet(np.zeros((4, 2))), MatchConfig(epsilon_t=1.0))


def test_match_config_validation():
    for bad in (
        dict(epsilon_t=0.0),
        dict(epsilon_scale=0.0),
        dict(delta=0.0),
        dict(delta=1.0),
        dict(eta=0.99),
        dict(min_pairs=2),
        dict(zero_residual_tol=-1.0),
    ):
        with pytest.raises(ValueError):
            MatchConfig(**bad).validate()
    MatchConfig().validate()


def test_stage1_zero_residual_stops_immediately():
    pairs, _ = planted_rotation(3, 12, 5)
    surv, disc, trace = stage1_remove(pairs, MatchConfig(epsilon_t=1.0))
    assert disc == [] and trace == []
    assert len(surv) == 12


def test_stage1_discards_exactly_the_planted_outliers():
    cfg = MatchConfig(epsilon_t=1.0, delta=0.9, eta=1.05, min_pairs=4)
    for seed in (0, 1, 2, 3, 4):
        pairs, out_ids = planted_outliers(seed, 20, 5, 13, 10.0)
        surv, disc, trace = stage1_remove(pairs, cfg)
        assert pair_ids(disc) == sorted(out_ids)
        assert len(surv) == 20
        # Residual really is tiny once the junk is gone.
        assert align(surv).residual < 1e-18
        for entry in trace:
            assert entry.stage == 1
            assert entry.ratio is not None and entry.ratio < 0.9
            assert entry.residual_after < entry.residual_before


def test_stage1_floor_rule():
    # Unrelated point sets with a permissive delta: removal stops at the
    # floor, never below it.
    rng = np.random.default_rng(7)
    n = 9
    ps = PairSet(
        rng.normal(size=(n, 3)),
        rng.normal(size=(n, 3)),
        np.stack([np.arange(n)] * 2, axis=1),
    )
    for min_pairs in (3, 5, 8):
        cfg = MatchConfig(epsilon_t=1.0, delta=0.999, min_pairs=min_pairs)
        surv, disc, _ = stage1_remove(ps, cfg)
        assert len(surv) >= min_pairs
        assert len(surv) + len(disc) == n
        assert len(disc) < n


def test_stage1_ties_break_to_lowest_pair_id():
    # Two identical copies of the same offending pair: equal argmin
    # residuals, so the lexicographically smaller id must go first.
    base, _ = planted_rotation(5, 10, 3)
    bad = np.array([3.0, -1.0, 2.0])
    left = np.vstack([base.left, base.left[0], base.left[0]])
    right = np.vstack([base.right, bad, bad])
    ids = np.vstack([base.pair_ids, [[90, 90], [80, 80]]])
    ps = PairSet(left, right, ids)
    cfg = MatchConfig(epsilon_t=1.0, delta=0.9, min_pairs=4)
    _, disc, _ = stage1_remove(ps, cfg)
    assert [p.pair_id for p in disc] == [(80, 80), (90, 90)]
    assert [p.iteration for p in disc] == [0, 1]


def test_stage2_empty_candidates_is_identity():
    pairs, _ = planted_rotation(11, 8, 4)
    final, rec, trace = stage2_recycle(pairs, [], MatchConfig(epsilon_t=1.0))
    assert final is pairs
    assert rec == [] and trace == []


def test_stage2_zero_branch_recycles_only_zero_preserving_pairs():
    pairs, R = planted_rotation(17, 10, 4)
    extra_left = np.array([[1.0, 2.0, -1.0, 0.5], [0.3, -2.0, 1.0, 4.0]])
    good = extra_left[0] @ R
    junk = np.array([5.0, 5.0, 5.0, 5.0])
    from tipm.matcher import RemovedPair

    disc = [
        RemovedPair((50, 50), extra_left[1], junk, 0),
        RemovedPair((60, 60), extra_left[0], good, 1),
    ]
    final, rec, trace = stage2_recycle(pairs, disc, MatchConfig(epsilon_t=1.0))
    assert [p.pair_id for p in rec] == [(60, 60)]
    assert len(final) == 11
    assert trace[-1].residual_after < 1e-20


def test_forced_over_removal_recycles_the_borderline_inlier():
    # Noisy inliers, one inlier nudged by a fixed-size offset, five huge
    # outliers.  A permissive delta with a floor two below the inlier count
    # strips the outliers plus the borderline pair; recycling must bring
    # back only the borderline one.
    rng = np.random.default_rng(1003)
    d, n = 13, 46
    X = rng.normal(size=(n, d))
    q, r = np.linalg.qr(rng.normal(size=(d, d)))
    right = X @ (q * np.sign(np.diag(r))) + 1e-3 * rng.normal(size=(n, d))
    u = rng.normal(size=d)
    right[40] += 2e-3 * np.sqrt(d) * u / np.linalg.norm(u)
    radius = float(np.max(np.linalg.norm(right[:41], axis=1)))
    for i in range(41, n):
        right[i] = rng.uniform(-10 * radius, 10 * radius, size=d)
    ps = PairSet(X, right, np.stack([np.arange(n)] * 2, axis=1))

    cfg = MatchConfig(epsilon_t=1.0, delta=0.99, eta=1.3, min_pairs=40)
    surv, disc, _ = stage1_remove(ps, cfg)
    assert pair_ids(disc) == [(i, i) for i in range(40, 46)]
    final, rec, trace = stage2_recycle(surv, disc, cfg)
    assert [p.pair_id for p in rec] == [(40, 40)]
    assert id_set(final) == id_set(ps) - {(i, i) for i in range(41, 46)}
    for entry in trace:
        assert entry.stage == 2
        assert entry.ratio is not None and entry.ratio < 1.3


def test_stage2_requires_survivors():
    from tipm.matcher import RemovedPair

    empty = PairSet(np.zeros((0, 2)), np.zeros((0, 2)), np.zeros((0, 2), dtype=np.int64))
    disc = [RemovedPair((0, 0), np.zeros(2), np.zeros(2), 0)]
    with pytest.raises(ValueError, match="at least one surviving"):
        stage2_recycle(empty, disc, MatchConfig(epsilon_t=1.0))


def test_match_counters_on_planted_instance():
    pairs, out_ids = planted_outliers(9, 20, 5, 13, 10.0)
    cfg = MatchConfig(epsilon_t=1.0, delta=0.9, eta=1.05, min_pairs=4)
    surv, disc, t1 = stage1_remove(pairs, cfg)
    final, rec, t2 = stage2_recycle(surv, disc, cfg)
    result = MatchResult(pairs, disc, rec, final, t1 + t2, n_test_frames=25)
    assert (result.n_initial, result.n_after_stage1, result.n_final) == (25, 20, 20)


def test_match_identical_codebook_and_test():
    rng = np.random.default_rng(21)
    C = rng.normal(size=(8, 3))
    res = match(Codebook("s", C), FeatureSet(C.copy()), MatchConfig(epsilon_t=1.0))
    assert res.n_initial == res.n_final == 8
    assert res.discarded == [] and res.recycled == []
    assert res.n_test_frames == 8


def test_match_empty_initial_skips_stages():
    cb = Codebook("s", np.zeros((3, 2)) + 9.0)
    res = match(cb, FeatureSet(np.zeros((5, 2))), MatchConfig(epsilon_t=0.1))
    assert res.n_initial == res.n_final == 0
    assert res.residual_trace == []
    assert res.n_test_frames == 5


def test_match_set_algebra_and_determinism():
    # Codebook and frames engineered so the initial match is nontrivial and
    # stage 1 has junk to chew on.
    rng = np.random.default_rng(33)
    C = rng.normal(size=(16, 5)) * 3.0
    frames = np.vstack(
        [
            C + 0.05 * rng.normal(size=C.shape),  # one good frame per codeword
            rng.normal(size=(10, 5)) * 3.0,  # distractors
        ]
    )
    perm = rng.permutation(len(frames))
    feats = FeatureSet(frames[perm])
    cfg = MatchConfig(epsilon_t=1.5, delta=0.95, eta=1.1, min_pairs=4)

    a = match(Codebook("s", C), feats, cfg)
    b = match(Codebook("s", C), feats, cfg)
    assert a.n_initial > 6

    disc_ids = {p.pair_id for p in a.discarded}
    rec_ids = {p.pair_id for p in a.recycled}
    assert rec_ids <= disc_ids
    assert id_set(a.final) == (id_set(a.initial) - disc_ids) | rec_ids
    assert len(a.discarded) < a.n_initial
    assert a.n_after_stage1 >= min(cfg.min_pairs, a.n_initial)

    assert np.array_equal(a.final.pair_ids, b.final.pair_ids)
    assert np.array_equal(a.final.left, b.final.left)
    assert [(t.stage, t.pair_id, t.residual_before, t.residual_after, t.ratio) for t in a.residual_trace] == [
        (t.stage, t.pair_id, t.residual_before, t.residual_after, t.ratio) for t in b.residual_trace
    ]


def test_match_run_stages_off_keeps_initial():
    rng = np.random.default_rng(40)
    C = rng.normal(size=(10, 4))
    feats = FeatureSet(np.vstack([C, rng.normal(size=(5, 4))]))
    res = match(Codebook("s", C), feats, MatchConfig(epsilon_t=2.0), run_stages=False)
    assert res.n_final == res.n_initial
    assert res.discarded == [] and res.residual_trace == []


def test_explicit_zero_residual_tol_branch():
    # A huge explicit tolerance forces the zero branch immediately: stage 1
    # stops before removing anything even on junk data.
    rng = np.random.default_rng(50)
    n = 8
    ps = PairSet(
        rng.normal(size=(n, 3)),
        rng.normal(size=(n, 3)),
        np.stack([np.arange(n)] * 2, axis=1),
    )
    cfg = MatchConfig(epsilon_t=1.0, delta=0.999, zero_residual_tol=1e9)
    surv, disc, _ = stage1_remove(ps, cfg)
    assert disc == [] and len(surv) == n
