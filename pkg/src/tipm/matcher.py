"""Two-stage iterative Procrustes matching.

A trial starts from one-to-one codeword/frame pairs inside a distance
threshold.  Stage 1 repeatedly removes the pair whose absence shrinks the
alignment residual by the largest factor, while the shrinkage beats delta
and at least min_pairs would remain.  Stage 2 offers every removed pair a
way back: the candidate whose re-addition grows the residual by less than
a factor eta is recycled.  The final set is (initial minus discarded) plus
recycled, and the whole procedure is deterministic: candidates are judged
by exact residuals with ties broken toward the lowest pair id.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .codebook import Codebook
from .feature_io import FeatureSet
from .procrustes import PairSet, _align_kernel

ZERO_RESIDUAL_UNIT = 1e-12  # default zero tolerance is this times D times S


@dataclass
class MatchConfig:
    epsilon_t: float | None = None  # initial-match threshold (feature units)
    epsilon_scale: float = 1.5  # threshold as a multiple of mean train quant distance
    delta: float = 0.9  # stage-1 keeps removing while residual ratio < delta
    eta: float = 1.05  # stage-2 recycles while growth ratio < eta
    min_pairs: int = 4  # stage-1 never leaves fewer pairs than this
    zero_residual_tol: float | None = None  # None: ZERO_RESIDUAL_UNIT * D * S

    def validate(self) -> None:
        if self.epsilon_t is not None and not self.epsilon_t > 0:
            raise ValueError("epsilon_t must be > 0 when set")
        if not self.epsilon_scale > 0:
            raise ValueError("epsilon_scale must be > 0")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must be in (0, 1)")
        if not self.eta >= 1.0:
            raise ValueError("eta must be >= 1")
        if self.min_pairs < 3:
            raise ValueError("min_pairs must be >= 3")
        if self.zero_residual_tol is not None and self.zero_residual_tol < 0:
            raise ValueError("zero_residual_tol must be >= 0 when set")


@dataclass
class RemovedPair:
    pair_id: tuple[int, int]
    left: np.ndarray
    right: np.ndarray
    iteration: int  # 0-based position in the removal (or recycle) order


@dataclass
class TraceEntry:
    stage: int  # 1 = removal, 2 = recycle
    pair_id: tuple[int, int]
    residual_before: float
    residual_after: float
    ratio: float | None  # after/before; None when before is exactly zero


@dataclass
class MatchResult:
    initial: PairSet
    discarded: list[RemovedPair]
    recycled: list[RemovedPair]
    final: PairSet
    residual_trace: list[TraceEntry]
    n_test_frames: int

    @property
    def n_initial(self) -> int:
        return len(self.initial)

    @property
    def n_after_stage1(self) -> int:
        return len(self.initial) - len(self.discarded)

    @property
    def n_final(self) -> int:
        return len(self.final)


def _resolve_epsilon(cfg: MatchConfig, codebook: Codebook) -> float:
    if cfg.epsilon_t is not None:
        return cfg.epsilon_t
    if codebook.mean_quant_dist is None:
        raise ValueError(
            "epsilon_t is not set and the codebook has no recorded mean "
            "quantization distance (training writes it to the .meta sidecar)"
        )
    eps = cfg.epsilon_scale * codebook.mean_quant_dist
    if not eps > 0:
        raise ValueError(
            f"resolved epsilon_t is {eps}; set epsilon_t explicitly for this codebook"
        )
    return eps


def initial_match(codebook: Codebook, test: FeatureSet, cfg: MatchConfig) -> PairSet:
    """One-to-one nearest-frame pairs within the distance threshold.

    Each codeword proposes its nearest test frame (Euclidean, ties to the
    lowest frame index).  Codewords are processed in increasing order of
    that distance (ties to the lowest codeword index); a proposal is
    accepted iff the distance is within the threshold and the frame is
    still unclaimed.  A codeword whose nearest frame is taken gets no
    pair.  The result is ordered by codeword index and may be empty.
    """
    cfg.validate()
    if len(test) == 0:
        raise ValueError("empty test feature set")
    if test.dim != codebook.dim:
        raise ValueError(
            f"feature dim {test.dim} != codebook dim {codebook.dim}"
        )
    eps = _resolve_epsilon(cfg, codebook)

    C = codebook.centroids
    F = test.vectors
    d2 = ((C[:, None, :] - F[None, :, :]) ** 2).sum(axis=2)
    nearest = np.argmin(d2, axis=1)
    ndist = np.sqrt(d2[np.arange(codebook.q), nearest])

    claimed = np.zeros(len(test), dtype=bool)
    accepted: list[int] = []
    for cw in np.argsort(ndist, kind="stable"):
        if ndist[cw] > eps:
            break  # sorted ascending: everything after is farther
        frame = nearest[cw]
        if not claimed[frame]:
            claimed[frame] = True
            accepted.append(int(cw))

    accepted.sort()
    ids = np.array(
        [[cw, int(nearest[cw])] for cw in accepted], dtype=np.int64
    ).reshape(len(accepted), 2)
    return PairSet(C[accepted], F[nearest[accepted]], ids)


def _id_ranks(pair_ids: np.ndarray) -> np.ndarray:
    """Lexicographic rank of each pair id; kernels break ties on this."""
    n = pair_ids.shape[0]
    ranks = np.empty(n, dtype=np.int64)
    order = np.lexsort((pair_ids[:, 1], pair_ids[:, 0]))
    ranks[order] = np.arange(n, dtype=np.int64)
    return ranks


@njit(cache=True, nogil=True)
def _stage1_kernel(L, R, ranks, delta, min_pairs, tol_unit, fixed_tol):
    # pragma: no cover - exercised via stage1_remove
    n, D = L.shape
    alive = np.ones(n, np.bool_)
    removed = np.empty(n, np.int64)
    e_before = np.empty(n)
    e_after = np.empty(n)
    nrem = 0
    while True:
        S = n - nrem
        if S - 1 < min_pairs:
            break
        cur_l = np.empty((S, D))
        cur_r = np.empty((S, D))
        idx_map = np.empty(S, np.int64)
        k = 0
        for i in range(n):
            if alive[i]:
                idx_map[k] = i
                for d in range(D):
                    cur_l[k, d] = L[i, d]
                    cur_r[k, d] = R[i, d]
                k += 1
        _, _, e = _align_kernel(cur_l, cur_r)
        tol = fixed_tol if fixed_tol >= 0.0 else tol_unit * D * S
        if e <= tol:
            break
        red_l = np.empty((S - 1, D))
        red_r = np.empty((S - 1, D))
        best_s = -1
        best_res = np.inf
        for s in range(S):
            j = 0
            for t in range(S):
                if t != s:
                    for d in range(D):
                        red_l[j, d] = cur_l[t, d]
                        red_r[j, d] = cur_r[t, d]
                    j += 1
            _, _, r = _align_kernel(red_l, red_r)
            if (
                best_s < 0
                or r < best_res
                or (r == best_res and ranks[idx_map[s]] < ranks[idx_map[best_s]])
            ):
                best_res = r
                best_s = s
        if best_res / e < delta:
            orig = idx_map[best_s]
            alive[orig] = False
            removed[nrem] = orig
            e_before[nrem] = e
            e_after[nrem] = best_res
            nrem += 1
        else:
            break
    return removed[:nrem], e_before[:nrem], e_after[:nrem], alive


@njit(cache=True, nogil=True)
def _stage2_kernel(SL, SR, CL, CR, cand_ranks, eta, tol_unit, fixed_tol):
    # pragma: no cover - exercised via stage2_recycle
    ns, D = SL.shape
    m = CL.shape[0]
    used = np.zeros(m, np.bool_)
    order = np.empty(m, np.int64)
    e_before = np.empty(m)
    e_after = np.empty(m)
    nrec = 0
    while nrec < m:
        S = ns + nrec
        cur_l = np.empty((S, D))
        cur_r = np.empty((S, D))
        for i in range(ns):
            for d in range(D):
                cur_l[i, d] = SL[i, d]
                cur_r[i, d] = SR[i, d]
        for t in range(nrec):
            c = order[t]
            for d in range(D):
                cur_l[ns + t, d] = CL[c, d]
                cur_r[ns + t, d] = CR[c, d]
        _, _, e = _align_kernel(cur_l, cur_r)
        tol = fixed_tol if fixed_tol >= 0.0 else tol_unit * D * S

        aug_l = np.empty((S + 1, D))
        aug_r = np.empty((S + 1, D))
        for i in range(S):
            for d in range(D):
                aug_l[i, d] = cur_l[i, d]
                aug_r[i, d] = cur_r[i, d]
        best_t = -1
        best_res = np.inf
        for t in range(m):
            if used[t]:
                continue
            for d in range(D):
                aug_l[S, d] = CL[t, d]
                aug_r[S, d] = CR[t, d]
            _, _, r = _align_kernel(aug_l, aug_r)
            if (
                best_t < 0
                or r < best_res
                or (r == best_res and cand_ranks[t] < cand_ranks[best_t])
            ):
                best_res = r
                best_t = t
        if best_t < 0:
            break
        if e > tol:
            accept = best_res / e < eta
        else:
            accept = best_res <= tol
        if not accept:
            break
        used[best_t] = True
        order[nrec] = best_t
        e_before[nrec] = e
        e_after[nrec] = best_res
        nrec += 1
    return order[:nrec], e_before[:nrec], e_after[:nrec]


def _trace_entry(stage: int, pair_id: tuple[int, int], before: float, after: float) -> TraceEntry:
    ratio = after / before if before > 0.0 else None
    return TraceEntry(stage, pair_id, before, after, ratio)


def stage1_remove(
    initial: PairSet, cfg: MatchConfig
) -> tuple[PairSet, list[RemovedPair], list[TraceEntry]]:
    """Iteratively drop the most harmful pair while the delta rule allows.

    Each round evaluates the residual with every single pair left out
    (exactly align-on-the-reduced-set arithmetic), picks the argmin (ties
    to the lowest pair id), and removes it iff ratio < delta and at least
    min_pairs pairs would survive.  Rounds stop early once the residual is
    within the zero tolerance.
    """
    cfg.validate()
    if len(initial) < 2:
        return initial, [], []
    fixed_tol = -1.0 if cfg.zero_residual_tol is None else cfg.zero_residual_tol
    removed_idx, before, after, alive = _stage1_kernel(
        initial.left,
        initial.right,
        _id_ranks(initial.pair_ids),
        cfg.delta,
        cfg.min_pairs,
        ZERO_RESIDUAL_UNIT,
        fixed_tol,
    )
    discarded = []
    trace = []
    for k, idx in enumerate(removed_idx):
        pid = (int(initial.pair_ids[idx, 0]), int(initial.pair_ids[idx, 1]))
        discarded.append(
            RemovedPair(pid, initial.left[idx].copy(), initial.right[idx].copy(), k)
        )
        trace.append(_trace_entry(1, pid, float(before[k]), float(after[k])))
    survivors = initial.take(np.flatnonzero(alive))
    return survivors, discarded, trace


def stage2_recycle(
    survivors: PairSet, discarded: list[RemovedPair], cfg: MatchConfig
) -> tuple[PairSet, list[RemovedPair], list[TraceEntry]]:
    """Re-admit removed pairs whose return costs less than a factor eta.

    Candidates are evaluated by the residual of the current set plus that
    one pair; the argmin (ties to the lowest pair id) is recycled iff the
    growth ratio is below eta, or, when the current residual is already
    within the zero tolerance, iff the grown residual stays within it too.
    Accepted pairs are appended in acceptance order, ids preserved.
    """
    cfg.validate()
    if len(survivors) < 1:
        raise ValueError("stage 2 needs at least one surviving pair")
    if not discarded:
        return survivors, [], []
    cand_l = np.stack([p.left for p in discarded])
    cand_r = np.stack([p.right for p in discarded])
    cand_ids = np.array([p.pair_id for p in discarded], dtype=np.int64)
    fixed_tol = -1.0 if cfg.zero_residual_tol is None else cfg.zero_residual_tol
    order, before, after = _stage2_kernel(
        survivors.left,
        survivors.right,
        cand_l,
        cand_r,
        _id_ranks(cand_ids),
        cfg.eta,
        ZERO_RESIDUAL_UNIT,
        fixed_tol,
    )
    recycled = []
    trace = []
    for k, t in enumerate(order):
        src = discarded[int(t)]
        recycled.append(RemovedPair(src.pair_id, src.left, src.right, k))
        trace.append(_trace_entry(2, src.pair_id, float(before[k]), float(after[k])))
    if recycled:
        final = PairSet(
            np.vstack([survivors.left, cand_l[order]]),
            np.vstack([survivors.right, cand_r[order]]),
            np.vstack([survivors.pair_ids, cand_ids[order]]),
        )
    else:
        final = survivors
    return final, recycled, trace


def match(
    codebook: Codebook,
    test: FeatureSet,
    cfg: MatchConfig | None = None,
    run_stages: bool = True,
) -> MatchResult:
    """Full trial: initial match, then both stages unless disabled.

    Stages are skipped when fewer than two initial pairs exist (nothing to
    align against) or when run_stages is False (baseline mode); the final
    set is then the initial set.
    """
    if cfg is None:
        cfg = MatchConfig()
    cfg.validate()
    initial = initial_match(codebook, test, cfg)
    if run_stages and len(initial) >= 2:
        survivors, discarded, trace1 = stage1_remove(initial, cfg)
        final, recycled, trace2 = stage2_recycle(survivors, discarded, cfg)
        trace = trace1 + trace2
    else:
        discarded, recycled, trace = [], [], []
        final = initial
    return MatchResult(
        initial=initial,
        discarded=discarded,
        recycled=recycled,
        final=final,
        residual_trace=trace,
        n_test_frames=len(test),
    )
