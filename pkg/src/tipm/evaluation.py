"""Trial execution, DET curves, EER, and report files."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .codebook import Codebook
from .feature_io import FeatureSet, FormatError
from .matcher import MatchConfig, MatchResult, match
from .scoring import TrialScore, ZNormStats, raw_score, znorm

_LABELS = ("target", "nontarget")


@dataclass
class TrialEntry:
    model_id: str
    utterance: str  # feature file path, resolved by the caller's loader
    label: str

    def __post_init__(self) -> None:
        if self.label not in _LABELS:
            raise ValueError(f"label must be target|nontarget, got {self.label!r}")


@dataclass
class TrialError:
    model_id: str
    utterance: str
    reason: str


@dataclass
class DetCurve:
    """Operating points swept over the distinct scores, plus one closing
    point just above the maximum where FAR=0 / FRR=1."""

    thresholds: np.ndarray
    far: np.ndarray  # fraction of nontarget scores >= threshold
    frr: np.ndarray  # fraction of target scores < threshold
    eer: float
    eer_threshold: float


@dataclass
class RetentionReport:
    n_trials: int
    initial_ratio: float
    after_stage1_ratio: float
    final_ratio: float


@dataclass
class SummaryRow:
    condition: str
    snr: str
    baseline_eer: float
    treatment_eer: float
    abs_improvement: float
    rel_improvement_pct: float


def _det_from_arrays(target: np.ndarray, nontarget: np.ndarray) -> DetCurve:
    target = np.asarray(target, dtype=np.float64)
    nontarget = np.asarray(nontarget, dtype=np.float64)
    if target.size == 0 or nontarget.size == 0:
        raise ValueError("need at least one target and one nontarget score")
    tar_sorted = np.sort(target)
    non_sorted = np.sort(nontarget)
    thr = np.unique(np.concatenate([tar_sorted, non_sorted]))

    far = (non_sorted.size - np.searchsorted(non_sorted, thr, side="left")) / non_sorted.size
    frr = np.searchsorted(tar_sorted, thr, side="left") / tar_sorted.size
    thr = np.append(thr, np.nextafter(thr[-1], np.inf))
    far = np.append(far, 0.0)
    frr = np.append(frr, 1.0)

    # far - frr is non-increasing, starts at 1 and ends at -1, so the sign
    # change exists; interpolate linearly inside the bracketing segment.
    diff = far - frr
    k = int(np.argmax(diff <= 0.0))
    if diff[k] == 0.0:
        eer = far[k]
        eer_thr = thr[k]
    else:
        alpha = diff[k - 1] / (diff[k - 1] - diff[k])
        eer = far[k - 1] + alpha * (far[k] - far[k - 1])
        eer_thr = thr[k - 1] + alpha * (thr[k] - thr[k - 1])
    return DetCurve(thr, far, frr, float(eer), float(eer_thr))


def compute_det(scores: Sequence[TrialScore], use_normalized: bool = True) -> DetCurve:
    """DET curve and EER from labeled trial scores.

    FAR at a threshold is the fraction of nontarget scores at or above it;
    FRR is the fraction of target scores strictly below.  The EER comes
    from linear interpolation where FAR - FRR changes sign, which makes it
    invariant under strictly increasing transforms of the scores.
    """
    pick = (lambda s: s.normalized) if use_normalized else (lambda s: s.raw)
    target = np.array([pick(s) for s in scores if s.label == "target"])
    nontarget = np.array([pick(s) for s in scores if s.label == "nontarget"])
    return _det_from_arrays(target, nontarget)


def improvement(baseline_eer: float, treatment_eer: float) -> tuple[float, float]:
    """Absolute and relative (%) improvement of treatment over baseline."""
    abs_improvement = baseline_eer - treatment_eer
    if baseline_eer == 0.0:
        return abs_improvement, 0.0
    return abs_improvement, abs_improvement / baseline_eer * 100.0


@dataclass
class TrialRunOutcome:
    scores: list[TrialScore]
    errors: list[TrialError]
    results: list[MatchResult]  # parallel to scores


def run_trials(
    models: Mapping[str, Codebook],
    trials: Sequence[TrialEntry],
    load_features: Callable[[str], FeatureSet],
    match_cfg: MatchConfig | None = None,
    znorm_stats: Mapping[str, ZNormStats] | None = None,
    *,
    baseline: bool = False,
    run_stages: bool = True,
    jobs: int = 1,
) -> TrialRunOutcome:
    """Score every trial; per-entry failures are recorded, not fatal.

    A missing model or an unloadable utterance yields a TrialError and the
    run continues.  Scores come back in trial order regardless of the
    worker count, so outputs are byte-stable under any --jobs setting.
    Models without z-norm stats score normalized == raw.
    """
    if match_cfg is None:
        match_cfg = MatchConfig()
    match_cfg.validate()
    if jobs < 1:
        raise ValueError("jobs must be >= 1")

    def one(entry: TrialEntry):
        cb = models.get(entry.model_id)
        if cb is None:
            return TrialError(entry.model_id, entry.utterance, "unknown model id")
        try:
            feats = load_features(entry.utterance)
        except Exception as exc:  # per-entry error record by contract
            return TrialError(entry.model_id, entry.utterance, str(exc))
        result = match(cb, feats, match_cfg, run_stages)
        raw = raw_score(result, feats, baseline)
        stats = znorm_stats.get(entry.model_id) if znorm_stats else None
        normalized = znorm(raw, stats) if stats is not None else raw
        return (
            TrialScore(entry.model_id, feats.utterance_id, raw, normalized, entry.label),
            result,
        )

    if jobs == 1 or len(trials) < 2:
        outcomes = [one(t) for t in trials]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(one, trials))

    scores: list[TrialScore] = []
    errors: list[TrialError] = []
    results: list[MatchResult] = []
    for item in outcomes:
        if isinstance(item, TrialError):
            errors.append(item)
        else:
            score, result = item
            scores.append(score)
            results.append(result)
    return TrialRunOutcome(scores, errors, results)


def pair_retention_report(results: Sequence[MatchResult]) -> RetentionReport:
    """Mean matched-pair fractions before and after each stage."""
    if not results:
        raise ValueError("no match results to aggregate")
    initial = []
    after1 = []
    final = []
    for r in results:
        n = r.n_test_frames
        if n < 1:
            raise ValueError("match result has no test frames")
        initial.append(r.n_initial / n)
        after1.append(r.n_after_stage1 / n)
        final.append(r.n_final / n)
    return RetentionReport(
        len(results),
        float(np.mean(initial)),
        float(np.mean(after1)),
        float(np.mean(final)),
    )


# ---------------------------------------------------------------------------
# Text formats


def read_trial_list(path: str | Path) -> list[TrialEntry]:
    """Trial list: model_id<TAB>utterance<TAB>target|nontarget per line."""
    entries: list[TrialEntry] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise FormatError(
                    f"{path}:{lineno}: expected model_id<TAB>utterance<TAB>label"
                )
            model_id, utterance, label = parts
            if label not in _LABELS:
                raise FormatError(
                    f"{path}:{lineno}: label must be target|nontarget, got {label!r}"
                )
            entries.append(TrialEntry(model_id, utterance, label))
    return entries


def write_trial_list(path: str | Path, entries: Sequence[TrialEntry]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in entries:
            fh.write(f"{e.model_id}\t{e.utterance}\t{e.label}\n")


def write_scores_csv(path: str | Path, scores: Sequence[TrialScore]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("model_id,utterance_id,raw,normalized,label\n")
        for s in scores:
            fh.write(f"{s.model_id},{s.utterance_id},{s.raw!r},{s.normalized!r},{s.label}\n")


def read_scores_csv(path: str | Path) -> list[TrialScore]:
    scores: list[TrialScore] = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != "model_id,utterance_id,raw,normalized,label":
            raise FormatError(f"{path}: unexpected scores header {header!r}")
        for lineno, line in enumerate(fh, 2):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split(",")
            if len(parts) != 5:
                raise FormatError(f"{path}:{lineno}: expected 5 columns")
            model_id, utterance_id, raw, normalized, label = parts
            if label not in _LABELS:
                raise FormatError(f"{path}:{lineno}: bad label {label!r}")
            scores.append(
                TrialScore(model_id, utterance_id, float(raw), float(normalized), label)
            )
    return scores


def write_det_csv(path: str | Path, det: DetCurve) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("threshold,far,frr\n")
        for t, fa, fr in zip(det.thresholds, det.far, det.frr):
            fh.write(f"{float(t)!r},{float(fa)!r},{float(fr)!r}\n")


def write_summary_csv(path: str | Path, row: SummaryRow) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("condition,snr,baseline_eer,treatment_eer,abs_improvement,rel_improvement_pct\n")
        fh.write(
            f"{row.condition},{row.snr},{row.baseline_eer!r},{row.treatment_eer!r},"
            f"{row.abs_improvement!r},{row.rel_improvement_pct!r}\n"
        )


def write_retention_csv(
    path: str | Path, scores: Sequence[TrialScore], results: Sequence[MatchResult]
) -> None:
    """Per-trial pair counters, one row per successfully scored trial."""
    if len(scores) != len(results):
        raise ValueError("scores and results must be parallel")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("model_id,utterance_id,n_frames,n_initial,n_after_stage1,n_final\n")
        for s, r in zip(scores, results):
            fh.write(
                f"{s.model_id},{s.utterance_id},{r.n_test_frames},"
                f"{r.n_initial},{r.n_after_stage1},{r.n_final}\n"
            )


def read_retention_csv(path: str | Path) -> list[tuple[str, str, int, int, int, int]]:
    rows: list[tuple[str, str, int, int, int, int]] = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != "model_id,utterance_id,n_frames,n_initial,n_after_stage1,n_final":
            raise FormatError(f"{path}: unexpected retention header {header!r}")
        for lineno, line in enumerate(fh, 2):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split(",")
            if len(parts) != 6:
                raise FormatError(f"{path}:{lineno}: expected 6 columns")
            try:
                rows.append(
                    (
                        parts[0],
                        parts[1],
                        int(parts[2]),
                        int(parts[3]),
                        int(parts[4]),
                        int(parts[5]),
                    )
                )
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
    return rows


def aggregate_retention(rows: Sequence[tuple[str, str, int, int, int, int]]) -> RetentionReport:
    if not rows:
        raise ValueError("no retention rows to aggregate")
    initial = [r[3] / r[2] for r in rows]
    after1 = [r[4] / r[2] for r in rows]
    final = [r[5] / r[2] for r in rows]
    return RetentionReport(
        len(rows), float(np.mean(initial)), float(np.mean(after1)), float(np.mean(final))
    )
