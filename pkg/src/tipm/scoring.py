"""Trial scoring and z-norm calibration."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .codebook import Codebook
from .feature_io import FeatureSet, FormatError
from .matcher import MatchConfig, MatchResult, match

SIGMA_FLOOR = 1e-6


@dataclass
class ZNormStats:
    speaker_id: str
    mu: float
    sigma: float
    cohort_size: int
    degenerate: bool = False  # sigma hit the floor


@dataclass
class TrialScore:
    model_id: str
    utterance_id: str
    raw: float
    normalized: float
    label: str  # "target" or "nontarget"


def raw_score(result: MatchResult, test: FeatureSet, baseline: bool = False) -> float:
    """Matched-pair fraction: |final pairs| / |test frames|, in [0, 1].

    Baseline mode counts the initial pairs instead, which is what the
    matcher produces when the refinement stages are disabled.
    """
    n = len(test)
    if n < 1:
        raise ValueError("test feature set has no frames")
    num = result.n_initial if baseline else result.n_final
    return num / n


def estimate_znorm(
    codebook: Codebook,
    cohort: Sequence[FeatureSet],
    match_cfg: MatchConfig | None = None,
    *,
    baseline: bool = False,
    run_stages: bool = True,
) -> ZNormStats:
    """Impostor-score statistics for one model over a cohort.

    Scores every cohort utterance against the model, then records the mean
    and the unbiased (n-1) standard deviation.  A spread below 1e-6 is
    floored there and flagged degenerate rather than letting later
    normalization divide by ~0.
    """
    if len(cohort) < 2:
        raise ValueError(f"cohort needs >= 2 utterances, got {len(cohort)}")
    if match_cfg is None:
        match_cfg = MatchConfig()
    scores = np.array(
        [
            raw_score(match(codebook, utt, match_cfg, run_stages), utt, baseline)
            for utt in cohort
        ]
    )
    mu = float(scores.mean())
    sigma = float(scores.std(ddof=1))
    degenerate = sigma < SIGMA_FLOOR
    if degenerate:
        sigma = SIGMA_FLOOR
    return ZNormStats(codebook.speaker_id, mu, sigma, len(cohort), degenerate)


def znorm(raw: float, stats: ZNormStats) -> float:
    return (raw - stats.mu) / stats.sigma


# ---------------------------------------------------------------------------
# Stats file: speaker_id<TAB>mu<TAB>sigma<TAB>cohort_size


def write_znorm_stats(path: str | Path, stats: Sequence[ZNormStats]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for st in stats:
            fh.write(f"{st.speaker_id}\t{st.mu!r}\t{st.sigma!r}\t{st.cohort_size}\n")


def read_znorm_stats(path: str | Path) -> dict[str, ZNormStats]:
    out: dict[str, ZNormStats] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise FormatError(
                    f"{path}:{lineno}: expected speaker_id<TAB>mu<TAB>sigma<TAB>cohort_size"
                )
            speaker_id, mu, sigma, size = parts
            if speaker_id in out:
                raise FormatError(f"{path}:{lineno}: duplicate speaker_id {speaker_id!r}")
            try:
                out[speaker_id] = ZNormStats(
                    speaker_id, float(mu), float(sigma), int(size)
                )
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
    return out
