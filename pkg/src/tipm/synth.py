"""Synthetic data: planted alignment problems and toy speaker corpora."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .feature_io import FeatureSet, write_features
from .procrustes import PairSet
from .rng import Xoshiro256StarStar, derive_seed

MEAN_SPHERE_RADIUS = 5.0  # speaker component means live on this sphere
OUTLIER_BOX_UNIT = 3.0  # corrupted-frame box half-width per unit outlier_scale


@dataclass
class SynthSpec:
    seed: int
    n_speakers: int = 10
    components_per_speaker: int = 4
    dim: int = 13
    frames_per_utterance: int = 200
    n_enroll: int = 5
    n_test: int = 20
    outlier_fraction: float = 0.0  # fraction of test frames replaced by noise
    outlier_scale: float = 1.0

    def validate(self) -> None:
        if self.n_speakers < 1 or self.components_per_speaker < 1:
            raise ValueError("speaker and component counts must be >= 1")
        if self.dim < 2:
            raise ValueError("dim must be >= 2")
        if self.frames_per_utterance < 1:
            raise ValueError("frames_per_utterance must be >= 1")
        if self.n_enroll < 1 or self.n_test < 1:
            raise ValueError("n_enroll and n_test must be >= 1")
        if not 0.0 <= self.outlier_fraction < 1.0:
            raise ValueError("outlier_fraction must be in [0, 1)")
        if self.outlier_scale < 1.0:
            raise ValueError("outlier_scale must be >= 1")


@dataclass
class SpeakerData:
    speaker_id: str
    enroll: list[FeatureSet]
    test: list[FeatureSet]


@dataclass
class SynthCorpus:
    spec: SynthSpec
    speakers: list[SpeakerData]


def _gaussian_matrix(rng: Xoshiro256StarStar, rows: int, cols: int) -> np.ndarray:
    return np.array(rng.normals(rows * cols)).reshape(rows, cols)


def _random_rotation(rng: Xoshiro256StarStar, d: int) -> np.ndarray:
    """Haar-like orthogonal matrix: modified Gram-Schmidt QR of a Gaussian.

    MGS yields positive R diagonals by construction, which is the
    sign-fixed convention; the projection pass runs twice for numerical
    hygiene.  A Gaussian matrix is almost surely full rank, so the column
    norms never vanish.
    """
    A = _gaussian_matrix(rng, d, d)
    Q = np.empty((d, d))
    for j in range(d):
        v = A[:, j].copy()
        for _ in range(2):
            for k in range(j):
                v -= (Q[:, k] @ v) * Q[:, k]
        Q[:, j] = v / np.linalg.norm(v)
    return Q


def _ids(n: int) -> np.ndarray:
    ids = np.arange(n, dtype=np.int64)
    return np.stack([ids, ids], axis=1)


def planted_rotation(seed: int, s: int, d: int) -> tuple[PairSet, np.ndarray]:
    """Pairs related by an exact orthogonal map; returns (pairs, rotation)."""
    if s < 1 or d < 2:
        raise ValueError("need s >= 1 and d >= 2")
    rng = Xoshiro256StarStar(seed)
    left = _gaussian_matrix(rng, s, d)
    rotation = _random_rotation(rng, d)
    return PairSet(left, left @ rotation, _ids(s)), rotation


def planted_outliers(
    seed: int, s_in: int, s_out: int, d: int, scale: float
) -> tuple[PairSet, tuple[tuple[int, int], ...]]:
    """Planted rotation with s_out pairs replaced by uniform noise.

    Outlier positions are a random subset; their right-hand rows are drawn
    from U[-r, r]^d with r = scale times the largest clean right-row norm,
    so at scale >= a few they are unambiguous mismatches.  Returns the
    pairs and the outlier pair ids, ascending.
    """
    if s_in < 4 or s_out < 0 or d < 2:
        raise ValueError("need s_in >= 4, s_out >= 0, d >= 2")
    if scale <= 0:
        raise ValueError("scale must be > 0")
    s = s_in + s_out
    rng = Xoshiro256StarStar(seed)
    left = _gaussian_matrix(rng, s, d)
    rotation = _random_rotation(rng, d)
    right = left @ rotation

    # Fisher-Yates, then take the first s_out slots as outlier positions.
    idx = list(range(s))
    for i in range(s - 1, 0, -1):
        j = rng.randint_below(i + 1)
        idx[i], idx[j] = idx[j], idx[i]
    positions = sorted(idx[:s_out])

    radius = float(np.sqrt((right**2).sum(axis=1)).max())
    r = scale * radius
    for pos in positions:
        right[pos] = np.array([(2.0 * rng.uniform() - 1.0) * r for _ in range(d)])
    outlier_ids = tuple((p, p) for p in positions)
    return PairSet(left, right, _ids(s)), outlier_ids


def _utterance_frames(
    rng: Xoshiro256StarStar, means: np.ndarray, spec: SynthSpec, corrupt: bool
) -> np.ndarray:
    p = spec.frames_per_utterance
    d = spec.dim
    frames = np.empty((p, d))
    for i in range(p):
        comp = rng.randint_below(means.shape[0])
        frames[i] = means[comp] + np.array(rng.normals(d))
    if corrupt and spec.outlier_fraction > 0.0:
        k = int(round(spec.outlier_fraction * p))
        idx = list(range(p))
        for i in range(p - 1, 0, -1):
            j = rng.randint_below(i + 1)
            idx[i], idx[j] = idx[j], idx[i]
        half = OUTLIER_BOX_UNIT * spec.outlier_scale
        for pos in sorted(idx[:k]):
            frames[pos] = np.array(
                [(2.0 * rng.uniform() - 1.0) * half for _ in range(d)]
            )
    return frames


def synth_population(spec: SynthSpec) -> SynthCorpus:
    """Toy speaker population: one Gaussian mixture per speaker.

    Component means land on a fixed-radius sphere with unit covariance
    around each, so speakers overlap a little but stay separable.  Test
    utterances optionally have a fraction of frames replaced by uniform
    noise whose magnitude sits near the data shell, making them matchable
    mismatches rather than trivially filtered ones.  Everything derives
    from the seed: speaker k uses stream (1, k), enrollment utterance u
    stream (1, k, 2, u), test utterance u stream (1, k, 3, u).
    """
    spec.validate()
    speakers: list[SpeakerData] = []
    for sp in range(spec.n_speakers):
        speaker_id = f"spk{sp:02d}"
        srng = Xoshiro256StarStar(derive_seed(spec.seed, 1, sp))
        means = _gaussian_matrix(srng, spec.components_per_speaker, spec.dim)
        norms = np.sqrt((means**2).sum(axis=1, keepdims=True))
        means = means * (MEAN_SPHERE_RADIUS / norms)

        enroll = []
        for u in range(spec.n_enroll):
            rng = Xoshiro256StarStar(derive_seed(spec.seed, 1, sp, 2, u))
            enroll.append(
                FeatureSet(
                    _utterance_frames(rng, means, spec, corrupt=False),
                    f"{speaker_id}_enroll{u:02d}",
                )
            )
        test = []
        for u in range(spec.n_test):
            rng = Xoshiro256StarStar(derive_seed(spec.seed, 1, sp, 3, u))
            test.append(
                FeatureSet(
                    _utterance_frames(rng, means, spec, corrupt=True),
                    f"{speaker_id}_test{u:02d}",
                )
            )
        speakers.append(SpeakerData(speaker_id, enroll, test))
    return SynthCorpus(spec, speakers)


def write_corpus(corpus: SynthCorpus, out_dir: str | Path) -> Path:
    """Write feature files and the full cross-product trial list.

    Layout: enroll/<speaker>/<utt>.vqf, test/<utt>.vqf, trials.tsv with
    utterance paths relative to the corpus root.  Returns the trials path.
    """
    out = Path(out_dir)
    for spk in corpus.speakers:
        spk_dir = out / "enroll" / spk.speaker_id
        spk_dir.mkdir(parents=True, exist_ok=True)
        for utt in spk.enroll:
            write_features(spk_dir / f"{utt.utterance_id}.vqf", utt)
    test_dir = out / "test"
    test_dir.mkdir(parents=True, exist_ok=True)
    for spk in corpus.speakers:
        for utt in spk.test:
            write_features(test_dir / f"{utt.utterance_id}.vqf", utt)

    trials_path = out / "trials.tsv"
    with open(trials_path, "w", encoding="utf-8") as fh:
        for spk in corpus.speakers:
            for utt in spk.test:
                for model in corpus.speakers:
                    label = "target" if model.speaker_id == spk.speaker_id else "nontarget"
                    fh.write(f"{model.speaker_id}\ttest/{utt.utterance_id}.vqf\t{label}\n")
    return trials_path
