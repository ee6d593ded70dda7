"""Vector-quantization codebooks trained by deterministic k-means."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .feature_io import FeatureSet, FormatError, _read_matrix, _write_matrix
from .rng import Xoshiro256StarStar

_CODEBOOK_MAGIC = b"VQC1"
_META_SUFFIX = ".meta"


@dataclass
class Codebook:
    speaker_id: str
    centroids: np.ndarray  # (q, dim)
    train_distortion: float = 0.0  # final mean squared quantization error
    mean_quant_dist: float | None = None  # mean Euclidean distance at train time
    distortion_trace: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        self.centroids = np.asarray(self.centroids, dtype=np.float64)
        if self.centroids.ndim != 2 or self.centroids.shape[0] < 1:
            raise ValueError("centroids must be a non-empty 2-D array")
        if not np.all(np.isfinite(self.centroids)):
            raise ValueError("centroids contain NaN or inf")

    @property
    def q(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]


@dataclass
class KMeansConfig:
    q: int = 64
    max_iters: int = 100
    rel_tol: float = 1e-6
    seed: int = 0

    def validate(self) -> None:
        if self.q < 1:
            raise ValueError("q must be >= 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.rel_tol < 0:
            raise ValueError("rel_tol must be >= 0")


def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    # (n, q) squared Euclidean distances via explicit differences: exact
    # zeros when a point coincides with a centroid, unlike the dot-product
    # expansion, and a fixed reduction order for reproducibility.
    return ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)


def _kmeanspp_init(X: np.ndarray, q: int, rng: Xoshiro256StarStar) -> np.ndarray:
    n = X.shape[0]
    chosen = np.empty(q, dtype=np.int64)
    chosen[0] = rng.randint_below(n)
    d2 = ((X - X[chosen[0]]) ** 2).sum(axis=1)
    for k in range(1, q):
        total = float(d2.sum())
        if total > 0.0:
            r = rng.uniform() * total
            idx = int(np.searchsorted(np.cumsum(d2), r, side="right"))
            idx = min(idx, n - 1)
        else:
            # All remaining mass is on already-chosen points (duplicate
            # data); fall back to the lowest unchosen index.
            used = set(int(c) for c in chosen[:k])
            idx = next(i for i in range(n) if i not in used)
        chosen[k] = idx
        d2 = np.minimum(d2, ((X - X[idx]) ** 2).sum(axis=1))
    return X[chosen].copy()


def train_codebook(
    features: FeatureSet, cfg: KMeansConfig | None = None, speaker_id: str = ""
) -> Codebook:
    """Train a q-entry codebook with k-means (k-means++ seeding).

    Each iteration assigns every frame to its nearest centroid (ties to
    the lowest index), repairs empty clusters by reassigning the frame
    farthest from its current centroid (one frame per empty cluster,
    lowest cluster index first), then moves centroids to their members'
    means.  The recorded distortion sequence is measured after the move
    and is non-increasing; iteration stops when the relative improvement
    drops below rel_tol or max_iters is hit.  All randomness comes from
    the seeded generator, so identical inputs give identical codebooks
    bit for bit.
    """
    if cfg is None:
        cfg = KMeansConfig()
    cfg.validate()
    X = features.vectors
    n = X.shape[0]
    if n == 0:
        raise ValueError("cannot train on an empty feature set")
    if cfg.q > n:
        raise ValueError(f"q={cfg.q} exceeds frame count {n}")

    rng = Xoshiro256StarStar(cfg.seed)
    centroids = _kmeanspp_init(X, cfg.q, rng)

    trace: list[float] = []
    prev = None
    for _ in range(cfg.max_iters):
        d2 = _sq_dists(X, centroids)
        assign = np.argmin(d2, axis=1)
        own = d2[np.arange(n), assign]

        counts = np.bincount(assign, minlength=cfg.q)
        if np.any(counts == 0):
            own = own.copy()
            for j in np.flatnonzero(counts == 0):
                far = int(np.argmax(own))
                counts[assign[far]] -= 1
                assign[far] = j
                counts[j] = 1
                own[far] = -1.0  # each frame repairs at most one cluster

        new_centroids = centroids.copy()
        for j in range(cfg.q):
            members = X[assign == j]
            if members.shape[0] > 0:
                new_centroids[j] = members.mean(axis=0)
        centroids = new_centroids

        distortion = float(
            np.mean(((X - centroids[assign]) ** 2).sum(axis=1))
        )
        trace.append(distortion)
        if prev is not None:
            if prev == 0.0 or (prev - distortion) / prev < cfg.rel_tol:
                break
        prev = distortion

    # Final optimal assignment under the final centroids; this is what
    # quantize() will see, and it can only improve on the last recorded
    # in-loop figure.
    d2 = _sq_dists(X, centroids)
    best = d2.min(axis=1)
    final_distortion = float(best.mean())
    trace.append(final_distortion)
    mean_dist = float(np.sqrt(best).mean())

    return Codebook(
        speaker_id=speaker_id,
        centroids=centroids,
        train_distortion=final_distortion,
        mean_quant_dist=mean_dist,
        distortion_trace=tuple(trace),
    )


def quantize(codebook: Codebook, frame: np.ndarray) -> tuple[int, float]:
    """Nearest centroid: (index, Euclidean distance), ties to lowest index."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape != (codebook.dim,):
        raise ValueError(f"frame shape {frame.shape} != (dim,)=({codebook.dim},)")
    d2 = ((codebook.centroids - frame) ** 2).sum(axis=1)
    idx = int(np.argmin(d2))
    return idx, float(np.sqrt(d2[idx]))


# ---------------------------------------------------------------------------
# Serialization


def write_codebook(path: str | Path, codebook: Codebook) -> None:
    """Write centroids in the binary container plus a text .meta sidecar.

    The sidecar carries speaker_id and the training statistics the binary
    format has no field for (the default initial-match threshold needs the
    mean training quantization distance).
    """
    _write_matrix(path, _CODEBOOK_MAGIC, codebook.centroids)
    meta_lines = [
        f"speaker_id\t{codebook.speaker_id}",
        f"train_distortion\t{codebook.train_distortion!r}",
    ]
    if codebook.mean_quant_dist is not None:
        meta_lines.append(f"mean_quant_dist\t{codebook.mean_quant_dist!r}")
    Path(str(path) + _META_SUFFIX).write_text(
        "\n".join(meta_lines) + "\n", encoding="utf-8"
    )


def read_codebook(path: str | Path) -> Codebook:
    """Read a codebook; speaker id falls back to the file stem."""
    centroids = _read_matrix(path, _CODEBOOK_MAGIC)
    speaker_id = Path(path).stem
    train_distortion = 0.0
    mean_quant_dist = None
    meta_path = Path(str(path) + _META_SUFFIX)
    if meta_path.exists():
        for lineno, line in enumerate(meta_path.read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            key, sep, value = line.partition("\t")
            if not sep:
                raise FormatError(f"{meta_path}:{lineno}: expected key<TAB>value")
            if key == "speaker_id":
                speaker_id = value
            elif key == "train_distortion":
                train_distortion = float(value)
            elif key == "mean_quant_dist":
                mean_quant_dist = float(value)
            else:
                raise FormatError(f"{meta_path}:{lineno}: unknown key {key!r}")
    return Codebook(
        speaker_id=speaker_id,
        centroids=centroids,
        train_distortion=train_distortion,
        mean_quant_dist=mean_quant_dist,
    )


def write_registry(path: str | Path, entries: list[tuple[str, str]]) -> None:
    """Model registry: one `speaker_id<TAB>codebook_path` line per model."""
    with open(path, "w", encoding="utf-8") as fh:
        for speaker_id, cb_path in entries:
            fh.write(f"{speaker_id}\t{cb_path}\n")


def read_registry(path: str | Path) -> list[tuple[str, Path]]:
    """Read a registry; relative codebook paths resolve against its directory."""
    base = Path(path).parent
    entries: list[tuple[str, Path]] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            speaker_id, sep, cb_path = line.partition("\t")
            if not sep or not speaker_id or not cb_path:
                raise FormatError(
                    f"{path}:{lineno}: expected speaker_id<TAB>codebook_path"
                )
            if speaker_id in seen:
                raise FormatError(f"{path}:{lineno}: duplicate speaker_id {speaker_id!r}")
            seen.add(speaker_id)
            p = Path(cb_path)
            entries.append((speaker_id, p if p.is_absolute() else base / p))
    return entries
