"""Orthogonal alignment of paired vector sets.

Given matched rows X_l (codewords) and X_q (test frames), find the
orthogonal matrix that minimizes ||X_l @ Omega - X_q||_F.  The minimizer is
U @ V.T where X_l.T @ X_q = U S V.T, computed here by a one-sided Jacobi
SVD on the small cross-covariance: simple, accurate, and with a fixed sweep
order so results are bit-for-bit reproducible.  Reflections are allowed
(det(Omega) may be -1); the residual is the squared Frobenius norm after
rotation, evaluated literally so it is exactly non-negative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

SVD_REL_TOL = 1e-14
SVD_MAX_SWEEPS = 60


@dataclass
class PairSet:
    """Matched rows: left[i] pairs with right[i], tagged by (codeword, frame)."""

    left: np.ndarray  # (S, D)
    right: np.ndarray  # (S, D)
    pair_ids: np.ndarray  # (S, 2) int64, unique rows

    def __post_init__(self) -> None:
        self.left = np.asarray(self.left, dtype=np.float64)
        self.right = np.asarray(self.right, dtype=np.float64)
        self.pair_ids = np.asarray(self.pair_ids, dtype=np.int64)
        if self.left.ndim != 2 or self.left.shape != self.right.shape:
            raise ValueError("left and right must be 2-D with equal shapes")
        if self.pair_ids.shape != (self.left.shape[0], 2):
            raise ValueError("pair_ids must be (S, 2)")
        if not (np.all(np.isfinite(self.left)) and np.all(np.isfinite(self.right))):
            raise ValueError("pair vectors contain NaN or inf")
        if len(self) > 1:
            if len(np.unique(self.pair_ids, axis=0)) != len(self):
                raise ValueError("pair_ids must be unique")

    def __len__(self) -> int:
        return self.left.shape[0]

    @property
    def dim(self) -> int:
        return self.left.shape[1]

    def remove(self, index: int) -> "PairSet":
        if not 0 <= index < len(self):
            raise IndexError(f"pair index {index} out of range for S={len(self)}")
        return PairSet(
            np.delete(self.left, index, axis=0),
            np.delete(self.right, index, axis=0),
            np.delete(self.pair_ids, index, axis=0),
        )

    def take(self, indices) -> "PairSet":
        idx = np.asarray(indices, dtype=np.int64)
        return PairSet(self.left[idx], self.right[idx], self.pair_ids[idx])


@dataclass
class AlignmentResult:
    rotation: np.ndarray  # (D, D) orthogonal
    residual: float  # ||X_l @ rotation - X_q||_F^2
    singular_values: np.ndarray  # (D,) non-increasing


@njit(cache=True, nogil=True)
def _jacobi_svd(M):  # pragma: no cover - exercised via svd_small
    D = M.shape[0]
    A = M.copy()
    V = np.eye(D)
    for _ in range(SVD_MAX_SWEEPS):
        rotated = False
        for p in range(D - 1):
            for q in range(p + 1, D):
                app = 0.0
                aqq = 0.0
                apq = 0.0
                for i in range(D):
                    app += A[i, p] * A[i, p]
                    aqq += A[i, q] * A[i, q]
                    apq += A[i, p] * A[i, q]
                if app * aqq == 0.0:
                    continue  # a zero column is already orthogonal to everything
                if abs(apq) <= SVD_REL_TOL * np.sqrt(app * aqq):
                    continue
                rotated = True
                zeta = (aqq - app) / (2.0 * apq)
                if zeta >= 0.0:
                    t = 1.0 / (zeta + np.sqrt(1.0 + zeta * zeta))
                else:
                    t = -1.0 / (-zeta + np.sqrt(1.0 + zeta * zeta))
                cs = 1.0 / np.sqrt(1.0 + t * t)
                sn = cs * t
                for i in range(D):
                    ap = A[i, p]
                    aq = A[i, q]
                    A[i, p] = cs * ap - sn * aq
                    A[i, q] = sn * ap + cs * aq
                    vp = V[i, p]
                    vq = V[i, q]
                    V[i, p] = cs * vp - sn * vq
                    V[i, q] = sn * vp + cs * vq
        if not rotated:
            break

    # Column norms are the singular values; sort them non-increasing with a
    # stable insertion sort so ties keep the deterministic sweep order.
    s_raw = np.empty(D)
    for j in range(D):
        acc = 0.0
        for i in range(D):
            acc += A[i, j] * A[i, j]
        s_raw[j] = np.sqrt(acc)
    order = np.arange(D)
    for j in range(1, D):
        key = order[j]
        kv = s_raw[key]
        i = j - 1
        while i >= 0 and s_raw[order[i]] < kv:
            order[i + 1] = order[i]
            i -= 1
        order[i + 1] = key

    s = np.empty(D)
    U = np.zeros((D, D))
    Vs = np.empty((D, D))
    for jj in range(D):
        j = order[jj]
        s[jj] = s_raw[j]
        for i in range(D):
            Vs[i, jj] = V[i, j]
        if s_raw[j] > 0.0:
            for i in range(D):
                U[i, jj] = A[i, j] / s_raw[j]

    # Exact-zero singular values leave empty U columns: complete the basis
    # deterministically (best standard basis vector, Gram-Schmidt twice).
    for jj in range(D):
        if s[jj] > 0.0:
            continue
        best_k = -1
        best_norm = -1.0
        for k in range(D):
            # residual norm of e_k against the filled columns
            acc = 1.0
            for c in range(D):
                if c == jj or s[c] > 0.0 or c < jj:
                    dot = U[k, c]
                    acc -= dot * dot
            if acc > best_norm:
                best_norm = acc
                best_k = k
        col = np.zeros(D)
        col[best_k] = 1.0
        for _ in range(2):
            for c in range(D):
                if c == jj:
                    continue
                if s[c] > 0.0 or c < jj:
                    dot = 0.0
                    for i in range(D):
                        dot += col[i] * U[i, c]
                    for i in range(D):
                        col[i] -= dot * U[i, c]
        nrm = 0.0
        for i in range(D):
            nrm += col[i] * col[i]
        nrm = np.sqrt(nrm)
        for i in range(D):
            U[i, jj] = col[i] / nrm
    return U, s, Vs


@njit(cache=True, nogil=True)
def _align_kernel(Xl, Xq):  # pragma: no cover - exercised via align
    S, D = Xl.shape
    M = np.zeros((D, D))
    for s in range(S):
        for a in range(D):
            xla = Xl[s, a]
            for b in range(D):
                M[a, b] += xla * Xq[s, b]
    U, sv, V = _jacobi_svd(M)
    Om = np.empty((D, D))
    for a in range(D):
        for b in range(D):
            acc = 0.0
            for k in range(D):
                acc += U[a, k] * V[b, k]
            Om[a, b] = acc
    resid = 0.0
    for s in range(S):
        for b in range(D):
            acc = 0.0
            for a in range(D):
                acc += Xl[s, a] * Om[a, b]
            d = acc - Xq[s, b]
            resid += d * d
    return Om, sv, resid


def svd_small(M: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One-sided Jacobi SVD of a small square matrix.

    Returns (U, s, V) with M = U @ diag(s) @ V.T, s non-increasing and
    non-negative, U and V orthogonal.  Sweeps run in a fixed (p, q) order
    and stop when every off-diagonal rotation falls below 1e-14 relative
    to the column norms (hard cap 60 sweeps), so ties among singular
    vectors resolve deterministically.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("M must be square")
    if M.shape[0] < 1:
        raise ValueError("M must be at least 1x1")
    if not np.all(np.isfinite(M)):
        raise ValueError("M contains NaN or inf")
    return _jacobi_svd(M)


def _centered(pairs: PairSet, center: bool) -> tuple[np.ndarray, np.ndarray]:
    if not center:
        return pairs.left, pairs.right
    return (
        pairs.left - pairs.left.mean(axis=0),
        pairs.right - pairs.right.mean(axis=0),
    )


def align(pairs: PairSet, center: bool = False) -> AlignmentResult:
    """Best orthogonal map from left rows onto right rows.

    With center=True both sides are mean-centered first (rotation about the
    centroid); the default matches raw vectors, which is what the matcher
    uses since cepstral mean subtraction happens upstream.
    """
    if len(pairs) < 1:
        raise ValueError("align needs at least one pair")
    left, right = _centered(pairs, center)
    rotation, singular_values, residual = _align_kernel(left, right)
    return AlignmentResult(rotation, float(residual), singular_values)


def residual_without(pairs: PairSet, drop_index: int, center: bool = False) -> float:
    """Residual of the set with one pair removed.

    Exactly equal (to the last bit) to align(pairs.remove(drop_index)),
    because it is computed by the same kernel on the same rows.
    """
    if len(pairs) < 2:
        raise ValueError("residual_without needs at least two pairs")
    if not 0 <= drop_index < len(pairs):
        raise IndexError(f"drop_index {drop_index} out of range for S={len(pairs)}")
    reduced = pairs.remove(drop_index)
    left, right = _centered(reduced, center)
    _, _, residual = _align_kernel(left, right)
    return float(residual)
