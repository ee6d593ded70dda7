"""Audio input, MFCC extraction, noise mixing, and feature serialization."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

_FEATURE_MAGIC = b"VQF1"
_CODEBOOK_MAGIC = b"VQC1"


class FormatError(ValueError):
    """A file does not conform to one of the on-disk formats."""


@dataclass
class AudioSignal:
    samples: np.ndarray  # float64 in [-1, 1]
    sample_rate: int

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ValueError("samples must be a non-empty 1-D array")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("samples contain NaN or inf")
        if np.max(np.abs(self.samples)) > 1.0:
            raise ValueError("samples exceed [-1, 1]")

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass
class FeatureSet:
    vectors: np.ndarray  # (n_frames, dim) float64
    utterance_id: str = ""

    def __post_init__(self) -> None:
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2:
            raise ValueError("vectors must be 2-D (frames x dim)")
        if self.vectors.shape[1] < 1:
            raise ValueError("feature dim must be >= 1")
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError("vectors contain NaN or inf")

    def __len__(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


@dataclass
class FrameMask:
    keep: np.ndarray  # bool per frame
    source: str = ""

    def __post_init__(self) -> None:
        self.keep = np.asarray(self.keep, dtype=bool)
        if self.keep.ndim != 1:
            raise ValueError("mask must be 1-D")

    def __len__(self) -> int:
        return self.keep.size


@dataclass
class MfccConfig:
    """Front-end parameters.

    Frame length/hop are in milliseconds and converted per sample rate at
    extraction time.  The c0 slot always carries log frame energy.
    """

    frame_len_ms: float = 25.0
    frame_hop_ms: float = 10.0
    n_fft: int = 512
    n_mel_filters: int = 26
    n_ceps: int = 13
    preemphasis: float = 0.97
    cmn: bool = True

    def validate(self) -> None:
        if self.frame_len_ms <= 0 or self.frame_hop_ms <= 0:
            raise ValueError("frame_len_ms and frame_hop_ms must be positive")
        if self.frame_hop_ms > self.frame_len_ms:
            raise ValueError("frame_hop_ms must not exceed frame_len_ms")
        if self.n_fft < 1 or (self.n_fft & (self.n_fft - 1)) != 0:
            raise ValueError("n_fft must be a power of two")
        if self.n_mel_filters < 1:
            raise ValueError("n_mel_filters must be >= 1")
        if not (1 <= self.n_ceps <= self.n_mel_filters):
            raise ValueError("n_ceps must be in [1, n_mel_filters]")
        if not (0.0 <= self.preemphasis < 1.0):
            raise ValueError("preemphasis must be in [0, 1)")


# ---------------------------------------------------------------------------
# WAV I/O (RIFF PCM, 16-bit mono only)


def read_wav(path: str | Path) -> AudioSignal:
    """Read a RIFF/WAVE file containing 16-bit mono PCM.

    Anything else (compressed audio, multi-channel, other bit depths,
    malformed headers) raises FormatError naming the offending field.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 12:
        raise FormatError(f"{path}: too short for a RIFF header")
    if raw[0:4] != b"RIFF":
        raise FormatError(f"{path}: missing RIFF magic (got {raw[0:4]!r})")
    if raw[8:12] != b"WAVE":
        raise FormatError(f"{path}: RIFF form type is not WAVE (got {raw[8:12]!r})")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        cid = raw[pos : pos + 4]
        (size,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8 : pos + 8 + size]
        if len(body) < size:
            raise FormatError(f"{path}: chunk {cid!r} truncated")
        if cid == b"fmt ":
            fmt = body
        elif cid == b"data":
            data = body
        pos += 8 + size + (size & 1)  # chunks are word-aligned

    if fmt is None:
        raise FormatError(f"{path}: no fmt chunk")
    if data is None:
        raise FormatError(f"{path}: no data chunk")
    if len(fmt) < 16:
        raise FormatError(f"{path}: fmt chunk too short ({len(fmt)} bytes)")

    audio_format, n_channels, sample_rate, _, _, bits = struct.unpack_from(
        "<HHIIHH", fmt, 0
    )
    if audio_format != 1:
        raise FormatError(
            f"{path}: unsupported audio_format {audio_format} (PCM=1 required)"
        )
    if n_channels != 1:
        raise FormatError(f"{path}: unsupported n_channels {n_channels} (mono required)")
    if bits != 16:
        raise FormatError(f"{path}: unsupported bits_per_sample {bits} (16 required)")
    if sample_rate <= 0:
        raise FormatError(f"{path}: sample_rate must be positive (got {sample_rate})")
    if len(data) % 2 != 0:
        raise FormatError(f"{path}: data chunk byte count {len(data)} is odd")
    if len(data) == 0:
        raise FormatError(f"{path}: data chunk is empty")

    pcm = np.frombuffer(data, dtype="<i2").astype(np.float64)
    return AudioSignal(pcm / 32768.0, sample_rate)


def write_wav(path: str | Path, signal: AudioSignal) -> None:
    """Write 16-bit mono PCM."""
    pcm = np.clip(np.rint(signal.samples * 32768.0), -32768, 32767).astype("<i2")
    data = pcm.tobytes()
    fmt = struct.pack("<HHIIHH", 1, 1, signal.sample_rate, signal.sample_rate * 2, 2, 16)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(data)) + data
    Path(path).write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)


# ---------------------------------------------------------------------------
# MFCC front end

_ENERGY_FLOOR = 1e-10


def _hz_to_mel(hz: np.ndarray | float) -> np.ndarray | float:
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def _mel_to_hz(mel: np.ndarray | float) -> np.ndarray | float:
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_filters: int, n_fft: int, sample_rate: int) -> np.ndarray:
    """Triangular mel filters over [0, Nyquist], (n_filters, n_fft//2+1).

    Filter edges are mel-spaced and snapped to FFT bins; a filter whose
    edges collapse onto one bin contributes nothing (the log floor keeps
    downstream finite).
    """
    low = _hz_to_mel(0.0)
    high = _hz_to_mel(sample_rate / 2.0)
    mel_points = np.linspace(low, high, n_filters + 2)
    bins = np.floor((n_fft + 1) * _mel_to_hz(mel_points) / sample_rate).astype(int)
    fb = np.zeros((n_filters, n_fft // 2 + 1))
    for j in range(n_filters):
        left, center, right = bins[j], bins[j + 1], bins[j + 2]
        for k in range(left, center):
            fb[j, k] = (k - left) / (center - left)
        for k in range(center, right):
            fb[j, k] = (right - k) / (right - center)
    return fb


def _dct2_ortho(n_out: int, n_in: int) -> np.ndarray:
    """Orthonormal DCT-II matrix, (n_out, n_in)."""
    n = np.arange(n_in)
    mat = np.zeros((n_out, n_in))
    for k in range(n_out):
        mat[k] = np.cos(np.pi * k * (2 * n + 1) / (2.0 * n_in))
    mat *= np.sqrt(2.0 / n_in)
    mat[0] /= np.sqrt(2.0)
    return mat


def extract_mfcc(
    signal: AudioSignal, cfg: MfccConfig | None = None, utterance_id: str = ""
) -> FeatureSet:
    """MFCC features with the c0 slot replaced by log frame energy.

    Pipeline: pre-emphasis over the whole signal, Hamming-windowed frames
    of frame_len_ms every frame_hop_ms (no padding; frame count is
    floor((len - frame_len) / hop) + 1), power spectrum |rfft|^2 / n_fft,
    triangular mel filterbank, log with a 1e-10 floor, orthonormal DCT-II,
    first n_ceps coefficients.  Frame energy is the total power-spectrum
    energy, floored the same way before the log.  With cmn on, the
    per-utterance mean of every output dimension is subtracted.
    """
    if cfg is None:
        cfg = MfccConfig()
    cfg.validate()
    rate = signal.sample_rate
    flen = int(round(cfg.frame_len_ms * rate / 1000.0))
    hop = int(round(cfg.frame_hop_ms * rate / 1000.0))
    if flen < 1 or hop < 1:
        raise ValueError("frame length and hop must span at least one sample")
    if len(signal) < flen:
        raise ValueError(
            f"signal has {len(signal)} samples; one frame needs {flen}"
        )
    if cfg.n_fft < flen:
        raise ValueError(f"n_fft={cfg.n_fft} is smaller than the frame length {flen}")

    x = signal.samples
    emphasized = np.empty_like(x)
    emphasized[0] = x[0]
    emphasized[1:] = x[1:] - cfg.preemphasis * x[:-1]

    frames = np.lib.stride_tricks.sliding_window_view(emphasized, flen)[::hop]
    frames = frames * np.hamming(flen)

    power = np.abs(np.fft.rfft(frames, cfg.n_fft)) ** 2 / cfg.n_fft
    energy = np.maximum(power.sum(axis=1), _ENERGY_FLOOR)

    fb = mel_filterbank(cfg.n_mel_filters, cfg.n_fft, rate)
    fbank = np.maximum(power @ fb.T, _ENERGY_FLOOR)
    ceps = np.log(fbank) @ _dct2_ortho(cfg.n_ceps, cfg.n_mel_filters).T
    ceps[:, 0] = np.log(energy)

    if cfg.cmn:
        ceps = ceps - ceps.mean(axis=0)
    return FeatureSet(ceps, utterance_id)


# ---------------------------------------------------------------------------
# Additive noise


def mix_noise(
    signal: AudioSignal, noise: AudioSignal, snr_db: float
) -> tuple[AudioSignal, int]:
    """Add noise to signal at a target SNR.

    The noise is tiled cyclically from offset 0 (truncated) to the signal
    length and scaled by g so that 10*log10(P_signal / (g^2 * P_noise))
    equals snr_db, powers being mean squares over the full signal length.
    The mix is clamped to [-1, 1]; the second return value counts clamped
    samples (clipping is reported, not an error).
    """
    if signal.sample_rate != noise.sample_rate:
        raise ValueError(
            f"sample-rate mismatch: signal {signal.sample_rate}, noise {noise.sample_rate}"
        )
    n = len(signal)
    reps = -(-n // len(noise))  # ceil
    tiled = np.tile(noise.samples, reps)[:n]

    p_signal = float(np.mean(signal.samples**2))
    p_noise = float(np.mean(tiled**2))
    if p_signal == 0.0:
        raise ValueError("zero-power signal")
    if p_noise == 0.0:
        raise ValueError("zero-power noise")

    gain = math.sqrt(p_signal / (p_noise * 10.0 ** (snr_db / 10.0)))
    mixed = signal.samples + gain * tiled
    clipped = int(np.count_nonzero(np.abs(mixed) > 1.0))
    mixed = np.clip(mixed, -1.0, 1.0)
    return AudioSignal(mixed, signal.sample_rate), clipped


# ---------------------------------------------------------------------------
# Frame masks


def apply_mask(features: FeatureSet, mask: FrameMask) -> FeatureSet:
    if len(mask) != len(features):
        raise ValueError(
            f"mask length {len(mask)} != frame count {len(features)}"
        )
    return FeatureSet(features.vectors[mask.keep], features.utterance_id)


def read_mask(path: str | Path) -> FrameMask:
    """Text mask: one '0' or '1' per line."""
    keep = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, 1):
            tok = line.strip()
            if tok == "":
                continue
            if tok not in ("0", "1"):
                raise FormatError(f"{path}:{lineno}: expected 0 or 1, got {tok!r}")
            keep.append(tok == "1")
    return FrameMask(np.asarray(keep, dtype=bool), str(path))


def write_mask(path: str | Path, mask: FrameMask) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for flag in mask.keep:
            fh.write("1\n" if flag else "0\n")


# ---------------------------------------------------------------------------
# Binary matrix containers (features and codebooks share the layout)

_HEADER = struct.Struct("<4sIII")  # magic, row count, dim, reserved=0


def _write_matrix(path: str | Path, magic: bytes, mat: np.ndarray) -> None:
    mat = np.ascontiguousarray(mat, dtype=np.float64)
    header = _HEADER.pack(magic, mat.shape[0], mat.shape[1], 0)
    payload = mat.astype("<f8").tobytes(order="C")
    Path(path).write_bytes(header + payload)


def _read_matrix(path: str | Path, magic: bytes) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: shorter than the {_HEADER.size}-byte header")
    got_magic, rows, dim, reserved = _HEADER.unpack_from(raw, 0)
    if got_magic != magic:
        raise FormatError(f"{path}: bad magic {got_magic!r} (expected {magic!r})")
    if dim < 1:
        raise FormatError(f"{path}: dim field is 0")
    if reserved != 0:
        raise FormatError(f"{path}: reserved field is {reserved}, must be 0")
    expected = _HEADER.size + rows * dim * 8
    if len(raw) != expected:
        raise FormatError(
            f"{path}: file length {len(raw)} != expected {expected} "
            f"for {rows} rows x {dim} dims"
        )
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    return data.reshape(rows, dim).astype(np.float64)


def write_features(path: str | Path, features: FeatureSet) -> None:
    _write_matrix(path, _FEATURE_MAGIC, features.vectors)


def read_features(path: str | Path) -> FeatureSet:
    """Read a feature file; the utterance id is the file stem."""
    return FeatureSet(_read_matrix(path, _FEATURE_MAGIC), Path(path).stem)
