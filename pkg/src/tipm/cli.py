"""Command-line pipeline: extract, train, match, normalize, score, evaluate.

One executable with subcommands.  Settings come from an optional flat
key=value config file merged with command-line flags; flags win.  Exit
codes: 0 success, 1 partial trial failures, 2 config or input errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .codebook import (
    KMeansConfig,
    read_codebook,
    read_registry,
    train_codebook,
    write_codebook,
    write_registry,
)
from .evaluation import (
    SummaryRow,
    aggregate_retention,
    compute_det,
    improvement,
    read_retention_csv,
    read_scores_csv,
    read_trial_list,
    run_trials,
    write_det_csv,
    write_retention_csv,
    write_scores_csv,
    write_summary_csv,
)
from .feature_io import (
    FeatureSet,
    FormatError,
    MfccConfig,
    apply_mask,
    extract_mfcc,
    mix_noise,
    read_features,
    read_mask,
    read_wav,
    write_features,
    write_wav,
)
from .matcher import MatchConfig, match
from .rng import derive_seed
from .scoring import estimate_znorm, raw_score, read_znorm_stats, write_znorm_stats
from .synth import SynthSpec, synth_population, write_corpus


class ConfigError(ValueError):
    """Bad config file, bad setting value, or missing required setting."""


def _bool_value(s: str) -> bool:
    low = s.strip().lower()
    if low in ("on", "true", "1", "yes"):
        return True
    if low in ("off", "false", "0", "no"):
        return False
    raise ValueError(f"expected on or off, got {s!r}")


def _int_min(lo: int) -> Callable[[str], int]:
    def parse(s: str) -> int:
        v = int(s)
        if v < lo:
            raise ValueError(f"must be >= {lo}")
        return v

    return parse


def _int_pow2(s: str) -> int:
    v = int(s)
    if v < 1 or v & (v - 1):
        raise ValueError("must be a power of two")
    return v


def _float_pos(s: str) -> float:
    v = float(s)
    if not v > 0:
        raise ValueError("must be > 0")
    return v


def _float_nonneg(s: str) -> float:
    v = float(s)
    if not v >= 0:
        raise ValueError("must be >= 0")
    return v


def _float_unit_open(s: str) -> float:
    v = float(s)
    if not 0.0 < v < 1.0:
        raise ValueError("must be in (0, 1)")
    return v


def _float_halfopen(s: str) -> float:
    v = float(s)
    if not 0.0 <= v < 1.0:
        raise ValueError("must be in [0, 1)")
    return v


def _float_min1(s: str) -> float:
    v = float(s)
    if not v >= 1.0:
        raise ValueError("must be >= 1")
    return v


def _path_value(s: str) -> str:
    if not s:
        raise ValueError("must not be empty")
    return s


@dataclass(frozen=True)
class _Key:
    parse: Callable[[str], object]
    metavar: str
    help: str


# Every recognized config key; the same table drives config-file parsing
# and the matching command-line flags.
_KEYS: dict[str, _Key] = {
    "frame_len_ms": _Key(_float_pos, "MS", "analysis window length in milliseconds"),
    "frame_hop_ms": _Key(_float_pos, "MS", "hop between analysis windows in milliseconds"),
    "n_fft": _Key(_int_pow2, "N", "FFT size, a power of two"),
    "n_mel_filters": _Key(_int_min(1), "N", "number of triangular mel filters"),
    "n_ceps": _Key(
        _int_min(1), "N", "cepstral coefficients kept; slot 0 carries log frame energy"
    ),
    "preemphasis": _Key(_float_halfopen, "X", "pre-emphasis coefficient in [0, 1)"),
    "cmn": _Key(_bool_value, "on|off", "per-utterance cepstral mean subtraction"),
    "q": _Key(_int_min(1), "N", "codebook size (centroids per speaker)"),
    "kmeans_max_iters": _Key(_int_min(1), "N", "k-means iteration cap"),
    "kmeans_rel_tol": _Key(
        _float_nonneg, "X", "k-means relative-improvement stopping threshold"
    ),
    "epsilon_t": _Key(
        _float_pos,
        "X",
        "initial-match distance threshold in feature units; overrides epsilon_scale",
    ),
    "epsilon_scale": _Key(
        _float_pos,
        "X",
        "initial-match threshold as a multiple of the codebook mean quantization distance",
    ),
    "delta": _Key(_float_unit_open, "X", "stage-1 removal ratio threshold in (0, 1)"),
    "eta": _Key(_float_min1, "X", "stage-2 recycle ratio threshold, at least 1"),
    "min_pairs": _Key(_int_min(3), "N", "smallest pair count stage 1 may leave"),
    "zero_residual_tol": _Key(
        _float_nonneg,
        "X",
        "absolute residual treated as an exact fit; default scales with problem size",
    ),
    "seed": _Key(_int_min(0), "N", "master seed; every random draw derives from it"),
    "jobs": _Key(
        _int_min(1), "N", "worker threads over independent trials; outputs do not depend on it"
    ),
    "tipm": _Key(_bool_value, "on|off", "run the two-stage pair refinement"),
    "baseline": _Key(
        _bool_value,
        "on|off",
        "score with initial pairs instead of final pairs; default on exactly when tipm is off",
    ),
    "registry": _Key(_path_value, "PATH", "model registry file"),
    "trials": _Key(_path_value, "PATH", "trial list file"),
    "out_dir": _Key(_path_value, "DIR", "output directory"),
    "znorm_stats": _Key(_path_value, "PATH", "z-norm statistics file"),
    "cohort_dir": _Key(_path_value, "DIR", "cohort features, one subdirectory per speaker"),
    "enroll_dir": _Key(_path_value, "DIR", "enrollment features, one subdirectory per speaker"),
    "models_out": _Key(_path_value, "DIR", "directory for trained codebooks"),
}

_MFCC_KEYS = (
    "frame_len_ms",
    "frame_hop_ms",
    "n_fft",
    "n_mel_filters",
    "n_ceps",
    "preemphasis",
    "cmn",
)
_KMEANS_KEYS = ("q", "kmeans_max_iters", "kmeans_rel_tol")
_MATCH_KEYS = (
    "epsilon_t",
    "epsilon_scale",
    "delta",
    "eta",
    "min_pairs",
    "zero_residual_tol",
)
_MODE_KEYS = ("tipm", "baseline")


@dataclass
class RunConfig:
    """Flat settings bag: config-file defaults overridden by flags."""

    frame_len_ms: float = 25.0
    frame_hop_ms: float = 10.0
    n_fft: int = 512
    n_mel_filters: int = 26
    n_ceps: int = 13
    preemphasis: float = 0.97
    cmn: bool = True
    q: int = 64
    kmeans_max_iters: int = 100
    kmeans_rel_tol: float = 1e-6
    epsilon_t: float | None = None
    epsilon_scale: float = 1.5
    delta: float = 0.9
    eta: float = 1.05
    min_pairs: int = 4
    zero_residual_tol: float | None = None
    seed: int = 0
    jobs: int = 1
    tipm: bool = True
    baseline: bool | None = None
    registry: str | None = None
    trials: str | None = None
    out_dir: str | None = None
    znorm_stats: str | None = None
    cohort_dir: str | None = None
    enroll_dir: str | None = None
    models_out: str | None = None

    def mfcc_config(self) -> MfccConfig:
        cfg = MfccConfig(
            self.frame_len_ms,
            self.frame_hop_ms,
            self.n_fft,
            self.n_mel_filters,
            self.n_ceps,
            self.preemphasis,
            self.cmn,
        )
        cfg.validate()
        return cfg

    def kmeans_config(self, seed: int) -> KMeansConfig:
        cfg = KMeansConfig(self.q, self.kmeans_max_iters, self.kmeans_rel_tol, seed)
        cfg.validate()
        return cfg

    def match_config(self) -> MatchConfig:
        cfg = MatchConfig(
            self.epsilon_t,
            self.epsilon_scale,
            self.delta,
            self.eta,
            self.min_pairs,
            self.zero_residual_tol,
        )
        cfg.validate()
        return cfg

    @property
    def baseline_mode(self) -> bool:
        return (not self.tipm) if self.baseline is None else self.baseline


def load_config(path: str | Path) -> dict[str, object]:
    """Parse a key=value file; '#' lines are comments.  Unknown keys fail."""
    values: dict[str, object] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key = key.strip()
            value = value.strip()
            spec = _KEYS.get(key)
            if spec is None:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                values[key] = spec.parse(value)
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: {key}: {exc}") from None
    return values


def _resolve(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None) is not None:
        for key, value in load_config(args.config).items():
            setattr(cfg, key, value)
    for key in _KEYS:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            setattr(cfg, key, flag_value)
    return cfg


def _require(flag_value: str | None, cfg_value: str | None, name: str) -> str:
    value = flag_value if flag_value is not None else cfg_value
    if value is None:
        raise ConfigError(f"missing --{name} (and no config value for it)")
    return value


def _flag_type(key: str) -> Callable[[str], object]:
    spec = _KEYS[key]

    def convert(s: str) -> object:
        try:
            return spec.parse(s)
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None

    return convert


_CONFIG_DEFAULTS = RunConfig()


def _add_key_flags(parser: argparse.ArgumentParser, keys: tuple[str, ...]) -> None:
    for key in keys:
        spec = _KEYS[key]
        default = getattr(_CONFIG_DEFAULTS, key)
        text = spec.help
        if default is not None:
            if isinstance(default, bool):
                text += f" (default: {'on' if default else 'off'})"
            else:
                text += f" (default: {default})"
        parser.add_argument(
            "--" + key.replace("_", "-"),
            dest=key,
            type=_flag_type(key),
            default=None,
            metavar=spec.metavar,
            help=text,
        )


def _add_config_flag(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--config",
        default=None,
        metavar="PATH",
        help="key=value settings file; command-line flags override it",
    )


def _cmd_extract(args: argparse.Namespace) -> int:
    cfg = _resolve(args)
    mfcc = cfg.mfcc_config()
    signal = read_wav(args.in_path)
    feats = extract_mfcc(signal, mfcc, utterance_id=Path(args.out).stem)
    if args.mask is not None:
        feats = apply_mask(feats, read_mask(args.mask))
    write_features(args.out, feats)
    print(f"frames={len(feats)} dim={feats.dim}")
    return 0


def _cmd_mix_noise(args: argparse.Namespace) -> int:
    signal = read_wav(args.signal)
    noise = read_wav(args.noise)
    mixed, clipped = mix_noise(signal, noise, args.snr)
    write_wav(args.out, mixed)
    print(f"clipped={clipped}")
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    cfg = _resolve(args)
    enroll_dir = Path(_require(args.enroll_dir, cfg.enroll_dir, "enroll-dir"))
    models_out = Path(_require(args.models_out, cfg.models_out, "models-out"))
    registry_path = Path(_require(args.registry, cfg.registry, "registry"))

    speaker_dirs = sorted(p for p in enroll_dir.iterdir() if p.is_dir())
    if not speaker_dirs:
        raise ConfigError(f"no speaker directories under {enroll_dir}")
    models_out.mkdir(parents=True, exist_ok=True)
    registry_path.parent.mkdir(parents=True, exist_ok=True)

    entries: list[tuple[str, str]] = []
    for index, spk_dir in enumerate(speaker_dirs):
        speaker_id = spk_dir.name
        files = sorted(spk_dir.glob("*.vqf"))
        if not files:
            raise ConfigError(f"no .vqf feature files under {spk_dir}")
        pooled = np.vstack([read_features(f).vectors for f in files])
        kcfg = cfg.kmeans_config(derive_seed(cfg.seed, index))
        cb = train_codebook(FeatureSet(pooled, speaker_id), kcfg, speaker_id)
        cb_path = models_out / f"{speaker_id}.vqc"
        write_codebook(cb_path, cb)
        entries.append((speaker_id, os.path.relpath(cb_path, registry_path.parent)))
        print(
            f"{speaker_id} frames={len(pooled)} q={cb.q} "
            f"mean_quant_dist={cb.mean_quant_dist!r}"
        )
    write_registry(registry_path, entries)
    return 0


def _cmd_match(args: argparse.Namespace) -> int:
    cfg = _resolve(args)
    mcfg = cfg.match_config()
    cb = read_codebook(args.model)
    feats = read_features(args.test)
    result = match(cb, feats, mcfg, run_stages=cfg.tipm)
    raw = raw_score(result, feats, baseline=cfg.baseline_mode)
    if args.dump_trace is not None:
        with open(args.dump_trace, "w", encoding="utf-8", newline="\n") as fh:
            for t in result.residual_trace:
                fh.write(
                    json.dumps(
                        {
                            "stage": t.stage,
                            "pair_id": list(t.pair_id),
                            "residual_before": t.residual_before,
                            "residual_after": t.residual_after,
                            "ratio": t.ratio,
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )
    print(
        f"initial={result.n_initial} after_stage1={result.n_after_stage1} "
        f"final={result.n_final} frames={result.n_test_frames} raw={raw!r}"
    )
    return 0


def _load_cohorts(cohort_dir: Path) -> dict[str, list[FeatureSet]]:
    speaker_dirs = sorted(p for p in cohort_dir.iterdir() if p.is_dir())
    if not speaker_dirs:
        raise ConfigError(f"no speaker directories under {cohort_dir}")
    return {
        d.name: [read_features(f) for f in sorted(d.glob("*.vqf"))] for d in speaker_dirs
    }


def _cmd_znorm(args: argparse.Namespace) -> int:
    cfg = _resolve(args)
    mcfg = cfg.match_config()
    registry_path = _require(args.registry, cfg.registry, "registry")
    cohort_dir = Path(_require(args.cohort_dir, cfg.cohort_dir, "cohort-dir"))
    out_path = _require(args.out, cfg.znorm_stats, "out")

    cohorts = _load_cohorts(cohort_dir)
    stats = []
    for speaker_id, cb_path in read_registry(registry_path):
        cb = read_codebook(cb_path)
        cohort = [u for name in sorted(cohorts) if name != speaker_id for u in cohorts[name]]
        st = estimate_znorm(cb, cohort, mcfg, baseline=cfg.baseline_mode, run_stages=cfg.tipm)
        if st.speaker_id != speaker_id:  # registry id wins for downstream lookups
            st = dataclasses.replace(st, speaker_id=speaker_id)
        stats.append(st)
        flag = " degenerate" if st.degenerate else ""
        print(f"{st.speaker_id} mu={st.mu!r} sigma={st.sigma!r} cohort={st.cohort_size}{flag}")
    write_znorm_stats(out_path, stats)
    return 0


def _run_trial_file(
    cfg: RunConfig, registry_path: str, trials_path: Path, znorm_path: str | None
):
    models = {sid: read_codebook(p) for sid, p in read_registry(registry_path)}
    trials = read_trial_list(trials_path)
    stats = read_znorm_stats(znorm_path) if znorm_path is not None else None

    # Load each distinct utterance once, up front and sequentially; worker
    # threads then only look results up, keeping any I/O error attributable
    # to a specific trial entry.
    base = trials_path.parent
    cache: dict[str, FeatureSet | Exception] = {}
    for entry in trials:
        if entry.utterance in cache:
            continue
        p = Path(entry.utterance)
        try:
            cache[entry.utterance] = read_features(p if p.is_absolute() else base / p)
        except (OSError, ValueError) as exc:
            cache[entry.utterance] = exc

    def load(utterance: str) -> FeatureSet:
        item = cache[utterance]
        if isinstance(item, Exception):
            raise item
        return item

    return run_trials(
        models,
        trials,
        load,
        cfg.match_config(),
        stats,
        baseline=cfg.baseline_mode,
        run_stages=cfg.tipm,
        jobs=cfg.jobs,
    )


def _report_trial_errors(outcome) -> None:
    for err in outcome.errors:
        print(f"error: trial {err.model_id} {err.utterance}: {err.reason}", file=sys.stderr)


def _cmd_score(args: argparse.Namespace) -> int:
    cfg = _resolve(args)
    registry_path = _require(args.registry, cfg.registry, "registry")
    trials_path = Path(_require(args.trials, cfg.trials, "trials"))
    znorm_path = args.znorm_stats if args.znorm_stats is not None else cfg.znorm_stats

    outcome = _run_trial_file(cfg, registry_path, trials_path, znorm_path)
    write_scores_csv(args.out, outcome.scores)
    if args.retention_out is not None:
        write_retention_csv(args.retention_out, outcome.scores, outcome.results)
    _report_trial_errors(outcome)
    print(f"scored={len(outcome.scores)} errors={len(outcome.errors)}")
    return 1 if outcome.errors else 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = _resolve(args)
    registry_path = _require(args.registry, cfg.registry, "registry")
    trials_path = Path(_require(args.trials, cfg.trials, "trials"))
    znorm_path = args.znorm_stats if args.znorm_stats is not None else cfg.znorm_stats
    out_dir = Path(_require(args.out_dir, cfg.out_dir, "out-dir"))
    out_dir.mkdir(parents=True, exist_ok=True)

    outcome = _run_trial_file(cfg, registry_path, trials_path, znorm_path)
    write_scores_csv(out_dir / "scores.csv", outcome.scores)
    write_retention_csv(out_dir / "retention.csv", outcome.scores, outcome.results)

    det = compute_det(outcome.scores, use_normalized=True)
    write_det_csv(out_dir / "det.csv", det)
    treatment_eer = det.eer
    if args.baseline_scores is not None:
        baseline_eer = compute_det(read_scores_csv(args.baseline_scores), use_normalized=True).eer
    else:
        baseline_eer = treatment_eer
    abs_imp, rel_imp = improvement(baseline_eer, treatment_eer)
    write_summary_csv(
        out_dir / "summary.csv",
        SummaryRow(args.condition, args.snr, baseline_eer, treatment_eer, abs_imp, rel_imp),
    )
    _report_trial_errors(outcome)
    print(
        f"baseline_eer={baseline_eer!r} treatment_eer={treatment_eer!r} "
        f"scored={len(outcome.scores)} errors={len(outcome.errors)}"
    )
    return 1 if outcome.errors else 0


def _cmd_report_retention(args: argparse.Namespace) -> int:
    report = aggregate_retention(read_retention_csv(args.retention))
    line = (
        f"trials={report.n_trials} initial={report.initial_ratio!r} "
        f"after_stage1={report.after_stage1_ratio!r} final={report.final_ratio!r}"
    )
    print(line)
    if args.out is not None:
        Path(args.out).write_text(line + "\n", encoding="utf-8")
    return 0


def _cmd_synth(args: argparse.Namespace) -> int:
    cfg = _resolve(args)
    out_dir = Path(_require(args.out_dir_flag, cfg.out_dir, "out-dir"))
    spec = SynthSpec(
        seed=cfg.seed,
        n_speakers=args.n_speakers,
        components_per_speaker=args.components_per_speaker,
        dim=args.dim,
        frames_per_utterance=args.frames_per_utterance,
        n_enroll=args.n_enroll,
        n_test=args.n_test,
        outlier_fraction=args.outlier_fraction,
        outlier_scale=args.outlier_scale,
    )
    spec.validate()
    corpus = synth_population(spec)
    write_corpus(corpus, out_dir)
    n_utts = spec.n_speakers * (spec.n_enroll + spec.n_test)
    n_trials = spec.n_speakers * spec.n_test * spec.n_speakers
    print(f"speakers={spec.n_speakers} utterances={n_utts} trials={n_trials}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tipm",
        description=(
            "Speaker-verification pipeline around two-stage iterative "
            "Procrustes matching of vector-quantized features."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("extract", help="extract MFCC features from a WAV file")
    _add_config_flag(p)
    p.add_argument("--in", dest="in_path", required=True, metavar="WAV", help="input WAV file")
    p.add_argument("--out", required=True, metavar="PATH", help="output feature file")
    p.add_argument(
        "--mask",
        default=None,
        metavar="PATH",
        help="frame mask file (one 0/1 per frame) applied after extraction",
    )
    _add_key_flags(p, _MFCC_KEYS)
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("mix-noise", help="add noise to a WAV file at a target SNR")
    p.add_argument("--signal", required=True, metavar="WAV", help="clean input WAV")
    p.add_argument("--noise", required=True, metavar="WAV", help="noise WAV, tiled to length")
    p.add_argument("--snr", required=True, type=float, metavar="DB", help="target SNR in dB")
    p.add_argument("--out", required=True, metavar="WAV", help="output WAV file")
    p.set_defaults(func=_cmd_mix_noise)

    p = sub.add_parser("train", help="train one codebook per enrollment speaker")
    _add_config_flag(p)
    p.add_argument(
        "--enroll-dir",
        default=None,
        metavar="DIR",
        help="enrollment features, one subdirectory of .vqf files per speaker",
    )
    p.add_argument("--models-out", default=None, metavar="DIR", help="codebook output directory")
    p.add_argument("--registry", default=None, metavar="PATH", help="registry file to write")
    _add_key_flags(p, _KMEANS_KEYS + ("seed",))
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("match", help="match one test utterance against one codebook")
    _add_config_flag(p)
    p.add_argument("--model", required=True, metavar="PATH", help="codebook file")
    p.add_argument("--test", required=True, metavar="PATH", help="test feature file")
    p.add_argument(
        "--dump-trace",
        default=None,
        metavar="PATH",
        help="write the per-iteration refinement trace as JSON lines",
    )
    _add_key_flags(p, _MATCH_KEYS + _MODE_KEYS)
    p.set_defaults(func=_cmd_match)

    p = sub.add_parser("znorm", help="estimate per-model impostor score statistics")
    _add_config_flag(p)
    p.add_argument("--registry", default=None, metavar="PATH", help="model registry file")
    p.add_argument(
        "--cohort-dir",
        default=None,
        metavar="DIR",
        help="cohort features, one subdirectory per speaker; a model's own speaker is excluded",
    )
    p.add_argument("--out", default=None, metavar="PATH", help="statistics file to write")
    _add_key_flags(p, _MATCH_KEYS + _MODE_KEYS)
    p.set_defaults(func=_cmd_znorm)

    p = sub.add_parser("score", help="score a trial list")
    _add_config_flag(p)
    p.add_argument("--registry", default=None, metavar="PATH", help="model registry file")
    p.add_argument("--trials", default=None, metavar="PATH", help="trial list file")
    p.add_argument("--out", required=True, metavar="PATH", help="scores CSV to write")
    p.add_argument(
        "--znorm-stats", default=None, metavar="PATH", help="z-norm statistics file to apply"
    )
    p.add_argument(
        "--retention-out",
        default=None,
        metavar="PATH",
        help="also write per-trial pair retention counters to this CSV",
    )
    _add_key_flags(p, _MATCH_KEYS + _MODE_KEYS + ("jobs",))
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("evaluate", help="score a trial list and compute DET/EER tables")
    _add_config_flag(p)
    p.add_argument("--registry", default=None, metavar="PATH", help="model registry file")
    p.add_argument("--trials", default=None, metavar="PATH", help="trial list file")
    p.add_argument(
        "--out-dir",
        dest="out_dir",
        default=None,
        metavar="DIR",
        help="directory for scores.csv, retention.csv, det.csv, summary.csv",
    )
    p.add_argument(
        "--znorm-stats", default=None, metavar="PATH", help="z-norm statistics file to apply"
    )
    p.add_argument(
        "--baseline-scores",
        default=None,
        metavar="PATH",
        help="scores CSV of a baseline run; its EER fills the summary baseline column",
    )
    p.add_argument("--condition", default="clean", metavar="NAME", help="summary condition label")
    p.add_argument("--snr", default="", metavar="DB", help="summary SNR label")
    _add_key_flags(p, _MATCH_KEYS + _MODE_KEYS + ("jobs",))
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("report-retention", help="aggregate a pair-retention CSV")
    p.add_argument("--retention", required=True, metavar="PATH", help="retention CSV to read")
    p.add_argument("--out", default=None, metavar="PATH", help="also write the report here")
    p.set_defaults(func=_cmd_report_retention)

    p = sub.add_parser("synth", help="generate a deterministic synthetic corpus")
    _add_config_flag(p)
    p.add_argument(
        "--out-dir", dest="out_dir_flag", default=None, metavar="DIR", help="corpus directory"
    )
    p.add_argument("--n-speakers", type=_int_min(1), default=10, metavar="N", help="speaker count")
    p.add_argument(
        "--components-per-speaker",
        type=_int_min(1),
        default=4,
        metavar="N",
        help="Gaussian mixture components per speaker",
    )
    p.add_argument("--dim", type=_int_min(2), default=13, metavar="N", help="feature dimension")
    p.add_argument(
        "--frames-per-utterance", type=_int_min(1), default=200, metavar="N", help="frames per utterance"
    )
    p.add_argument(
        "--n-enroll", type=_int_min(1), default=5, metavar="N", help="enrollment utterances per speaker"
    )
    p.add_argument(
        "--n-test", type=_int_min(1), default=20, metavar="N", help="test utterances per speaker"
    )
    p.add_argument(
        "--outlier-fraction",
        type=_float_halfopen,
        default=0.0,
        metavar="X",
        help="fraction of test frames replaced by uniform noise, in [0, 1)",
    )
    p.add_argument(
        "--outlier-scale",
        type=_float_min1,
        default=1.0,
        metavar="X",
        help="corrupted-frame magnitude scale, at least 1",
    )
    _add_key_flags(p, ("seed",))
    p.set_defaults(func=_cmd_synth)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
