"""Five-stage corpus cleaning: annotator agreement, rare-label exclusion,
duration floor, stationary spectral-gate denoising, and manual exclusions.

"semi-clean" runs the first three stages; "clean" runs all five. Denoising
transforms audio and never drops clips; the final stage removes clips listed
in a human-reviewed exclusion manifest (multi-speaker or residually noisy
clips are identified by listening, not automatically).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional

import numpy as np

from . import kernels
from .corpus import (
    AnnotationRow,
    ClipRecord,
    DisfluencyClass,
    RAW_TO_CLASS,
)
from .errors import CurationError

logger = logging.getLogger(__name__)

STAGE_ORDER = ("agreement", "rare_label", "duration", "denoise", "exclusions")
SEMI_CLEAN_STAGES = STAGE_ORDER[:3]

# Published corpus sizes after the three- and five-stage pipelines; shown in
# reports as context only (the manual exclusion list is not public).
REFERENCE_INSTANCE_COUNTS = {"semi-clean": 12585, "clean": 12139}


@dataclass(frozen=True)
class NoiseGateConfig:
    enabled: bool = True
    stationary: bool = True
    prop_decrease: float = 1.0
    n_std_thresh: float = 1.5
    fft_size: int = 512
    hop: int = 128
    smooth_freq_bins: int = 2
    smooth_time_frames: int = 2
    noise_floor_bins: int = 25
    nonstationary_window: int = 51

    def __post_init__(self):
        if self.fft_size <= 0 or self.fft_size & (self.fft_size - 1):
            raise CurationError(f"fft_size must be a power of two, got {self.fft_size}")
        if not 0 < self.hop <= self.fft_size:
            raise CurationError(f"hop must be in (0, fft_size], got {self.hop}")
        if not 0.0 <= self.prop_decrease <= 1.0:
            raise CurationError(f"prop_decrease must be in [0, 1], got {self.prop_decrease}")
        if self.noise_floor_bins < 1 or self.nonstationary_window < 1:
            raise CurationError("smoothing window sizes must be >= 1")


@dataclass(frozen=True)
class CurationConfig:
    required_agreement: int = 3
    rare_label_fraction: float = 0.01
    min_duration_s: float = 3.0
    noise: NoiseGateConfig = field(default_factory=NoiseGateConfig)
    exclusion_manifest: Optional[Path] = None

    def __post_init__(self):
        if not 1 <= self.required_agreement <= 3:
            raise CurationError(
                f"required_agreement must be in [1, 3], got {self.required_agreement}"
            )
        if not 0.0 <= self.rare_label_fraction < 1.0:
            raise CurationError(
                f"rare_label_fraction must be in [0, 1), got {self.rare_label_fraction}"
            )
        if self.min_duration_s <= 0:
            raise CurationError(f"min_duration_s must be positive, got {self.min_duration_s}")


@dataclass
class CurationReport:
    mode: str
    counts_after_each_stage: dict  # ordered: "input" then stage names
    class_histogram: dict  # DisfluencyClass -> count
    dropped: dict  # stage name -> list of clip_id
    warnings: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def reconcile(self) -> bool:
        """Counts must drop by exactly the number of clips each stage removed."""
        names = list(self.counts_after_each_stage)
        for prev, cur in zip(names, names[1:]):
            removed = len(self.dropped.get(cur, []))
            if self.counts_after_each_stage[prev] - removed != self.counts_after_each_stage[cur]:
                return False
        return True

    def to_records(self) -> list:
        rows = [
            {
                "stage": stage,
                "count": count,
                "dropped": sorted(self.dropped.get(stage, [])),
            }
            for stage, count in self.counts_after_each_stage.items()
        ]
        rows.append(
            {
                "class_histogram": {c.label: n for c, n in self.class_histogram.items()},
                "warnings": self.warnings,
                "notes": self.notes,
            }
        )
        return rows

    def render_text(self) -> str:
        lines = [f"curation report ({self.mode})", "-" * 40]
        for stage, count in self.counts_after_each_stage.items():
            removed = len(self.dropped.get(stage, []))
            suffix = f"  (-{removed})" if removed else ""
            lines.append(f"{stage:<12} {count:>8}{suffix}")
        lines.append("")
        lines.append("class histogram:")
        for cls, count in self.class_histogram.items():
            lines.append(f"  {cls.label:<18} {count:>8}")
        reference = REFERENCE_INSTANCE_COUNTS.get(self.mode)
        if reference is not None:
            lines.append("")
            lines.append(
                f"reference: published {self.mode} corpus size is {reference} instances"
            )
        for note in self.notes:
            lines.append(f"note: {note}")
        for warning in self.warnings:
            lines.append(f"warning: {warning}")
        return "\n".join(lines)


def unanimous_label(row: AnnotationRow, cfg: CurationConfig) -> Optional[DisfluencyClass]:
    """The single class every annotator agreed on, if there is exactly one.

    Non-disfluent vote columns never yield a class; two fully-agreed labels
    on one clip are ambiguous for a single-label task and yield none.
    """
    agreed = [
        RAW_TO_CLASS[label]
        for label, count in row.votes.items()
        if label in RAW_TO_CLASS and count >= cfg.required_agreement
    ]
    if len(agreed) != 1:
        return None
    return agreed[0]


def rare_label_filter(labeled: list, threshold: float) -> tuple:
    """Drop clips whose label covers strictly less than ``threshold`` of the set.

    ``labeled`` is a list of (clip_id, label) pairs; shares are computed over
    exactly this set. Returns (retained, dropped_clip_ids).
    """
    if not labeled:
        raise CurationError("rare_label_filter requires a non-empty labeled set")
    total = len(labeled)
    counts = {}
    for _, label in labeled:
        counts[label] = counts.get(label, 0) + 1
    rare = {label for label, count in counts.items() if count / total < threshold}
    retained = [(cid, label) for cid, label in labeled if label not in rare]
    dropped = [cid for cid, label in labeled if label in rare]
    return retained, dropped


def duration_filter(clips: Iterable[ClipRecord], min_duration_s: float) -> tuple:
    """Keep clips whose duration is at least ``min_duration_s`` (inclusive)."""
    retained, dropped = [], []
    for clip in clips:
        if clip.duration_s >= min_duration_s:
            retained.append(clip)
        else:
            dropped.append(clip.clip_id)
    return retained, dropped


# ---------------------------------------------------------------------------
# spectral-gate denoising
# ---------------------------------------------------------------------------


def _frame(x: np.ndarray, fft_size: int, hop: int) -> np.ndarray:
    n_frames = (x.shape[0] - fft_size) // hop + 1
    stride = x.strides[0]
    return np.lib.stride_tricks.as_strided(
        x, shape=(n_frames, fft_size), strides=(hop * stride, stride)
    )


def denoise(waveform: np.ndarray, cfg: NoiseGateConfig) -> np.ndarray:
    """Spectral gating: attenuate time-frequency cells below a noise threshold.

    Stationary mode estimates per-frequency noise statistics over the whole
    clip; non-stationary mode uses a rolling window. Output length equals
    input length; a disabled gate is the identity.
    """
    waveform = np.asarray(waveform, dtype=np.float64)
    if waveform.ndim != 1:
        raise CurationError("denoise expects a mono 1-D waveform")
    if not np.all(np.isfinite(waveform)):
        raise CurationError("denoise input contains non-finite samples")
    if not cfg.enabled:
        return waveform.copy()
    if waveform.shape[0] <= cfg.fft_size:
        raise CurationError(
            f"waveform too short to denoise: {waveform.shape[0]} <= fft_size {cfg.fft_size}"
        )

    n = waveform.shape[0]
    fft, hop = cfg.fft_size, cfg.hop
    padded = np.concatenate([np.zeros(fft), waveform, np.zeros(fft)])
    usable = fft + ((padded.shape[0] - fft) // hop) * hop
    padded = padded[:usable]
    window = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(fft) / fft)

    frames = _frame(padded, fft, hop) * window
    spec = np.fft.rfft(frames, axis=1)
    magnitude = np.abs(spec)
    db = 20.0 * np.log10(np.maximum(magnitude, 1e-12))

    # Noise floor: per-bin level, median-filtered across frequency so that
    # spectrally sparse content (tones, voiced harmonics) stands above the
    # broadband floor instead of setting its own threshold.
    from scipy.ndimage import median_filter

    if cfg.stationary:
        center = np.median(db, axis=0)
        # MAD, not std: zero-padded / silent frames sit at the dB floor and
        # would blow up a plain std on short clips
        spread = 1.4826 * np.median(np.abs(db - center), axis=0)
        floor = median_filter(center, size=cfg.noise_floor_bins, mode="nearest")
        sigma = median_filter(spread, size=cfg.noise_floor_bins, mode="nearest")
        threshold = floor + cfg.n_std_thresh * sigma
    else:
        half = cfg.nonstationary_window // 2
        db_t = np.ascontiguousarray(db.T)
        mean_db = kernels.box_smooth_rows(db_t, half)
        mean_sq = kernels.box_smooth_rows(db_t * db_t, half)
        std_db = np.sqrt(np.maximum(mean_sq - mean_db * mean_db, 0.0))
        threshold = mean_db + cfg.n_std_thresh * std_db
        threshold = median_filter(
            threshold, size=(cfg.noise_floor_bins, 1), mode="nearest"
        ).T

    gate = (db > threshold).astype(np.float64)
    # smooth the binary gate along time then frequency to avoid musical noise
    gate = kernels.box_smooth_rows(np.ascontiguousarray(gate.T), cfg.smooth_time_frames).T
    gate = kernels.box_smooth_rows(np.ascontiguousarray(gate), cfg.smooth_freq_bins)
    gain = 1.0 - cfg.prop_decrease * (1.0 - gate)

    recovered = np.fft.irfft(spec * gain, n=fft, axis=1) * window
    output = np.zeros(usable)
    window_sum = np.zeros(usable)
    wsq = window * window
    for i in range(recovered.shape[0]):
        start = i * hop
        output[start : start + fft] += recovered[i]
        window_sum[start : start + fft] += wsq
    output /= np.maximum(window_sum, 1e-8)
    return output[fft : fft + n]


def read_exclusion_manifest(path) -> set:
    """Clip ids listed one per line; '#' starts a comment."""
    path = Path(path)
    if not path.exists():
        raise CurationError(f"exclusion manifest not found: {path}")
    ids = set()
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            ids.add(line)
    return ids


def apply_exclusions(clips: Iterable[ClipRecord], exclusion_manifest) -> tuple:
    """Remove manifest-listed clips; unknown ids warn instead of failing.

    Returns (retained, dropped_clip_ids, warnings).
    """
    clips = list(clips)
    excluded = read_exclusion_manifest(exclusion_manifest)
    known = {c.clip_id for c in clips}
    warnings = []
    for unknown in sorted(excluded - known):
        message = f"{unknown} not found in catalog"
        warnings.append(message)
        logger.warning("exclusion manifest: %s", message)
    retained = [c for c in clips if c.clip_id not in excluded]
    dropped = [c.clip_id for c in clips if c.clip_id in excluded]
    return retained, dropped, warnings


def energy_bimodality(waveform: np.ndarray, frame: int = 400, hop: int = 160) -> float:
    """Score in [0, 1] of how bimodal the short-time energy distribution is.

    High scores suggest two regimes (for example two alternating speakers)
    and queue the clip for human review; the final keep/drop decision stays
    manual via the exclusion manifest.
    """
    waveform = np.asarray(waveform, dtype=np.float64)
    if waveform.shape[0] < 2 * frame:
        return 0.0
    frames = _frame(waveform, frame, hop)
    energy = 10.0 * np.log10(np.mean(frames * frames, axis=1) + 1e-12)
    total_var = energy.var()
    if total_var <= 1e-12:
        return 0.0
    # Otsu-style search: best between-class variance over candidate thresholds
    best = 0.0
    for threshold in np.quantile(energy, np.linspace(0.1, 0.9, 17)):
        low = energy[energy <= threshold]
        high = energy[energy > threshold]
        if low.size == 0 or high.size == 0:
            continue
        w_low = low.size / energy.size
        w_high = 1.0 - w_low
        between = w_low * w_high * (low.mean() - high.mean()) ** 2
        best = max(best, between / total_var)
    return float(min(best, 1.0))


def review_queue(
    clips: Iterable[ClipRecord],
    loader: Callable[[ClipRecord], np.ndarray],
    score_threshold: float = 0.6,
) -> list:
    """Clips whose energy bimodality exceeds the threshold, for human listening."""
    flagged = []
    for clip in clips:
        if not clip.resolvable:
            continue
        score = energy_bimodality(loader(clip))
        if score > score_threshold:
            flagged.append((clip.clip_id, score))
    return flagged


@dataclass
class CuratedClip:
    record: ClipRecord
    label: DisfluencyClass


def run_pipeline(
    catalog: Iterable[ClipRecord],
    annotations: Iterable[AnnotationRow],
    cfg: CurationConfig,
    mode: str = "semi-clean",
    loader: Optional[Callable[[ClipRecord], np.ndarray]] = None,
    denoised_dir: Optional[Path] = None,
) -> tuple:
    """Apply the cleaning stages in order and return (curated clips, report).

    Stage order: agreement, rare-label exclusion, duration floor, then in
    "clean" mode denoising and manual exclusions. Denoised audio is written
    under ``denoised_dir`` when both a loader and a directory are supplied;
    otherwise the stage is recorded as deferred.
    """
    if mode not in ("semi-clean", "clean"):
        raise CurationError(f"mode must be 'semi-clean' or 'clean', got {mode!r}")
    catalog = list(catalog)
    votes_by_id = {row.clip_id: row for row in annotations}

    counts = {"input": len(catalog)}
    dropped: dict = {}
    warnings: list = []
    notes: list = []

    # stage 1: full annotator agreement on exactly one disfluency class
    labels: dict = {}
    agreement_dropped = []
    survivors = []
    for clip in catalog:
        row = votes_by_id.get(clip.clip_id)
        label = unanimous_label(row, cfg) if row is not None else None
        if label is None:
            agreement_dropped.append(clip.clip_id)
        else:
            labels[clip.clip_id] = label
            survivors.append(clip)
    counts["agreement"] = len(survivors)
    dropped["agreement"] = agreement_dropped

    # stage 2: rare-label exclusion over the post-agreement set
    if survivors:
        labeled = [(c.clip_id, labels[c.clip_id]) for c in survivors]
        retained_pairs, rare_dropped = rare_label_filter(labeled, cfg.rare_label_fraction)
        retained_ids = {cid for cid, _ in retained_pairs}
        survivors = [c for c in survivors if c.clip_id in retained_ids]
    else:
        rare_dropped = []
    counts["rare_label"] = len(survivors)
    dropped["rare_label"] = rare_dropped

    # stage 3: duration floor (inclusive boundary)
    survivors, duration_dropped = duration_filter(survivors, cfg.min_duration_s)
    counts["duration"] = len(survivors)
    dropped["duration"] = duration_dropped

    if mode == "clean":
        # stage 4: denoise (audio transform; never drops clips)
        if loader is not None and denoised_dir is not None and cfg.noise.enabled:
            from scipy.io import wavfile

            denoised_dir = Path(denoised_dir)
            denoised_dir.mkdir(parents=True, exist_ok=True)
            processed = []
            for clip in survivors:
                if not clip.resolvable:
                    warnings.append(f"{clip.clip_id}: media unavailable, left undenoised")
                    processed.append(clip)
                    continue
                audio = denoise(loader(clip), cfg.noise)
                out_path = denoised_dir / f"{clip.clip_id}.wav"
                wavfile.write(out_path, 16000, audio.astype(np.float32))
                processed.append(
                    ClipRecord(
                        show_id=clip.show_id,
                        episode_id=clip.episode_id,
                        clip_id=clip.clip_id,
                        start_sample=0,
                        stop_sample=audio.shape[0],
                        sample_rate=16000,
                        media_path=out_path,
                    )
                )
            survivors = processed
        elif not cfg.noise.enabled:
            notes.append("denoise disabled by config")
        else:
            notes.append("denoise deferred: no audio loader/output directory supplied")
        counts["denoise"] = len(survivors)
        dropped["denoise"] = []

        # stage 5: manual exclusions (multi-speaker / residual noise)
        if cfg.exclusion_manifest is not None:
            survivors, excl_dropped, excl_warnings = apply_exclusions(
                survivors, cfg.exclusion_manifest
            )
            warnings.extend(excl_warnings)
        else:
            excl_dropped = []
            warnings.append(
                "no exclusion manifest supplied; multi-speaker screening not applied"
            )
        counts["exclusions"] = len(survivors)
        dropped["exclusions"] = excl_dropped

    histogram = {cls: 0 for cls in DisfluencyClass}
    for clip in survivors:
        histogram[labels[clip.clip_id]] += 1
    report = CurationReport(
        mode=mode,
        counts_after_each_stage=counts,
        class_histogram=histogram,
        dropped=dropped,
        warnings=warnings,
        notes=notes,
    )
    curated = [CuratedClip(record=c, label=labels[c.clip_id]) for c in survivors]
    return curated, report
