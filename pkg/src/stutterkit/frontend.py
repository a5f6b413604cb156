"""Clip decoding and the fixed-shape log-Mel features the encoder consumes.

The normalization chain is pinned to the pretrained checkpoint's input
contract: magnitude-squared STFT, Slaney-scale mel filterbank, log10 with a
1e-10 floor, clamp to (max - 8), then the affine map (x + 4) / 4. Silence
therefore maps to a matrix of exactly -1.5.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from .corpus import ClipRecord
from .errors import ConfigError, ValidationError

TARGET_RATE = 16000

_CACHE_MAGIC = b"SKMF"
_CACHE_VERSION = 1


@dataclass(frozen=True)
class FrontendConfig:
    sample_rate: int = TARGET_RATE
    n_mels: int = 80
    fft_window: int = 400  # 25 ms at 16 kHz
    hop: int = 160  # 10 ms
    pad_to_s: float = 30.0
    mel_fmin: float = 0.0
    mel_fmax: float = 8000.0

    def __post_init__(self):
        if self.sample_rate <= 0 or self.n_mels <= 0 or self.fft_window <= 0:
            raise ConfigError("frontend dimensions must be positive")
        if not 0 <= self.mel_fmin < self.mel_fmax <= self.sample_rate / 2:
            raise ConfigError("mel band must satisfy 0 <= fmin < fmax <= nyquist")
        if (self.pad_to_s * self.sample_rate) % self.hop:
            raise ConfigError("hop must divide pad_to_s * sample_rate")
        if self.pad_to_s * self.sample_rate < self.fft_window:
            raise ConfigError("padded length must cover at least one analysis window")

    @property
    def pad_samples(self) -> int:
        return int(round(self.pad_to_s * self.sample_rate))

    @property
    def n_frames(self) -> int:
        return self.pad_samples // self.hop

    def cache_key(self) -> str:
        payload = repr(
            (
                self.sample_rate,
                self.n_mels,
                self.fft_window,
                self.hop,
                self.pad_to_s,
                self.mel_fmin,
                self.mel_fmax,
            )
        ).encode()
        return hashlib.sha1(payload).hexdigest()[:12]


@dataclass(frozen=True)
class MelFeatures:
    matrix: np.ndarray  # (n_mels, n_frames) float32
    clip_id: str


def _hz_to_mel(hz):
    """Slaney mel scale: linear below 1 kHz, logarithmic above."""
    hz = np.asarray(hz, dtype=np.float64)
    mel = 3.0 * hz / 200.0
    log_region = hz >= 1000.0
    mel = np.where(
        log_region,
        15.0 + 27.0 * np.log(np.maximum(hz, 1000.0) / 1000.0) / np.log(6.4),
        mel,
    )
    return mel


def _mel_to_hz(mel):
    mel = np.asarray(mel, dtype=np.float64)
    hz = 200.0 * mel / 3.0
    log_region = mel >= 15.0
    hz = np.where(log_region, 1000.0 * np.exp(np.log(6.4) * (mel - 15.0) / 27.0), hz)
    return hz


def mel_filterbank(cfg: FrontendConfig) -> np.ndarray:
    """Triangular Slaney-normalized filters, shape (n_mels, fft_window//2 + 1)."""
    n_bins = cfg.fft_window // 2 + 1
    fft_freqs = np.arange(n_bins) * cfg.sample_rate / cfg.fft_window
    mel_edges = np.linspace(
        _hz_to_mel(cfg.mel_fmin), _hz_to_mel(cfg.mel_fmax), cfg.n_mels + 2
    )
    hz_edges = _mel_to_hz(mel_edges)
    lower = hz_edges[:-2][:, None]
    center = hz_edges[1:-1][:, None]
    upper = hz_edges[2:][:, None]
    rising = (fft_freqs[None, :] - lower) / np.maximum(center - lower, 1e-12)
    falling = (upper - fft_freqs[None, :]) / np.maximum(upper - center, 1e-12)
    weights = np.maximum(0.0, np.minimum(rising, falling))
    # Slaney normalization: each filter integrates to a comparable energy
    weights *= (2.0 / (upper - lower))
    return weights


def mel_center_frequencies(cfg: FrontendConfig) -> np.ndarray:
    mel_edges = np.linspace(
        _hz_to_mel(cfg.mel_fmin), _hz_to_mel(cfg.mel_fmax), cfg.n_mels + 2
    )
    return _mel_to_hz(mel_edges)[1:-1]


def log_mel(waveform: np.ndarray, cfg: FrontendConfig, clip_id: str = "") -> MelFeatures:
    """Zero-pad to the fixed duration and produce the (n_mels, n_frames) matrix."""
    waveform = np.asarray(waveform, dtype=np.float64)
    if waveform.ndim != 1:
        raise ValidationError("log_mel expects a mono 1-D waveform")
    if not np.all(np.isfinite(waveform)):
        raise ValidationError("log_mel input contains non-finite samples")
    if waveform.shape[0] > cfg.pad_samples:
        raise ValidationError(
            f"waveform longer than pad length: {waveform.shape[0]} > {cfg.pad_samples}"
        )

    padded = np.zeros(cfg.pad_samples)
    padded[: waveform.shape[0]] = waveform

    n_fft = cfg.fft_window
    half = n_fft // 2
    reflected = np.concatenate([padded[half:0:-1], padded, padded[-2 : -half - 2 : -1]])
    window = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n_fft) / n_fft)
    stride = reflected.strides[0]
    n_windows = (reflected.shape[0] - n_fft) // cfg.hop + 1
    frames = np.lib.stride_tricks.as_strided(
        reflected, shape=(n_windows, n_fft), strides=(cfg.hop * stride, stride)
    )
    spec = np.fft.rfft(frames[: cfg.n_frames] * window, axis=1)
    power = np.abs(spec) ** 2

    mel = mel_filterbank(cfg) @ power.T
    log_spec = np.log10(np.maximum(mel, 1e-10))
    log_spec = np.maximum(log_spec, log_spec.max() - 8.0)
    scaled = (log_spec + 4.0) / 4.0
    return MelFeatures(matrix=scaled.astype(np.float32), clip_id=clip_id)


def load_clip(record: ClipRecord) -> np.ndarray:
    """Mono float samples in [-1, 1] at 16 kHz for one catalogued clip."""
    path = Path(record.media_path)
    if not path.exists():
        raise FileNotFoundError(f"{record.clip_id}: media not found: {path}")
    rate, data = wavfile.read(path, mmap=True)
    if rate != record.sample_rate:
        raise ValidationError(
            f"{record.clip_id}: media rate {rate} differs from record rate "
            f"{record.sample_rate}"
        )
    if record.stop_sample > data.shape[0]:
        raise ValidationError(
            f"{record.clip_id}: clip exceeds media ({record.stop_sample} > {data.shape[0]})"
        )
    segment = np.array(data[record.start_sample : record.stop_sample])
    if segment.ndim == 2:
        segment = segment.mean(axis=1)
    if np.issubdtype(segment.dtype, np.integer):
        scale = float(np.iinfo(segment.dtype).max)
        segment = segment.astype(np.float64) / scale
    else:
        segment = segment.astype(np.float64)
    if rate != TARGET_RATE:
        from math import gcd

        g = gcd(TARGET_RATE, rate)
        segment = resample_poly(segment, TARGET_RATE // g, rate // g)
    return np.clip(segment, -1.0, 1.0)


# ---------------------------------------------------------------------------
# feature cache: one binary file per clip
# ---------------------------------------------------------------------------


def cache_path(cache_dir, clip_id: str, cfg: FrontendConfig) -> Path:
    return Path(cache_dir) / f"{clip_id}.{cfg.cache_key()}.mel"


def write_cache(path, features: MelFeatures) -> Path:
    """16-byte header (magic, version, n_mels, n_frames) + row-major LE f32."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    matrix = np.ascontiguousarray(features.matrix, dtype="<f4")
    header = struct.pack(
        "<4sIII", _CACHE_MAGIC, _CACHE_VERSION, matrix.shape[0], matrix.shape[1]
    )
    tmp = path.with_suffix(path.suffix + ".tmp")
    with tmp.open("wb") as fh:
        fh.write(header)
        fh.write(matrix.tobytes())
    tmp.replace(path)
    return path


def read_cache(path, clip_id: str = "") -> MelFeatures:
    path = Path(path)
    with path.open("rb") as fh:
        header = fh.read(16)
        if len(header) != 16:
            raise ValidationError(f"truncated feature cache: {path}")
        magic, version, n_mels, n_frames = struct.unpack("<4sIII", header)
        if magic != _CACHE_MAGIC or version != _CACHE_VERSION:
            raise ValidationError(f"not a feature cache file: {path}")
        payload = fh.read(4 * n_mels * n_frames)
    matrix = np.frombuffer(payload, dtype="<f4").reshape(n_mels, n_frames)
    return MelFeatures(matrix=matrix, clip_id=clip_id)


@dataclass
class FeatureDataset:
    """In-memory features and labels for training or evaluation."""

    features: np.ndarray  # (n, n_mels, n_frames) float32
    labels: np.ndarray  # (n,) int64
    clip_ids: list

    def __post_init__(self):
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValidationError("features and labels disagree on length")

    def __len__(self) -> int:
        return int(self.labels.shape[0])


def features_for_clip(
    record: ClipRecord,
    cfg: FrontendConfig,
    cache_dir: Optional[Path] = None,
) -> MelFeatures:
    if cache_dir is not None:
        cached = cache_path(cache_dir, record.clip_id, cfg)
        if cached.exists():
            return read_cache(cached, clip_id=record.clip_id)
    features = log_mel(load_clip(record), cfg, clip_id=record.clip_id)
    if cache_dir is not None:
        write_cache(cache_path(cache_dir, record.clip_id, cfg), features)
    return features


def dataset_from_clips(
    clips: Iterable,
    labels: dict,
    cfg: FrontendConfig,
    cache_dir: Optional[Path] = None,
    skip_errors: bool = False,
) -> tuple:
    """Extract features for every clip; returns (dataset, skipped).

    With ``skip_errors`` per-clip failures are collected as (clip_id, reason)
    and the run continues.
    """
    matrices, ids, targets, skipped = [], [], [], []
    for record in clips:
        try:
            features = features_for_clip(record, cfg, cache_dir)
        except (ValidationError, FileNotFoundError, OSError) as exc:
            if not skip_errors:
                raise
            skipped.append((record.clip_id, str(exc)))
            continue
        matrices.append(features.matrix)
        ids.append(record.clip_id)
        targets.append(int(labels[record.clip_id]))
    if matrices:
        stacked = np.stack(matrices)
    else:
        stacked = np.zeros((0, cfg.n_mels, cfg.n_frames), dtype=np.float32)
    dataset = FeatureDataset(
        features=stacked, labels=np.asarray(targets, dtype=np.int64), clip_ids=ids
    )
    return dataset, skipped
