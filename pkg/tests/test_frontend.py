import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.io import wavfile

from stutterkit.corpus import ClipRecord
from stutterkit.errors import ConfigError, ValidationError
from stutterkit.frontend import (
    FrontendConfig,
    cache_path,
    dataset_from_clips,
    load_clip,
    log_mel,
    mel_filterbank,
    read_cache,
    write_cache,
)

CFG = FrontendConfig()


def slaney_filterbank_oracle(cfg):
    """Independent filterbank construction: direct loops over the formula."""

    def hz_to_mel(hz):
        if hz < 1000.0:
            return 3.0 * hz / 200.0
        return 15.0 + 27.0 * math.log(hz / 1000.0) / math.log(6.4)

    def mel_to_hz(mel):
        if mel < 15.0:
            return 200.0 * mel / 3.0
        return 1000.0 * math.exp(math.log(6.4) * (mel - 15.0) / 27.0)

    n_bins = cfg.fft_window // 2 + 1
    edges = []
    lo, hi = hz_to_mel(cfg.mel_fmin), hz_to_mel(cfg.mel_fmax)
    for m in range(cfg.n_mels + 2):
        edges.append(mel_to_hz(lo + (hi - lo) * m / (cfg.n_mels + 1)))
    weights = np.zeros((cfg.n_mels, n_bins))
    for m in range(cfg.n_mels):
        left, center, right = edges[m], edges[m + 1], edges[m + 2]
        for k in range(n_bins):
            freq = k * cfg.sample_rate / cfg.fft_window
            if left < freq < right:
                if freq <= center:
                    w = (freq - left) / (center - left)
                else:
                    w = (right - freq) / (right - center)
                weights[m, k] = w * 2.0 / (right - left)
    return weights


class TestLogMel:
    def test_silence_contract(self):
        features = log_mel(np.zeros(48000), CFG, "silence")
        assert features.matrix.shape == (80, 3000)
        assert features.matrix.dtype == np.float32
        assert (features.matrix == np.float32(-1.5)).all()

    def test_tone_argmax_matches_independent_filterbank(self):
        t = np.arange(48000) / CFG.sample_rate
        tone = np.sin(2 * np.pi * 1000.0 * t)
        features = log_mel(tone, CFG, "tone")

        oracle = slaney_filterbank_oracle(CFG)
        np.testing.assert_allclose(mel_filterbank(CFG), oracle, rtol=1e-9, atol=1e-12)
        tone_bin = round(1000.0 * CFG.fft_window / CFG.sample_rate)
        expected = int(np.argmax(oracle[:, tone_bin]))

        # frames whose analysis window lies fully inside the voiced 3 s
        first = math.ceil((CFG.fft_window // 2) / CFG.hop)
        last = (48000 - CFG.fft_window // 2) // CFG.hop
        argmaxes = np.argmax(features.matrix[:, first:last], axis=0)
        assert set(argmaxes.tolist()) == {expected}

    def test_determinism(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(48000) * 0.1
        a = log_mel(x, CFG, "a").matrix
        b = log_mel(x, CFG, "a").matrix
        assert a.tobytes() == b.tobytes()

    def test_padding_invariance(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal(48000) * 0.1
        padded = np.zeros(CFG.pad_samples)
        padded[:48000] = x
        assert log_mel(x, CFG).matrix.tobytes() == log_mel(padded, CFG).matrix.tobytes()

    def test_shape_independent_of_input_length(self):
        for n in (1600, 48000, 480000):
            assert log_mel(np.zeros(n), CFG).matrix.shape == (80, 3000)

    def test_overlength_rejected(self):
        with pytest.raises(ValidationError):
            log_mel(np.zeros(CFG.pad_samples + 1), CFG)

    def test_non_finite_rejected(self):
        x = np.zeros(48000)
        x[0] = np.inf
        with pytest.raises(ValidationError):
            log_mel(x, CFG)

    def test_clamp_keeps_dynamic_range_within_two(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal(48000)
        matrix = log_mel(x, CFG).matrix
        assert matrix.min() >= matrix.max() - 2.0 - 1e-6

    @settings(max_examples=15, deadline=None)
    @given(st.floats(min_value=1.001, max_value=50.0))
    def test_gain_monotonicity(self, gain):
        rng = np.random.default_rng(3)
        small_cfg = FrontendConfig(pad_to_s=0.2)
        x = 0.01 * rng.standard_normal(1600)
        low = log_mel(x, small_cfg).matrix.max()
        high = log_mel(np.clip(x * gain, -1, 1), small_cfg).matrix.max()
        assert high >= low

    def test_hop_must_divide_padding(self):
        with pytest.raises(ConfigError):
            FrontendConfig(pad_to_s=30.0, hop=161)

    def test_padding_must_cover_analysis_window(self):
        with pytest.raises(ConfigError):
            FrontendConfig(pad_to_s=0.01, hop=16)


class TestCache:
    def test_round_trip_byte_identical(self, tmp_path):
        rng = np.random.default_rng(4)
        features = log_mel(0.1 * rng.standard_normal(48000), CFG, "clipX")
        path = cache_path(tmp_path, "clipX", CFG)
        write_cache(path, features)
        first_bytes = path.read_bytes()
        loaded = read_cache(path, "clipX")
        assert loaded.matrix.tobytes() == features.matrix.tobytes()
        assert loaded.clip_id == "clipX"
        write_cache(path, loaded)
        assert path.read_bytes() == first_bytes

    def test_cache_keyed_by_config(self, tmp_path):
        a = cache_path(tmp_path, "c", FrontendConfig())
        b = cache_path(tmp_path, "c", FrontendConfig(n_mels=40))
        assert a != b

    def test_corrupt_cache_rejected(self, tmp_path):
        bad = tmp_path / "bad.mel"
        bad.write_bytes(b"NOPE" + b"\x00" * 12)
        with pytest.raises(ValidationError):
            read_cache(bad)


class TestLoadClip:
    def write_wav(self, path, rate, seconds, freq=440.0):
        path.parent.mkdir(parents=True, exist_ok=True)
        t = np.arange(int(rate * seconds)) / rate
        wavfile.write(path, rate, (0.25 * np.sin(2 * np.pi * freq * t)).astype(np.float32))
        return path

    def record(self, path, rate, start, stop):
        return ClipRecord(
            show_id="S", episode_id="e", clip_id="S_e_0",
            start_sample=start, stop_sample=stop, sample_rate=rate, media_path=path,
        )

    def test_native_rate_slice(self, tmp_path):
        path = self.write_wav(tmp_path / "S" / "e.wav", 16000, 5.0)
        samples = load_clip(self.record(path, 16000, 16000, 16000 + 48000))
        assert samples.shape == (48000,)
        assert np.abs(samples).max() <= 1.0

    def test_resampled_to_16k(self, tmp_path):
        path = self.write_wav(tmp_path / "S" / "e.wav", 44100, 4.0)
        samples = load_clip(self.record(path, 44100, 0, 132300))  # 3 s at 44.1 kHz
        assert samples.shape == (48000,)

    def test_pcm16_scaled(self, tmp_path):
        path = tmp_path / "S" / "e.wav"
        path.parent.mkdir(parents=True)
        wavfile.write(path, 16000, (np.ones(48000) * 16384).astype(np.int16))
        samples = load_clip(self.record(path, 16000, 0, 48000))
        assert samples.max() == pytest.approx(0.5, abs=1e-3)

    def test_clip_exceeding_media_rejected(self, tmp_path):
        path = self.write_wav(tmp_path / "S" / "e.wav", 16000, 1.0)
        with pytest.raises(ValidationError, match="exceeds media"):
            load_clip(self.record(path, 16000, 0, 16001))

    def test_rate_mismatch_rejected(self, tmp_path):
        path = self.write_wav(tmp_path / "S" / "e.wav", 16000, 1.0)
        with pytest.raises(ValidationError, match="rate"):
            load_clip(self.record(path, 22050, 0, 8000))

    def test_missing_media_rejected(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_clip(self.record(tmp_path / "none.wav", 16000, 0, 100))


class TestDatasetFromClips:
    def test_extraction_with_cache(self, tmp_path):
        rate = 16000
        path = TestLoadClip().write_wav(tmp_path / "S" / "e.wav", rate, 1.0)
        cfg = FrontendConfig(pad_to_s=0.2)
        clips = [
            ClipRecord("S", "e", f"S_e_{i}", i * 3200, (i + 1) * 3200, rate, path)
            for i in range(3)
        ]
        labels = {c.clip_id: i % 6 for i, c in enumerate(clips)}
        dataset, skipped = dataset_from_clips(clips, labels, cfg, cache_dir=tmp_path / "cache")
        assert skipped == [] and len(dataset) == 3
        assert dataset.features.shape == (3, cfg.n_mels, cfg.n_frames)
        again, _ = dataset_from_clips(clips, labels, cfg, cache_dir=tmp_path / "cache")
        assert again.features.tobytes() == dataset.features.tobytes()

    def test_skip_errors_collects_failures(self, tmp_path):
        rate = 16000
        path = TestLoadClip().write_wav(tmp_path / "S" / "e.wav", rate, 1.0)
        cfg = FrontendConfig(pad_to_s=0.2)
        good = ClipRecord("S", "e", "S_e_0", 0, 3200, rate, path)
        bad = ClipRecord("S", "e", "S_e_9", 0, 3200, rate, tmp_path / "gone.wav")
        dataset, skipped = dataset_from_clips(
            [good, bad], {"S_e_0": 1, "S_e_9": 2}, cfg, skip_errors=True
        )
        assert len(dataset) == 1
        assert [clip_id for clip_id, _ in skipped] == ["S_e_9"]
