import numpy as np
import pytest

from stutterkit.checkpoint import (
    LoadReport,
    load_archive,
    load_checkpoint,
    load_pretrained,
    save_archive,
    save_checkpoint,
)
from stutterkit.encoder import EncoderClassifier
from stutterkit.errors import CheckpointError

from _util import TRAIN_CONFIG

# external naming scheme used by the published encoder checkpoints
_LAYER_EXTERNAL = {
    "attn_ln.weight": "self_attn_layer_norm.weight",
    "attn_ln.bias": "self_attn_layer_norm.bias",
    "attn.q.weight": "self_attn.q_proj.weight",
    "attn.q.bias": "self_attn.q_proj.bias",
    "attn.k.weight": "self_attn.k_proj.weight",
    "attn.v.weight": "self_attn.v_proj.weight",
    "attn.v.bias": "self_attn.v_proj.bias",
    "attn.out.weight": "self_attn.out_proj.weight",
    "attn.out.bias": "self_attn.out_proj.bias",
    "mlp_ln.weight": "final_layer_norm.weight",
    "mlp_ln.bias": "final_layer_norm.bias",
    "mlp.fc1.weight": "fc1.weight",
    "mlp.fc1.bias": "fc1.bias",
    "mlp.fc2.weight": "fc2.weight",
    "mlp.fc2.bias": "fc2.bias",
}


def external_name(native: str) -> str:
    if native.startswith("layers."):
        _, index, *rest = native.split(".")
        return f"model.encoder.layers.{index}.{_LAYER_EXTERNAL['.'.join(rest)]}"
    if native.startswith("ln_post."):
        return native.replace("ln_post", "model.encoder.layer_norm")
    if native.startswith("head."):
        return native.replace("head.", "")
    return f"model.encoder.{native}"


def encoder_only_tensors(model):
    return {n: t for n, t in model.params.items() if not n.startswith("head.")}


class TestArchive:
    def test_round_trip_values_dtypes_metadata(self, tmp_path):
        rng = np.random.default_rng(0)
        tensors = {
            "a": rng.standard_normal((3, 4)),
            "b": rng.standard_normal(7).astype(np.float32),
            "c": np.arange(5, dtype=np.int64),
        }
        path = save_archive(tmp_path / "t.ckpt", tensors, metadata={"note": "x"})
        loaded, metadata = load_archive(path)
        assert metadata == {"note": "x"}
        for name, tensor in tensors.items():
            assert loaded[name].dtype == tensor.dtype
            assert np.array_equal(loaded[name], tensor)

    def test_not_an_archive(self, tmp_path):
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(b"whatever")
        with pytest.raises(CheckpointError):
            load_archive(bad)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_archive(tmp_path / "none.ckpt")


class TestLoadPretrained:
    def test_native_names_full_match(self, tmp_path):
        source = EncoderClassifier(TRAIN_CONFIG, seed=1)
        path = save_archive(tmp_path / "enc.ckpt", encoder_only_tensors(source))
        target = EncoderClassifier(TRAIN_CONFIG, seed=2)
        head_before = {
            n: t.copy() for n, t in target.params.items() if n.startswith("head.")
        }
        report = load_pretrained(target, path)
        assert isinstance(report, LoadReport)
        assert report.missing == [] and report.unused == []
        for name, tensor in encoder_only_tensors(source).items():
            assert np.array_equal(target.params[name], tensor)
        for name, tensor in head_before.items():  # head untouched by design
            assert np.array_equal(target.params[name], tensor)

    def test_external_naming_scheme_mapped(self, tmp_path):
        source = EncoderClassifier(TRAIN_CONFIG, seed=3)
        tensors = {
            external_name(n): t for n, t in encoder_only_tensors(source).items()
        }
        path = save_archive(tmp_path / "hf.ckpt", tensors)
        target = EncoderClassifier(TRAIN_CONFIG, seed=4)
        report = load_pretrained(target, path)
        assert report.missing == [] and report.unused == []
        for name, tensor in encoder_only_tensors(source).items():
            assert np.allclose(target.params[name], tensor)

    def test_shape_mismatch_names_tensor(self, tmp_path):
        source = EncoderClassifier(TRAIN_CONFIG, seed=1)
        tensors = encoder_only_tensors(source)
        tensors["conv1.weight"] = np.zeros((2, 2, 3))
        path = save_archive(tmp_path / "bad.ckpt", tensors)
        target = EncoderClassifier(TRAIN_CONFIG, seed=2)
        with pytest.raises(CheckpointError, match="conv1.weight"):
            load_pretrained(target, path)

    def test_layer_count_mismatch(self, tmp_path):
        import dataclasses

        two_layer = dataclasses.replace(TRAIN_CONFIG, n_layers=2)
        source = EncoderClassifier(two_layer, seed=1)
        path = save_archive(tmp_path / "small.ckpt", encoder_only_tensors(source))
        target = EncoderClassifier(TRAIN_CONFIG, seed=2)
        with pytest.raises(CheckpointError, match="layer count mismatch"):
            load_pretrained(target, path)

    def test_missing_encoder_tensor_fatal(self, tmp_path):
        source = EncoderClassifier(TRAIN_CONFIG, seed=1)
        tensors = encoder_only_tensors(source)
        del tensors["ln_post.weight"]
        path = save_archive(tmp_path / "partial.ckpt", tensors)
        with pytest.raises(CheckpointError, match="missing encoder tensors"):
            load_pretrained(EncoderClassifier(TRAIN_CONFIG, seed=2), path)


class TestFineTunedCheckpoints:
    def test_save_load_round_trip(self, tmp_path):
        model = EncoderClassifier(TRAIN_CONFIG, seed=9)
        path = save_checkpoint(
            model, tmp_path / "best.ckpt", metadata={"freeze": {"strategy": "s1"}}
        )
        rebuilt, metadata = load_checkpoint(path)
        assert metadata["freeze"]["strategy"] == "s1"
        assert metadata["config"]["n_layers"] == TRAIN_CONFIG.n_layers
        assert metadata["classes"][0] == "NoStutteredWords"
        assert len(metadata["classes"]) == 6
        assert set(rebuilt.params) == set(model.params)
        for name, tensor in model.params.items():
            assert np.array_equal(rebuilt.params[name], tensor)
        batch = np.random.default_rng(0).standard_normal(
            (2, TRAIN_CONFIG.n_mels, TRAIN_CONFIG.n_frames)
        )
        assert np.array_equal(rebuilt.forward(batch), model.forward(batch))

    def test_checkpoint_without_config_rejected(self, tmp_path):
        model = EncoderClassifier(TRAIN_CONFIG, seed=9)
        path = save_archive(tmp_path / "raw.ckpt", model.params)
        with pytest.raises(CheckpointError, match="config"):
            load_checkpoint(path)
