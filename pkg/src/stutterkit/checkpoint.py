"""Named-tensor archive I/O and pretrained-weight loading.

Archive layout (all little-endian): the 4-byte magic ``SKTA``, a u32 format
version, a u64 length of the JSON index, the index itself, then raw tensor
bytes. The index maps each tensor name to dtype, shape, and payload offset
and carries an optional metadata record.

``load_pretrained`` accepts archives using either this package's native
parameter names or the published encoder checkpoint naming scheme (mapping
table below); classification-head tensors are optional and stay randomly
initialized when absent.
"""

from __future__ import annotations

import json
import re
import struct
from pathlib import Path
from typing import Optional

import numpy as np

from .encoder import EncoderClassifier
from .errors import CheckpointError

_MAGIC = b"SKTA"
_VERSION = 1

# Published encoder naming scheme -> native names. Layer-scoped tensors are
# handled by _external_to_native below.
_STATIC_NAME_MAP = {
    "conv1.weight": "conv1.weight",
    "conv1.bias": "conv1.bias",
    "conv2.weight": "conv2.weight",
    "conv2.bias": "conv2.bias",
    "embed_positions.weight": "embed_positions.weight",
    "layer_norm.weight": "ln_post.weight",
    "layer_norm.bias": "ln_post.bias",
    "projector.weight": "head.projector.weight",
    "projector.bias": "head.projector.bias",
    "classifier.weight": "head.classifier.weight",
    "classifier.bias": "head.classifier.bias",
}

_LAYER_FIELD_MAP = {
    "self_attn_layer_norm.weight": "attn_ln.weight",
    "self_attn_layer_norm.bias": "attn_ln.bias",
    "self_attn.q_proj.weight": "attn.q.weight",
    "self_attn.q_proj.bias": "attn.q.bias",
    "self_attn.k_proj.weight": "attn.k.weight",
    "self_attn.v_proj.weight": "attn.v.weight",
    "self_attn.v_proj.bias": "attn.v.bias",
    "self_attn.out_proj.weight": "attn.out.weight",
    "self_attn.out_proj.bias": "attn.out.bias",
    "final_layer_norm.weight": "mlp_ln.weight",
    "final_layer_norm.bias": "mlp_ln.bias",
    "fc1.weight": "mlp.fc1.weight",
    "fc1.bias": "mlp.fc1.bias",
    "fc2.weight": "mlp.fc2.weight",
    "fc2.bias": "mlp.fc2.bias",
}

_PREFIXES = ("model.encoder.", "encoder.", "model.")


def save_archive(path, tensors: dict, metadata: Optional[dict] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    index = {"tensors": {}, "metadata": metadata or {}}
    payload = bytearray()
    for name, tensor in tensors.items():
        tensor = np.asarray(tensor)
        le = tensor.astype(tensor.dtype.newbyteorder("<"), copy=False)
        raw = np.ascontiguousarray(le).tobytes()
        index["tensors"][name] = {
            "dtype": le.dtype.str,
            "shape": list(tensor.shape),
            "offset": len(payload),
            "nbytes": len(raw),
        }
        payload.extend(raw)
    blob = json.dumps(index).encode("utf-8")
    tmp = path.with_suffix(path.suffix + ".tmp")
    with tmp.open("wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(bytes(payload))
    tmp.replace(path)
    return path


def load_archive(path) -> tuple:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    with path.open("rb") as fh:
        if fh.read(4) != _MAGIC:
            raise CheckpointError(f"not a tensor archive: {path}")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != _VERSION:
            raise CheckpointError(f"unsupported archive version {version}: {path}")
        (index_len,) = struct.unpack("<Q", fh.read(8))
        index = json.loads(fh.read(index_len).decode("utf-8"))
        payload = fh.read()
    tensors = {}
    for name, info in index["tensors"].items():
        raw = payload[info["offset"] : info["offset"] + info["nbytes"]]
        tensors[name] = np.frombuffer(raw, dtype=np.dtype(info["dtype"])).reshape(
            info["shape"]
        )
    return tensors, index.get("metadata", {})


def _external_to_native(name: str) -> Optional[str]:
    for prefix in _PREFIXES:
        if name.startswith(prefix):
            name = name[len(prefix) :]
            break
    if name in _STATIC_NAME_MAP:
        return _STATIC_NAME_MAP[name]
    match = re.match(r"layers\.(\d+)\.(.+)$", name)
    if match and match.group(2) in _LAYER_FIELD_MAP:
        return f"layers.{match.group(1)}.{_LAYER_FIELD_MAP[match.group(2)]}"
    return None


class LoadReport:
    def __init__(self, matched, missing, unused):
        self.matched = sorted(matched)
        self.missing = sorted(missing)
        self.unused = sorted(unused)

    def __repr__(self):
        return (
            f"LoadReport(matched={len(self.matched)}, missing={len(self.missing)}, "
            f"unused={len(self.unused)})"
        )


def load_pretrained(model: EncoderClassifier, path) -> LoadReport:
    """Copy every encoder tensor from the archive into the model by name.

    Head tensors are optional (a pretrained encoder has none); any other
    missing model tensor is fatal, as is a per-tensor shape mismatch.
    """
    tensors, _ = load_archive(path)
    resolved = {}
    unused = []
    for name, tensor in tensors.items():
        native = name if name in model.params else _external_to_native(name)
        if native is None or native not in model.params:
            unused.append(name)
            continue
        if native in resolved:
            raise CheckpointError(f"duplicate tensor after name mapping: {native}")
        resolved[native] = tensor

    matched, missing = [], []
    for native, target in model.params.items():
        if native not in resolved:
            if native.startswith("head."):
                continue  # stays randomly initialized by design
            missing.append(native)
            continue
        source = resolved[native]
        if tuple(source.shape) != tuple(target.shape):
            raise CheckpointError(
                f"shape mismatch for {native}: checkpoint {tuple(source.shape)} "
                f"vs model {tuple(target.shape)}"
            )
        model.params[native] = np.ascontiguousarray(source, dtype=model.dtype)
        matched.append(native)

    if missing:
        ckpt_layers = {
            int(m.group(1))
            for m in (re.match(r"layers\.(\d+)\.", n) for n in resolved)
            if m
        }
        n_expected = model.cfg.n_layers
        if ckpt_layers and len(ckpt_layers) != n_expected and all(
            re.match(r"layers\.(\d+)\.", n) for n in missing
        ):
            raise CheckpointError(
                f"encoder layer count mismatch: checkpoint has {len(ckpt_layers)} "
                f"layers, config expects {n_expected}"
            )
        raise CheckpointError(f"missing encoder tensors: {missing[:8]}")
    return LoadReport(matched=matched, missing=missing, unused=unused)


def save_checkpoint(model: EncoderClassifier, path, metadata: Optional[dict] = None) -> Path:
    from .corpus import CLASS_NAMES

    record = {
        "config": {
            "n_layers": model.cfg.n_layers,
            "d_model": model.cfg.d_model,
            "n_heads": model.cfg.n_heads,
            "ffn_dim": model.cfg.ffn_dim,
            "n_mels": model.cfg.n_mels,
            "n_frames": model.cfg.n_frames,
            "n_classes": model.cfg.n_classes,
            "proj_dim": model.cfg.proj_dim,
            "dtype": model.cfg.dtype,
        },
        "classes": CLASS_NAMES,
        "git_revision": _git_revision(),
    }
    record.update(metadata or {})
    return save_archive(path, model.params, metadata=record)


def load_checkpoint(path) -> tuple:
    """Rebuild a model from a fine-tuned checkpoint; returns (model, metadata)."""
    from .encoder import EncoderConfig

    tensors, metadata = load_archive(path)
    config = metadata.get("config")
    if not config:
        raise CheckpointError(f"checkpoint carries no config record: {path}")
    model = EncoderClassifier(EncoderConfig(**config), seed=0)
    report = load_pretrained(model, path)
    head_missing = [n for n in model.params if n.startswith("head.") and n not in report.matched]
    if head_missing:
        raise CheckpointError(f"fine-tuned checkpoint lacks head tensors: {head_missing}")
    return model, metadata


def _git_revision() -> Optional[str]:
    import subprocess

    try:
        out = subprocess.run(
            ["git", "rev-parse", "HEAD"],
            capture_output=True,
            text=True,
            timeout=5,
            check=False,
        )
    except OSError:
        return None
    revision = out.stdout.strip()
    return revision or None
