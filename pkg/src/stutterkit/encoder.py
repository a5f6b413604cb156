"""Encoder classifier: conv stem, pre-norm transformer blocks, pooled head.

The network is implemented directly on numpy arrays with hand-written
backward passes (hot elementwise/reduction steps go through
:mod:`stutterkit.kernels`). Weight layout follows the pretrained encoder
checkpoint: key projections carry no bias, positional encodings are the
standard sinusoid table stored as a trainable tensor, and the classification
head is a pooled projection (d_model -> proj_dim) feeding a linear
classifier (proj_dim -> n_classes).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import kernels
from .corpus import NUM_CLASSES
from .errors import ConfigError, ValidationError

_LN_EPS = 1e-5

# Reference trainable-parameter counts (millions) shown in audit reports.
REFERENCE_TRAINABLE_M = {
    "wav2vec2-base": 94.57,
    "whisper-base": 20.72,
    "whisper-base (first 3 layers frozen)": 11.27,
}


@dataclass(frozen=True)
class EncoderConfig:
    n_layers: int = 6
    d_model: int = 512
    n_heads: int = 8
    ffn_dim: int = 2048
    n_mels: int = 80
    n_frames: int = 3000
    n_classes: int = NUM_CLASSES
    proj_dim: Optional[int] = 256
    dtype: str = "float64"

    def __post_init__(self):
        if min(self.n_layers, self.d_model, self.n_heads, self.ffn_dim) < 1:
            raise ConfigError("encoder dimensions must be positive")
        if self.d_model % self.n_heads:
            raise ConfigError(
                f"d_model {self.d_model} not divisible by n_heads {self.n_heads}"
            )
        if self.d_model % 2:
            raise ConfigError("d_model must be even for sinusoidal positions")
        if self.n_frames % 2:
            raise ConfigError("n_frames must be even (conv stem halves it)")
        if self.proj_dim is not None and self.proj_dim < 1:
            raise ConfigError("proj_dim must be positive or None")
        np.dtype(self.dtype)

    @property
    def n_ctx(self) -> int:
        """Sequence length after the stride-2 conv stem."""
        return self.n_frames // 2

    @classmethod
    def base(cls, **overrides) -> "EncoderConfig":
        return cls(**overrides)

    @classmethod
    def tiny(cls, **overrides) -> "EncoderConfig":
        cfg = cls(n_layers=4, d_model=384, n_heads=6, ffn_dim=1536)
        return replace(cfg, **overrides) if overrides else cfg


def sinusoid_table(length: int, channels: int) -> np.ndarray:
    log_timescale = math.log(10000.0) / (channels // 2 - 1)
    inv_timescales = np.exp(-log_timescale * np.arange(channels // 2))
    scaled = np.arange(length)[:, None] * inv_timescales[None, :]
    return np.concatenate([np.sin(scaled), np.cos(scaled)], axis=1)


def parameter_shapes(cfg: EncoderConfig) -> dict:
    """Name -> shape for every parameter, without allocating any weights."""
    d, m, f = cfg.d_model, cfg.n_mels, cfg.ffn_dim
    shapes = {
        "conv1.weight": (d, m, 3),
        "conv1.bias": (d,),
        "conv2.weight": (d, d, 3),
        "conv2.bias": (d,),
        "embed_positions.weight": (cfg.n_ctx, d),
    }
    for i in range(cfg.n_layers):
        prefix = f"layers.{i}"
        shapes[f"{prefix}.attn_ln.weight"] = (d,)
        shapes[f"{prefix}.attn_ln.bias"] = (d,)
        shapes[f"{prefix}.attn.q.weight"] = (d, d)
        shapes[f"{prefix}.attn.q.bias"] = (d,)
        shapes[f"{prefix}.attn.k.weight"] = (d, d)
        shapes[f"{prefix}.attn.v.weight"] = (d, d)
        shapes[f"{prefix}.attn.v.bias"] = (d,)
        shapes[f"{prefix}.attn.out.weight"] = (d, d)
        shapes[f"{prefix}.attn.out.bias"] = (d,)
        shapes[f"{prefix}.mlp_ln.weight"] = (d,)
        shapes[f"{prefix}.mlp_ln.bias"] = (d,)
        shapes[f"{prefix}.mlp.fc1.weight"] = (f, d)
        shapes[f"{prefix}.mlp.fc1.bias"] = (f,)
        shapes[f"{prefix}.mlp.fc2.weight"] = (d, f)
        shapes[f"{prefix}.mlp.fc2.bias"] = (d,)
    shapes["ln_post.weight"] = (d,)
    shapes["ln_post.bias"] = (d,)
    head_in = d
    if cfg.proj_dim is not None:
        shapes["head.projector.weight"] = (cfg.proj_dim, d)
        shapes["head.projector.bias"] = (cfg.proj_dim,)
        head_in = cfg.proj_dim
    shapes["head.classifier.weight"] = (cfg.n_classes, head_in)
    shapes["head.classifier.bias"] = (cfg.n_classes,)
    return shapes


def group_of(name: str) -> str:
    """Parameter-group key for a tensor name (freeze granularity)."""
    if name.startswith("conv"):
        return "conv_stem"
    if name.startswith("embed_positions"):
        return "embed_positions"
    if name.startswith("layers."):
        return ".".join(name.split(".")[:2])
    if name.startswith("ln_post"):
        return "ln_post"
    if name.startswith("head."):
        return "head"
    raise KeyError(f"parameter {name!r} belongs to no group")


def _group_names(cfg: EncoderConfig) -> list:
    seen = []
    for name in parameter_shapes(cfg):
        group = group_of(name)
        if group not in seen:
            seen.append(group)
    return seen


class FreezeStrategy(str, enum.Enum):
    BASE = "base"
    STRATEGY1 = "s1"
    STRATEGY2 = "s2"
    CUSTOM = "custom"


@dataclass(frozen=True)
class FreezePlan:
    strategy: FreezeStrategy
    frozen_groups: frozenset
    trainable_count: int
    frozen_count: int
    group_counts: dict  # group -> parameter count

    @property
    def total_count(self) -> int:
        return self.trainable_count + self.frozen_count

    def is_trainable(self, group: str) -> bool:
        return group not in self.frozen_groups


class EncoderClassifier:
    """Mel spectrogram batch (B, n_mels, n_frames) -> class logits (B, n_classes)."""

    def __init__(self, cfg: EncoderConfig, seed: int = 0):
        self.cfg = cfg
        self.dtype = np.dtype(cfg.dtype)
        self.params = self._init_params(np.random.default_rng(seed))

    # -- parameters ---------------------------------------------------------

    def _init_params(self, rng) -> dict:
        cfg = self.cfg
        shapes = parameter_shapes(cfg)
        params = {}
        for name, shape in shapes.items():
            if name == "embed_positions.weight":
                tensor = sinusoid_table(cfg.n_ctx, cfg.d_model)
            elif "_ln." in name or name.startswith("ln_post"):
                tensor = np.ones(shape) if name.endswith("weight") else np.zeros(shape)
            elif name.startswith("head.") and name.endswith(".bias"):
                tensor = np.zeros(shape)
            else:
                # fan-in-scaled uniform; a bias shares its weight's fan-in
                ref = shapes[name.replace(".bias", ".weight")]
                bound = 1.0 / math.sqrt(int(np.prod(ref[1:])))
                tensor = rng.uniform(-bound, bound, size=shape)
            params[name] = np.ascontiguousarray(tensor, dtype=self.dtype)
        return params

    group_of = staticmethod(group_of)

    def group_names(self) -> list:
        return _group_names(self.cfg)

    def num_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    # -- forward ------------------------------------------------------------

    def _check_input(self, mel: np.ndarray) -> np.ndarray:
        mel = np.asarray(mel)
        expected = (self.cfg.n_mels, self.cfg.n_frames)
        if mel.ndim != 3 or mel.shape[1:] != expected:
            raise ValidationError(
                f"expected input of shape (B, {expected[0]}, {expected[1]}), "
                f"got {mel.shape}"
            )
        return np.ascontiguousarray(mel, dtype=self.dtype)

    def forward(self, mel: np.ndarray, want_cache: bool = False):
        p = self.params
        cfg = self.cfg
        x0 = self._check_input(mel)
        batch = x0.shape[0]
        heads, d = cfg.n_heads, cfg.d_model
        head_dim = d // heads
        scale = 1.0 / math.sqrt(head_dim)
        cache: dict = {"batch": batch}

        y1, cols1 = _conv1d_forward(x0, p["conv1.weight"], p["conv1.bias"], stride=1)
        g1 = kernels.gelu_fwd(y1)
        y2, cols2 = _conv1d_forward(
            np.ascontiguousarray(g1.transpose(0, 2, 1)),
            p["conv2.weight"],
            p["conv2.bias"],
            stride=2,
        )
        g2 = kernels.gelu_fwd(y2)
        seq = g2.shape[1]
        x = g2 + p["embed_positions.weight"][None, :, :]
        if want_cache:
            cache.update(y1=y1, cols1=cols1, y2=y2, cols2=cols2, seq=seq)
            cache["layers"] = []

        for i in range(cfg.n_layers):
            prefix = f"layers.{i}"
            x2d = x.reshape(batch * seq, d)
            h, xhat1, rstd1 = kernels.layernorm_fwd(
                x2d, p[f"{prefix}.attn_ln.weight"], p[f"{prefix}.attn_ln.bias"], _LN_EPS
            )
            q = h @ p[f"{prefix}.attn.q.weight"].T + p[f"{prefix}.attn.q.bias"]
            k = h @ p[f"{prefix}.attn.k.weight"].T
            v = h @ p[f"{prefix}.attn.v.weight"].T + p[f"{prefix}.attn.v.bias"]
            qh = q.reshape(batch, seq, heads, head_dim).transpose(0, 2, 1, 3)
            kh = k.reshape(batch, seq, heads, head_dim).transpose(0, 2, 1, 3)
            vh = v.reshape(batch, seq, heads, head_dim).transpose(0, 2, 1, 3)
            scores = (qh @ kh.transpose(0, 1, 3, 2)) * scale
            probs = kernels.softmax_rows(
                np.ascontiguousarray(scores.reshape(-1, seq))
            ).reshape(batch, heads, seq, seq)
            context = probs @ vh
            merged = np.ascontiguousarray(context.transpose(0, 2, 1, 3)).reshape(
                batch * seq, d
            )
            attn = merged @ p[f"{prefix}.attn.out.weight"].T + p[f"{prefix}.attn.out.bias"]
            x_mid = x + attn.reshape(batch, seq, d)

            m2d = x_mid.reshape(batch * seq, d)
            h2, xhat2, rstd2 = kernels.layernorm_fwd(
                m2d, p[f"{prefix}.mlp_ln.weight"], p[f"{prefix}.mlp_ln.bias"], _LN_EPS
            )
            a = h2 @ p[f"{prefix}.mlp.fc1.weight"].T + p[f"{prefix}.mlp.fc1.bias"]
            g = kernels.gelu_fwd(a)
            mlp = g @ p[f"{prefix}.mlp.fc2.weight"].T + p[f"{prefix}.mlp.fc2.bias"]
            x_out = x_mid + mlp.reshape(batch, seq, d)

            if want_cache:
                cache["layers"].append(
                    dict(
                        h=h, xhat1=xhat1, rstd1=rstd1, qh=qh, kh=kh, vh=vh,
                        probs=probs, merged=merged, h2=h2, xhat2=xhat2,
                        rstd2=rstd2, a=a, g=g,
                    )
                )
            x = x_out

        x2d = x.reshape(batch * seq, d)
        enc, xhat3, rstd3 = kernels.layernorm_fwd(
            x2d, p["ln_post.weight"], p["ln_post.bias"], _LN_EPS
        )
        pooled = enc.reshape(batch, seq, d).mean(axis=1)
        if cfg.proj_dim is not None:
            projected = pooled @ p["head.projector.weight"].T + p["head.projector.bias"]
        else:
            projected = pooled
        logits = projected @ p["head.classifier.weight"].T + p["head.classifier.bias"]

        if not want_cache:
            return logits
        cache.update(xhat3=xhat3, rstd3=rstd3, pooled=pooled, projected=projected)
        return logits, cache

    # -- backward -----------------------------------------------------------

    def backward(self, dlogits: np.ndarray, cache: dict) -> dict:
        p = self.params
        cfg = self.cfg
        batch, seq = cache["batch"], cache["seq"]
        heads, d = cfg.n_heads, cfg.d_model
        head_dim = d // heads
        scale = 1.0 / math.sqrt(head_dim)
        grads: dict = {}

        grads["head.classifier.weight"] = dlogits.T @ cache["projected"]
        grads["head.classifier.bias"] = dlogits.sum(axis=0)
        dprojected = dlogits @ p["head.classifier.weight"]
        if cfg.proj_dim is not None:
            grads["head.projector.weight"] = dprojected.T @ cache["pooled"]
            grads["head.projector.bias"] = dprojected.sum(axis=0)
            dpooled = dprojected @ p["head.projector.weight"]
        else:
            dpooled = dprojected
        denc = np.broadcast_to(
            dpooled[:, None, :] / seq, (batch, seq, d)
        ).reshape(batch * seq, d)

        dx2d, dw, db = _layernorm_backward(
            denc, cache["xhat3"], cache["rstd3"], p["ln_post.weight"]
        )
        grads["ln_post.weight"] = dw
        grads["ln_post.bias"] = db
        dx = dx2d.reshape(batch, seq, d)

        for i in reversed(range(cfg.n_layers)):
            prefix = f"layers.{i}"
            c = cache["layers"][i]

            # MLP block
            dmlp = dx.reshape(batch * seq, d)
            grads[f"{prefix}.mlp.fc2.weight"] = dmlp.T @ c["g"]
            grads[f"{prefix}.mlp.fc2.bias"] = dmlp.sum(axis=0)
            dg = dmlp @ p[f"{prefix}.mlp.fc2.weight"]
            da = kernels.gelu_bwd(c["a"], dg)
            grads[f"{prefix}.mlp.fc1.weight"] = da.T @ c["h2"]
            grads[f"{prefix}.mlp.fc1.bias"] = da.sum(axis=0)
            dh2 = da @ p[f"{prefix}.mlp.fc1.weight"]
            dm2d, dw, db = _layernorm_backward(
                dh2, c["xhat2"], c["rstd2"], p[f"{prefix}.mlp_ln.weight"]
            )
            grads[f"{prefix}.mlp_ln.weight"] = dw
            grads[f"{prefix}.mlp_ln.bias"] = db
            dx_mid = dx + dm2d.reshape(batch, seq, d)

            # attention block
            dattn = dx_mid.reshape(batch * seq, d)
            grads[f"{prefix}.attn.out.weight"] = dattn.T @ c["merged"]
            grads[f"{prefix}.attn.out.bias"] = dattn.sum(axis=0)
            dmerged = (dattn @ p[f"{prefix}.attn.out.weight"]).reshape(
                batch, seq, heads, head_dim
            ).transpose(0, 2, 1, 3)
            dprobs = dmerged @ c["vh"].transpose(0, 1, 3, 2)
            dvh = c["probs"].transpose(0, 1, 3, 2) @ dmerged
            dscores = kernels.softmax_rows_bwd(
                np.ascontiguousarray(c["probs"].reshape(-1, seq)),
                np.ascontiguousarray(dprobs.reshape(-1, seq)),
            ).reshape(batch, heads, seq, seq)
            dqh = (dscores @ c["kh"]) * scale
            dkh = (dscores.transpose(0, 1, 3, 2) @ c["qh"]) * scale
            dq = np.ascontiguousarray(dqh.transpose(0, 2, 1, 3)).reshape(batch * seq, d)
            dk = np.ascontiguousarray(dkh.transpose(0, 2, 1, 3)).reshape(batch * seq, d)
            dv = np.ascontiguousarray(dvh.transpose(0, 2, 1, 3)).reshape(batch * seq, d)
            grads[f"{prefix}.attn.q.weight"] = dq.T @ c["h"]
            grads[f"{prefix}.attn.q.bias"] = dq.sum(axis=0)
            grads[f"{prefix}.attn.k.weight"] = dk.T @ c["h"]
            grads[f"{prefix}.attn.v.weight"] = dv.T @ c["h"]
            grads[f"{prefix}.attn.v.bias"] = dv.sum(axis=0)
            dh = (
                dq @ p[f"{prefix}.attn.q.weight"]
                + dk @ p[f"{prefix}.attn.k.weight"]
                + dv @ p[f"{prefix}.attn.v.weight"]
            )
            dxl, dw, db = _layernorm_backward(
                dh, c["xhat1"], c["rstd1"], p[f"{prefix}.attn_ln.weight"]
            )
            grads[f"{prefix}.attn_ln.weight"] = dw
            grads[f"{prefix}.attn_ln.bias"] = db
            dx = dx_mid + dxl.reshape(batch, seq, d)

        grads["embed_positions.weight"] = dx.sum(axis=0)

        dg2 = dx
        dy2 = kernels.gelu_bwd(cache["y2"], np.ascontiguousarray(dg2))
        dW2, db2, dg1t = _conv1d_backward(
            dy2, cache["cols2"], p["conv2.weight"], (batch, d, cfg.n_frames), stride=2
        )
        grads["conv2.weight"] = dW2
        grads["conv2.bias"] = db2
        dg1 = np.ascontiguousarray(dg1t.transpose(0, 2, 1))
        dy1 = kernels.gelu_bwd(cache["y1"], dg1)
        dW1, db1, _ = _conv1d_backward(
            dy1,
            cache["cols1"],
            p["conv1.weight"],
            (batch, cfg.n_mels, cfg.n_frames),
            stride=1,
            need_dx=False,
        )
        grads["conv1.weight"] = dW1
        grads["conv1.bias"] = db1
        return grads

    def loss_and_grads(self, mel, targets, class_weights=None):
        logits, cache = self.forward(mel, want_cache=True)
        loss, dlogits = cross_entropy(logits, targets, class_weights)
        grads = self.backward(dlogits, cache)
        return loss, grads, logits

    def predict(self, mel, batch_size: int = 32) -> np.ndarray:
        mel = np.asarray(mel)
        outputs = []
        for start in range(0, mel.shape[0], batch_size):
            logits = self.forward(mel[start : start + batch_size])
            outputs.append(np.argmax(logits, axis=1))
        if not outputs:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate(outputs)


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------


def _conv1d_forward(x, weight, bias, stride):
    """Kernel-3, pad-1 1-D convolution via im2col; returns (y, cols).

    ``x`` is (B, C, T); the output is (B, T // stride, C_out).
    """
    b, c, t = x.shape
    out_c, _, k = weight.shape
    xp = np.zeros((b, c, t + 2), dtype=x.dtype)
    xp[:, :, 1:-1] = x
    t_out = t // stride
    s0, s1, s2 = xp.strides
    windows = np.lib.stride_tricks.as_strided(
        xp, shape=(b, t_out, c, k), strides=(s0, s2 * stride, s1, s2)
    )
    cols = windows.reshape(b * t_out, c * k)
    y = cols @ weight.reshape(out_c, c * k).T + bias
    return y.reshape(b, t_out, out_c), cols


def _conv1d_backward(dy, cols, weight, x_shape, stride, need_dx: bool = True):
    b, c, t = x_shape
    out_c, _, k = weight.shape
    t_out = dy.shape[1]
    dy2 = dy.reshape(b * t_out, out_c)
    dweight = (dy2.T @ cols).reshape(out_c, c, k)
    dbias = dy2.sum(axis=0)
    if not need_dx:
        return dweight, dbias, None
    dwindows = (dy2 @ weight.reshape(out_c, c * k)).reshape(b, t_out, c, k)
    dxp = np.zeros((b, c, t + 2), dtype=dy.dtype)
    for j in range(k):
        dxp[:, :, j : j + stride * t_out : stride] += dwindows[:, :, :, j].transpose(
            0, 2, 1
        )
    return dweight, dbias, dxp[:, :, 1:-1]


def _layernorm_backward(dy, xhat, rstd, weight):
    dyw = dy * weight
    dx = kernels.layernorm_bwd_dx(np.ascontiguousarray(dyw), xhat, rstd)
    dweight = (dy * xhat).sum(axis=0)
    dbias = dy.sum(axis=0)
    return dx, dweight, dbias


def cross_entropy(logits, targets, class_weights=None):
    """Mean cross entropy and its gradient w.r.t. the logits."""
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64)
    n, n_classes = logits.shape
    if targets.shape != (n,):
        raise ValidationError(f"targets shape {targets.shape} does not match batch {n}")
    if targets.min(initial=0) < 0 or targets.max(initial=0) >= n_classes:
        raise ValidationError("target labels out of range")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_z
    probs = np.exp(log_probs)
    if class_weights is None:
        weights = np.ones(n)
        norm = float(n)
    else:
        class_weights = np.asarray(class_weights, dtype=np.float64)
        weights = class_weights[targets]
        norm = float(weights.sum())
    loss = -float((weights * log_probs[np.arange(n), targets]).sum() / norm)
    dlogits = probs * weights[:, None]
    dlogits[np.arange(n), targets] -= weights
    dlogits /= norm
    return loss, dlogits


# ---------------------------------------------------------------------------
# freezing and parameter accounting
# ---------------------------------------------------------------------------


def _config_of(target) -> EncoderConfig:
    return target.cfg if isinstance(target, EncoderClassifier) else target


def apply_freeze(
    target,
    strategy: FreezeStrategy,
    custom_groups: Optional[set] = None,
) -> FreezePlan:
    """Mark parameter groups frozen per strategy and audit the counts.

    Strategy 1 freezes the first three encoder layers; strategy 2 freezes
    every layer after the first three. The conv stem, positional table,
    final norm, and head stay trainable under both. ``target`` may be a
    built model or a bare config (counts come from shapes either way).
    """
    cfg = _config_of(target)
    strategy = FreezeStrategy(strategy)
    n_layers = cfg.n_layers
    if strategy in (FreezeStrategy.STRATEGY1, FreezeStrategy.STRATEGY2) and n_layers < 4:
        raise ConfigError(
            f"{strategy.value} needs at least 4 encoder layers, config has {n_layers}"
        )
    if strategy is FreezeStrategy.BASE:
        frozen = frozenset()
    elif strategy is FreezeStrategy.STRATEGY1:
        frozen = frozenset(f"layers.{i}" for i in range(3))
    elif strategy is FreezeStrategy.STRATEGY2:
        frozen = frozenset(f"layers.{i}" for i in range(3, n_layers))
    else:
        if custom_groups is None:
            raise ConfigError("custom freeze strategy requires an explicit group set")
        unknown = set(custom_groups) - set(_group_names(cfg))
        if unknown:
            raise ConfigError(f"unknown parameter groups in custom mask: {sorted(unknown)}")
        frozen = frozenset(custom_groups)

    group_counts: dict = {}
    for name, shape in parameter_shapes(cfg).items():
        group = group_of(name)
        group_counts[group] = group_counts.get(group, 0) + int(np.prod(shape))
    frozen_count = sum(group_counts[g] for g in frozen)
    trainable_count = sum(group_counts.values()) - frozen_count
    return FreezePlan(
        strategy=strategy,
        frozen_groups=frozen,
        trainable_count=trainable_count,
        frozen_count=frozen_count,
        group_counts=group_counts,
    )


@dataclass
class ParameterAudit:
    total: int
    trainable: int
    frozen: int
    rows: list  # (group, count, trainable flag)

    def render_text(self) -> str:
        lines = ["parameter audit", "-" * 44]
        for group, count, trainable in self.rows:
            state = "trainable" if trainable else "frozen"
            lines.append(f"{group:<22} {count:>12,}  {state}")
        lines.append("-" * 44)
        lines.append(f"{'total':<22} {self.total:>12,}")
        lines.append(f"{'trainable':<22} {self.trainable:>12,}  ({self.trainable / 1e6:.2f} M)")
        lines.append(f"{'frozen':<22} {self.frozen:>12,}")
        lines.append("")
        for label, millions in REFERENCE_TRAINABLE_M.items():
            lines.append(f"reference: {label} {millions:.2f} M trainable")
        return "\n".join(lines)


def count_parameters(target, plan: Optional[FreezePlan] = None) -> ParameterAudit:
    """Exact per-group parameter table; independent of any cached plan counts.

    Counts come from the live tensors when given a model (an independent
    recount) and from declared shapes when given a config.
    """
    cfg = _config_of(target)
    if plan is None:
        plan = apply_freeze(cfg, FreezeStrategy.BASE)
    if isinstance(target, EncoderClassifier):
        sized = {name: tensor.size for name, tensor in target.params.items()}
    else:
        sized = {name: int(np.prod(shape)) for name, shape in parameter_shapes(cfg).items()}
    counts: dict = {}
    for name, size in sized.items():
        group = group_of(name)
        counts[group] = counts.get(group, 0) + size
    rows = []
    total = trainable = 0
    for group in _group_names(cfg):
        count = counts[group]
        is_trainable = plan.is_trainable(group)
        rows.append((group, count, is_trainable))
        total += count
        if is_trainable:
            trainable += count
    return ParameterAudit(total=total, trainable=trainable, frozen=total - trainable, rows=rows)
