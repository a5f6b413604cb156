"""Fine-tuning loop: minibatch AdamW over the trainable parameter groups,
early stopping on validation loss with best-weight restoration, and
wall-clock runtime accounting.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import kernels
from .checkpoint import save_checkpoint
from .encoder import EncoderClassifier, FreezePlan, cross_entropy
from .errors import ConfigError, ValidationError
from .evaluation import evaluate

# Published end-to-end fine-tuning runtimes (seconds), shown as context.
REFERENCE_RUNTIME_S = {
    "wav2vec2.0": 5995.19,
    "whisper-encoder-classifier": 1389.07,
}


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    learning_rate: float = 2.5e-5
    max_epochs: int = 20
    early_stop_patience: int = 3
    seed: int = 0
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    warmup_steps: int = 0
    class_weights: Optional[tuple] = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.early_stop_patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.early_stop_patience}")
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_weighted_f1: float
    seconds: float

    def to_record(self) -> dict:
        return {
            "epoch": self.epoch,
            "train_loss": self.train_loss,
            "val_loss": self.val_loss,
            "val_weighted_f1": self.val_weighted_f1,
            "seconds": self.seconds,
        }


@dataclass
class TrainRun:
    epochs: list
    best_epoch: int
    stopped_early: bool
    total_runtime_s: float
    checkpoint_path: Optional[Path] = None
    metadata: dict = field(default_factory=dict)


class EarlyStopper:
    """Stop after ``patience`` epochs without strict validation-loss improvement."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best_loss = float("inf")
        self.best_epoch = 0
        self.epochs_since_best = 0

    def update(self, epoch: int, loss: float) -> bool:
        if loss < self.best_loss:
            self.best_loss = loss
            self.best_epoch = epoch
            self.epochs_since_best = 0
            return False
        self.epochs_since_best += 1
        return self.epochs_since_best >= self.patience


class AdamW:
    """Decoupled-weight-decay Adam over a fixed set of named tensors."""

    def __init__(self, params: dict, names, cfg: TrainConfig):
        self.names = sorted(names)
        self.cfg = cfg
        self.moment1 = {n: np.zeros_like(params[n]) for n in self.names}
        self.moment2 = {n: np.zeros_like(params[n]) for n in self.names}
        self.step_count = 0

    def step(self, params: dict, grads: dict, lr: float) -> None:
        cfg = self.cfg
        self.step_count += 1
        bc1 = 1.0 - cfg.beta1 ** self.step_count
        bc2 = 1.0 - cfg.beta2 ** self.step_count
        for name in self.names:
            kernels.adamw_update(
                params[name].ravel(),
                np.ascontiguousarray(grads[name]).ravel(),
                self.moment1[name].ravel(),
                self.moment2[name].ravel(),
                lr,
                cfg.beta1,
                cfg.beta2,
                cfg.adam_eps,
                cfg.weight_decay,
                bc1,
                bc2,
            )


def _validation_metrics(model, val_set, cfg: TrainConfig, data_version, split_name):
    total_loss = 0.0
    n = len(val_set)
    for start in range(0, n, cfg.batch_size):
        batch = val_set.features[start : start + cfg.batch_size]
        targets = val_set.labels[start : start + cfg.batch_size]
        logits = model.forward(batch)
        loss, _ = cross_entropy(logits, targets, cfg.class_weights)
        total_loss += loss * len(targets)
    report = evaluate(
        model,
        val_set,
        batch_size=cfg.batch_size,
        strategy="validation",
        data_version=data_version,
        split_name=split_name,
    )
    return total_loss / n, report.weighted_f1


def train(
    model: EncoderClassifier,
    plan: FreezePlan,
    train_set,
    val_set,
    cfg: TrainConfig,
    run_dir=None,
    data_version: str = "",
    split_name: str = "",
) -> TrainRun:
    """Fine-tune the trainable groups; returns the per-epoch history.

    Only parameters in trainable groups receive optimizer updates. The best
    validation-loss weights are restored before the checkpoint is written.
    """
    if len(train_set) == 0 or len(val_set) == 0:
        raise ValidationError("train and validation sets must be non-empty")
    for labels in (train_set.labels, val_set.labels):
        if labels.min() < 0 or labels.max() >= model.cfg.n_classes:
            raise ValidationError("dataset labels out of range for the class taxonomy")

    trainable = [
        name for name in model.params if plan.is_trainable(model.group_of(name))
    ]
    optimizer = AdamW(model.params, trainable, cfg)
    rng = np.random.default_rng(cfg.seed)
    stopper = EarlyStopper(cfg.early_stop_patience)
    best_params: dict = {}
    records = []
    stopped_early = False
    run_start = time.perf_counter()
    global_step = 0

    run_dir = Path(run_dir) if run_dir is not None else None
    metrics_fh = None
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)
        metrics_fh = (run_dir / "metrics.jsonl").open("w", encoding="utf-8")

    try:
        for epoch in range(1, cfg.max_epochs + 1):
            epoch_start = time.perf_counter()
            order = rng.permutation(len(train_set))
            losses = []
            for start in range(0, len(order), cfg.batch_size):
                index = order[start : start + cfg.batch_size]
                batch = train_set.features[index]
                targets = train_set.labels[index]
                loss, grads, _ = model.loss_and_grads(batch, targets, cfg.class_weights)
                if not np.isfinite(loss):
                    clip_ids = [train_set.clip_ids[i] for i in index[:8]]
                    raise RuntimeError(
                        f"non-finite loss at epoch {epoch} step {global_step}; "
                        f"batch clips: {clip_ids}"
                    )
                global_step += 1
                lr = cfg.learning_rate
                if cfg.warmup_steps > 0:
                    lr *= min(1.0, global_step / cfg.warmup_steps)
                optimizer.step(model.params, grads, lr)
                losses.append(loss)

            val_loss, val_f1 = _validation_metrics(
                model, val_set, cfg, data_version, split_name
            )
            record = EpochRecord(
                epoch=epoch,
                train_loss=float(np.mean(losses)),
                val_loss=float(val_loss),
                val_weighted_f1=float(val_f1),
                seconds=time.perf_counter() - epoch_start,
            )
            records.append(record)
            if metrics_fh is not None:
                metrics_fh.write(json.dumps(record.to_record()) + "\n")
                metrics_fh.flush()

            should_stop = stopper.update(epoch, val_loss)
            if stopper.best_epoch == epoch:
                best_params = {k: v.copy() for k, v in model.params.items()}
            if should_stop:
                stopped_early = True
                break
    finally:
        if metrics_fh is not None:
            metrics_fh.close()

    if best_params:
        model.params.update(best_params)
    total_runtime = time.perf_counter() - run_start

    run = TrainRun(
        epochs=records,
        best_epoch=stopper.best_epoch,
        stopped_early=stopped_early,
        total_runtime_s=total_runtime,
        metadata={
            "strategy": plan.strategy.value,
            "frozen_groups": sorted(plan.frozen_groups),
            "trainable_count": plan.trainable_count,
            "frozen_count": plan.frozen_count,
            "seed": cfg.seed,
            "data_version": data_version,
            "split_name": split_name,
        },
    )
    if run_dir is not None:
        checkpoint_path = run_dir / "best.ckpt"
        save_checkpoint(
            model,
            checkpoint_path,
            metadata={
                "freeze": run.metadata,
                "best_epoch": run.best_epoch,
                "stopped_early": stopped_early,
            },
        )
        run.checkpoint_path = checkpoint_path
        summary = {
            "best_epoch": run.best_epoch,
            "stopped_early": stopped_early,
            "total_runtime_s": total_runtime,
            "epochs": [r.to_record() for r in records],
            **run.metadata,
        }
        (run_dir / "run.json").write_text(
            json.dumps(summary, indent=2) + "\n", encoding="utf-8"
        )
    return run


@dataclass
class RuntimeReport:
    total_s: float
    per_epoch_mean_s: float
    n_epochs: int
    references: dict

    def render_text(self) -> str:
        lines = [
            "training runtime",
            "-" * 40,
            f"epochs completed: {self.n_epochs}",
            f"total: {self.total_s:.2f} s",
            f"per-epoch mean: {self.per_epoch_mean_s:.2f} s",
        ]
        for label, seconds in self.references.items():
            lines.append(f"reference: {label} {seconds:.2f} s")
        return "\n".join(lines)


def measure_runtime(run: TrainRun) -> RuntimeReport:
    """Wall-clock totals for a completed run, with published context rows."""
    if not run.epochs:
        raise ValidationError("no completed epochs to measure")
    epoch_seconds = [r.seconds for r in run.epochs]
    return RuntimeReport(
        total_s=run.total_runtime_s,
        per_epoch_mean_s=float(np.mean(epoch_seconds)),
        n_epochs=len(run.epochs),
        references=dict(REFERENCE_RUNTIME_S),
    )
