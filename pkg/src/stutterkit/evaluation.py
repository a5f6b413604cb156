"""Per-class and weighted F1 evaluation with strategy comparison tables.

"Weighted F1" averages per-class F1 with class supports as weights; the
macro average is emitted alongside since published tables do not state
supports. Reference scores appear in rendered reports as context lines,
never as assertions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .corpus import CLASS_NAMES, NUM_CLASSES
from .errors import ValidationError

# Published per-class F1 for the best configuration (cleaned corpus, first
# three encoder layers frozen, external test set), plus its weighted average.
REFERENCE_F1_CLEAN_S1 = {
    "NoStutteredWords": 0.23,
    "WordRepetition": 0.72,
    "SoundRepetition": 0.89,
    "Prolongation": 0.73,
    "Interjection": 0.70,
    "Block": 0.72,
    "average": 0.81,
}


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # (n_classes, n_classes), rows = true, cols = predicted

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != (NUM_CLASSES, NUM_CLASSES):
            raise ValidationError(
                f"confusion matrix must be {NUM_CLASSES}x{NUM_CLASSES}, got {self.counts.shape}"
            )
        if (self.counts < 0).any():
            raise ValidationError("confusion matrix entries must be non-negative")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts + other.counts)


def confusion(pairs: Iterable) -> ConfusionMatrix:
    """Tally (true, predicted) id pairs; order-independent."""
    counts = np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64)
    for true, predicted in pairs:
        true, predicted = int(true), int(predicted)
        if not (0 <= true < NUM_CLASSES and 0 <= predicted < NUM_CLASSES):
            raise ValidationError(f"label out of range: ({true}, {predicted})")
        counts[true, predicted] += 1
    return ConfusionMatrix(counts)


@dataclass
class EvalReport:
    strategy: str
    data_version: str
    split_name: str
    support: list  # per-class counts
    precision: list
    recall: list
    f1: list
    weighted_f1: float
    macro_f1: float
    skipped_clips: int = 0
    notes: list = field(default_factory=list)

    def to_record(self) -> dict:
        return {
            "strategy": self.strategy,
            "data_version": self.data_version,
            "split_name": self.split_name,
            "classes": CLASS_NAMES,
            "support": self.support,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "weighted_f1": self.weighted_f1,
            "macro_f1": self.macro_f1,
            "skipped_clips": self.skipped_clips,
            "notes": self.notes,
        }

    @classmethod
    def from_record(cls, record: dict) -> "EvalReport":
        return cls(
            strategy=record["strategy"],
            data_version=record["data_version"],
            split_name=record["split_name"],
            support=record["support"],
            precision=record["precision"],
            recall=record["recall"],
            f1=record["f1"],
            weighted_f1=record["weighted_f1"],
            macro_f1=record["macro_f1"],
            skipped_clips=record.get("skipped_clips", 0),
            notes=record.get("notes", []),
        )

    def render_text(self) -> str:
        lines = [
            f"evaluation: strategy={self.strategy} data={self.data_version} "
            f"split={self.split_name}",
            "-" * 62,
            f"{'class':<18} {'support':>8} {'precision':>10} {'recall':>8} {'f1':>8}",
        ]
        for i, name in enumerate(CLASS_NAMES):
            lines.append(
                f"{name:<18} {self.support[i]:>8} {self.precision[i]:>10.3f} "
                f"{self.recall[i]:>8.3f} {self.f1[i]:>8.3f}"
            )
        lines.append("-" * 62)
        lines.append(f"weighted F1: {self.weighted_f1:.4f}    macro F1: {self.macro_f1:.4f}")
        if self.skipped_clips:
            lines.append(f"skipped clips: {self.skipped_clips}")
        lines.append(
            "reference (published, clean corpus / first-3-frozen): "
            f"avg F1 {REFERENCE_F1_CLEAN_S1['average']:.2f}"
        )
        lines.extend(f"note: {note}" for note in self.notes)
        return "\n".join(lines)


def f1_scores(
    cm: ConfusionMatrix,
    strategy: str = "",
    data_version: str = "",
    split_name: str = "",
) -> EvalReport:
    """Per-class precision/recall/F1 plus support-weighted and macro averages.

    Zero-denominator cells follow the 0 convention: a class with no
    predictions and no hits scores 0.
    """
    counts = cm.counts
    tp = np.diag(counts).astype(np.float64)
    fp = counts.sum(axis=0) - tp
    fn = counts.sum(axis=1) - tp
    support = counts.sum(axis=1)

    precision = np.where(tp + fp > 0, tp / np.maximum(tp + fp, 1), 0.0)
    recall = np.where(tp + fn > 0, tp / np.maximum(tp + fn, 1), 0.0)
    f1 = np.where(
        precision + recall > 0,
        2.0 * precision * recall / np.maximum(precision + recall, 1e-300),
        0.0,
    )
    total_support = support.sum()
    weighted = float((support * f1).sum() / total_support) if total_support else 0.0
    macro = float(f1.mean())
    return EvalReport(
        strategy=strategy,
        data_version=data_version,
        split_name=split_name,
        support=[int(s) for s in support],
        precision=[float(p) for p in precision],
        recall=[float(r) for r in recall],
        f1=[float(x) for x in f1],
        weighted_f1=weighted,
        macro_f1=macro,
    )


def evaluate(
    model,
    dataset,
    batch_size: int = 32,
    strategy: str = "",
    data_version: str = "",
    split_name: str = "",
    skipped_clips: int = 0,
) -> EvalReport:
    """Argmax predictions over a feature dataset, assembled into a report."""
    if len(dataset) == 0:
        raise ValidationError("cannot evaluate an empty dataset")
    predicted = model.predict(dataset.features, batch_size=batch_size)
    cm = confusion(zip(dataset.labels.tolist(), predicted.tolist()))
    report = f1_scores(
        cm, strategy=strategy, data_version=data_version, split_name=split_name
    )
    report.skipped_clips = skipped_clips
    if skipped_clips:
        report.notes.append(f"{skipped_clips} clips skipped during feature extraction")
    return report


@dataclass
class ComparisonTable:
    columns: list  # (data_version, strategy) keys in insertion order
    rows: dict  # class name (or "average") -> list of f1 values

    def render_text(self) -> str:
        headers = [f"{d}/{s}" for d, s in self.columns]
        width = max(18, *(len(h) + 2 for h in headers))
        lines = ["strategy comparison (per-class F1)", "-" * (20 + width * len(headers))]
        lines.append("class".ljust(20) + "".join(h.rjust(width) for h in headers))
        for name in CLASS_NAMES + ["average"]:
            values = self.rows[name]
            lines.append(
                name.ljust(20) + "".join(f"{v:.3f}".rjust(width) for v in values)
            )
        return "\n".join(lines)

    def chart_rows(self) -> list:
        """Flat (class, strategy, data_version, f1) records for plotting."""
        records = []
        for j, (data_version, strategy) in enumerate(self.columns):
            for name in CLASS_NAMES:
                records.append(
                    {
                        "class": name,
                        "strategy": strategy,
                        "data_version": data_version,
                        "f1": self.rows[name][j],
                    }
                )
        return records


def compare_strategies(reports: list) -> ComparisonTable:
    """Side-by-side per-class F1 table keyed by (data version, strategy)."""
    if not reports:
        raise ValidationError("compare_strategies needs at least one report")
    columns = []
    rows = {name: [] for name in CLASS_NAMES + ["average"]}
    for report in reports:
        key = (report.data_version, report.strategy)
        if key in columns:
            raise ValidationError(f"duplicate (data_version, strategy) key: {key}")
        if len(report.f1) != NUM_CLASSES:
            raise ValidationError("report class list does not match the taxonomy")
        columns.append(key)
        for i, name in enumerate(CLASS_NAMES):
            rows[name].append(report.f1[i])
        rows["average"].append(report.weighted_f1)
    return ComparisonTable(columns=columns, rows=rows)


def write_report_files(report: EvalReport, out_dir) -> tuple:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    text_path = out_dir / "report.txt"
    text_path.write_text(report.render_text() + "\n", encoding="utf-8")
    record_path = out_dir / "report.jsonl"
    record_path.write_text(json.dumps(report.to_record()) + "\n", encoding="utf-8")
    return text_path, record_path
