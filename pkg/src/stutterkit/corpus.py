"""Label taxonomy, clip catalog, manifest I/O, and speaker-exclusive splits.

Speaker identity is approximated by the podcast show: the corpus carries no
finer speaker metadata, so "speaker-exclusive" means show-exclusive
throughout.
"""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from .errors import CatalogError, ManifestError, SplitError


class DisfluencyClass(enum.IntEnum):
    """The six classification targets, ids 0..5."""

    NO_STUTTERED_WORDS = 0
    WORD_REPETITION = 1
    SOUND_REPETITION = 2
    PROLONGATION = 3
    INTERJECTION = 4
    BLOCK = 5

    @property
    def label(self) -> str:
        return _CLASS_LABELS[self]

    @classmethod
    def from_label(cls, label: str) -> "DisfluencyClass":
        try:
            return _CLASS_BY_LABEL[label]
        except KeyError:
            raise ValueError(f"unknown disfluency class: {label!r}") from None


_CLASS_LABELS = {
    DisfluencyClass.NO_STUTTERED_WORDS: "NoStutteredWords",
    DisfluencyClass.WORD_REPETITION: "WordRepetition",
    DisfluencyClass.SOUND_REPETITION: "SoundRepetition",
    DisfluencyClass.PROLONGATION: "Prolongation",
    DisfluencyClass.INTERJECTION: "Interjection",
    DisfluencyClass.BLOCK: "Block",
}
_CLASS_BY_LABEL = {v: k for k, v in _CLASS_LABELS.items()}

NUM_CLASSES = len(DisfluencyClass)
CLASS_NAMES = [c.label for c in DisfluencyClass]


class RawLabel(enum.Enum):
    """Annotator vote columns: the six class labels plus non-disfluent ones."""

    NO_STUTTERED_WORDS = "NoStutteredWords"
    WORD_REPETITION = "WordRepetition"
    SOUND_REPETITION = "SoundRepetition"
    PROLONGATION = "Prolongation"
    INTERJECTION = "Interjection"
    BLOCK = "Block"
    NATURAL_PAUSE = "NaturalPause"
    DIFFICULT_TO_UNDERSTAND = "DifficultToUnderstand"
    NO_SPEECH = "NoSpeech"
    POOR_AUDIO_QUALITY = "PoorAudioQuality"
    MUSIC = "Music"

    @classmethod
    def from_name(cls, name: str) -> "RawLabel":
        for member in cls:
            if member.value == name:
                return member
        raise ValueError(f"unknown raw label: {name!r}")


RAW_TO_CLASS = {
    RawLabel.NO_STUTTERED_WORDS: DisfluencyClass.NO_STUTTERED_WORDS,
    RawLabel.WORD_REPETITION: DisfluencyClass.WORD_REPETITION,
    RawLabel.SOUND_REPETITION: DisfluencyClass.SOUND_REPETITION,
    RawLabel.PROLONGATION: DisfluencyClass.PROLONGATION,
    RawLabel.INTERJECTION: DisfluencyClass.INTERJECTION,
    RawLabel.BLOCK: DisfluencyClass.BLOCK,
}
EXCLUDED_RAW_LABELS = frozenset(r for r in RawLabel if r not in RAW_TO_CLASS)

# The public corpus abbreviates two column names.
_COLUMN_ALIASES = {
    "SoundRep": "SoundRepetition",
    "WordRep": "WordRepetition",
}

MAX_VOTES = 3

SPLIT_NAMES = (
    "SEP-28k-E",
    "SEP-28k-T",
    "SEP-28k-D",
    "SEP-28k-E-merged",
    "SEP-28k-T-merged",
)
MERGED_SPLITS = ("SEP-28k-E-merged", "SEP-28k-T-merged")

ROLE_DOMINANT = "4ds"
ROLE_SET1 = "set1"
ROLE_SET2 = "set2"
ROLE_EXTERNAL = "external"


@dataclass(frozen=True)
class ClipRecord:
    """One catalogued clip: offsets are samples at the media's native rate."""

    show_id: str
    episode_id: str
    clip_id: str
    start_sample: int
    stop_sample: int
    sample_rate: int
    media_path: Path
    resolvable: bool = True

    def __post_init__(self):
        if self.start_sample < 0:
            raise ValueError(f"{self.clip_id}: start_sample must be >= 0")
        if self.stop_sample <= self.start_sample:
            raise ValueError(f"{self.clip_id}: stop_sample must exceed start_sample")
        if self.sample_rate <= 0:
            raise ValueError(f"{self.clip_id}: sample_rate must be positive")

    @property
    def duration_s(self) -> float:
        return (self.stop_sample - self.start_sample) / self.sample_rate


@dataclass(frozen=True)
class AnnotationRow:
    clip_id: str
    votes: dict  # RawLabel -> int in [0, MAX_VOTES]

    def __post_init__(self):
        for label, count in self.votes.items():
            if not 0 <= count <= MAX_VOTES:
                raise ValueError(
                    f"{self.clip_id}: vote out of range for {label.value}: {count}"
                )


@dataclass
class RowError:
    row_number: int
    message: str


@dataclass
class Catalog:
    clips: list
    annotations: list
    row_errors: list = field(default_factory=list)


@dataclass
class SplitAssignment:
    split_name: str
    train: set
    validation: set
    test: set
    speaker_partition: dict  # show_id -> partition role

    def __post_init__(self):
        overlaps = (
            (self.train & self.validation)
            | (self.train & self.test)
            | (self.validation & self.test)
        )
        if overlaps:
            raise SplitError(
                f"{self.split_name}: partitions overlap on {sorted(overlaps)[:5]}"
            )

    def role_of(self, clip_id: str) -> Optional[str]:
        if clip_id in self.train:
            return "train"
        if clip_id in self.validation:
            return "validation"
        if clip_id in self.test:
            return "test"
        return None


def load_catalog(annotations_file, media_root, sample_rate: int = 16000) -> Catalog:
    """Read a delimited annotation table into clip records and vote rows.

    Media paths resolve to ``media_root/<Show>/<EpId>.wav``; rows whose media
    file is absent keep ``resolvable=False`` rather than being dropped.
    Malformed rows are collected as ``row_errors`` with their 1-based row
    number; an unreadable file raises.
    """
    annotations_file = Path(annotations_file)
    media_root = Path(media_root)
    if not annotations_file.exists():
        raise FileNotFoundError(f"annotations file not found: {annotations_file}")

    clips, annotations, errors = [], [], []
    seen_ids = set()
    with annotations_file.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return Catalog(clips, annotations, errors)
        fields = {_COLUMN_ALIASES.get(name, name): name for name in reader.fieldnames}
        missing = [c for c in ("Show", "EpId", "ClipId", "Start", "Stop") if c not in fields]
        if missing:
            raise CatalogError(f"annotation table lacks required columns: {missing}")
        label_columns = {
            RawLabel.from_name(canon): original
            for canon, original in fields.items()
            if canon in {r.value for r in RawLabel}
        }

        for row_number, row in enumerate(reader, start=2):
            try:
                show = row[fields["Show"]].strip()
                episode = row[fields["EpId"]].strip()
                clip = row[fields["ClipId"]].strip()
                if not show or not episode or not clip:
                    raise ValueError("empty Show/EpId/ClipId")
                start = int(row[fields["Start"]])
                stop = int(row[fields["Stop"]])
                clip_id = f"{show}_{episode}_{clip}"
                if clip_id in seen_ids:
                    raise ValueError(f"duplicate clip_id {clip_id}")
                votes = {}
                for label, column in label_columns.items():
                    raw = (row.get(column) or "0").strip() or "0"
                    count = int(raw)
                    if not 0 <= count <= MAX_VOTES:
                        raise ValueError(f"vote out of range for {label.value}: {count}")
                    votes[label] = count
                media_path = media_root / show / f"{episode}.wav"
                record = ClipRecord(
                    show_id=show,
                    episode_id=episode,
                    clip_id=clip_id,
                    start_sample=start,
                    stop_sample=stop,
                    sample_rate=sample_rate,
                    media_path=media_path,
                    resolvable=media_path.exists(),
                )
            except (KeyError, ValueError) as exc:
                errors.append(RowError(row_number, str(exc)))
                continue
            seen_ids.add(clip_id)
            clips.append(record)
            annotations.append(AnnotationRow(clip_id=clip_id, votes=votes))
    return Catalog(clips, annotations, errors)


def rank_speakers(catalog: Iterable[ClipRecord]) -> list:
    """Shows ordered by descending clip count, ties broken lexicographically."""
    counts = {}
    for record in catalog:
        counts[record.show_id] = counts.get(record.show_id, 0) + 1
    if not counts:
        raise CatalogError("cannot rank speakers of an empty catalog")
    return sorted(counts.items(), key=lambda item: (-item[1], item[0]))


def _partition_remainder(ranked_remainder) -> tuple:
    """Split shows into two clip-count-balanced groups (greedy bin packing)."""
    set1, set2 = [], []
    load1 = load2 = 0
    for show, count in ranked_remainder:
        if load1 <= load2:
            set1.append(show)
            load1 += count
        else:
            set2.append(show)
            load2 += count
    return set(set1), set(set2)


def build_split(
    split_name: str,
    catalog: Iterable[ClipRecord],
    external_catalog: Optional[Iterable[ClipRecord]] = None,
) -> SplitAssignment:
    """Assemble one of the five split configurations from a curated catalog.

    The four most clip-heavy shows form the dominant group; the remaining
    shows are partitioned into two balanced distinct-speaker sets. Merged
    variants test on the supplied external catalog.
    """
    if split_name not in SPLIT_NAMES:
        raise SplitError(f"unknown split name: {split_name!r} (expected one of {SPLIT_NAMES})")
    catalog = list(catalog)
    ranked = rank_speakers(catalog)
    if len(ranked) < 5:
        raise SplitError(
            f"{split_name}: need at least 5 distinct shows to form the dominant "
            f"group plus two disjoint remainder sets, got {len(ranked)}"
        )
    dominant = {show for show, _ in ranked[:4]}
    set1, set2 = _partition_remainder(ranked[4:])

    def clips_of(shows):
        return {r.clip_id for r in catalog if r.show_id in shows}

    partition = {show: ROLE_DOMINANT for show in dominant}
    partition.update({show: ROLE_SET1 for show in set1})
    partition.update({show: ROLE_SET2 for show in set2})

    external_ids: set = set()
    if split_name in MERGED_SPLITS:
        if external_catalog is None:
            raise SplitError(f"{split_name}: merged split requires an external test catalog")
        external_catalog = list(external_catalog)
        external_ids = {r.clip_id for r in external_catalog}
        collisions = external_ids & {r.clip_id for r in catalog}
        if collisions:
            raise SplitError(
                f"{split_name}: external clip ids collide with catalog: {sorted(collisions)[:5]}"
            )
        for record in external_catalog:
            partition.setdefault(record.show_id, ROLE_EXTERNAL)

    if split_name == "SEP-28k-E":
        train, val, test = clips_of(dominant), clips_of(set1), clips_of(set2)
    elif split_name == "SEP-28k-T":
        train, val, test = clips_of(set1), clips_of(set2), clips_of(dominant)
    elif split_name == "SEP-28k-D":
        train, val, test = clips_of(set2), clips_of(set1), clips_of(dominant)
    elif split_name == "SEP-28k-E-merged":
        train, val, test = clips_of(dominant | set1), clips_of(set2), external_ids
    else:  # SEP-28k-T-merged
        train, val, test = clips_of(set1 | set2), clips_of(dominant), external_ids

    return SplitAssignment(
        split_name=split_name,
        train=train,
        validation=val,
        test=test,
        speaker_partition=partition,
    )


# ---------------------------------------------------------------------------
# manifests: line-delimited JSON, one clip per line
# ---------------------------------------------------------------------------

MANIFEST_ROLES = ("train", "validation", "test")


def _manifest_row(record: ClipRecord, label: DisfluencyClass, role: Optional[str]) -> dict:
    row = {
        "clip_id": record.clip_id,
        "show_id": record.show_id,
        "episode_id": record.episode_id,
        "media_path": str(record.media_path),
        "start_sample": record.start_sample,
        "stop_sample": record.stop_sample,
        "sample_rate": record.sample_rate,
        "label_id": int(label),
        "label_name": label.label,
    }
    if role is not None:
        row["split_role"] = role
    return row


def write_manifest(
    out,
    records: Iterable[ClipRecord],
    labels: dict,
    assignment: Optional[SplitAssignment] = None,
) -> Path:
    """Write one manifest line per clip; role column comes from ``assignment``.

    Every clip must carry a label. With an assignment, only assigned clips
    are written and each line gets its split role; without one the manifest
    represents an unsplit curated corpus.
    """
    out = Path(out)
    records = list(records)
    unlabeled = [r.clip_id for r in records if r.clip_id not in labels]
    if unlabeled:
        raise ManifestError(f"unlabeled clips in manifest: {sorted(unlabeled)[:10]}")
    lines = []
    for record in sorted(records, key=lambda r: r.clip_id):
        role = assignment.role_of(record.clip_id) if assignment else None
        if assignment is not None and role is None:
            continue
        lines.append(json.dumps(_manifest_row(record, labels[record.clip_id], role)))
    tmp = out.with_suffix(out.suffix + ".tmp")
    tmp.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    tmp.replace(out)
    return out


@dataclass
class ManifestData:
    clips: list
    labels: dict  # clip_id -> DisfluencyClass
    roles: dict  # clip_id -> role or None

    def assignment(self, split_name: str = "manifest") -> SplitAssignment:
        partition = {}
        by_role = {"train": set(), "validation": set(), "test": set()}
        for clip in self.clips:
            role = self.roles.get(clip.clip_id)
            if role is not None:
                by_role[role].add(clip.clip_id)
                partition.setdefault(clip.show_id, set())
        return SplitAssignment(
            split_name=split_name,
            train=by_role["train"],
            validation=by_role["validation"],
            test=by_role["test"],
            speaker_partition={
                clip.show_id: self.roles.get(clip.clip_id) for clip in self.clips
            },
        )


def read_manifest(path) -> ManifestData:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}")
    clips, labels, roles = [], {}, {}
    seen = set()
    for line_number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{path}:{line_number}: invalid record: {exc}") from exc
        clip_id = row["clip_id"]
        if clip_id in seen:
            raise ManifestError(f"{path}:{line_number}: duplicate clip_id {clip_id}")
        seen.add(clip_id)
        label = DisfluencyClass(int(row["label_id"]))
        if row.get("label_name") and row["label_name"] != label.label:
            raise ManifestError(
                f"{path}:{line_number}: label_id/label_name mismatch for {clip_id}"
            )
        role = row.get("split_role")
        if role is not None and role not in MANIFEST_ROLES:
            raise ManifestError(f"{path}:{line_number}: invalid split_role {role!r}")
        media_path = Path(row["media_path"])
        clips.append(
            ClipRecord(
                show_id=row.get("show_id", clip_id.split("_")[0]),
                episode_id=row.get("episode_id", ""),
                clip_id=clip_id,
                start_sample=int(row["start_sample"]),
                stop_sample=int(row["stop_sample"]),
                sample_rate=int(row["sample_rate"]),
                media_path=media_path,
                resolvable=media_path.exists(),
            )
        )
        labels[clip_id] = label
        roles[clip_id] = role
    return ManifestData(clips=clips, labels=labels, roles=roles)
