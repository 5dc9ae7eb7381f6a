"""Dataset manifests: the record model plus split / downsample / merge / summarize.

A manifest is a line-delimited UTF-8 file with one JSON object per line,
carrying exactly the fields of :class:`UtteranceRecord` (optional fields
omitted when unset).
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Optional, Sequence

LABELS = ("bona_fide", "spoof")
PORTIONS = ("I", "II", "III", "test")


class ManifestError(ValueError):
    """Raised for malformed records, duplicate ids, or bad manifest files."""


@dataclass(frozen=True)
class UtteranceRecord:
    """One audio sample with its label and provenance metadata."""

    utt_id: str
    audio_path: str
    label: str
    language: str
    source: str
    portion: str
    accent: str = ""
    duration_sec: Optional[float] = None
    speaker_id: Optional[str] = None

    def __post_init__(self):
        if not self.utt_id:
            raise ManifestError("utt_id must be non-empty")
        if self.label not in LABELS:
            raise ManifestError(f"record {self.utt_id!r}: label must be one of {LABELS}, got {self.label!r}")
        if self.portion not in PORTIONS:
            raise ManifestError(f"record {self.utt_id!r}: portion must be one of {PORTIONS}, got {self.portion!r}")
        if self.portion == "II" and self.label != "spoof":
            raise ManifestError(f"record {self.utt_id!r}: portion II records must be labeled spoof")
        if self.duration_sec is not None and self.duration_sec < 0:
            raise ManifestError(f"record {self.utt_id!r}: duration_sec must be non-negative")

    def to_json(self) -> str:
        payload = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            if f.name == "accent" and value == "":
                continue
            payload[f.name] = value
        return json.dumps(payload, ensure_ascii=False, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "UtteranceRecord":
        data = json.loads(line)
        if not isinstance(data, dict):
            raise ManifestError("record line is not an object")
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ManifestError(f"unknown record fields: {sorted(unknown)}")
        return cls(**data)


@dataclass
class Manifest:
    """An ordered, immutable-by-convention collection of utterance records."""

    records: list
    name: str = "manifest"
    root: Optional[Path] = None
    _index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.records = list(self.records)
        index = {}
        for rec in self.records:
            if rec.utt_id in index:
                raise ManifestError(f"duplicate utt_id {rec.utt_id!r} in manifest {self.name!r}")
            index[rec.utt_id] = rec
        self._index = index

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def get(self, utt_id: str) -> UtteranceRecord:
        return self._index[utt_id]

    def resolve_path(self, record: UtteranceRecord) -> Path:
        path = Path(record.audio_path)
        if not path.is_absolute() and self.root is not None:
            path = self.root / path
        return path

    def counts(self) -> dict:
        bona = sum(1 for r in self.records if r.label == "bona_fide")
        return {"bona_fide": bona, "spoof": len(self.records) - bona, "total": len(self.records)}


def load_manifest(path) -> Manifest:
    """Loads a manifest preserving on-disk record order."""
    path = Path(path)
    records = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(UtteranceRecord.from_json(line))
            except ManifestError:
                raise
            except (json.JSONDecodeError, TypeError) as exc:
                raise ManifestError(f"{path}:{lineno}: cannot parse record: {exc}") from exc
    return Manifest(records=records, name=path.stem, root=path.parent)


def save_manifest(manifest: Manifest, path) -> None:
    """Writes a manifest so that a reload reproduces it record-for-record."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for rec in manifest.records:
            fh.write(rec.to_json())
            fh.write("\n")


def _stream(seed: int, op_name: str) -> random.Random:
    # Named per-operation RNG stream so results do not depend on call order.
    digest = hashlib.sha256(f"{seed}:{op_name}".encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def _largest_remainder_quotas(class_sizes: dict, target_total: int, grand_total: int) -> dict:
    """Integer per-class quotas summing to target_total, each within 1 of exact."""
    exact = {c: n * target_total / grand_total for c, n in class_sizes.items()}
    quotas = {c: int(exact[c]) for c in class_sizes}
    shortfall = target_total - sum(quotas.values())
    order = sorted(class_sizes, key=lambda c: (-(exact[c] - quotas[c]), c))
    for c in order[:shortfall]:
        quotas[c] += 1
    return quotas


def _by_label(records: Iterable[UtteranceRecord]) -> dict:
    groups: dict = {}
    for rec in records:
        groups.setdefault(rec.label, []).append(rec)
    return groups


def split(manifest: Manifest, ratio_train: int, ratio_valid: int, seed: int):
    """Stratified train/valid split at an integer ratio.

    The train side gets floor(N * ratio_train / (ratio_train + ratio_valid))
    records; the remainder goes to validation. Sampling is stratified by
    label and deterministic for a given seed; outputs are sorted by utt_id.
    """
    if ratio_train <= 0 or ratio_valid <= 0:
        raise ManifestError("split ratio parts must be positive")
    if len(manifest) == 0:
        raise ManifestError("cannot split an empty manifest")
    total = len(manifest)
    target_train = total * ratio_train // (ratio_train + ratio_valid)
    groups = _by_label(manifest.records)
    quotas = _largest_remainder_quotas({c: len(rs) for c, rs in groups.items()}, target_train, total)
    rng = _stream(seed, "split")
    train_records, valid_records = [], []
    for label in sorted(groups):
        pool = sorted(groups[label], key=lambda r: r.utt_id)
        rng.shuffle(pool)
        take = quotas[label]
        train_records.extend(pool[:take])
        valid_records.extend(pool[take:])
    train_records.sort(key=lambda r: r.utt_id)
    valid_records.sort(key=lambda r: r.utt_id)
    train = Manifest(train_records, name=f"{manifest.name}-train", root=manifest.root)
    valid = Manifest(valid_records, name=f"{manifest.name}-valid", root=manifest.root)
    return train, valid


def downsample(manifest: Manifest, target_size: int, seed: int) -> Manifest:
    """Label-stratified subsample of exactly target_size records, sorted by utt_id."""
    if target_size <= 0:
        raise ManifestError("target_size must be positive")
    if target_size > len(manifest):
        raise ManifestError(f"target_size {target_size} exceeds manifest size {len(manifest)}")
    groups = _by_label(manifest.records)
    quotas = _largest_remainder_quotas({c: len(rs) for c, rs in groups.items()}, target_size, len(manifest))
    rng = _stream(seed, "downsample")
    kept = []
    for label in sorted(groups):
        pool = sorted(groups[label], key=lambda r: r.utt_id)
        rng.shuffle(pool)
        kept.extend(pool[: quotas[label]])
    kept.sort(key=lambda r: r.utt_id)
    return Manifest(kept, name=f"{manifest.name}-ds{target_size}", root=manifest.root)


def merge(manifests: Sequence[Manifest], name: str) -> Manifest:
    """Concatenates manifests; utt_ids must be globally unique."""
    records = []
    seen = set()
    for m in manifests:
        for rec in m.records:
            if rec.utt_id in seen:
                raise ManifestError(f"duplicate utt_id {rec.utt_id!r} across merged manifests")
            seen.add(rec.utt_id)
            records.append(rec)
    root = manifests[0].root if manifests else None
    return Manifest(records, name=name, root=root)


GROUPABLE_FIELDS = ("label", "language", "source", "portion")


def summarize(manifest: Manifest, group_by: Sequence[str] = ()) -> list:
    """Per-group bona fide / spoof / total counts.

    Returns a list of rows, each a dict with the grouping fields plus
    "bona_fide", "spoof", and "total". Rows are sorted by group key.
    """
    for f in group_by:
        if f not in GROUPABLE_FIELDS:
            raise ManifestError(f"cannot group by {f!r}; choose from {GROUPABLE_FIELDS}")
    if len(manifest) == 0:
        return []
    group_by = tuple(group_by)
    table: dict = {}
    for rec in manifest.records:
        key = tuple(getattr(rec, f) for f in group_by)
        row = table.setdefault(key, {"bona_fide": 0, "spoof": 0})
        row[rec.label] += 1
    rows = []
    for key in sorted(table):
        counts = table[key]
        row = dict(zip(group_by, key))
        row["bona_fide"] = counts["bona_fide"]
        row["spoof"] = counts["spoof"]
        row["total"] = counts["bona_fide"] + counts["spoof"]
        rows.append(row)
    return rows


def format_summary(rows: list, delimiter: str = "\t") -> str:
    """Renders summarize() output as a delimiter-separated table with header."""
    if not rows:
        return ""
    header = list(rows[0].keys())
    lines = [delimiter.join(header)]
    for row in rows:
        lines.append(delimiter.join(str(row[c]) for c in header))
    return "\n".join(lines) + "\n"
