"""Corpus data model and manifest serialization (TSV / JSONL).

A manifest is an ordered collection of utterance records. Two on-disk
formats are supported:

* TSV: header ``id<TAB>lang<TAB>audio<TAB>duration_s<TAB>speaker<TAB>text<TAB>units``,
  tab-separated, UTF-8, no quoting. Literal tabs/newlines inside fields are
  rejected. An absent optional field is written as the empty string, so TSV
  cannot distinguish "empty text" from "no text".
* JSONL: one object per line with the same field names; absent fields are
  missing keys, which keeps the empty/absent distinction.

Unknown columns (TSV) or keys (JSONL) are preserved per record in
``Utterance.extra``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Mapping, Sequence


TSV_COLUMNS = ("id", "lang", "audio", "duration_s", "speaker", "text", "units")

_FORBIDDEN_IN_TSV = ("\t", "\n", "\r")


class ManifestError(ValueError):
    """Manifest parse or validation failure; carries the offending line."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class Utterance:
    """One corpus record: audio reference, timing, speaker, text and units."""

    id: str
    lang: str = ""
    audio_ref: str | None = None
    duration_s: float | None = None
    speaker: str | None = None
    text: str | None = None
    units: tuple[int, ...] | None = None
    extra: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.id:
            raise ManifestError("utterance id must be nonempty")
        if self.duration_s is not None:
            d = float(self.duration_s)
            if not math.isfinite(d) or d < 0:
                raise ManifestError(f"duration_s must be finite and >= 0, got {self.duration_s!r}")
            object.__setattr__(self, "duration_s", d)
        if self.units is not None:
            object.__setattr__(self, "units", tuple(int(u) for u in self.units))


@dataclass(frozen=True)
class Segment:
    """A [start_s, end_s) slice of an audio file."""

    audio_id: str
    start_s: float
    end_s: float

    def __post_init__(self):
        if not (math.isfinite(self.start_s) and math.isfinite(self.end_s)):
            raise ManifestError("segment bounds must be finite")
        if not 0 <= self.start_s < self.end_s:
            raise ManifestError(f"need 0 <= start < end, got [{self.start_s}, {self.end_s}]")

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s

    def overlap_s(self, other: "Segment") -> float:
        """Length of the intersection with ``other`` (ignores audio_id)."""
        return max(0.0, min(self.end_s, other.end_s) - max(self.start_s, other.start_s))


@dataclass(frozen=True)
class Manifest:
    """Ordered, id-unique collection of utterances."""

    records: tuple[Utterance, ...] = ()
    meta: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        seen: set[str] = set()
        for rec in self.records:
            if rec.id in seen:
                raise ManifestError(f"duplicate utterance id {rec.id!r}")
            seen.add(rec.id)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[Utterance]:
        return iter(self.records)

    def ids(self) -> tuple[str, ...]:
        return tuple(rec.id for rec in self.records)


def _infer_format(path: Path, fmt: str | None) -> str:
    if fmt is not None:
        if fmt not in ("tsv", "jsonl"):
            raise ManifestError(f"unknown manifest format {fmt!r}")
        return fmt
    suffix = path.suffix.lower().lstrip(".")
    if suffix in ("tsv", "jsonl"):
        return suffix
    raise ManifestError(f"cannot infer manifest format from {path.name!r}; pass format explicitly")


def _parse_units(text: str, line: int) -> tuple[int, ...]:
    try:
        return tuple(int(tok) for tok in text.split())
    except ValueError:
        raise ManifestError(f"unparsable units field {text!r}", line) from None


def _parse_duration(text: str, line: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ManifestError(f"unparsable duration {text!r}", line) from None
    if not math.isfinite(value) or value < 0:
        raise ManifestError(f"duration must be finite and >= 0, got {text!r}", line)
    return value


def read_manifest(path: str | Path, fmt: str | None = None) -> Manifest:
    """Read a manifest file; ``fmt`` is inferred from the suffix when omitted."""
    path = Path(path)
    fmt = _infer_format(path, fmt)
    if fmt == "tsv":
        return _read_tsv(path)
    return _read_jsonl(path)


def _read_tsv(path: Path) -> Manifest:
    with open(path, encoding="utf-8", newline="") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ManifestError("empty TSV manifest: missing header", 1)
    header = lines[0].split("\t")
    if "id" not in header:
        raise ManifestError("TSV header must contain an 'id' column", 1)
    if len(set(header)) != len(header):
        raise ManifestError("TSV header has duplicate column names", 1)

    records = []
    seen: set[str] = set()
    for lineno, raw in enumerate(lines[1:], start=2):
        cols = raw.split("\t")
        if len(cols) != len(header):
            raise ManifestError(
                f"expected {len(header)} columns, got {len(cols)}", lineno)
        row = dict(zip(header, cols))
        rec_id = row.pop("id", "")
        if not rec_id:
            raise ManifestError("empty utterance id", lineno)
        if rec_id in seen:
            raise ManifestError(f"duplicate utterance id {rec_id!r}", lineno)
        seen.add(rec_id)

        duration = row.pop("duration_s", "")
        units = row.pop("units", "")
        known = {
            "lang": row.pop("lang", ""),
            "audio_ref": row.pop("audio", "") or None,
            "speaker": row.pop("speaker", "") or None,
            "text": row.pop("text", "") or None,
        }
        extra = {k: v for k, v in row.items() if v != ""}
        records.append(Utterance(
            id=rec_id,
            duration_s=_parse_duration(duration, lineno) if duration else None,
            units=_parse_units(units, lineno) if units else None,
            extra=extra,
            **known,
        ))
    return Manifest(records=tuple(records))


def _read_jsonl(path: Path) -> Manifest:
    records = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"invalid JSON: {exc.msg}", lineno) from None
            if not isinstance(obj, dict):
                raise ManifestError("each JSONL line must be an object", lineno)

            rec_id = obj.pop("id", None)
            if not isinstance(rec_id, str) or not rec_id:
                raise ManifestError("missing or empty 'id'", lineno)
            if rec_id in seen:
                raise ManifestError(f"duplicate utterance id {rec_id!r}", lineno)
            seen.add(rec_id)

            duration = obj.pop("duration_s", None)
            if duration is not None and (isinstance(duration, bool)
                                         or not isinstance(duration, (int, float))):
                raise ManifestError(f"unparsable duration {duration!r}", lineno)
            units = obj.pop("units", None)
            if units is not None:
                if not isinstance(units, list) or not all(
                        isinstance(u, int) and not isinstance(u, bool) for u in units):
                    raise ManifestError("units must be a list of integers", lineno)
                units = tuple(units)

            extra = {}
            for key in sorted(k for k in obj if k not in ("lang", "audio", "speaker", "text")):
                value = obj.pop(key)
                if isinstance(value, (dict, list)):
                    raise ManifestError(f"nested value not allowed for field {key!r}", lineno)
                extra[key] = value if isinstance(value, str) else json.dumps(value)

            try:
                records.append(Utterance(
                    id=rec_id,
                    lang=obj.get("lang", "") or "",
                    audio_ref=obj.get("audio"),
                    duration_s=duration,
                    speaker=obj.get("speaker"),
                    text=obj.get("text"),
                    units=units,
                    extra=extra,
                ))
            except ManifestError as exc:
                raise ManifestError(str(exc), lineno) from None
    return Manifest(records=tuple(records))


def _check_tsv_field(value: str, column: str, rec_id: str) -> str:
    for bad in _FORBIDDEN_IN_TSV:
        if bad in value:
            raise ManifestError(
                f"field {column!r} of record {rec_id!r} contains a literal {bad!r}; "
                "not representable in TSV")
    return value


def write_manifest(manifest: Manifest, path: str | Path, fmt: str | None = None) -> None:
    """Write a manifest; round-trips with :func:`read_manifest` (TSV maps empty == absent)."""
    path = Path(path)
    fmt = _infer_format(path, fmt)
    if fmt == "tsv":
        _write_tsv(manifest, path)
    else:
        _write_jsonl(manifest, path)


def _format_float(value: float) -> str:
    return repr(float(value))


def _units_str(units: tuple[int, ...] | None) -> str:
    return " ".join(str(u) for u in units) if units else ""


def _write_tsv(manifest: Manifest, path: Path) -> None:
    extra_cols = sorted({key for rec in manifest.records for key in rec.extra})
    header = list(TSV_COLUMNS) + extra_cols
    out = ["\t".join(header)]
    for rec in manifest.records:
        row = [
            rec.id,
            rec.lang,
            rec.audio_ref or "",
            _format_float(rec.duration_s) if rec.duration_s is not None else "",
            rec.speaker or "",
            rec.text or "",
            _units_str(rec.units),
        ]
        row.extend(rec.extra.get(col, "") for col in extra_cols)
        out.append("\t".join(
            _check_tsv_field(val, col, rec.id) for col, val in zip(header, row)))
    path.write_text("\n".join(out) + "\n", encoding="utf-8")


def _write_jsonl(manifest: Manifest, path: Path) -> None:
    lines = []
    for rec in manifest.records:
        obj: dict = {"id": rec.id}
        if rec.lang:
            obj["lang"] = rec.lang
        if rec.audio_ref is not None:
            obj["audio"] = rec.audio_ref
        if rec.duration_s is not None:
            obj["duration_s"] = rec.duration_s
        if rec.speaker is not None:
            obj["speaker"] = rec.speaker
        if rec.text is not None:
            obj["text"] = rec.text
        if rec.units is not None:
            obj["units"] = list(rec.units)
        for key in sorted(rec.extra):
            obj[key] = rec.extra[key]
        lines.append(json.dumps(obj, ensure_ascii=False))
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def manifest_stats(manifest: Manifest) -> dict[str, dict[str, float | int]]:
    """Per-language record counts, duration sums and distinct-speaker counts.

    Records without a duration contribute 0 seconds and are tallied under
    ``missing_duration``. Languages appear in first-occurrence order.
    """
    stats: dict[str, dict] = {}
    speakers: dict[str, set[str]] = {}
    for rec in manifest.records:
        entry = stats.setdefault(rec.lang, {
            "count": 0, "total_duration_s": 0.0, "speaker_count": 0, "missing_duration": 0,
        })
        entry["count"] += 1
        if rec.duration_s is None:
            entry["missing_duration"] += 1
        else:
            entry["total_duration_s"] += rec.duration_s
        if rec.speaker:
            speakers.setdefault(rec.lang, set()).add(rec.speaker)
    for lang, entry in stats.items():
        entry["speaker_count"] = len(speakers.get(lang, ()))
    return stats


def with_records(manifest: Manifest, records: Sequence[Utterance]) -> Manifest:
    """New manifest with the same meta and the given records."""
    return replace(manifest, records=tuple(records))
