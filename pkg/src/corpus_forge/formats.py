"""Readers and writers for the on-disk artifacts of the pipeline.

RTTM and UEM segment files, the tab-separated embedding exchange format,
RIFF/WAVE audio, a minimal ELAN EAF export, and the CSV files used for
trials, perceptual annotations, speaker rosters and cluster mappings.
All times are handled as integer milliseconds internally.
"""
from __future__ import annotations

import csv
import io
import logging
import struct
import xml.etree.ElementTree as ET
from collections import defaultdict
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from typing import Iterable, Mapping, Sequence

import numpy as np

from .timeline import Annotation, Segment, Timeline, normalize

logger = logging.getLogger(__name__)

__all__ = [
    "FormatError",
    "RttmRecord",
    "parse_rttm",
    "write_rttm",
    "rttm_to_annotations",
    "annotations_to_rttm",
    "timelines_from_rttm",
    "parse_uem",
    "write_uem",
    "EmbeddingSet",
    "read_embeddings",
    "write_embeddings",
    "AudioBuffer",
    "read_wav",
    "write_wav",
    "write_eaf",
    "write_lab",
    "read_trials_csv",
    "write_trials_csv",
    "read_perceptual_csv",
    "read_cluster_mapping",
]


class FormatError(ValueError):
    """Raised for malformed input. ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _decode(data) -> str:
    if isinstance(data, (bytes, bytearray, memoryview)):
        try:
            return bytes(data).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"input is not valid UTF-8 ({exc.reason} at byte {exc.start})") from None
    if not isinstance(data, str):
        raise TypeError(f"expected str or bytes, got {type(data).__name__}")
    return data


def _parse_ms(token: str, what: str, lineno: int) -> int:
    try:
        dec = Decimal(token)
    except InvalidOperation:
        raise FormatError(f"{what} is not a number: {token!r}", lineno) from None
    if not dec.is_finite():
        raise FormatError(f"{what} is not finite: {token!r}", lineno)
    if dec != 0 and dec.adjusted() > 9:
        raise FormatError(f"{what} out of range: {token!r}", lineno)
    return int((dec * 1000).to_integral_value())


def _fmt_s(ms: int) -> str:
    sign = "-" if ms < 0 else ""
    ms = abs(ms)
    return f"{sign}{ms // 1000}.{ms % 1000:03d}"


# --------------------------------------------------------------------- RTTM


@dataclass(frozen=True)
class RttmRecord:
    file_id: str
    channel: int
    onset: int  # ms
    duration: int  # ms
    speaker: str
    type: str = "SPEAKER"

    def __post_init__(self):
        for name in ("file_id", "speaker", "type"):
            value = getattr(self, name)
            if not value or any(c.isspace() for c in value):
                raise ValueError(f"RTTM {name} must be a non-empty token, got {value!r}")
        if self.onset < 0:
            raise ValueError("RTTM onset must be >= 0")
        if self.duration <= 0:
            raise ValueError("RTTM duration must be > 0")

    @property
    def segment(self) -> Segment:
        return Segment(self.onset, self.onset + self.duration)

    @property
    def onset_s(self) -> float:
        return self.onset / 1000.0

    @property
    def duration_s(self) -> float:
        return self.duration / 1000.0


def parse_rttm(text) -> list[RttmRecord]:
    """Parse ``SPEAKER`` records; other record types are skipped and counted."""
    text = _decode(text)
    records = []
    skipped = 0
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith(("#", ";")):
            continue
        fields = stripped.split()
        if len(fields) < 9:
            raise FormatError(f"expected at least 9 fields, got {len(fields)}", lineno)
        if fields[0] != "SPEAKER":
            skipped += 1
            continue
        try:
            channel = int(fields[2])
        except ValueError:
            raise FormatError(f"channel is not an integer: {fields[2]!r}", lineno) from None
        onset = _parse_ms(fields[3], "onset", lineno)
        duration = _parse_ms(fields[4], "duration", lineno)
        if onset < 0:
            raise FormatError(f"negative onset {fields[3]}", lineno)
        if duration < 0:
            raise FormatError(f"negative duration {fields[4]}", lineno)
        if duration == 0:
            skipped += 1
            continue
        records.append(RttmRecord(fields[1], channel, onset, duration, fields[7]))
    if skipped:
        logger.warning("skipped %d non-SPEAKER or zero-duration RTTM record(s)", skipped)
    return records


def write_rttm(records: Iterable[RttmRecord]) -> str:
    lines = []
    for r in records:
        lines.append(
            f"{r.type} {r.file_id} {r.channel} {_fmt_s(r.onset)} {_fmt_s(r.duration)} "
            f"<NA> <NA> {r.speaker} <NA> <NA>"
        )
    return "".join(line + "\n" for line in lines)


def rttm_to_annotations(records: Iterable[RttmRecord]) -> dict[str, Annotation]:
    grouped: dict[str, list] = defaultdict(list)
    for r in records:
        grouped[r.file_id].append((r.segment, r.speaker))
    return {fid: Annotation(entries) for fid, entries in sorted(grouped.items())}


def timelines_from_rttm(records: Iterable[RttmRecord]) -> dict[str, Timeline]:
    """Per-file union of all records, speaker labels ignored."""
    return {fid: ann.timeline() for fid, ann in rttm_to_annotations(records).items()}


def annotations_to_rttm(annotations: Mapping[str, Annotation], channel: int = 1) -> list[RttmRecord]:
    out = []
    for fid in sorted(annotations):
        for seg, label in annotations[fid]:
            out.append(RttmRecord(fid, channel, seg.start, seg.duration, label))
    return out


def timeline_to_rttm(file_id: str, tl: Timeline, label: str = "speech", channel: int = 1) -> list[RttmRecord]:
    return [RttmRecord(file_id, channel, s.start, s.duration, label) for s in normalize(tl)]


# ---------------------------------------------------------------------- UEM


def parse_uem(text) -> dict[str, Timeline]:
    """Parse ``file_id channel onset offset`` lines into per-file timelines."""
    text = _decode(text)
    grouped: dict[str, list[Segment]] = defaultdict(list)
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith(("#", ";")):
            continue
        fields = stripped.split()
        if len(fields) != 4:
            raise FormatError(f"expected 4 fields, got {len(fields)}", lineno)
        try:
            int(fields[1])
        except ValueError:
            raise FormatError(f"channel is not an integer: {fields[1]!r}", lineno) from None
        onset = _parse_ms(fields[2], "onset", lineno)
        offset = _parse_ms(fields[3], "offset", lineno)
        if onset < 0:
            raise FormatError("negative onset", lineno)
        if offset <= onset:
            raise FormatError(f"offset {fields[3]} not after onset {fields[2]}", lineno)
        grouped[fields[0]].append(Segment(onset, offset))
    return {fid: normalize(Timeline(segs)) for fid, segs in sorted(grouped.items())}


def write_uem(uem: Mapping[str, Timeline], channel: int = 1) -> str:
    lines = []
    for fid in sorted(uem):
        for s in normalize(uem[fid]):
            lines.append(f"{fid} {channel} {_fmt_s(s.start)} {_fmt_s(s.end)}\n")
    return "".join(lines)


# --------------------------------------------------------------- embeddings


@dataclass
class EmbeddingSet:
    """Per-segment embedding vectors; row ``i`` of ``vectors`` belongs to ``segments[i]``."""

    file_ids: list[str]
    segments: list[Segment]
    vectors: np.ndarray

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=float)
        if self.vectors.ndim != 2:
            raise ValueError("vectors must be a 2-D array")
        n = self.vectors.shape[0]
        if len(self.file_ids) != n or len(self.segments) != n:
            raise ValueError("file_ids, segments and vectors must have the same length")
        if n and not np.all(np.isfinite(self.vectors)):
            raise ValueError("embedding vectors must be finite")
        if n and np.any(np.linalg.norm(self.vectors, axis=1) == 0):
            bad = int(np.flatnonzero(np.linalg.norm(self.vectors, axis=1) == 0)[0])
            raise ValueError(f"embedding {bad} has zero norm")

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self):
        return len(self.segments)

    def subset(self, indices: Sequence[int]) -> "EmbeddingSet":
        idx = list(indices)
        return EmbeddingSet(
            [self.file_ids[i] for i in idx],
            [self.segments[i] for i in idx],
            self.vectors[idx] if idx else np.zeros((0, self.dim)),
        )

    def for_file(self, file_id: str) -> "EmbeddingSet":
        return self.subset([i for i, f in enumerate(self.file_ids) if f == file_id])


def read_embeddings(text) -> EmbeddingSet:
    text = _decode(text)
    dim = None
    file_ids, segments, rows = [], [], []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if len(parts) == 2 and parts[0] == "dim":
                try:
                    dim = int(parts[1])
                except ValueError:
                    raise FormatError(f"bad dimension header {line!r}", lineno) from None
                if dim <= 0:
                    raise FormatError("dimension must be positive", lineno)
            continue
        fields = line.rstrip("\r\n").split("\t")
        if len(fields) < 4:
            raise FormatError("expected file_id, start, end and at least one value", lineno)
        fid = fields[0]
        if not fid or any(c.isspace() for c in fid):
            raise FormatError(f"bad file id {fid!r}", lineno)
        start = _parse_ms(fields[1], "start", lineno)
        end = _parse_ms(fields[2], "end", lineno)
        if start < 0 or end <= start:
            raise FormatError(f"invalid segment [{fields[1]}, {fields[2]})", lineno)
        values = fields[3:]
        if dim is None:
            dim = len(values)
        if len(values) != dim:
            raise FormatError(
                f"dimension mismatch for record {fid} [{fields[1]}, {fields[2]}): "
                f"expected {dim} values, got {len(values)}",
                lineno,
            )
        try:
            vec = [float(v) for v in values]
        except ValueError:
            raise FormatError("non-numeric embedding value", lineno) from None
        if not all(np.isfinite(vec)):
            raise FormatError("non-finite embedding value", lineno)
        if not any(vec):
            raise FormatError(f"zero-norm embedding for record {fid} [{fields[1]}, {fields[2]})", lineno)
        file_ids.append(fid)
        segments.append(Segment(start, end))
        rows.append(vec)
    if dim is None:
        raise FormatError("no dimension header and no records")
    vectors = np.array(rows, dtype=float).reshape(len(rows), dim)
    return EmbeddingSet(file_ids, segments, vectors)


def write_embeddings(es: EmbeddingSet) -> str:
    out = io.StringIO()
    out.write(f"#dim {es.dim}\n")
    for fid, seg, vec in zip(es.file_ids, es.segments, es.vectors):
        vals = "\t".join(f"{v:.9g}" for v in vec)
        out.write(f"{fid}\t{_fmt_s(seg.start)}\t{_fmt_s(seg.end)}\t{vals}\n")
    return out.getvalue()


# --------------------------------------------------------------------- WAV

_PCM = 0x0001
_IEEE_FLOAT = 0x0003
_EXTENSIBLE = 0xFFFE


@dataclass
class AudioBuffer:
    sample_rate: int
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        self.samples = np.asarray(self.samples, dtype=float).reshape(-1)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


def read_wav(data: bytes) -> AudioBuffer:
    """Decode a RIFF/WAVE file holding PCM16 or float32 samples.

    Multi-channel audio is averaged to mono; int16 samples are divided by 32768.
    """
    data = bytes(data)
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise FormatError("not a RIFF/WAVE file")
    pos = 12
    fmt = None
    payload = None
    while pos + 8 <= len(data):
        chunk_id = data[pos:pos + 4]
        (size,) = struct.unpack("<I", data[pos + 4:pos + 8])
        body = data[pos + 8:pos + 8 + size]
        if len(body) < size and chunk_id != b"data":
            raise FormatError(f"truncated {chunk_id!r} chunk")
        if chunk_id == b"fmt ":
            if size < 16:
                raise FormatError("fmt chunk too short")
            tag, channels, rate, _, block_align, bits = struct.unpack("<HHIIHH", body[:16])
            if tag == _EXTENSIBLE:
                if size < 40:
                    raise FormatError("extensible fmt chunk too short")
                (tag,) = struct.unpack("<H", body[24:26])
            fmt = (tag, channels, rate, block_align, bits)
        elif chunk_id == b"data":
            if len(body) < size:
                raise FormatError(f"truncated data chunk: header says {size} bytes, found {len(body)}")
            payload = body
            break
        pos += 8 + size + (size & 1)
    if fmt is None:
        raise FormatError("missing fmt chunk")
    if payload is None:
        raise FormatError("missing data chunk")
    tag, channels, rate, block_align, bits = fmt
    if channels < 1 or rate < 1:
        raise FormatError("invalid channel count or sample rate")
    if tag == _PCM and bits == 16:
        dtype, scale = np.dtype("<i2"), 32768.0
    elif tag == _IEEE_FLOAT and bits == 32:
        dtype, scale = np.dtype("<f4"), 1.0
    else:
        raise FormatError(f"unsupported codec: format tag 0x{tag:04X} with {bits} bits per sample")
    frame = dtype.itemsize * channels
    n = len(payload) // frame
    if len(payload) % frame:
        raise FormatError("truncated data chunk: partial sample frame")
    raw = np.frombuffer(payload[: n * frame], dtype=dtype).astype(float) / scale
    samples = raw.reshape(n, channels).mean(axis=1)
    return AudioBuffer(rate, samples)


def write_wav(audio: AudioBuffer, float32: bool = False) -> bytes:
    """Encode mono audio as PCM16 (default) or float32."""
    x = np.asarray(audio.samples, dtype=float)
    if float32:
        payload = x.astype("<f4").tobytes()
        tag, bits = _IEEE_FLOAT, 32
    else:
        payload = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2").tobytes()
        tag, bits = _PCM, 16
    block = bits // 8
    fmt = struct.pack("<HHIIHH", tag, 1, audio.sample_rate, audio.sample_rate * block, block, bits)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(payload)) + payload
    if len(payload) & 1:
        body += b"\x00"
    return b"RIFF" + struct.pack("<I", len(body)) + body


# --------------------------------------------------------------------- EAF

EAF_SCHEMA_URL = "http://www.mpi.nl/tools/elan/EAFv3.0.xsd"
_XSI = "http://www.w3.org/2001/XMLSchema-instance"


def write_eaf(
    annotation: Annotation,
    media_ref: str,
    target_list: Sequence[str] = (),
    mime_type: str = "audio/x-wav",
) -> str:
    """Export a diarization as a minimal EAF 3.0 document.

    One tier per cluster label, one time slot per annotation boundary. The
    target speakers become a controlled vocabulary attached to an empty
    ``target_speaker`` tier where annotators record the cluster mapping.
    """
    if len(annotation) == 0:
        raise ValueError("cannot export an empty annotation")
    root = ET.Element(
        "ANNOTATION_DOCUMENT",
        {
            "AUTHOR": "corpus-forge",
            "DATE": "1970-01-01T00:00:00+00:00",
            "FORMAT": "3.0",
            "VERSION": "3.0",
            f"{{{_XSI}}}noNamespaceSchemaLocation": EAF_SCHEMA_URL,
        },
    )
    header = ET.SubElement(root, "HEADER", {"MEDIA_FILE": "", "TIME_UNITS": "milliseconds"})
    ET.SubElement(header, "MEDIA_DESCRIPTOR", {"MEDIA_URL": media_ref, "MIME_TYPE": mime_type})

    by_label = annotation.normalize().by_label()
    # slot ids are numbered in time order, one slot per boundary
    boundaries = sorted(
        (t, k, label, i)
        for label, tl in by_label.items()
        for i, seg in enumerate(tl)
        for k, t in enumerate((seg.start, seg.end))
    )
    slot_of = {}
    time_order = ET.SubElement(root, "TIME_ORDER")
    for n, (t, k, label, i) in enumerate(boundaries, 1):
        slot_of[label, i, k] = f"ts{n}"
        ET.SubElement(time_order, "TIME_SLOT", {"TIME_SLOT_ID": f"ts{n}", "TIME_VALUE": str(t)})
    tier_entries = {
        label: [(slot_of[label, i, 0], slot_of[label, i, 1]) for i in range(len(tl))]
        for label, tl in by_label.items()
    }

    ann_id = 0
    for label, refs in tier_entries.items():
        tier = ET.SubElement(root, "TIER", {"LINGUISTIC_TYPE_REF": "diarization", "TIER_ID": label})
        for ref1, ref2 in refs:
            ann_id += 1
            wrapper = ET.SubElement(tier, "ANNOTATION")
            aa = ET.SubElement(
                wrapper,
                "ALIGNABLE_ANNOTATION",
                {"ANNOTATION_ID": f"a{ann_id}", "TIME_SLOT_REF1": ref1, "TIME_SLOT_REF2": ref2},
            )
            ET.SubElement(aa, "ANNOTATION_VALUE").text = label
    ET.SubElement(root, "TIER", {"LINGUISTIC_TYPE_REF": "speaker_identity", "TIER_ID": "target_speaker"})

    ET.SubElement(
        root,
        "LINGUISTIC_TYPE",
        {"GRAPHIC_REFERENCES": "false", "LINGUISTIC_TYPE_ID": "diarization", "TIME_ALIGNABLE": "true"},
    )
    ET.SubElement(
        root,
        "LINGUISTIC_TYPE",
        {
            "CONTROLLED_VOCABULARY_REF": "target_speakers",
            "GRAPHIC_REFERENCES": "false",
            "LINGUISTIC_TYPE_ID": "speaker_identity",
            "TIME_ALIGNABLE": "true",
        },
    )
    ET.SubElement(root, "LANGUAGE", {"LANG_ID": "und", "LANG_LABEL": "undetermined (und)"})
    cv = ET.SubElement(root, "CONTROLLED_VOCABULARY", {"CV_ID": "target_speakers"})
    ET.SubElement(cv, "DESCRIPTION", {"LANG_REF": "und"}).text = "Target speakers for this document"
    for i, name in enumerate(target_list):
        entry = ET.SubElement(cv, "CV_ENTRY_ML", {"CVE_ID": f"cveid{i}"})
        ET.SubElement(entry, "CVE_VALUE", {"DESCRIPTION": "", "LANG_REF": "und"}).text = name

    ET.indent(root)
    body = ET.tostring(root, encoding="unicode")
    return '<?xml version="1.0" encoding="UTF-8"?>\n' + body + "\n"


def write_lab(tl: Timeline, label: str = "nse") -> str:
    """Audacity-style label track: ``start<TAB>end<TAB>label``."""
    return "".join(f"{_fmt_s(s.start)}\t{_fmt_s(s.end)}\t{label}\n" for s in normalize(tl))


# --------------------------------------------------------------------- CSV


def _truthy(value: str, column: str, lineno: int) -> bool:
    v = value.strip().lower()
    if v in ("1", "true", "yes"):
        return True
    if v in ("0", "false", "no", ""):
        return False
    raise FormatError(f"column {column!r}: expected 0/1, got {value!r}", lineno)


def _dict_rows(text, required: Sequence[str]):
    text = _decode(text)
    reader = csv.DictReader(io.StringIO(text))
    try:
        missing = [c for c in required if c not in (reader.fieldnames or [])]
        if missing:
            raise FormatError(f"missing column(s): {', '.join(missing)}", 1)
        for lineno, row in enumerate(reader, start=2):
            if None in row or any(row[c] is None for c in required):
                raise FormatError("wrong number of columns", lineno)
            yield lineno, row
    except csv.Error as exc:
        raise FormatError(f"CSV error: {exc}") from None


def read_trials_csv(text) -> tuple[np.ndarray, np.ndarray]:
    """Read ``score,is_target`` rows; returns (scores, is_target bool array)."""
    scores, labels = [], []
    for lineno, row in _dict_rows(text, ("score", "is_target")):
        try:
            score = float(row["score"])
        except ValueError:
            raise FormatError(f"bad score {row['score']!r}", lineno) from None
        if not np.isfinite(score):
            raise FormatError("score must be finite", lineno)
        scores.append(score)
        labels.append(_truthy(row["is_target"], "is_target", lineno))
    return np.array(scores, dtype=float), np.array(labels, dtype=bool)


def write_trials_csv(scores, is_target, pair_types: Sequence[str] | None = None) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    header = ["score", "is_target"] + (["pair_type"] if pair_types is not None else [])
    w.writerow(header)
    for i, (s, t) in enumerate(zip(scores, is_target)):
        row = [f"{float(s):.9g}", int(bool(t))]
        if pair_types is not None:
            row.append(pair_types[i])
        w.writerow(row)
    return out.getvalue()


PERCEPTUAL_FLAGS = ("backchannel", "several_speakers", "music", "noise")


def read_perceptual_csv(text) -> list[dict]:
    """Rows of extract_id, annotator_id, the four 0/1 flags and an optional comment."""
    seen = set()
    rows = []
    for lineno, row in _dict_rows(text, ("extract_id", "annotator_id") + PERCEPTUAL_FLAGS):
        key = (row["extract_id"], row["annotator_id"])
        if not key[0] or not key[1]:
            raise FormatError("empty extract_id or annotator_id", lineno)
        if key in seen:
            raise FormatError(f"duplicate record for extract {key[0]} annotator {key[1]}", lineno)
        seen.add(key)
        rec = {"extract_id": key[0], "annotator_id": key[1]}
        for flag in PERCEPTUAL_FLAGS:
            rec[flag] = _truthy(row[flag], flag, lineno)
        rec["comment"] = (row.get("comment") or "") or None
        rows.append(rec)
    return rows


def read_cluster_mapping(text) -> dict[tuple[str, str], str]:
    """Annotators' decisions: ``file_id,cluster,speaker`` to {(file_id, cluster): speaker}."""
    mapping = {}
    for lineno, row in _dict_rows(text, ("file_id", "cluster", "speaker")):
        key = (row["file_id"], row["cluster"])
        if key in mapping and mapping[key] != row["speaker"]:
            raise FormatError(f"cluster {key[1]} of {key[0]} mapped twice", lineno)
        mapping[key] = row["speaker"]
    return mapping
