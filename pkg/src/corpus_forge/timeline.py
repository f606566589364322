"""Exact interval algebra over time segments.

Time is stored as integer milliseconds so that set identities hold exactly.
Intervals are half-open: ``[start, end)``. Touching intervals merge on
normalization.
"""
from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from typing import Iterable, Iterator, Sequence

__all__ = [
    "Segment",
    "Timeline",
    "Annotation",
    "to_ms",
    "to_seconds",
    "normalize",
    "union",
    "intersect",
    "subtract",
    "filter_min_duration",
    "total_duration",
    "coverage_ratio",
]


def to_ms(value) -> int:
    """Convert seconds (float, int, str or Decimal) to integer milliseconds."""
    if isinstance(value, bool):
        raise TypeError("time value cannot be a bool")
    if isinstance(value, int):
        return value * 1000
    try:
        dec = Decimal(str(value)) if not isinstance(value, Decimal) else value
    except InvalidOperation as exc:
        raise ValueError(f"not a time value: {value!r}") from exc
    if not dec.is_finite():
        raise ValueError(f"time value must be finite, got {value!r}")
    if dec != 0 and dec.adjusted() > 9:
        raise ValueError(f"time value out of range: {value!r}")
    return int((dec * 1000).to_integral_value())


def to_seconds(ms: int) -> float:
    return ms / 1000.0


@dataclass(frozen=True, order=True)
class Segment:
    """A half-open time interval ``[start, end)`` in integer milliseconds."""

    start: int
    end: int

    def __post_init__(self):
        if not isinstance(self.start, int) or not isinstance(self.end, int):
            raise TypeError("Segment bounds are integer milliseconds; use Segment.from_seconds")
        if self.start < 0:
            raise ValueError(f"segment start must be >= 0, got {self.start} ms")
        if self.end <= self.start:
            raise ValueError(f"segment must have positive duration, got [{self.start}, {self.end}) ms")

    @classmethod
    def from_seconds(cls, start, end) -> "Segment":
        return cls(to_ms(start), to_ms(end))

    @property
    def duration(self) -> int:
        return self.end - self.start

    @property
    def start_s(self) -> float:
        return self.start / 1000.0

    @property
    def end_s(self) -> float:
        return self.end / 1000.0

    @property
    def duration_s(self) -> float:
        return self.duration / 1000.0

    def overlaps(self, other: "Segment") -> bool:
        return self.start < other.end and other.start < self.end

    def __repr__(self):
        return f"Segment({self.start_s:g}, {self.end_s:g})"


class Timeline(Sequence[Segment]):
    """An immutable, start-sorted collection of segments.

    Construction only sorts. Use :meth:`normalize` (or any set operation) to
    obtain the merged, pairwise-disjoint form.
    """

    __slots__ = ("_segments", "_normalized")

    def __init__(self, segments: Iterable[Segment] = ()):
        segs = tuple(sorted(segments))
        for s in segs:
            if not isinstance(s, Segment):
                raise TypeError(f"expected Segment, got {type(s).__name__}")
        self._segments = segs
        self._normalized = all(a.end < b.start for a, b in zip(segs, segs[1:]))

    @classmethod
    def from_seconds(cls, pairs: Iterable[tuple]) -> "Timeline":
        return cls(Segment.from_seconds(s, e) for s, e in pairs)

    def to_seconds(self) -> list[tuple[float, float]]:
        return [(s.start_s, s.end_s) for s in self._segments]

    @property
    def segments(self) -> tuple[Segment, ...]:
        return self._segments

    @property
    def is_normalized(self) -> bool:
        return self._normalized

    def __getitem__(self, i):
        return self._segments[i]

    def __len__(self):
        return len(self._segments)

    def __iter__(self) -> Iterator[Segment]:
        return iter(self._segments)

    def __eq__(self, other):
        if isinstance(other, Timeline):
            return self._segments == other._segments
        return NotImplemented

    def __hash__(self):
        return hash(self._segments)

    def __repr__(self):
        return f"Timeline({self.to_seconds()})"

    def extent(self) -> Segment | None:
        if not self._segments:
            return None
        return Segment(self._segments[0].start, max(s.end for s in self._segments))

    def normalize(self) -> "Timeline":
        return normalize(self)

    def duration(self) -> int:
        """Covered time in milliseconds."""
        return total_duration(self)

    def __or__(self, other):
        return union(self, other)

    def __and__(self, other):
        return intersect(self, other)

    def __sub__(self, other):
        return subtract(self, other)


def _merged(segments: Sequence[Segment]) -> list[tuple[int, int]]:
    out: list[list[int]] = []
    for s in sorted(segments):
        if out and s.start <= out[-1][1]:
            if s.end > out[-1][1]:
                out[-1][1] = s.end
        else:
            out.append([s.start, s.end])
    return [(a, b) for a, b in out]


def _build(pairs: Iterable[tuple[int, int]]) -> Timeline:
    return Timeline(Segment(a, b) for a, b in pairs if b > a)


def normalize(tl: Timeline) -> Timeline:
    if isinstance(tl, Timeline) and tl.is_normalized:
        return tl
    return _build(_merged(list(tl)))


def union(a: Timeline, b: Timeline) -> Timeline:
    return _build(_merged(list(a) + list(b)))


def intersect(a: Timeline, b: Timeline) -> Timeline:
    x, y = _merged(list(a)), _merged(list(b))
    out = []
    i = j = 0
    while i < len(x) and j < len(y):
        lo = max(x[i][0], y[j][0])
        hi = min(x[i][1], y[j][1])
        if lo < hi:
            out.append((lo, hi))
        if x[i][1] <= y[j][1]:
            i += 1
        else:
            j += 1
    return _build(out)


def subtract(a: Timeline, b: Timeline) -> Timeline:
    """Set difference ``a \\ b``."""
    x, y = _merged(list(a)), _merged(list(b))
    out = []
    j = 0
    for start, end in x:
        cur = start
        while j < len(y) and y[j][1] <= cur:
            j += 1
        k = j
        while k < len(y) and y[k][0] < end:
            if y[k][0] > cur:
                out.append((cur, y[k][0]))
            cur = max(cur, y[k][1])
            if cur >= end:
                break
            k += 1
        if cur < end:
            out.append((cur, end))
    return _build(out)


def filter_min_duration(tl: Timeline, min_duration) -> Timeline:
    """Keep normalized segments lasting at least ``min_duration`` seconds.

    Segments of exactly the minimum duration are kept.
    """
    min_ms = to_ms(min_duration)
    if min_ms < 0:
        raise ValueError("min_duration must be >= 0")
    return Timeline(s for s in normalize(tl) if s.duration >= min_ms)


def total_duration(tl: Timeline) -> int:
    """Total covered time in milliseconds (overlaps counted once)."""
    return sum(b - a for a, b in _merged(list(tl)))


def coverage_ratio(hyp: Timeline, ref: Timeline) -> float:
    """Raw duration ratio ``|hyp| / |ref|``.

    This is not the intersection-based coverage; for that use
    ``total_duration(intersect(hyp, ref)) / total_duration(ref)``.
    """
    denom = total_duration(ref)
    if denom == 0:
        raise ValueError("reference timeline has zero duration")
    return total_duration(hyp) / denom


class Annotation(Sequence[tuple[Segment, str]]):
    """Speaker-labeled segments. Entries are kept sorted by (segment, label)."""

    __slots__ = ("_entries",)

    def __init__(self, entries: Iterable[tuple[Segment, str]] = ()):
        items = []
        for seg, label in entries:
            if not isinstance(seg, Segment):
                raise TypeError(f"expected Segment, got {type(seg).__name__}")
            if not isinstance(label, str) or not label:
                raise ValueError("annotation labels must be non-empty strings")
            items.append((seg, label))
        self._entries = tuple(sorted(items))

    @classmethod
    def from_seconds(cls, entries: Iterable[tuple]) -> "Annotation":
        return cls((Segment.from_seconds(s, e), label) for s, e, label in entries)

    @classmethod
    def from_mapping(cls, mapping: dict) -> "Annotation":
        """Build from ``{label: [(start_s, end_s), ...]}``."""
        return cls(
            (Segment.from_seconds(s, e), label)
            for label, pairs in mapping.items()
            for s, e in pairs
        )

    def __getitem__(self, i):
        return self._entries[i]

    def __len__(self):
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    def __eq__(self, other):
        if isinstance(other, Annotation):
            return self._entries == other._entries
        return NotImplemented

    def __hash__(self):
        return hash(self._entries)

    def __repr__(self):
        body = ", ".join(f"({s.start_s:g}, {s.end_s:g}, {lab!r})" for s, lab in self._entries)
        return f"Annotation([{body}])"

    def labels(self) -> list[str]:
        return sorted({label for _, label in self._entries})

    def label_timeline(self, label: str) -> Timeline:
        return normalize(Timeline(s for s, lab in self._entries if lab == label))

    def by_label(self) -> dict[str, Timeline]:
        return {label: self.label_timeline(label) for label in self.labels()}

    def timeline(self) -> Timeline:
        """Union of all labeled time, labels dropped."""
        return normalize(Timeline(s for s, _ in self._entries))

    def normalize(self) -> "Annotation":
        """Merge overlapping or touching segments that share a label."""
        return Annotation(
            (seg, label) for label, tl in self.by_label().items() for seg in tl
        )

    def relabel(self, mapping: dict[str, str]) -> "Annotation":
        return Annotation((s, mapping.get(lab, lab)) for s, lab in self._entries)

    def crop(self, region: Timeline) -> "Annotation":
        out = []
        for label, tl in self.by_label().items():
            out.extend((seg, label) for seg in intersect(tl, region))
        return Annotation(out)
