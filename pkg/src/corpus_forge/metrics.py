"""Scoring: diarization error rate, segment-based recall, EER and PR sweeps."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .timeline import Annotation, Segment, Timeline, normalize, subtract, to_ms

__all__ = [
    "DerBreakdown",
    "ScoredTrial",
    "OperatingPoint",
    "scoring_region",
    "der",
    "der_many",
    "segment_recall",
    "segment_recall_by_class",
    "eer",
    "roc_points",
    "pr_sweep",
    "operating_point",
    "distribution_overlap",
]


# ---------------------------------------------------------------------- DER


@dataclass
class DerBreakdown:
    """Error components in milliseconds; ``*_s`` properties give seconds."""

    missed_ms: int
    false_alarm_ms: int
    confusion_ms: int
    scored_speech_ms: int
    mapping: dict[str, str] = field(default_factory=dict)

    @property
    def der(self) -> float:
        if self.scored_speech_ms <= 0:
            raise ValueError("no scored reference speech")
        return (self.missed_ms + self.false_alarm_ms + self.confusion_ms) / self.scored_speech_ms

    @property
    def missed(self) -> float:
        return self.missed_ms / 1000.0

    @property
    def false_alarm(self) -> float:
        return self.false_alarm_ms / 1000.0

    @property
    def confusion(self) -> float:
        return self.confusion_ms / 1000.0

    @property
    def scored_speech(self) -> float:
        return self.scored_speech_ms / 1000.0

    def __add__(self, other: "DerBreakdown") -> "DerBreakdown":
        return DerBreakdown(
            self.missed_ms + other.missed_ms,
            self.false_alarm_ms + other.false_alarm_ms,
            self.confusion_ms + other.confusion_ms,
            self.scored_speech_ms + other.scored_speech_ms,
        )

    def summary(self) -> str:
        return (
            f"DER={100 * self.der:.2f}% missed={self.missed:.3f}s false_alarm={self.false_alarm:.3f}s "
            f"confusion={self.confusion:.3f}s scored={self.scored_speech:.3f}s"
        )


def scoring_region(reference: Annotation, hypothesis: Annotation, collar=0.0,
                   uem: Timeline | None = None) -> Timeline:
    """UEM (or the joint extent of both annotations) minus reference collars."""
    if uem is not None:
        region = normalize(uem)
    else:
        extents = [tl.extent() for tl in (reference.timeline(), hypothesis.timeline())]
        extents = [e for e in extents if e is not None]
        if not extents:
            return Timeline()
        region = Timeline([Segment(min(e.start for e in extents), max(e.end for e in extents))])
    c = to_ms(collar)
    if c < 0:
        raise ValueError("collar must be >= 0")
    if c > 0:
        zones = []
        for _, tl in reference.by_label().items():
            for seg in tl:
                for b in (seg.start, seg.end):
                    zones.append(Segment(max(0, b - c), b + c))
        region = subtract(region, Timeline(zones))
    return region


def _activity(timelines: Sequence[Timeline], points: np.ndarray) -> np.ndarray:
    """Boolean matrix: is timeline ``k`` active at each point (half-open)."""
    out = np.zeros((len(timelines), len(points)), dtype=bool)
    for k, tl in enumerate(timelines):
        if not len(tl):
            continue
        starts = np.array([s.start for s in tl], dtype=np.int64)
        ends = np.array([s.end for s in tl], dtype=np.int64)
        idx = np.searchsorted(starts, points, side="right") - 1
        ok = idx >= 0
        out[k, ok] = ends[idx[ok]] > points[ok]
    return out


def der(reference: Annotation, hypothesis: Annotation, collar=0.0,
        uem: Timeline | None = None) -> DerBreakdown:
    """Diarization error rate with optimal one-to-one speaker mapping.

    ``collar`` seconds on each side of every reference boundary are not
    scored. Overlapping speech is scored per speaker: a stretch with ``r``
    reference and ``h`` hypothesis speakers counts ``max(0, r-h)`` missed,
    ``max(0, h-r)`` false alarm and ``min(r, h) - correct`` confusion.
    """
    ref_tls = reference.by_label()
    hyp_tls = hypothesis.by_label()
    region = scoring_region(reference, hypothesis, collar, uem)

    bounds = {0}
    for tl in list(ref_tls.values()) + list(hyp_tls.values()) + [region]:
        for s in tl:
            bounds.add(s.start)
            bounds.add(s.end)
    pts = np.array(sorted(bounds), dtype=np.int64)
    if len(pts) < 2:
        raise ValueError("empty scored region")
    left = pts[:-1]
    width = np.diff(pts) * _activity([region], left)[0]

    ref_names, hyp_names = list(ref_tls), list(hyp_tls)
    R = _activity([ref_tls[n] for n in ref_names], left)
    H = _activity([hyp_tls[n] for n in hyp_names], left)
    r = R.sum(axis=0)
    h = H.sum(axis=0)
    scored = int(np.sum(width * r))
    if scored == 0:
        raise ValueError("empty scored region: no reference speech after collar/UEM restriction")

    mapping: dict[str, str] = {}
    correct = np.zeros(len(left), dtype=np.int64)
    if ref_names and hyp_names:
        overlap = (R * width).astype(np.int64) @ H.T.astype(np.int64)
        rows, cols = linear_sum_assignment(overlap, maximize=True)
        for i, j in zip(rows, cols):
            if overlap[i, j] > 0:
                mapping[hyp_names[j]] = ref_names[i]
                correct += R[i] & H[j]

    missed = int(np.sum(width * np.maximum(0, r - h)))
    fa = int(np.sum(width * np.maximum(0, h - r)))
    conf = int(np.sum(width * (np.minimum(r, h) - correct)))
    return DerBreakdown(missed, fa, conf, scored, mapping)


def der_many(references: Mapping[str, Annotation], hypotheses: Mapping[str, Annotation],
             collar=0.0, uems: Mapping[str, Timeline] | None = None) -> tuple[DerBreakdown, dict]:
    """Score every reference file; a file missing from ``hypotheses`` is all missed."""
    total = DerBreakdown(0, 0, 0, 0)
    per_file = {}
    for fid in sorted(references):
        uem = None
        if uems is not None:
            if fid not in uems:
                continue
            uem = uems[fid]
        b = der(references[fid], hypotheses.get(fid, Annotation()), collar, uem)
        per_file[fid] = b
        total = total + b
    if total.scored_speech_ms == 0:
        raise ValueError("empty scored region")
    return total, per_file


# ------------------------------------------------------ segment-based recall


def _grid_cells(tl: Timeline, step: int) -> set[int]:
    cells = set()
    for s in normalize(tl):
        cells.update(range(s.start // step, -(-s.end // step)))
    return cells


def segment_recall(ref_events: Timeline, hyp_events: Timeline, segment_length=1.0) -> float:
    """Fraction of reference-active grid cells that are also hypothesis-active.

    The time axis is cut into consecutive cells of ``segment_length``
    seconds; a cell is active when any event overlaps it by more than zero.
    """
    step = to_ms(segment_length)
    if step <= 0:
        raise ValueError("segment_length must be positive")
    ref_cells = _grid_cells(ref_events, step)
    if not ref_cells:
        raise ValueError("reference has no events")
    hyp_cells = _grid_cells(hyp_events, step)
    return len(ref_cells & hyp_cells) / len(ref_cells)


def segment_recall_by_class(ref_events: Annotation, hyp_events: Timeline, segment_length=1.0) -> dict[str, float]:
    """Recall per reference class label (e.g. music level), against one hypothesis."""
    return {
        label: segment_recall(tl, hyp_events, segment_length)
        for label, tl in ref_events.by_label().items()
    }


# ------------------------------------------------------------ trial scoring


@dataclass(frozen=True)
class ScoredTrial:
    score: float
    is_target: bool

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise ValueError("trial score must be finite")


@dataclass(frozen=True)
class OperatingPoint:
    threshold: float
    precision: float
    recall: float
    far: float
    frr: float


def _arrays(trials) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(trials, tuple) and len(trials) == 2 and not isinstance(trials[0], ScoredTrial):
        scores, labels = trials
        scores = np.asarray(scores, dtype=float)
        labels = np.asarray(labels, dtype=bool)
    else:
        trials = list(trials)
        scores = np.array([t.score for t in trials], dtype=float)
        labels = np.array([t.is_target for t in trials], dtype=bool)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D and of equal length")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    return scores, labels


def roc_points(trials) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(thresholds, FAR, FRR) at every distinct score plus one point above the maximum.

    Acceptance is ``score >= threshold``.
    """
    scores, labels = _arrays(trials)
    tgt = np.sort(scores[labels])
    non = np.sort(scores[~labels])
    if tgt.size == 0 or non.size == 0:
        raise ValueError("need at least one target and one non-target trial")
    uniq = np.unique(scores)
    thresholds = np.append(uniq, np.nextafter(uniq[-1], np.inf))
    far = (non.size - np.searchsorted(non, thresholds, side="left")) / non.size
    frr = np.searchsorted(tgt, thresholds, side="left") / tgt.size
    return thresholds, far, frr


def eer(trials) -> tuple[float, float]:
    """Equal error rate and its threshold.

    The crossing of FAR and FRR is linearly interpolated between the two
    adjacent achievable points. ``trials`` is a sequence of ScoredTrial or a
    ``(scores, is_target)`` pair.
    """
    thr, far, frr = roc_points(trials)
    diff = far - frr
    k = int(np.argmax(diff <= 0))
    if diff[k] == 0:
        return float(far[k]), float(thr[k])
    d0, d1 = diff[k - 1], diff[k]
    a = d0 / (d0 - d1)
    rate = far[k - 1] + a * (far[k] - far[k - 1])
    threshold = thr[k - 1] + a * (thr[k] - thr[k - 1])
    return float(rate), float(threshold)


def operating_point(trials, threshold: float) -> OperatingPoint:
    """Metrics when accepting ``score >= threshold``; precision is 1.0 if nothing is accepted."""
    scores, labels = _arrays(trials)
    n_tgt = int(labels.sum())
    if n_tgt == 0:
        raise ValueError("need at least one target trial")
    n_non = labels.size - n_tgt
    accepted = scores >= threshold
    tp = int(np.sum(accepted & labels))
    fp = int(np.sum(accepted & ~labels))
    precision = tp / (tp + fp) if tp + fp else 1.0
    recall = tp / n_tgt
    far = fp / n_non if n_non else 0.0
    return OperatingPoint(float(threshold), precision, recall, far, 1.0 - recall)


def pr_sweep(trials) -> list[OperatingPoint]:
    """One operating point per distinct score, ascending threshold."""
    scores, labels = _arrays(trials)
    n_tgt = int(labels.sum())
    if n_tgt == 0:
        raise ValueError("need at least one target trial")
    n_non = labels.size - n_tgt
    order = np.sort(scores[labels])
    non = np.sort(scores[~labels])
    points = []
    for t in np.unique(scores):
        tp = order.size - int(np.searchsorted(order, t, side="left"))
        fp = non.size - int(np.searchsorted(non, t, side="left"))
        recall = tp / n_tgt
        points.append(OperatingPoint(
            float(t),
            tp / (tp + fp),
            recall,
            fp / n_non if n_non else 0.0,
            1.0 - recall,
        ))
    return points


def distribution_overlap(a: Iterable[float], b: Iterable[float], bins: int = 100) -> float:
    """Histogram intersection of two score samples on a shared equal-width grid."""
    a = np.asarray(list(a), dtype=float)
    b = np.asarray(list(b), dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be non-empty")
    if bins < 1:
        raise ValueError("bins must be >= 1")
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    if lo == hi:
        return 1.0
    ha, _ = np.histogram(a, bins=bins, range=(lo, hi))
    hb, _ = np.histogram(b, bins=bins, range=(lo, hi))
    return float(np.minimum(ha / a.size, hb / b.size).sum())
