"""Clean speech detection: speech minus overlapped speech minus non-speech events."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

from .timeline import Timeline, filter_min_duration, intersect, normalize, subtract, total_duration

__all__ = ["CsdInputs", "StageRow", "StageReport", "clean_speech", "stage_report"]


@dataclass(frozen=True)
class CsdInputs:
    vad: Timeline
    ovl: Timeline = field(default_factory=Timeline)
    nse: Timeline = field(default_factory=Timeline)
    min_duration: float = 2.0

    def __post_init__(self):
        if self.min_duration < 0:
            raise ValueError("min_duration must be >= 0")


def clean_speech(inputs: CsdInputs) -> Timeline:
    """Remove overlap then non-speech events from VAD, then drop short pieces.

    The minimum duration is applied last, so a long VAD segment cut down
    below the minimum is discarded.
    """
    kept = subtract(subtract(inputs.vad, inputs.ovl), inputs.nse)
    return filter_min_duration(kept, inputs.min_duration)


@dataclass(frozen=True)
class StageRow:
    name: str
    duration: float  # seconds
    coverage: float | None


@dataclass
class StageReport:
    rows: list[StageRow]
    coverage_mode: str = "ratio"

    @classmethod
    def from_durations(cls, durations: dict[str, float], reference: float | None = None) -> "StageReport":
        """Build a report from already-aggregated stage durations (seconds)."""
        if reference is None:
            reference = durations.get("Reference")
        rows = [
            StageRow(name, float(d), (d / reference) if reference else None)
            for name, d in durations.items()
        ]
        return cls(rows)

    def row(self, name: str) -> StageRow:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_text(self) -> str:
        width = max([len("Method")] + [len(r.name) for r in self.rows])
        lines = [
            f"# coverage = {'duration ratio' if self.coverage_mode == 'ratio' else 'intersection with reference'}"
            " relative to Reference",
            f"{'Method':<{width}}  {'Duration (s)':>12}  {'Coverage':>8}",
        ]
        for r in self.rows:
            cov = "-" if r.coverage is None else f"{100 * r.coverage:.1f}%"
            lines.append(f"{r.name:<{width}}  {r.duration:>12.0f}  {cov:>8}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["method", "duration_s", "coverage", "coverage_mode"])
        for r in self.rows:
            w.writerow([r.name, f"{r.duration:.3f}", "" if r.coverage is None else f"{r.coverage:.6f}",
                        self.coverage_mode])
        return out.getvalue()


def _stages(ref, vad, ovl, nse, min_duration):
    stages = []
    if ref is not None:
        stages += [
            ("Reference", normalize(ref)),
            ("Ref+OVL", subtract(ref, ovl)),
            ("Ref+NSE", subtract(ref, nse)),
        ]
    vad_ovl = subtract(vad, ovl)
    vad_ovl_nse = subtract(vad_ovl, nse)
    stages += [
        ("VAD", normalize(vad)),
        ("VAD+OVL", vad_ovl),
        ("VAD+NSE", subtract(vad, nse)),
        ("VAD+OVL+NSE", vad_ovl_nse),
        ("CSD", filter_min_duration(vad_ovl_nse, min_duration)),
    ]
    return stages


def stage_report(ref: Timeline | None, vad: Timeline, ovl: Timeline, nse: Timeline,
                 min_duration: float = 2.0, coverage: str = "ratio") -> StageReport:
    """Stage-by-stage durations, with coverage against ``ref`` when given.

    ``coverage="ratio"`` divides stage duration by reference duration;
    ``coverage="intersection"`` counts only stage time inside the reference.
    """
    if coverage not in ("ratio", "intersection"):
        raise ValueError("coverage must be 'ratio' or 'intersection'")
    return stage_report_multi([(ref, vad, ovl, nse)], min_duration, coverage)


def stage_report_multi(docs, min_duration: float = 2.0, coverage: str = "ratio") -> StageReport:
    """Aggregate report over several ``(ref, vad, ovl, nse)`` documents."""
    totals: dict[str, int] = {}
    covered: dict[str, int] = {}
    ref_total = 0
    has_ref = None
    for ref, vad, ovl, nse in docs:
        if has_ref is None:
            has_ref = ref is not None
        elif has_ref != (ref is not None):
            raise ValueError("reference must be given for all documents or none")
        if ref is not None:
            ref_total += total_duration(ref)
        for name, tl in _stages(ref, vad, ovl, nse, min_duration):
            totals[name] = totals.get(name, 0) + total_duration(tl)
            inside = total_duration(intersect(tl, ref)) if ref is not None else 0
            covered[name] = covered.get(name, 0) + inside
    rows = []
    for name, ms in totals.items():
        if not has_ref or ref_total == 0:
            cov = None
        elif coverage == "ratio":
            cov = ms / ref_total
        else:
            cov = covered[name] / ref_total
        rows.append(StageRow(name, ms / 1000.0, cov))
    return StageReport(rows, coverage)
