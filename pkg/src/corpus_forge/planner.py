"""Corpus definition: 32 gender x age x period categories and speaker quotas."""
from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field
from typing import Mapping

from .formats import FormatError, _dict_rows

__all__ = [
    "GENDERS",
    "AGE_BANDS",
    "PERIODS",
    "CategoryKey",
    "ALL_CATEGORIES",
    "SpeakerRecord",
    "LedgerEntry",
    "QuotaLedger",
    "DuplicateSpeakerError",
    "categorize",
    "quota_report",
    "read_roster",
    "read_ledger",
    "write_ledger",
]

GENDERS = ("female", "male")
AGE_BANDS = ("20-35", "36-50", "51-65", "over-65")
PERIODS = ("1955-56", "1975-76", "1995-96", "2015-16")

_PERIOD_YEARS = {1955: "1955-56", 1956: "1955-56", 1975: "1975-76", 1976: "1975-76",
                 1995: "1995-96", 1996: "1995-96", 2015: "2015-16", 2016: "2015-16"}
_BAND_LIMITS = ((20, 35, "20-35"), (36, 50, "36-50"), (51, 65, "51-65"))

REQUIRED_PER_CATEGORY = 30
MIN_SPEECH_SECONDS = 180.0


@dataclass(frozen=True, order=True)
class CategoryKey:
    gender: str
    age_band: str
    period: str

    def __post_init__(self):
        if self.gender not in GENDERS:
            raise ValueError(f"unknown gender {self.gender!r}")
        if self.age_band not in AGE_BANDS:
            raise ValueError(f"unknown age band {self.age_band!r}")
        if self.period not in PERIODS:
            raise ValueError(f"unknown period {self.period!r}")

    def __str__(self):
        return f"{self.gender}|{self.age_band}|{self.period}"

    @classmethod
    def parse(cls, text: str) -> "CategoryKey":
        parts = text.split("|")
        if len(parts) != 3:
            raise ValueError(f"category must look like 'gender|age_band|period', got {text!r}")
        return cls(*parts)


ALL_CATEGORIES = tuple(CategoryKey(g, a, p) for g, a, p in itertools.product(GENDERS, AGE_BANDS, PERIODS))


def _age_band(age: int) -> str | None:
    if age < 20:
        return None
    for lo, hi, name in _BAND_LIMITS:
        if lo <= age <= hi:
            return name
    return "over-65"


def categorize(gender: str, birth_year: int, broadcast_year: int) -> CategoryKey | None:
    """Category of a speaker heard in a given broadcast year, or None.

    Age is ``broadcast_year - birth_year``. Bands are [20,35], [36,50],
    [51,65] and 66+; broadcast years outside the four two-year periods and
    speakers under 20 have no category.
    """
    if gender not in GENDERS:
        raise ValueError(f"unknown gender {gender!r}")
    for y in (birth_year, broadcast_year):
        if not 1850 <= y <= 2100:
            raise ValueError(f"implausible year {y}")
    period = _PERIOD_YEARS.get(broadcast_year)
    if period is None:
        return None
    band = _age_band(broadcast_year - birth_year)
    if band is None:
        return None
    return CategoryKey(gender, band, period)


@dataclass
class SpeakerRecord:
    id: str
    name: str
    gender: str
    birth_year: int
    documents: list[tuple[str, int]] = field(default_factory=list)
    accepted_speech: float = 0.0
    category: CategoryKey | None = None

    def __post_init__(self):
        if self.documents and self.birth_year >= min(y for _, y in self.documents):
            raise ValueError(f"speaker {self.id}: birth year not before earliest broadcast")
        if self.accepted_speech < 0:
            raise ValueError("accepted_speech must be >= 0")

    def eligible_categories(self) -> list[CategoryKey]:
        seen = []
        for _, year in sorted(self.documents, key=lambda d: (d[1], d[0])):
            key = categorize(self.gender, self.birth_year, year)
            if key is not None and key not in seen:
                seen.append(key)
        return seen


@dataclass
class LedgerEntry:
    speaker_id: str
    category: CategoryKey
    identified: bool = False
    accepted_seconds: float = 0.0

    @property
    def satisfied(self) -> bool:
        return self.identified and self.accepted_seconds >= MIN_SPEECH_SECONDS


class DuplicateSpeakerError(ValueError):
    pass


class QuotaLedger:
    """Registered target speakers and their progress toward the quotas."""

    def __init__(self, required: int = REQUIRED_PER_CATEGORY):
        self.required = required
        self.entries: dict[str, LedgerEntry] = {}

    def register(self, speaker: SpeakerRecord | str, category: CategoryKey | None = None,
                 identified: bool = False, accepted_seconds: float | None = None) -> "QuotaLedger":
        """Add a speaker to one category; a second registration is refused.

        Without an explicit category the speaker's own ``category`` is used,
        else the first category its documents make it eligible for.
        """
        sid = speaker.id if isinstance(speaker, SpeakerRecord) else speaker
        if sid in self.entries:
            raise DuplicateSpeakerError(
                f"speaker {sid} already registered in {self.entries[sid].category}"
            )
        if category is None and isinstance(speaker, SpeakerRecord):
            category = speaker.category
            if category is None:
                eligible = speaker.eligible_categories()
                if not eligible:
                    raise ValueError(f"speaker {sid} fits no category")
                category = eligible[0]
        if category is None:
            raise ValueError("category required")
        if accepted_seconds is None:
            accepted_seconds = speaker.accepted_speech if isinstance(speaker, SpeakerRecord) else 0.0
        self.entries[sid] = LedgerEntry(sid, category, identified or accepted_seconds > 0, accepted_seconds)
        return self

    def add_speech(self, speaker_id: str, seconds: float) -> LedgerEntry:
        entry = self.entries[speaker_id]
        if seconds < 0:
            raise ValueError("seconds must be >= 0")
        entry.accepted_seconds += seconds
        if seconds > 0:
            entry.identified = True
        return entry

    def counts(self) -> dict[CategoryKey, dict[str, int]]:
        out = {k: {"registered": 0, "identified": 0, "satisfied": 0} for k in ALL_CATEGORIES}
        for e in self.entries.values():
            c = out[e.category]
            c["registered"] += 1
            c["identified"] += int(e.identified)
            c["satisfied"] += int(e.satisfied)
        return out

    def satisfied_counts(self) -> dict[CategoryKey, int]:
        return {k: v["satisfied"] for k, v in self.counts().items()}

    def __len__(self):
        return len(self.entries)


def quota_report(source: QuotaLedger | Mapping[CategoryKey, int], required: int = REQUIRED_PER_CATEGORY) -> str:
    """Period x age grid of ``female/male`` counts; counts below quota end in ``*``."""
    if isinstance(source, QuotaLedger):
        counts = source.satisfied_counts()
        required = source.required
    else:
        counts = dict(source)

    def cell(f, m):
        return f"{f}{'*' if f < required else ''}/{m}{'*' if m < required else ''}"

    width = 11
    lines = [
        f"# speakers with sufficient data (female/male); * marks fewer than {required}",
        f"{'period':<9}" + "".join(f"{b:>{width}}" for b in AGE_BANDS),
    ]
    totals = {g: 0 for g in GENDERS}
    col_tot = {b: {g: 0 for g in GENDERS} for b in AGE_BANDS}
    short = 0
    for p in PERIODS:
        row = f"{p:<9}"
        for b in AGE_BANDS:
            f = counts.get(CategoryKey("female", b, p), 0)
            m = counts.get(CategoryKey("male", b, p), 0)
            totals["female"] += f
            totals["male"] += m
            col_tot[b]["female"] += f
            col_tot[b]["male"] += m
            short += (f < required) + (m < required)
            row += f"{cell(f, m):>{width}}"
        lines.append(row)
    lines.append(f"{'total':<9}" + "".join(
        f"{col_tot[b]['female']}/{col_tot[b]['male']}".rjust(width) for b in AGE_BANDS))
    lines.append(
        f"female {totals['female']}  male {totals['male']}  total {totals['female'] + totals['male']}"
        f"  categories below quota {short}/{len(ALL_CATEGORIES)}"
    )
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------------ CSV I/O


def read_roster(text) -> list[SpeakerRecord]:
    """Roster rows ``id,name,gender,birth_year,doc_id,broadcast_year[,category]``.

    A speaker may span several rows, one per document.
    """
    speakers: dict[str, SpeakerRecord] = {}
    docs: dict[str, list] = {}
    for lineno, row in _dict_rows(text, ("id", "name", "gender", "birth_year", "doc_id", "broadcast_year")):
        sid = row["id"].strip()
        if not sid:
            raise FormatError("empty speaker id", lineno)
        try:
            birth = int(row["birth_year"])
            year = int(row["broadcast_year"])
        except ValueError:
            raise FormatError("years must be integers", lineno) from None
        gender = row["gender"].strip().lower()
        gender = {"f": "female", "m": "male"}.get(gender, gender)
        if gender not in GENDERS:
            raise FormatError(f"unknown gender {row['gender']!r}", lineno)
        cat_text = (row.get("category") or "").strip()
        category = None
        if cat_text:
            try:
                category = CategoryKey.parse(cat_text)
            except ValueError as exc:
                raise FormatError(str(exc), lineno) from None
        if sid not in speakers:
            speakers[sid] = SpeakerRecord(sid, row["name"], gender, birth, [], 0.0, category)
            docs[sid] = []
        else:
            sp = speakers[sid]
            if (sp.gender, sp.birth_year) != (gender, birth):
                raise FormatError(f"inconsistent attributes for speaker {sid}", lineno)
            if category is not None:
                sp.category = category
        docs[sid].append((row["doc_id"], year))
    out = []
    for sid, sp in speakers.items():
        try:
            out.append(SpeakerRecord(sp.id, sp.name, sp.gender, sp.birth_year, docs[sid], 0.0, sp.category))
        except ValueError as exc:
            raise FormatError(str(exc)) from None
    return out


LEDGER_COLUMNS = ("speaker_id", "gender", "age_band", "period", "identified", "accepted_seconds")


def read_ledger(text, required: int = REQUIRED_PER_CATEGORY) -> QuotaLedger:
    ledger = QuotaLedger(required)
    for lineno, row in _dict_rows(text, LEDGER_COLUMNS):
        try:
            key = CategoryKey(row["gender"], row["age_band"], row["period"])
            seconds = float(row["accepted_seconds"])
        except ValueError as exc:
            raise FormatError(str(exc), lineno) from None
        try:
            ledger.register(row["speaker_id"], key, row["identified"].strip() in ("1", "true"), seconds)
        except ValueError as exc:
            raise FormatError(str(exc), lineno) from None
    return ledger


def write_ledger(ledger: QuotaLedger) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(LEDGER_COLUMNS)
    for sid in sorted(ledger.entries):
        e = ledger.entries[sid]
        w.writerow([sid, e.category.gender, e.category.age_band, e.category.period,
                    int(e.identified), f"{e.accepted_seconds:.3f}"])
    return out.getvalue()


def ledger_from_counts(counts: Mapping[CategoryKey, int], required: int = REQUIRED_PER_CATEGORY) -> QuotaLedger:
    """Synthetic ledger with ``counts[k]`` satisfied speakers per category."""
    ledger = QuotaLedger(required)
    for key in ALL_CATEGORIES:
        for i in range(counts.get(key, 0)):
            ledger.register(f"{key}#{i}", key, True, MIN_SPEECH_SECONDS)
    return ledger
