"""Perceptual evaluation: extract sampling, majority vote, Fleiss' kappa, problem rates."""
from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .formats import PERCEPTUAL_FLAGS
from .planner import AGE_BANDS, GENDERS, PERIODS, CategoryKey

__all__ = [
    "FLAGS",
    "FLAG_ABBREV",
    "RatingMatrix",
    "fleiss_kappa",
    "majority_vote",
    "aggregate",
    "sample_extracts",
    "ProblemTable",
    "problem_rates",
    "kappa_report",
]

FLAGS = PERCEPTUAL_FLAGS
FLAG_ABBREV = {"backchannel": "Bac", "several_speakers": "SSp", "music": "Mus", "noise": "Noi", "any": "Any"}


@dataclass
class RatingMatrix:
    """Per-subject category counts, optionally with per-rater proportions.

    ``counts[i, j]`` is how many raters put subject ``i`` in category ``j``.
    ``rater_props[r, j]`` is the share of subjects rater ``r`` put in ``j``;
    it is needed only for the exact (rater-marginal) kappa.
    """

    counts: np.ndarray
    n_raters: int
    rater_props: np.ndarray | None = None

    def __post_init__(self):
        self.counts = np.asarray(self.counts)
        if self.counts.ndim != 2 or self.counts.shape[1] < 2:
            raise ValueError("counts must be subjects x categories with at least 2 categories")
        if self.counts.shape[0] < 1:
            raise ValueError("need at least one subject")
        if np.any(self.counts < 0):
            raise ValueError("counts must be non-negative")
        if self.n_raters < 2:
            raise ValueError("need at least 2 raters")
        if np.any(self.counts.sum(axis=1) != self.n_raters):
            raise ValueError("every row must sum to n_raters")
        if self.rater_props is not None:
            self.rater_props = np.asarray(self.rater_props, dtype=float)
            if self.rater_props.shape != (self.n_raters, self.counts.shape[1]):
                raise ValueError("rater_props must be n_raters x categories")

    @classmethod
    def from_ratings(cls, ratings, categories: Sequence | None = None) -> "RatingMatrix":
        """Build from a subjects x raters array of category labels."""
        ratings = np.asarray(ratings)
        if ratings.ndim != 2:
            raise ValueError("ratings must be subjects x raters")
        cats = list(categories) if categories is not None else sorted(np.unique(ratings).tolist())
        index = {c: k for k, c in enumerate(cats)}
        n, m = ratings.shape
        onehot = np.zeros((n, m, len(cats)), dtype=np.int64)
        for i, row in enumerate(ratings.tolist()):
            for r, value in enumerate(row):
                onehot[i, r, index[value]] = 1
        return cls(onehot.sum(axis=1), m, onehot.mean(axis=0))

    @classmethod
    def from_binary(cls, flags) -> "RatingMatrix":
        """Subjects x raters 0/1 array to a two-category (absent, present) matrix."""
        return cls.from_ratings(np.asarray(flags, dtype=int), categories=[0, 1])


def fleiss_kappa(m: RatingMatrix, exact: bool = False) -> float:
    """Fleiss' kappa, or with ``exact=True`` the rater-marginal (Conger) variant.

    Observed agreement is the mean over subjects of the share of agreeing
    rater pairs. Chance agreement is ``sum_j p_j**2`` for the classic
    statistic; the exact variant subtracts the spread of the raters' own
    marginals from it.
    """
    counts = m.counts.astype(float)
    n_sub = counts.shape[0]
    r = m.n_raters
    p_obs = np.mean((np.sum(counts * counts, axis=1) - r) / (r * (r - 1)))
    p_j = counts.sum(axis=0) / (n_sub * r)
    p_chance = float(np.sum(p_j * p_j))
    if exact:
        if m.rater_props is None:
            raise ValueError("exact kappa needs per-rater data (use RatingMatrix.from_ratings)")
        spread = np.var(m.rater_props, axis=0)  # population variance over raters
        p_chance -= float(np.sum(spread)) / (r - 1)
    if np.isclose(p_chance, 1.0, rtol=0, atol=1e-15):
        raise ValueError("kappa undefined: chance agreement is 1 (a single category used throughout)")
    return float((p_obs - p_chance) / (1.0 - p_chance))


def majority_vote(flags: Sequence[bool], max_annotators: int = 3) -> bool:
    """A single judgment stands alone; otherwise at least two annotators must agree."""
    n = len(flags)
    if n == 0:
        raise ValueError("no annotations")
    if n > max_annotators:
        raise ValueError(f"{n} annotations for one extract, expected at most {max_annotators}")
    if n == 1:
        return bool(flags[0])
    return sum(bool(f) for f in flags) >= 2


def aggregate(records: Iterable[Mapping], max_annotators: int = 3) -> dict[str, dict[str, bool]]:
    """Majority-voted flags per extract, plus an ``any`` flag."""
    grouped: dict[str, list] = defaultdict(list)
    for rec in records:
        grouped[rec["extract_id"]].append(rec)
    out = {}
    for ext in sorted(grouped):
        recs = grouped[ext]
        flags = {f: majority_vote([r[f] for r in recs], max_annotators) for f in FLAGS}
        flags["any"] = any(flags.values())
        out[ext] = flags
    return out


def sample_extracts(speakers: Mapping[str, tuple[CategoryKey, Sequence[str]]],
                    per_category_cap: int = 10, seed: int = 0) -> list[str]:
    """Pick one extract per speaker, keeping at most ``per_category_cap`` speakers per category.

    ``speakers`` maps speaker id to ``(category, candidate_extract_ids)``.
    The result is sorted and depends only on the inputs and ``seed``.
    """
    if per_category_cap < 0:
        raise ValueError("per_category_cap must be >= 0")
    rng = np.random.default_rng(seed)
    by_cat: dict[CategoryKey, list[str]] = defaultdict(list)
    for sid in sorted(speakers):
        cat, extracts = speakers[sid]
        if extracts:
            by_cat[cat].append(sid)
    chosen = []
    for cat in sorted(by_cat):
        sids = by_cat[cat]
        take = min(per_category_cap, len(sids))
        picked = sorted(rng.choice(len(sids), size=take, replace=False).tolist()) if take else []
        for k in picked:
            extracts = sorted(speakers[sids[k]][1])
            chosen.append(extracts[int(rng.integers(len(extracts)))])
    return sorted(chosen)


@dataclass
class ProblemTable:
    """Rows of (label, n_extracts, {flag: n_flagged}) with flags incl. ``any``."""

    rows: list[tuple[str, int, dict[str, int]]] = field(default_factory=list)

    def rate(self, row: str, flag: str) -> float:
        for label, n, counts in self.rows:
            if label == row:
                return 100.0 * counts[flag] / n if n else 0.0
        raise KeyError(row)

    def to_text(self) -> str:
        cols = list(FLAGS) + ["any"]
        lines = [f"{'':<10}" + "".join(f"{FLAG_ABBREV[c]:>7}" for c in cols) + f"{'n':>7}"]
        for label, n, counts in self.rows:
            cells = "".join(f"{(100.0 * counts[c] / n if n else 0.0):>7.1f}" for c in cols)
            lines.append(f"{label:<10}{cells}{n:>7}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        cols = list(FLAGS) + ["any"]
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["group", "n"] + [f"{c}_pct" for c in cols])
        for label, n, counts in self.rows:
            w.writerow([label, n] + [f"{(100.0 * counts[c] / n if n else 0.0):.1f}" for c in cols])
        return out.getvalue()


def _group_label(kind: str, key: CategoryKey) -> str:
    if kind == "period":
        return key.period
    if kind == "gender":
        return key.gender.capitalize()
    return "Over 65" if key.age_band == "over-65" else key.age_band


def problem_rates(flags: Mapping[str, Mapping[str, bool]],
                  categories: Mapping[str, CategoryKey] | None = None) -> ProblemTable:
    """Percentage of extracts with each problem, globally and per period, gender and age band."""
    cols = list(FLAGS) + ["any"]

    def tally(ids):
        counts = {c: 0 for c in cols}
        for e in ids:
            f = flags[e]
            for c in FLAGS:
                counts[c] += int(bool(f.get(c, False)))
            counts["any"] += int(bool(f.get("any", any(f.get(c, False) for c in FLAGS))))
        return counts

    ids = sorted(flags)
    table = ProblemTable([("Globally", len(ids), tally(ids))])
    if categories is None:
        return table
    groups = (
        ("period", [p for p in PERIODS]),
        ("gender", [g.capitalize() for g in GENDERS]),
        ("age", [b if b != "over-65" else "Over 65" for b in AGE_BANDS]),
    )
    for kind, labels in groups:
        members: dict[str, list[str]] = {label: [] for label in labels}
        for e in ids:
            if e in categories:
                members[_group_label(kind, categories[e])].append(e)
        for label in labels:
            table.rows.append((label, len(members[label]), tally(members[label])))
    return table


def kappa_report(records: Sequence[Mapping], exact: bool = True) -> tuple[str, dict[str, float]]:
    """Per-flag kappa over the extracts rated by every annotator (the common subset)."""
    annotators = sorted({r["annotator_id"] for r in records})
    by_ext: dict[str, dict[str, Mapping]] = defaultdict(dict)
    for r in records:
        by_ext[r["extract_id"]][r["annotator_id"]] = r
    common = sorted(e for e, recs in by_ext.items() if len(recs) == len(annotators))
    header = (f"# kappa variant: {'exact (rater-marginal)' if exact else 'classic Fleiss'}; "
              f"{len(common)} extracts rated by all {len(annotators)} annotators")
    lines = [header, f"{'flag':<18}{'kappa':>8}" + "".join(f"{a:>8}" for a in annotators)]
    values: dict[str, float] = {}
    if len(annotators) < 2 or not common:
        return "\n".join(lines + ["(no common subset)"]) + "\n", values
    for flag in list(FLAGS) + ["any"]:
        if flag == "any":
            mat = [[int(any(by_ext[e][a][f] for f in FLAGS)) for a in annotators] for e in common]
        else:
            mat = [[int(by_ext[e][a][flag]) for a in annotators] for e in common]
        mat = np.array(mat)
        try:
            k = fleiss_kappa(RatingMatrix.from_binary(mat), exact=exact)
            shown = f"{round(k, 3) + 0.0:>8.3f}"  # no "-0.000"
        except ValueError:
            k = float("nan")
            shown = f"{'undef':>8}"
        values[flag] = k
        lines.append(f"{flag:<18}{shown}" + "".join(f"{int(mat[:, i].sum()):>8}" for i in range(len(annotators))))
    return "\n".join(lines) + "\n", values
