"""Seeded fixture generators and brute-force reference implementations.

The oracles here deliberately take the slow, obvious route (boolean grids,
exhaustive enumeration, explicit loops) so they can check the fast code
paths in the rest of the package.
"""
from __future__ import annotations

import itertools
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass

import numpy as np

from .formats import AudioBuffer, EmbeddingSet
from .timeline import Annotation, Segment, Timeline, to_ms

__all__ = [
    "SynthSpec",
    "gen_diarization",
    "perturb",
    "oracle_der",
    "gen_trials",
    "gen_embeddings",
    "gen_timeline",
    "gen_tone_bursts",
    "timeline_to_mask",
    "mask_to_timeline",
    "oracle_eer",
    "oracle_kappa",
    "oracle_exact_kappa",
    "oracle_ahc",
    "validate_eaf_structure",
]

GRID_MS = 10


@dataclass(frozen=True)
class SynthSpec:
    n_speakers: int = 3
    doc_length: float = 60.0
    mean_turn: float = 4.0
    min_turn: float = 0.5
    gap_prob: float = 0.3
    overlap_prob: float = 0.15
    jitter: float = 0.2
    relabel_prob: float = 0.1
    deletion_prob: float = 0.05
    false_alarm_prob: float = 0.05
    seed: int = 0


def _q(seconds: float) -> int:
    """Seconds to ms, snapped to the 10 ms grid."""
    return int(round(seconds * 1000 / GRID_MS)) * GRID_MS


def gen_diarization(spec: SynthSpec) -> tuple[Annotation, Annotation]:
    """Random reference turns and a perturbed hypothesis, both on a 10 ms grid.

    Hypothesis labels are renamed (``h0``, ``h1`` ...) so that scoring must
    find the speaker mapping.
    """
    rng = np.random.default_rng(spec.seed)
    length = _q(spec.doc_length)
    ref = []
    t = 0
    speakers = [f"spk{i}" for i in range(spec.n_speakers)]
    prev = None
    while t < length:
        dur = max(_q(spec.min_turn), _q(rng.exponential(spec.mean_turn)))
        end = min(length, t + dur)
        if end <= t:
            break
        choices = [s for s in speakers if s != prev] or speakers
        spk = choices[int(rng.integers(len(choices)))]
        ref.append((Segment(t, end), spk))
        if spec.n_speakers > 1 and rng.random() < spec.overlap_prob:
            other = [s for s in speakers if s != spk]
            ov_start = t + _q(rng.uniform(0, (end - t) / 1000))
            ov_end = min(length, ov_start + max(GRID_MS, _q(rng.uniform(0.2, 1.5))))
            if ov_end > ov_start:
                ref.append((Segment(ov_start, ov_end), other[int(rng.integers(len(other)))]))
        prev = spk
        t = end
        if rng.random() < spec.gap_prob:
            t += _q(rng.uniform(0.1, 2.0))
    reference = Annotation(ref).normalize()
    hypothesis = perturb(reference, spec, rng, length)
    return reference, hypothesis


def perturb(reference: Annotation, spec: SynthSpec, rng: np.random.Generator | None = None,
            length: int | None = None) -> Annotation:
    """Jitter boundaries, relabel, delete and add false-alarm turns, then rename labels."""
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    if length is None:
        ext = reference.timeline().extent()
        length = ext.end if ext else _q(spec.doc_length)
    labels = reference.labels()
    out = []
    for seg, lab in reference:
        if rng.random() < spec.deletion_prob:
            continue
        j = _q(spec.jitter)
        s = seg.start + (int(rng.integers(-j // GRID_MS, j // GRID_MS + 1)) * GRID_MS if j else 0)
        e = seg.end + (int(rng.integers(-j // GRID_MS, j // GRID_MS + 1)) * GRID_MS if j else 0)
        s, e = max(0, s), min(length, e)
        if e <= s:
            continue
        if len(labels) > 1 and rng.random() < spec.relabel_prob:
            lab = [x for x in labels if x != lab][int(rng.integers(len(labels) - 1))]
        out.append((Segment(s, e), lab))
    for _ in range(len(reference)):
        if rng.random() < spec.false_alarm_prob and length > 1000:
            s = _q(rng.uniform(0, length / 1000 - 0.5))
            e = min(length, s + max(GRID_MS, _q(rng.uniform(0.2, 2.0))))
            if e > s:
                out.append((Segment(s, e), "fa_speaker"))
    names = sorted({lab for _, lab in out})
    perm = rng.permutation(len(names))
    rename = {name: f"h{int(k)}" for name, k in zip(names, perm)}
    return Annotation((seg, rename[lab]) for seg, lab in out).normalize()


def timeline_to_mask(tl: Timeline, length_ms: int, grid_ms: int = 1) -> np.ndarray:
    """Boolean array, cell ``k`` covering ``[k*grid, (k+1)*grid)``; cell active if its start is covered."""
    n = -(-length_ms // grid_ms)
    mask = np.zeros(n, dtype=bool)
    for s in tl:
        a = -(-s.start // grid_ms)
        b = -(-s.end // grid_ms)
        mask[a:min(b, n)] = True
    return mask


def mask_to_timeline(mask: np.ndarray, grid_ms: int = 1) -> Timeline:
    segs = []
    k = 0
    n = len(mask)
    while k < n:
        if mask[k]:
            j = k
            while j < n and mask[j]:
                j += 1
            segs.append(Segment(k * grid_ms, j * grid_ms))
            k = j
        else:
            k += 1
    return Timeline(segs)


def oracle_der(reference: Annotation, hypothesis: Annotation, collar=0.0, grid=0.010,
               uem: Timeline | None = None) -> dict:
    """DER on a time grid with exhaustive search over speaker mappings.

    Returns a dict with missed/false_alarm/confusion/scored in seconds and
    ``der``. Limited to six speakers per side.
    """
    g = to_ms(grid)
    ref = reference.by_label()
    hyp = hypothesis.by_label()
    if len(ref) > 6 or len(hyp) > 6:
        raise ValueError("oracle limited to 6 speakers per side")
    ends = [s.end for tl in list(ref.values()) + list(hyp.values()) for s in tl]
    starts = [s.start for tl in list(ref.values()) + list(hyp.values()) for s in tl]
    if uem is not None:
        ends += [s.end for s in uem]
    length = max(ends) if ends else 0
    n = -(-length // g)
    if uem is not None:
        region = timeline_to_mask(uem, length, g)
    else:
        region = np.zeros(n, dtype=bool)
        if starts:
            region[min(starts) // g:] = True
    c = to_ms(collar)
    if c > 0:
        for tl in ref.values():
            for s in tl:
                for b in (s.start, s.end):
                    lo = max(0, b - c)
                    region[-(-lo // g):max(0, -(-(b + c) // g))] = False
    R = {k: timeline_to_mask(v, length, g) & region for k, v in ref.items()}
    H = {k: timeline_to_mask(v, length, g) & region for k, v in hyp.items()}
    r = sum((m.astype(int) for m in R.values()), np.zeros(n, dtype=int))
    h = sum((m.astype(int) for m in H.values()), np.zeros(n, dtype=int))
    rnames, hnames = list(R), list(H)
    overlap = {(rn, hn): int(np.sum(R[rn] & H[hn])) for rn in rnames for hn in hnames}
    best = 0
    # Every injective partial mapping hyp -> ref; None marks an unmapped hyp speaker.
    padded = rnames + [None] * len(hnames)
    for perm in set(itertools.permutations(padded, len(hnames))):
        correct = sum(overlap[rn, hn] for hn, rn in zip(hnames, perm) if rn is not None)
        best = max(best, correct)
    missed = int(np.sum(np.maximum(0, r - h))) * g
    fa = int(np.sum(np.maximum(0, h - r))) * g
    conf = (int(np.sum(np.minimum(r, h))) - best) * g
    scored = int(np.sum(r)) * g
    if scored == 0:
        raise ValueError("empty scored region")
    return {
        "missed": missed / 1000,
        "false_alarm": fa / 1000,
        "confusion": conf / 1000,
        "scored": scored / 1000,
        "der": (missed + fa + conf) / scored,
    }


def gen_trials(n_targets: int, n_nontargets: int, target_mean: float, nontarget_mean: float,
               spread: float, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian target and non-target scores; returns (scores, is_target)."""
    rng = np.random.default_rng(seed)
    tgt = rng.normal(target_mean, spread, n_targets)
    non = rng.normal(nontarget_mean, spread, n_nontargets)
    return np.concatenate([tgt, non]), np.concatenate([np.ones(n_targets, bool), np.zeros(n_nontargets, bool)])


def gen_embeddings(n_clusters: int, per_cluster: int, within_angle: float, seed: int = 0,
                   dim: int = 32, file_id: str = "synth") -> tuple[EmbeddingSet, np.ndarray]:
    """Unit vectors scattered within ``within_angle`` degrees of per-cluster centers.

    Centers are orthonormal when ``n_clusters <= dim``, otherwise random.
    Segments are consecutive 2 s slots in random cluster order.
    """
    rng = np.random.default_rng(seed)
    if n_clusters <= dim:
        q, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
        centers = q[:, :n_clusters].T
    else:
        centers = rng.normal(size=(n_clusters, dim))
        centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    labels = np.repeat(np.arange(n_clusters), per_cluster)
    labels = labels[rng.permutation(labels.size)]
    theta = np.deg2rad(within_angle)
    vecs = []
    for lab in labels:
        c = centers[lab]
        u = rng.normal(size=dim)
        u -= (u @ c) * c
        u /= np.linalg.norm(u)
        a = rng.uniform(0, theta)
        vecs.append(math.cos(a) * c + math.sin(a) * u)
    segments = [Segment(2000 * i, 2000 * i + 2000) for i in range(labels.size)]
    es = EmbeddingSet([file_id] * labels.size, segments, np.array(vecs).reshape(labels.size, dim))
    return es, labels


def gen_timeline(rng: np.random.Generator, length_ms: int = 10_000, max_segments: int = 8) -> Timeline:
    """Random, possibly overlapping and touching, millisecond segments."""
    segs = []
    for _ in range(int(rng.integers(0, max_segments + 1))):
        a = int(rng.integers(0, length_ms - 1))
        if rng.random() < 0.2 and segs:
            a = segs[int(rng.integers(len(segs)))].end
            if a >= length_ms:
                continue
        b = int(rng.integers(a + 1, min(length_ms, a + length_ms // 3) + 1))
        segs.append(Segment(a, b))
    return Timeline(segs)


def gen_tone_bursts(duration: float, bursts, sample_rate: int = 16000, freq: float = 440.0,
                    amplitude: float = 0.5) -> AudioBuffer:
    """Silence with sine bursts at ``bursts = [(start_s, end_s), ...]``."""
    n = int(round(duration * sample_rate))
    x = np.zeros(n)
    t = np.arange(n) / sample_rate
    for s, e in bursts:
        a, b = int(round(s * sample_rate)), int(round(e * sample_rate))
        x[a:b] = amplitude * np.sin(2 * np.pi * freq * t[a:b])
    return AudioBuffer(sample_rate, x)


def oracle_eer(scores, is_target, step: float | None = None) -> float:
    """Dense threshold sweep: the point minimising |FAR - FRR|, reported as their mean."""
    scores = np.asarray(scores, float)
    is_target = np.asarray(is_target, bool)
    lo, hi = scores.min(), scores.max()
    if step is None:
        step = (hi - lo) / 20000 if hi > lo else 1.0
    best = None
    for t in np.arange(lo - step, hi + 2 * step, step):
        far = np.mean(scores[~is_target] >= t)
        frr = np.mean(scores[is_target] < t)
        key = abs(far - frr)
        if best is None or key < best[0]:
            best = (key, (far + frr) / 2)
    return float(best[1])


def oracle_kappa(counts) -> float:
    """Classic Fleiss kappa, written out term by term."""
    rows = [list(map(int, r)) for r in counts]
    N = len(rows)
    n = sum(rows[0])
    k = len(rows[0])
    P = []
    for row in rows:
        P.append((sum(c * c for c in row) - n) / (n * (n - 1)))
    Pbar = sum(P) / N
    p = [sum(row[j] for row in rows) / (N * n) for j in range(k)]
    Pe = sum(x * x for x in p)
    return (Pbar - Pe) / (1 - Pe)


def oracle_exact_kappa(ratings) -> float:
    """Rater-marginal kappa: chance agreement averaged over rater pairs."""
    ratings = [list(r) for r in ratings]
    N = len(ratings)
    m = len(ratings[0])
    cats = sorted({v for row in ratings for v in row})
    agree = 0.0
    for row in ratings:
        pairs = sum(1 for a, b in itertools.combinations(range(m), 2) if row[a] == row[b])
        agree += pairs / (m * (m - 1) / 2)
    Po = agree / N
    props = [[sum(1 for row in ratings if row[r] == c) / N for c in cats] for r in range(m)]
    Pe = 0.0
    for a, b in itertools.combinations(range(m), 2):
        Pe += sum(props[a][j] * props[b][j] for j in range(len(cats)))
    Pe /= m * (m - 1) / 2
    return (Po - Pe) / (1 - Pe)


def oracle_ahc(vectors, linkage: str = "average", stop_distance: float = 0.48) -> list[frozenset]:
    """Naive agglomeration recomputing every cluster-pair linkage from scratch."""
    X = np.asarray(vectors, float)
    n = len(X)
    D = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            cos = float(np.dot(X[i], X[j]) / (np.linalg.norm(X[i]) * np.linalg.norm(X[j])))
            D[i, j] = 1.0 - min(1.0, max(-1.0, cos))
    clusters = [frozenset([i]) for i in range(n)]

    def link(a, b):
        ds = [D[i, j] for i in a for j in b]
        if linkage == "average":
            return sum(ds) / len(ds)
        if linkage == "complete":
            return max(ds)
        return min(ds)

    while len(clusters) > 1:
        clusters.sort(key=min)
        best = None
        for x, y in itertools.combinations(range(len(clusters)), 2):
            d = link(clusters[x], clusters[y])
            if best is None or d < best[0]:
                best = (d, x, y)
        if best[0] > stop_distance:
            break
        _, x, y = best
        merged = clusters[x] | clusters[y]
        clusters = [c for k, c in enumerate(clusters) if k not in (x, y)] + [merged]
    return sorted(clusters, key=min)


def validate_eaf_structure(xml_text: str) -> list[str]:
    """Check an EAF document against the element/attribute rules of the EAF 3.0 schema.

    Returns a list of problems; empty means valid. Covers the subset this
    package writes: required elements and their order, required attributes,
    ID uniqueness and reference integrity.
    """
    problems = []
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as exc:
        return [f"not well-formed XML: {exc}"]
    if root.tag != "ANNOTATION_DOCUMENT":
        return [f"root element is {root.tag}, expected ANNOTATION_DOCUMENT"]
    for attr in ("DATE", "AUTHOR", "VERSION"):
        if attr not in root.attrib:
            problems.append(f"ANNOTATION_DOCUMENT missing {attr}")
    order = ["LICENSE", "HEADER", "TIME_ORDER", "TIER", "LINGUISTIC_TYPE", "LOCALE", "LANGUAGE",
             "CONSTRAINT", "CONTROLLED_VOCABULARY", "LEXICON_REF", "EXTERNAL_REF"]
    last = -1
    for child in root:
        if child.tag not in order:
            problems.append(f"unexpected element {child.tag}")
            continue
        pos = order.index(child.tag)
        if pos < last:
            problems.append(f"element {child.tag} out of schema order")
        last = max(last, pos)
    headers = root.findall("HEADER")
    if len(headers) != 1:
        problems.append("exactly one HEADER required")
    elif headers[0].get("TIME_UNITS", "milliseconds") != "milliseconds":
        problems.append("TIME_UNITS must be milliseconds")
    for md in root.iter("MEDIA_DESCRIPTOR"):
        if "MEDIA_URL" not in md.attrib or "MIME_TYPE" not in md.attrib:
            problems.append("MEDIA_DESCRIPTOR needs MEDIA_URL and MIME_TYPE")
    time_orders = root.findall("TIME_ORDER")
    if len(time_orders) != 1:
        problems.append("exactly one TIME_ORDER required")
    slots = {}
    for ts in root.iter("TIME_SLOT"):
        sid = ts.get("TIME_SLOT_ID")
        if sid is None:
            problems.append("TIME_SLOT without TIME_SLOT_ID")
            continue
        if sid in slots:
            problems.append(f"duplicate TIME_SLOT_ID {sid}")
        value = ts.get("TIME_VALUE")
        if value is not None and (not value.isdigit()):
            problems.append(f"TIME_VALUE of {sid} is not a non-negative integer")
        slots[sid] = int(value) if value is not None and value.isdigit() else None
    ltypes = {}
    for lt in root.findall("LINGUISTIC_TYPE"):
        lid = lt.get("LINGUISTIC_TYPE_ID")
        if lid is None:
            problems.append("LINGUISTIC_TYPE without LINGUISTIC_TYPE_ID")
        ltypes[lid] = lt
    cvs = {cv.get("CV_ID") for cv in root.findall("CONTROLLED_VOCABULARY")}
    for cv in root.findall("CONTROLLED_VOCABULARY"):
        if cv.get("CV_ID") is None:
            problems.append("CONTROLLED_VOCABULARY without CV_ID")
        ids = [e.get("CVE_ID") for e in cv.findall("CV_ENTRY_ML")]
        if None in ids or len(set(ids)) != len(ids):
            problems.append("CV_ENTRY_ML ids missing or duplicated")
        for e in cv.findall("CV_ENTRY_ML"):
            if not e.findall("CVE_VALUE"):
                problems.append("CV_ENTRY_ML without CVE_VALUE")
    for lid, lt in ltypes.items():
        ref = lt.get("CONTROLLED_VOCABULARY_REF")
        if ref is not None and ref not in cvs:
            problems.append(f"linguistic type {lid} references unknown vocabulary {ref}")
    langs = {lang.get("LANG_ID") for lang in root.findall("LANGUAGE")}
    for el in root.iter():
        ref = el.get("LANG_REF")
        if ref is not None and ref not in langs:
            problems.append(f"{el.tag} references unknown language {ref}")
    tier_ids = set()
    ann_ids = set()
    for tier in root.findall("TIER"):
        tid = tier.get("TIER_ID")
        if tid is None or tier.get("LINGUISTIC_TYPE_REF") is None:
            problems.append("TIER needs TIER_ID and LINGUISTIC_TYPE_REF")
        if tid in tier_ids:
            problems.append(f"duplicate TIER_ID {tid}")
        tier_ids.add(tid)
        if tier.get("LINGUISTIC_TYPE_REF") not in ltypes:
            problems.append(f"tier {tid} references unknown linguistic type")
        for ann in tier.findall("ANNOTATION"):
            inner = list(ann)
            if len(inner) != 1 or inner[0].tag not in ("ALIGNABLE_ANNOTATION", "REF_ANNOTATION"):
                problems.append("ANNOTATION must hold exactly one ALIGNABLE_ANNOTATION or REF_ANNOTATION")
                continue
            a = inner[0]
            aid = a.get("ANNOTATION_ID")
            if aid is None or aid in ann_ids:
                problems.append(f"missing or duplicate ANNOTATION_ID {aid}")
            ann_ids.add(aid)
            if a.find("ANNOTATION_VALUE") is None:
                problems.append(f"annotation {aid} without ANNOTATION_VALUE")
            if a.tag == "ALIGNABLE_ANNOTATION":
                r1, r2 = a.get("TIME_SLOT_REF1"), a.get("TIME_SLOT_REF2")
                if r1 not in slots or r2 not in slots:
                    problems.append(f"annotation {aid} references unknown time slot")
                elif slots[r1] is not None and slots[r2] is not None and slots[r1] >= slots[r2]:
                    problems.append(f"annotation {aid} has non-increasing time slots")
    return problems
