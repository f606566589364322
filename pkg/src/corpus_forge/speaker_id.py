"""Cross-show target speaker identification by mean cosine similarity.

Each candidate segment is scored by its mean cosine similarity to the
embeddings of segments already attributed to the target. Decisions are
made per segment, never per cluster.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .diarizer import cosine_similarity_matrix
from .formats import EmbeddingSet
from .timeline import Segment, Timeline, total_duration
from .validation import check_embeddings, check_same_dim

__all__ = [
    "IdentificationConfig",
    "IdentificationResult",
    "segment_scores",
    "identify",
    "speech_budget",
    "make_trial_pairs",
    "SpeakerIdentifier",
]


@dataclass(frozen=True)
class IdentificationConfig:
    threshold: float = 0.52
    min_total_speech: float = 180.0

    def __post_init__(self):
        if not -1 <= self.threshold <= 1:
            raise ValueError("threshold must be in [-1, 1]")
        if self.min_total_speech < 0:
            raise ValueError("min_total_speech must be >= 0")


@dataclass
class IdentificationResult:
    accepted: list[tuple[Segment, float]] = field(default_factory=list)
    rejected: list[tuple[Segment, float]] = field(default_factory=list)

    @property
    def target_present(self) -> bool:
        return bool(self.accepted)

    @property
    def accepted_duration(self) -> float:
        """Seconds of accepted speech (overlapping segments counted once)."""
        return total_duration(Timeline(s for s, _ in self.accepted)) / 1000.0


def _score_matrix(known, candidates) -> np.ndarray:
    K = check_embeddings(known, "known")
    C = check_embeddings(candidates, "candidates")
    check_same_dim(K, C)
    return cosine_similarity_matrix(C, K).mean(axis=1)


def segment_scores(known: EmbeddingSet, candidates: EmbeddingSet) -> list[tuple[Segment, float]]:
    if len(known) == 0:
        raise ValueError("known embedding set is empty")
    if len(candidates) == 0:
        raise ValueError("candidate embedding set is empty")
    scores = _score_matrix(known.vectors, candidates.vectors)
    return [(seg, float(s)) for seg, s in zip(candidates.segments, scores)]


def identify(known: EmbeddingSet, candidates: EmbeddingSet,
             cfg: IdentificationConfig = IdentificationConfig()) -> IdentificationResult:
    """Accept every candidate segment whose score is at least the threshold."""
    result = IdentificationResult()
    for seg, score in segment_scores(known, candidates):
        (result.accepted if score >= cfg.threshold else result.rejected).append((seg, score))
    return result


def speech_budget(prior_total: float, result: IdentificationResult,
                  cfg: IdentificationConfig = IdentificationConfig()) -> tuple[float, bool]:
    new_total = prior_total + result.accepted_duration
    return new_total, new_total >= cfg.min_total_speech


def make_trial_pairs(speakers: Mapping[str, tuple[str, Sequence[np.ndarray]]], seed: int = 0):
    """Draw one same-speaker, one same-gender and one cross-gender pair per speaker.

    ``speakers`` maps a speaker id to ``(gender, session_embeddings)``; a
    speaker needs two sessions to yield a same-speaker pair. Returns
    ``(scores, is_target, pair_types)``.
    """
    rng = np.random.default_rng(seed)
    ids = sorted(speakers)
    by_gender: dict[str, list[str]] = {}
    for sid in ids:
        by_gender.setdefault(speakers[sid][0], []).append(sid)
    scores, is_target, types = [], [], []

    def pick(sid):
        sessions = speakers[sid][1]
        return np.asarray(sessions[int(rng.integers(len(sessions)))], dtype=float)

    def cos(u, v):
        return float(cosine_similarity_matrix(u[None, :], v[None, :])[0, 0])

    for sid in ids:
        gender, sessions = speakers[sid]
        if len(sessions) >= 2:
            i, j = rng.choice(len(sessions), size=2, replace=False)
            scores.append(cos(np.asarray(sessions[i], float), np.asarray(sessions[j], float)))
            is_target.append(True)
            types.append("same_speaker")
        same = [o for o in by_gender[gender] if o != sid]
        if same:
            other = same[int(rng.integers(len(same)))]
            scores.append(cos(pick(sid), pick(other)))
            is_target.append(False)
            types.append("same_gender")
        cross = [o for g, members in by_gender.items() if g != gender for o in members]
        if cross:
            other = cross[int(rng.integers(len(cross)))]
            scores.append(cos(pick(sid), pick(other)))
            is_target.append(False)
            types.append("cross_gender")
    return np.array(scores), np.array(is_target, dtype=bool), types


class SpeakerIdentifier(BaseEstimator):
    """Fit on a target's known embeddings, then score or accept candidates.

    ``decision_function`` gives the mean cosine similarity to the known set;
    ``predict`` thresholds it (score >= threshold).
    """

    def __init__(self, threshold=0.52):
        self.threshold = threshold

    def fit(self, X, y=None):
        IdentificationConfig(self.threshold)
        self.known_ = check_embeddings(X, "known")
        self.n_features_in_ = self.known_.shape[1]
        return self

    def decision_function(self, X) -> np.ndarray:
        check_is_fitted(self, "known_")
        return _score_matrix(self.known_, X)

    def predict(self, X) -> np.ndarray:
        return self.decision_function(X) >= self.threshold
