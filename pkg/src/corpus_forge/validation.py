"""Input checking shared by the estimators."""
from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array

from .formats import AudioBuffer, EmbeddingSet


def check_embeddings(X, name: str = "X") -> np.ndarray:
    """Return ``X`` as a finite 2-D float array whose rows all have non-zero norm."""
    if isinstance(X, EmbeddingSet):
        X = X.vectors
    X = check_array(X, dtype=np.float64, ensure_2d=True, ensure_all_finite=True)
    norms = np.linalg.norm(X, axis=1)
    if np.any(norms == 0):
        raise ValueError(f"{name} row {int(np.argmin(norms))} has zero norm")
    return X


def check_same_dim(A: np.ndarray, B: np.ndarray) -> None:
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")


def check_audio(audio, sample_rate: int | None = None) -> AudioBuffer:
    """Accept an AudioBuffer or a 1-D sample array plus ``sample_rate``."""
    if isinstance(audio, AudioBuffer):
        buf = audio
    else:
        if sample_rate is None:
            raise ValueError("sample_rate is required when passing a raw sample array")
        buf = AudioBuffer(int(sample_rate), np.asarray(audio, dtype=float))
    if buf.samples.size == 0:
        raise ValueError("audio is empty")
    if not np.all(np.isfinite(buf.samples)):
        raise ValueError("audio contains non-finite samples")
    return buf


def check_odd(value: int, name: str) -> int:
    if int(value) != value or value < 1 or value % 2 == 0:
        raise ValueError(f"{name} must be an odd integer >= 1, got {value!r}")
    return int(value)
