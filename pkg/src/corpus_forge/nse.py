"""Non-speech audio event detection from an accompaniment track.

The accompaniment (music + noise) track produced by a vocal/accompaniment
source separator is framed into RMS energy, smoothed with a median filter
and thresholded relative to its own maximum.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .formats import AudioBuffer
from .timeline import Segment, Timeline, normalize, to_ms
from .validation import check_audio, check_odd

__all__ = [
    "NseConfig",
    "EnergyTrack",
    "rms_energy",
    "median_filter",
    "detect_events",
    "detect_nse",
    "NonSpeechEventDetector",
]


@dataclass(frozen=True)
class NseConfig:
    window: float = 0.200
    hop: float = 0.100
    median_size: int = 11
    threshold_fraction: float = 0.05
    relative: bool = True

    def __post_init__(self):
        if not (self.hop > 0 and self.window >= self.hop):
            raise ValueError("need window >= hop > 0")
        check_odd(self.median_size, "median_size")
        if not 0 < self.threshold_fraction < 1:
            raise ValueError("threshold_fraction must be in (0, 1)")


@dataclass
class EnergyTrack:
    window: float
    hop: float
    values: np.ndarray
    origin: float = 0.0
    duration: float | None = None

    def __post_init__(self):
        if self.window <= 0 or self.hop <= 0:
            raise ValueError("window and hop must be positive")
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if np.any(self.values < 0):
            raise ValueError("energy values must be non-negative")

    def frame_start(self, i: int) -> float:
        return self.origin + i * self.hop


def rms_energy(audio: AudioBuffer, window: float = 0.2, hop: float = 0.1) -> EnergyTrack:
    """Framewise root-mean-square energy.

    Frame ``i`` covers samples ``[i*hop, i*hop + window)``; the last frame may
    be partial and is averaged over the samples it has.
    """
    audio = check_audio(audio)
    sr = audio.sample_rate
    win = max(1, int(round(window * sr)))
    step = max(1, int(round(hop * sr)))
    x = audio.samples
    n = len(x)
    n_frames = 1 if n <= win else math.ceil((n - win) / step) + 1
    sq = np.concatenate(([0.0], np.cumsum(x * x)))
    starts = np.arange(n_frames) * step
    ends = np.minimum(starts + win, n)
    mean_sq = (sq[ends] - sq[starts]) / (ends - starts)
    values = np.sqrt(np.maximum(mean_sq, 0.0))
    return EnergyTrack(window, hop, values, 0.0, n / sr)


def median_filter(values, size: int = 11) -> np.ndarray:
    """Centered running median with edge-value padding; output length equals input."""
    size = check_odd(size, "size")
    v = np.asarray(values, dtype=float).reshape(-1)
    if v.size == 0 or size == 1:
        return v.copy()
    half = size // 2
    padded = np.pad(v, half, mode="edge")
    windows = np.lib.stride_tricks.sliding_window_view(padded, size)
    return np.median(windows, axis=1)


def detect_events(track: EnergyTrack, threshold_fraction: float = 0.05, relative: bool = True) -> Timeline:
    """Turn a (filtered) energy track into an event timeline.

    A frame is active when its value is strictly above ``threshold_fraction``
    times the track maximum (``relative``) or times digital full scale.
    Active frame ``i`` contributes ``[start_i, start_i + hop)``.
    """
    values = np.asarray(track.values, dtype=float)
    if values.size == 0:
        raise ValueError("energy track is empty")
    reference = float(values.max()) if relative else 1.0
    if reference <= 0:
        return Timeline()
    active = values > threshold_fraction * reference
    origin = to_ms(track.origin)
    hop = to_ms(track.hop)
    limit = to_ms(track.duration) if track.duration is not None else None
    segs = []
    for i in np.flatnonzero(active):
        start = origin + int(i) * hop
        end = start + hop
        if limit is not None:
            end = min(end, limit)
        if end > start:
            segs.append(Segment(start, end))
    return normalize(Timeline(segs))


def detect_nse(accompaniment: AudioBuffer, cfg: NseConfig = NseConfig()) -> Timeline:
    track = rms_energy(accompaniment, cfg.window, cfg.hop)
    track.values = median_filter(track.values, cfg.median_size)
    return detect_events(track, cfg.threshold_fraction, cfg.relative)


class NonSpeechEventDetector(TransformerMixin, BaseEstimator):
    """Estimator wrapper around :func:`detect_nse`.

    ``transform`` returns the median-filtered energy of each frame and
    ``predict`` returns the detected event timeline. There is nothing to
    learn; ``fit`` only validates the parameters.

    Parameters
    ----------
    window, hop : float
        RMS frame length and step in seconds.
    median_size : int
        Odd median filter length, in frames.
    threshold_fraction : float
        Activity threshold as a fraction of the reference level.
    relative : bool
        Reference level is the document maximum when True, full scale otherwise.
    sample_rate : int, optional
        Needed only when raw sample arrays are passed instead of AudioBuffer.
    """

    def __init__(self, window=0.2, hop=0.1, median_size=11, threshold_fraction=0.05,
                 relative=True, sample_rate=None):
        self.window = window
        self.hop = hop
        self.median_size = median_size
        self.threshold_fraction = threshold_fraction
        self.relative = relative
        self.sample_rate = sample_rate

    def fit(self, X=None, y=None):
        self.config_ = NseConfig(self.window, self.hop, self.median_size,
                                 self.threshold_fraction, self.relative)
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "config_")
        audio = check_audio(X, self.sample_rate)
        track = rms_energy(audio, self.config_.window, self.config_.hop)
        return median_filter(track.values, self.config_.median_size)

    def predict(self, X) -> Timeline:
        check_is_fitted(self, "config_")
        return detect_nse(check_audio(X, self.sample_rate), self.config_)
