"""Motion-beat extraction and the two evaluation metrics: beat F-score
against reference annotations and histogram cross entropy between motions."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ._validation import check_beats, check_motion
from .exceptions import InvalidInputError

FPS = 30
TOLERANCE = 0.070
BEAT_THRESHOLD = 0.5
CE_BINS = 50
CE_EPS = 1e-6


@dataclass(frozen=True)
class MatchReport:
    true_positives: int
    false_positives: int
    false_negatives: int

    @property
    def f_score(self) -> float:
        denom = 2 * self.true_positives + self.false_positives + self.false_negatives
        return 2 * self.true_positives / denom if denom else 0.0

    @property
    def precision(self) -> float:
        n = self.true_positives + self.false_positives
        return self.true_positives / n if n else 0.0

    @property
    def recall(self) -> float:
        n = self.true_positives + self.false_negatives
        return self.true_positives / n if n else 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["f_score"] = self.f_score
        return d


def motion_speed(frames, fps: float = FPS) -> np.ndarray:
    """Euclidean frame-to-frame displacement times ``fps``; length ``n - 1``."""
    frames = check_motion(frames, dim=None)
    if frames.shape[0] < 2:
        raise InvalidInputError("speed needs at least 2 frames")
    return np.linalg.norm(np.diff(frames, axis=0), axis=1) * fps


def extract_motion_beats(frames, fps: float = FPS, threshold: float = BEAT_THRESHOLD) -> np.ndarray:
    """Times (s) where the motion momentarily stops.

    A beat is a local minimum of :func:`motion_speed` that is also below
    ``threshold`` times the mean speed.  Speed sample ``t`` measures the
    step from frame ``t`` to ``t + 1``, so the beat is stamped at the
    midpoint ``(t + 0.5) / fps``.  A flat bottom counts once, at its first
    sample.
    """
    frames = check_motion(frames, dim=None)
    if frames.shape[0] < 3:
        return np.empty(0)
    speed = motion_speed(frames, fps)
    mean = speed.mean()
    if mean <= 0:
        return np.empty(0)
    mid = speed[1:-1]
    is_min = (mid < speed[:-2]) & (mid <= speed[2:])
    idx = np.flatnonzero(is_min & (mid < threshold * mean)) + 1
    return (idx + 0.5) / fps


def match_beats(predicted, reference, tolerance: float = TOLERANCE) -> MatchReport:
    """One-to-one matching of predicted to reference beats within ``tolerance``.

    References are visited in time order and each takes the earliest
    still-unmatched prediction inside its window.  Because every window
    has the same width this yields a maximum matching.
    """
    predicted = check_beats(predicted, "predicted")
    reference = check_beats(reference, "reference")
    tp = 0
    j = 0
    n_pred = predicted.shape[0]
    for r in reference:
        while j < n_pred and predicted[j] < r and abs(predicted[j] - r) > tolerance:
            j += 1
        if j < n_pred and abs(predicted[j] - r) <= tolerance:
            tp += 1
            j += 1
    return MatchReport(tp, n_pred - tp, reference.shape[0] - tp)


def _histograms(frames: np.ndarray, bins: int, eps: float) -> np.ndarray:
    # (bins, components) smoothed probabilities over [-1, 1]
    clipped = np.clip(frames, -1.0, 1.0)
    idx = np.minimum(((clipped + 1.0) / 2.0 * bins).astype(np.int64), bins - 1)
    counts = np.zeros((bins, frames.shape[1]))
    np.add.at(counts, (idx, np.arange(frames.shape[1])[None, :]), 1.0)
    p = counts / frames.shape[0] + eps
    return p / p.sum(axis=0, keepdims=True)


def cross_entropy(generated, reference, bins: int = CE_BINS, eps: float = CE_EPS) -> float:
    """Mean over components of -sum p_ref * ln p_gen, histograms on [-1, 1] (nats)."""
    generated = check_motion(generated, dim=None, name="generated")
    reference = check_motion(reference, dim=generated.shape[1], name="reference")
    p_ref = _histograms(reference, bins, eps)
    p_gen = _histograms(generated, bins, eps)
    return float(np.mean(-np.sum(p_ref * np.log(p_gen), axis=0)))


def self_entropy(reference, bins: int = CE_BINS, eps: float = CE_EPS) -> float:
    return cross_entropy(reference, reference, bins, eps)


def evaluate_track(generated, beats, reference=None, fps: float = FPS,
                   tolerance: float = TOLERANCE, threshold: float = BEAT_THRESHOLD) -> dict:
    """Beat F-score of ``generated`` against ``beats`` and, if given, cross entropy vs ``reference``."""
    predicted = extract_motion_beats(generated, fps, threshold)
    report = match_beats(predicted, beats, tolerance).to_dict()
    report["n_motion_beats"] = int(predicted.shape[0])
    if reference is not None:
        report["cross_entropy"] = cross_entropy(generated, reference)
    return report


def aggregate(reports: list[dict]) -> dict:
    """Pool TP/FP/FN across tracks; cross entropy is averaged."""
    tp = sum(r["true_positives"] for r in reports)
    fp = sum(r["false_positives"] for r in reports)
    fn = sum(r["false_negatives"] for r in reports)
    out = MatchReport(tp, fp, fn).to_dict()
    ces = [r["cross_entropy"] for r in reports if "cross_entropy" in r]
    if ces:
        out["cross_entropy"] = float(np.mean(ces))
    return out
