"""Histogram-binning calibration of labeling-function scores.

Validated decisions reveal which candidates were right; binning their raw
scores per LF gives an empirical precision per bin, which replaces the LF's
self-reported confidence. Bins without data keep the identity mapping.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .labeling import Candidate

N_BINS = 10


def _bin_index(score: float, n_bins: int = N_BINS) -> int:
    return min(int(score * n_bins), n_bins - 1)


class HistogramCalibrator(BaseEstimator):
    """Equal-width histogram binning over [0, 1] for one labeling function."""

    def __init__(self, n_bins: int = N_BINS):
        self.n_bins = n_bins

    def fit(self, scores: Sequence[float], correct: Sequence[bool]) -> "HistogramCalibrator":
        counts = np.zeros(self.n_bins, dtype=int)
        hits = np.zeros(self.n_bins, dtype=int)
        for score, ok in zip(scores, correct):
            b = _bin_index(float(score), self.n_bins)
            counts[b] += 1
            hits[b] += bool(ok)
        self.counts_ = counts
        with np.errstate(invalid="ignore"):
            self.precision_ = np.where(counts > 0, hits / np.maximum(counts, 1), np.nan)
        return self

    def transform(self, scores: Sequence[float]) -> np.ndarray:
        scores = np.asarray(scores, dtype=float)
        out = scores.copy()
        for i, score in enumerate(scores):
            b = _bin_index(score, self.n_bins)
            if self.counts_[b] > 0:
                out[i] = self.precision_[b]
        return np.clip(out, 0.0, 1.0)


@dataclass
class CalibrationMap:
    """Per-LF calibrators; LFs without validated data map scores unchanged."""

    calibrators: dict[str, HistogramCalibrator] = field(default_factory=dict)

    def calibrated(self, lf_id: str, raw_score: float) -> float:
        calibrator = self.calibrators.get(lf_id)
        if calibrator is None:
            return min(max(raw_score, 0.0), 1.0)
        return float(calibrator.transform([raw_score])[0])


def calibrate(outcomes: Sequence[tuple[Candidate, bool]]) -> CalibrationMap:
    """Build a calibration map from (candidate, was it correct) pairs.

    With no outcomes at all the map is empty and apply_calibration is the
    identity.
    """
    per_lf: dict[str, tuple[list[float], list[bool]]] = {}
    for candidate, ok in outcomes:
        scores, correct = per_lf.setdefault(candidate.lf_id, ([], []))
        scores.append(candidate.raw_score)
        correct.append(ok)
    return CalibrationMap(
        calibrators={
            lf_id: HistogramCalibrator().fit(scores, correct)
            for lf_id, (scores, correct) in per_lf.items()
        }
    )


def apply_calibration(calibration: CalibrationMap, candidate: Candidate) -> Candidate:
    """Candidate with confidence replaced by its bin's empirical precision."""
    return replace(candidate, confidence=calibration.calibrated(candidate.lf_id, candidate.raw_score))


def candidate_outcomes(
    candidates: Sequence[Candidate], final_values: Mapping[tuple[str, str], str]
) -> list[tuple[Candidate, bool]]:
    """Join candidates against validated final values per (doc, variable)."""
    out = []
    for c in candidates:
        key = (c.span.doc_id, c.variable_id)
        if key in final_values:
            out.append((c, c.value == final_values[key]))
    return out
