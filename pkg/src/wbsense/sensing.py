"""Decisions and evaluation: threshold calibration, confusion counts,
micro-averaged detection metrics, ROC curves, per-subband reports."""

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import CalibrationError, ShapeError, UndefinedMetricError


@dataclass
class ThresholdVector:
    lam: np.ndarray
    target_pf: float
    calibration_set_id: str = ""


@dataclass
class ConfusionCounts:
    tp: np.ndarray
    fp: np.ndarray
    tn: np.ndarray
    fn: np.ndarray

    @classmethod
    def zeros(cls, num_subbands: int):
        z = lambda: np.zeros(num_subbands, dtype=np.int64)
        return cls(tp=z(), fp=z(), tn=z(), fn=z())

    def merge(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            tp=self.tp + other.tp, fp=self.fp + other.fp,
            tn=self.tn + other.tn, fn=self.fn + other.fn,
        )


@dataclass
class RocCurve:
    points: list = field(default_factory=list)  # (pf, pd), pf non-decreasing
    threshold_grid: np.ndarray = None


def _h0_quantile(h0_scores: np.ndarray, target_pf: float) -> float:
    """Threshold leaving at most floor(n * target_pf) H0 scores above it."""
    n = h0_scores.size
    k = int(np.ceil((1.0 - target_pf) * n))
    k = min(max(k, 1), n)
    return float(np.sort(h0_scores)[k - 1])


def calibrate_thresholds(scores: np.ndarray, labels: np.ndarray,
                         target_pf: float, *, min_h0: int = 1,
                         calibration_set_id: str = "") -> ThresholdVector:
    """Per-subband empirical-quantile thresholds for a target Pf.

    `scores` and `labels` are (num_samples, N). Each subband needs at least
    `min_h0` unoccupied instances; with fewer than 1/target_pf the empirical
    guarantee is coarse (the threshold degenerates toward the H0 maximum).
    """
    if scores.shape != labels.shape:
        raise ShapeError("scores and labels shapes differ")
    if not 0.0 < target_pf < 1.0:
        raise CalibrationError("target_pf must be in (0, 1)")
    n = scores.shape[1]
    lam = np.empty(n)
    for i in range(n):
        h0 = scores[labels[:, i] == 0, i]
        if h0.size < max(min_h0, 1):
            raise CalibrationError(
                f"subband {i}: {h0.size} H0 instances, need >= {max(min_h0, 1)}"
            )
        lam[i] = _h0_quantile(h0, target_pf)
    return ThresholdVector(lam=lam, target_pf=target_pf,
                           calibration_set_id=calibration_set_id)


def decide(gamma: np.ndarray, thresholds: ThresholdVector) -> np.ndarray:
    """Per-subband H1 decisions; ties (gamma == lambda) decide H0."""
    gamma = np.asarray(gamma)
    if gamma.shape[-1] != thresholds.lam.size:
        raise ShapeError("gamma and threshold lengths differ")
    return (gamma > thresholds.lam).astype(np.uint8)


def accumulate_confusion(decisions: np.ndarray, labels: np.ndarray,
                         counts: ConfusionCounts) -> ConfusionCounts:
    """Add a batch of (decision, label) pairs to per-subband tallies."""
    decisions = np.atleast_2d(decisions)
    labels = np.atleast_2d(labels)
    if decisions.shape != labels.shape or decisions.shape[1] != counts.tp.size:
        raise ShapeError("decisions and labels shapes differ")
    d = decisions.astype(bool)
    z = labels.astype(bool)
    return ConfusionCounts(
        tp=counts.tp + (d & z).sum(axis=0),
        fp=counts.fp + (d & ~z).sum(axis=0),
        tn=counts.tn + (~d & ~z).sum(axis=0),
        fn=counts.fn + (~d & z).sum(axis=0),
    )


def micro_metrics(counts: ConfusionCounts) -> tuple:
    """Micro-averaged (Pd, Pf) from pooled per-subband counts."""
    pos = int(counts.tp.sum() + counts.fn.sum())
    neg = int(counts.fp.sum() + counts.tn.sum())
    if pos == 0:
        raise UndefinedMetricError("Pd undefined: no occupied instances")
    if neg == 0:
        raise UndefinedMetricError("Pf undefined: no vacant instances")
    pd = counts.tp.sum() / pos
    pf = counts.fp.sum() / neg
    return float(pd), float(pf)


def roc_curve(scores: np.ndarray, labels: np.ndarray, grid_size: int = 100) -> RocCurve:
    """Micro Pd/Pf while sweeping one global threshold over the scores."""
    scores = np.asarray(scores)
    labels = np.asarray(labels).astype(bool)
    if scores.shape != labels.shape:
        raise ShapeError("scores and labels shapes differ")
    flat_s = scores.ravel()
    flat_z = labels.ravel()
    if not flat_z.any():
        raise UndefinedMetricError("ROC undefined: no occupied instances")
    if flat_z.all():
        raise UndefinedMetricError("ROC undefined: no vacant instances")

    distinct = np.unique(flat_s)
    if distinct.size > grid_size:
        pick = np.linspace(0, distinct.size - 1, grid_size).round().astype(int)
        distinct = distinct[np.unique(pick)]
    grid = np.concatenate(([0.0], distinct, [1.0]))
    grid = np.unique(grid)

    pos = int(flat_z.sum())
    neg = int(flat_z.size - pos)
    points = []
    for lam in grid:
        flagged = flat_s > lam
        pd = (flagged & flat_z).sum() / pos
        pf = (flagged & ~flat_z).sum() / neg
        points.append((float(pf), float(pd)))
    # Decreasing threshold -> increasing pf.
    points = points[::-1]
    return RocCurve(points=points, threshold_grid=grid[::-1])


def per_subband_report(counts: ConfusionCounts):
    """Rows of (subband, pd, pf); None marks an undefined ratio."""
    rows = []
    for i in range(counts.tp.size):
        pos = counts.tp[i] + counts.fn[i]
        neg = counts.fp[i] + counts.tn[i]
        pd = float(counts.tp[i] / pos) if pos > 0 else None
        pf = float(counts.fp[i] / neg) if neg > 0 else None
        rows.append((i, pd, pf))
    return rows


def write_per_subband_csv(rows, path: str) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["subband", "pd", "pf"])
        for i, pd, pf in rows:
            writer.writerow([
                i,
                "undefined" if pd is None else repr(pd),
                "undefined" if pf is None else repr(pf),
            ])


def write_roc_csv(curve: RocCurve, path: str) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["threshold", "pf", "pd"])
        for lam, (pf, pd) in zip(curve.threshold_grid, curve.points):
            writer.writerow([repr(float(lam)), repr(pf), repr(pd)])
