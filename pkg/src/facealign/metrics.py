"""Alignment error metrics: NRMSE, failure rate, CED curve, AUC.

Per-image error is the landmark-mean Euclidean distance divided by a
face-size normalizer taken from the ground truth: the outer-eye-corner
distance ("inter-ocular") or the distance between eye centers
("inter-pupil", each center the mean of that eye's landmark ring).
Dataset-level numbers aggregate per-image errors: their mean (NRMSE),
the fraction at or above a failure threshold, the cumulative
distribution over a threshold grid (CED), and its normalized integral
up to a cutoff (AUC).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateShapeError, InvalidArgumentError
from .geometry import as_shape
from .schemes import LandmarkScheme

NORMALIZER_KINDS = ("inter_ocular", "inter_pupil")

# Failure / AUC cutoff conventions: 0.08 for 68-point protocols, 0.10 for
# the 98-point protocol. An error exactly at the threshold is a failure.
DEFAULT_CUTOFFS = {68: 0.08, 98: 0.10}
CED_GRID_POINTS = 1000


def normalizer_distance(gt, kind: str, scheme: LandmarkScheme) -> float:
    """Face-size normalizer read from the ground-truth shape."""
    gt = as_shape(gt)
    if kind == "inter_ocular":
        d = np.linalg.norm(gt[scheme.left_eye_outer] - gt[scheme.right_eye_outer])
    elif kind == "inter_pupil":
        left = gt[list(scheme.left_eye_ring)].mean(axis=0)
        right = gt[list(scheme.right_eye_ring)].mean(axis=0)
        d = np.linalg.norm(left - right)
    else:
        raise InvalidArgumentError(f"unknown normalizer kind {kind!r}")
    if d <= 0.0:
        raise DegenerateShapeError(f"{kind} normalizer distance is zero")
    return float(d)


def nrmse(pred, gt, kind: str = "inter_ocular", *,
          scheme: LandmarkScheme) -> float:
    """Normalized mean landmark error for one image."""
    pred = as_shape(pred)
    gt = as_shape(gt)
    if pred.shape != gt.shape:
        raise InvalidArgumentError(
            f"prediction/ground-truth landmark counts differ: {pred.shape} vs {gt.shape}")
    if pred.shape[0] != scheme.landmark_count:
        raise InvalidArgumentError(
            f"shape has {pred.shape[0]} landmarks, scheme {scheme.name} expects "
            f"{scheme.landmark_count}")
    d = normalizer_distance(gt, kind, scheme)
    per_landmark = np.linalg.norm(pred - gt, axis=1)
    return float(per_landmark.mean() / d)


def nrmse_batch(preds, gts, kind: str = "inter_ocular", *,
                scheme: LandmarkScheme) -> np.ndarray:
    """Per-image NRMSE for matched prediction/ground-truth sequences."""
    if len(preds) != len(gts):
        raise InvalidArgumentError("prediction and ground-truth counts differ")
    return np.array([nrmse(p, g, kind, scheme=scheme) for p, g in zip(preds, gts)])


def failure_rate(errors, threshold: float) -> float:
    """Fraction of per-image errors at or above ``threshold``."""
    errors = np.asarray(errors, dtype=np.float64)
    if errors.size == 0:
        raise InvalidArgumentError("failure rate of an empty error list is undefined")
    if threshold <= 0:
        raise InvalidArgumentError("failure threshold must be positive")
    return float(np.mean(errors >= threshold))


@dataclass(frozen=True)
class CedCurve:
    """Cumulative error distribution sampled on an ascending threshold grid."""

    thresholds: np.ndarray
    fractions: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.thresholds, dtype=np.float64)
        f = np.asarray(self.fractions, dtype=np.float64)
        if t.ndim != 1 or t.shape != f.shape or t.size == 0:
            raise InvalidArgumentError("thresholds/fractions must be matching 1-D arrays")
        if np.any(np.diff(t) <= 0):
            raise InvalidArgumentError("thresholds must be strictly ascending")
        if np.any(np.diff(f) < 0) or f[-1] > 1.0 or f[0] < 0.0:
            raise InvalidArgumentError("fractions must be a CDF sample in [0, 1]")
        object.__setattr__(self, "thresholds", t)
        object.__setattr__(self, "fractions", f)


def default_ced_grid(cutoff: float, points: int = CED_GRID_POINTS) -> np.ndarray:
    return np.linspace(0.0, cutoff, points)


def ced_curve(errors, grid) -> CedCurve:
    """Fraction of errors <= t for each grid threshold t."""
    errors = np.sort(np.asarray(errors, dtype=np.float64))
    if errors.size == 0:
        raise InvalidArgumentError("CED of an empty error list is undefined")
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 1 or np.any(np.diff(grid) <= 0):
        raise InvalidArgumentError("threshold grid must be 1-D strictly ascending")
    counts = np.searchsorted(errors, grid, side="right")
    return CedCurve(grid, counts / errors.size)


def auc(curve: CedCurve, cutoff: float) -> float:
    """Trapezoidal integral of the CED over [0, cutoff], divided by cutoff."""
    t, f = curve.thresholds, curve.fractions
    if cutoff < t[0] or cutoff > t[-1]:
        raise InvalidArgumentError(
            f"cutoff {cutoff} outside grid range [{t[0]}, {t[-1]}]")
    if t[0] != 0.0:
        raise InvalidArgumentError("AUC requires a threshold grid starting at 0")
    if cutoff == 0.0:
        raise InvalidArgumentError("AUC cutoff must be positive")
    keep = t <= cutoff
    tk, fk = t[keep], f[keep]
    if tk[-1] < cutoff:
        f_cut = np.interp(cutoff, t, f)
        tk = np.append(tk, cutoff)
        fk = np.append(fk, f_cut)
    return float(np.trapezoid(fk, tk) / cutoff)
