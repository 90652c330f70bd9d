"""ROC operating points from parameter sweeps, with trapezoid AUC."""

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .metrics import Detector, evaluate_detector

logger = logging.getLogger(__name__)


@dataclass
class RocCurve:
    detector: str
    params: list = field(default_factory=list)
    fa_rate: list = field(default_factory=list)
    det_rate: list = field(default_factory=list)
    auc: float = float("nan")
    degenerate: bool = False

    def __post_init__(self):
        order = np.lexsort((np.asarray(self.det_rate), np.asarray(self.fa_rate))) if self.params else []
        self.params = [self.params[i] for i in order]
        self.fa_rate = [float(self.fa_rate[i]) for i in order]
        self.det_rate = [float(self.det_rate[i]) for i in order]
        if self.params:
            self.auc = auc(self.fa_rate, self.det_rate)
            self.degenerate = len(set(zip(self.fa_rate, self.det_rate))) == 1

    def points(self):
        return list(zip(self.fa_rate, self.det_rate))


def frontier(fa, det) -> np.ndarray:
    """Non-dominated (fa, det) points with (0, 0) and (1, 1) added, sorted by fa.

    A point is dominated when another has fa no larger and det no smaller.
    """
    pts = np.unique(np.vstack([np.column_stack([fa, det]), [[0.0, 0.0], [1.0, 1.0]]]), axis=0)
    # staircase: at each fa keep the best det, and only if it beats every smaller fa
    keep = []
    best = -np.inf
    for f in np.unique(pts[:, 0]):
        d = pts[pts[:, 0] == f, 1].max()
        if d > best:
            keep.append((f, d))
            best = d
    if keep[-1][0] < 1.0:
        # the (1, 1) anchor ties the best det already reached; it still closes the curve
        keep.append((1.0, 1.0))
    return np.array(keep)


def auc(fa, det) -> float:
    fa = np.asarray(fa, dtype=np.float64)
    det = np.asarray(det, dtype=np.float64)
    if fa.shape != det.shape:
        raise ValueError("fa and det must have the same length")
    if np.any((fa < 0) | (fa > 1) | (det < 0) | (det > 1)):
        raise ValueError("rates must lie in [0, 1]")
    pts = frontier(fa, det)
    area = float(np.sum(np.diff(pts[:, 0]) * (pts[1:, 1] + pts[:-1, 1]) / 2))
    return min(max(area, 0.0), 1.0)


def roc_sweep(name: str, family: Callable[[object], Detector], sweep: Sequence, clean, adversarial,
              T: int, seed: int = 0) -> RocCurve:
    """One operating point per swept parameter value."""
    if len(sweep) < 3:
        raise ValueError(f"ROC sweep needs at least 3 points, got {len(sweep)}")
    params, fa, det = [], [], []
    for value in sweep:
        row = evaluate_detector(family(value), clean, adversarial, T, seed, name=name, param=str(value))
        params.append(value)
        fa.append(row.false_alarm_pct / 100)
        det.append(row.detection_pct / 100)
    curve = RocCurve(name, params, fa, det)
    if curve.degenerate:
        logger.warning("ROC sweep for %s is degenerate: every point is identical", name)
    return curve


def threshold_scales(A: float, B: float, decades_low: float = 4.0, decades_high: float = 10.0,
                     n: int = 29) -> list[float]:
    """Scale factors s for (A/s, B*s) spanning the given decades, keeping A/s < B*s."""
    s_min = max(10.0 ** -decades_low, np.sqrt(A / B) * 1.0001)
    return [float(s) for s in np.geomspace(s_min, 10.0 ** decades_high, n)]
