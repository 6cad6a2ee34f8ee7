"""Dense depth evaluation metrics.

All metrics are computed over pixels where both grids are valid, the
ground truth lies in (0, depth_cap], and the prediction is positive.
Threshold accuracies delta_k use a strict ratio test; iRMSE works in
inverse kilometers so indoor-scale numbers stay readable.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .errors import DimensionMismatch, NoValidPixels
from .fitter import DepthGrid


@dataclass(frozen=True)
class MetricReport:
    mae: float
    rmse: float
    delta1: float
    delta2: float
    delta3: float
    irmse: float
    n_evaluated: int
    depth_cap: float

    def to_dict(self) -> dict:
        return asdict(self)

    CSV_FIELDS = ("n_evaluated", "mae", "rmse", "delta1", "delta2", "delta3", "irmse", "depth_cap")

    def csv_values(self) -> list:
        return [getattr(self, name) for name in self.CSV_FIELDS]


def evaluate(pred: DepthGrid, gt: DepthGrid, depth_cap: float) -> MetricReport:
    """Compare a predicted depth grid against ground truth.

    Raises NoValidPixels when the evaluation mask is empty.
    """
    if pred.shape != gt.shape:
        raise DimensionMismatch(
            f"prediction {pred.shape} and ground truth {gt.shape} differ in shape"
        )
    mask = (
        pred.valid
        & gt.valid
        & (gt.values > 0.0)
        & (gt.values <= depth_cap)
        & (pred.values > 0.0)
    )
    n = int(mask.sum())
    if n == 0:
        raise NoValidPixels("no pixels left after masking")
    p = pred.values[mask]
    g = gt.values[mask]
    err = p - g
    ratio = np.maximum(p / g, g / p)
    km_err = 1000.0 / p - 1000.0 / g
    return MetricReport(
        mae=float(np.mean(np.abs(err))),
        rmse=float(np.sqrt(np.mean(err * err))),
        delta1=float(100.0 * np.mean(ratio < 1.25)),
        delta2=float(100.0 * np.mean(ratio < 1.25**2)),
        delta3=float(100.0 * np.mean(ratio < 1.25**3)),
        irmse=float(np.sqrt(np.mean(km_err * km_err))),
        n_evaluated=n,
        depth_cap=float(depth_cap),
    )
