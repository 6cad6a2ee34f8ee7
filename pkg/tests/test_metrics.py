import numpy as np
import pytest

from basisfit.errors import DimensionMismatch, NoValidPixels
from basisfit.fitter import DepthGrid
from basisfit.metrics import MetricReport, evaluate


def _grid(values, valid=None):
    return DepthGrid(np.asarray(values, dtype=np.float64), valid)


def test_frozen_uniform_offset_case():
    # gt 4 everywhere, pred 5: ratio 1.25 exactly, strict threshold excludes it
    gt = _grid(np.full((2, 2), 4.0))
    pred = _grid(np.full((2, 2), 5.0))
    rep = evaluate(pred, gt, depth_cap=10.0)
    assert rep.mae == 1.0
    assert rep.rmse == 1.0
    assert rep.delta1 == 0.0
    assert rep.delta2 == 100.0
    assert rep.delta3 == 100.0
    assert rep.irmse == pytest.approx(50.0)  # |1000/5 - 1000/4| = 50
    assert rep.n_evaluated == 4


def test_perfect_prediction():
    gt = _grid(np.linspace(1.0, 9.0, 16).reshape(4, 4))
    rep = evaluate(_grid(gt.values.copy()), gt, depth_cap=10.0)
    assert rep.mae == 0.0 and rep.rmse == 0.0 and rep.irmse == 0.0
    assert rep.delta1 == rep.delta2 == rep.delta3 == 100.0


def test_mask_excludes_cap_nonpositive_and_invalid():
    gt_vals = np.array([[2.0, 12.0], [0.0, 3.0], [4.0, 5.0]])
    pred_vals = np.array([[2.0, 2.0], [2.0, -1.0], [4.0, 5.0]])
    valid = np.ones((3, 2), dtype=bool)
    valid[2, 0] = False
    rep = evaluate(_grid(pred_vals), _grid(gt_vals, valid), depth_cap=10.0)
    # surviving pixels: (0,0) and (2,1) only
    assert rep.n_evaluated == 2
    assert rep.mae == 0.0


def test_prediction_validity_mask_applies_too():
    gt = _grid(np.full((2, 2), 4.0))
    pv = np.ones((2, 2), dtype=bool)
    pv[0, 0] = False
    rep = evaluate(_grid(np.full((2, 2), 4.0), pv), gt, depth_cap=10.0)
    assert rep.n_evaluated == 3


def test_ratio_is_symmetric():
    gt = _grid(np.array([[2.0, 8.0]]))
    pred = _grid(np.array([[8.0, 2.0]]))  # both ratios are 4x
    rep = evaluate(pred, gt, depth_cap=10.0)
    assert rep.delta3 == 0.0
    assert rep.rmse == 6.0


def test_no_valid_pixels_raises():
    gt = _grid(np.full((2, 2), 20.0))
    with pytest.raises(NoValidPixels):
        evaluate(_grid(np.full((2, 2), 20.0)), gt, depth_cap=10.0)


def test_shape_mismatch_raises():
    with pytest.raises(DimensionMismatch):
        evaluate(_grid(np.ones((2, 2))), _grid(np.ones((3, 2))), depth_cap=10.0)


def test_csv_fields_align_with_values():
    gt = _grid(np.full((2, 2), 4.0))
    rep = evaluate(_grid(np.full((2, 2), 5.0)), gt, depth_cap=10.0)
    d = rep.to_dict()
    assert list(MetricReport.CSV_FIELDS) == [
        "n_evaluated", "mae", "rmse", "delta1", "delta2", "delta3", "irmse", "depth_cap"
    ]
    assert rep.csv_values() == [d[k] for k in MetricReport.CSV_FIELDS]


def test_known_mixed_example():
    gt = _grid(np.array([[1.0, 2.0, 4.0, 5.0]]))
    pred = _grid(np.array([[1.1, 2.0, 3.0, 10.0]]))
    rep = evaluate(pred, gt, depth_cap=10.0)
    assert rep.n_evaluated == 4
    assert rep.mae == pytest.approx((0.1 + 0.0 + 1.0 + 5.0) / 4.0)
    # ratios: 1.1, 1.0, 4/3, 2.0 -> strict thresholds 1.25, 1.5625, 1.953125
    assert rep.delta1 == 50.0
    assert rep.delta2 == 75.0
    assert rep.delta3 == 75.0
