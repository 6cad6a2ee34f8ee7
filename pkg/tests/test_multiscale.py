import numpy as np
import pytest

from basisfit.activation import DepthActivation
from basisfit.errors import DimensionMismatch, PixelOutOfRange, ScaleOutOfRange
from basisfit.fitter import FitConfig, SparseDepthSet, fit_gauss_newton, predict_dense
from basisfit.multiscale import (
    MultiScaleBases,
    ScaleWeights,
    flatten_to_stack,
    reconstruct_at_scale,
    stacked_field,
    upsample_bilinear,
)

ACT = DepthActivation()


def _pyramid(rng, hw=(16, 16), plan=(2, 3, 4)):
    h, w = hw
    k_max = len(plan) - 1
    levels = []
    for k, c in enumerate(plan):
        f = 2 ** (k_max - k)
        levels.append(rng.standard_normal((h // f, w // f, c)))
    return MultiScaleBases(tuple(levels))


# ---- pyramid container -------------------------------------------------


def test_pyramid_shape_accounting():
    ms = _pyramid(np.random.default_rng(0))
    assert ms.full_shape == (16, 16)
    assert ms.max_scale == 2
    assert ms.channel_plan == (2, 3, 4)
    assert ms.total_dim == 10
    assert ms.levels[0].shape == (4, 4, 2)


def test_pyramid_rejects_bad_halving():
    rng = np.random.default_rng(1)
    with pytest.raises(DimensionMismatch):
        MultiScaleBases((rng.standard_normal((5, 4, 1)), rng.standard_normal((8, 8, 1))))
    with pytest.raises(DimensionMismatch):
        MultiScaleBases(())
    with pytest.raises(DimensionMismatch):
        MultiScaleBases((rng.standard_normal((4, 4)),))


def test_pyramid_rejects_indivisible_resolution():
    rng = np.random.default_rng(2)
    with pytest.raises(DimensionMismatch):
        MultiScaleBases(
            (rng.standard_normal((3, 3, 1)), rng.standard_normal((6, 7, 1)))
        )


# ---- bilinear upsampling ----------------------------------------------


def test_upsample_frozen_1d_case():
    row = np.array([[[0.0], [1.0]]])  # 1 x 2 x 1
    out = upsample_bilinear(row, (1, 4))
    np.testing.assert_allclose(out[0, :, 0], [0.0, 0.25, 0.75, 1.0], atol=1e-15)


def test_upsample_2d_is_separable_product():
    grid = np.array([[[0.0], [1.0]], [[2.0], [3.0]]])  # 2 x 2 x 1, value 2y + x
    out = upsample_bilinear(grid, (4, 4))
    ramp = np.array([0.0, 0.25, 0.75, 1.0])
    expected = 2.0 * ramp[:, None] + ramp[None, :]
    np.testing.assert_allclose(out[:, :, 0], expected, atol=1e-15)


def test_upsample_identity_at_same_resolution():
    rng = np.random.default_rng(3)
    grid = rng.standard_normal((6, 5, 3))
    np.testing.assert_array_equal(upsample_bilinear(grid, (6, 5)), grid)


def test_upsample_preserves_constants():
    grid = np.full((3, 4, 2), 7.25)
    out = upsample_bilinear(grid, (12, 16))
    np.testing.assert_array_equal(out, 7.25)


def test_upsample_stays_in_convex_hull():
    rng = np.random.default_rng(4)
    grid = rng.uniform(-1, 1, (4, 4, 2))
    out = upsample_bilinear(grid, (16, 16))
    assert out.min() >= grid.min() - 1e-12
    assert out.max() <= grid.max() + 1e-12


def test_upsample_rejects_non_integer_factor():
    with pytest.raises(DimensionMismatch):
        upsample_bilinear(np.zeros((4, 4, 1)), (6, 8))


# ---- weight layout -----------------------------------------------------


def test_scale_weights_round_trip():
    flat = np.arange(10.0)
    sw = ScaleWeights.from_flat(flat, (2, 3, 4))
    assert sw.bias == 0.0
    np.testing.assert_array_equal(sw.per_level[0], [1.0, 2.0])
    np.testing.assert_array_equal(sw.per_level[1], [3.0, 4.0, 5.0])
    np.testing.assert_array_equal(sw.per_level[2], [6.0, 7.0, 8.0, 9.0])
    np.testing.assert_array_equal(sw.to_flat(), flat)


def test_scale_weights_length_check():
    with pytest.raises(DimensionMismatch):
        ScaleWeights.from_flat(np.arange(9.0), (2, 3, 4))


# ---- flattening --------------------------------------------------------


def test_stacked_field_layout():
    rng = np.random.default_rng(5)
    ms = _pyramid(rng)
    field = stacked_field(ms)
    assert field.shape == (16, 16, 10)
    np.testing.assert_array_equal(field[:, :, 0], 1.0)
    # finest level is full resolution already: copied through untouched
    np.testing.assert_array_equal(field[:, :, 6:], ms.levels[2])
    # coarsest level occupies the channels right after the bias
    np.testing.assert_array_equal(
        field[:, :, 1:3], upsample_bilinear(ms.levels[0], (16, 16))
    )


def test_stacked_field_prefix_scales():
    rng = np.random.default_rng(6)
    ms = _pyramid(rng)
    assert stacked_field(ms, 0).shape == (16, 16, 3)
    assert stacked_field(ms, 1).shape == (16, 16, 6)
    np.testing.assert_array_equal(stacked_field(ms, 2), stacked_field(ms))
    with pytest.raises(ScaleOutOfRange):
        stacked_field(ms, 3)
    with pytest.raises(ScaleOutOfRange):
        stacked_field(ms, -1)


def test_flatten_gathers_row_major_pixels():
    rng = np.random.default_rng(7)
    ms = _pyramid(rng)
    ids = np.array([0, 17, 255, 128])
    stack = flatten_to_stack(ms, ids)
    field = stacked_field(ms).reshape(256, 10)
    np.testing.assert_array_equal(stack.rows, field[ids])
    np.testing.assert_array_equal(stack.rows[:, 0], 1.0)


def test_flatten_rejects_out_of_range_pixels():
    ms = _pyramid(np.random.default_rng(8))
    with pytest.raises(PixelOutOfRange):
        flatten_to_stack(ms, np.array([256]))
    with pytest.raises(PixelOutOfRange):
        flatten_to_stack(ms, np.array([-1]))


# ---- scale-wise reconstruction ----------------------------------------


def test_reconstruct_full_scale_matches_dense_decode_bitwise():
    rng = np.random.default_rng(9)
    ms = _pyramid(rng)
    w = rng.standard_normal(10) * 0.3
    sw = ScaleWeights.from_flat(w, ms.channel_plan)
    via_scale = reconstruct_at_scale(ms, sw, ACT, ms.max_scale)
    via_dense = predict_dense(stacked_field(ms), w, ACT)
    np.testing.assert_array_equal(via_scale.values, via_dense.values)


def test_reconstruct_prefix_equals_zeroing_fine_levels():
    rng = np.random.default_rng(10)
    ms = _pyramid(rng)
    w = rng.standard_normal(10) * 0.3
    for s in range(ms.max_scale + 1):
        padded = w.copy()
        padded[1 + sum(ms.channel_plan[: s + 1]):] = 0.0
        sw = ScaleWeights.from_flat(padded, ms.channel_plan)
        coarse = reconstruct_at_scale(ms, sw, ACT, s)
        full = reconstruct_at_scale(ms, sw, ACT, ms.max_scale)
        np.testing.assert_allclose(coarse.values, full.values, rtol=0, atol=1e-12)


def test_reconstruct_ignores_finer_levels_exactly():
    # editing level k+1 data must not perturb the scale-k reconstruction
    rng = np.random.default_rng(11)
    ms = _pyramid(rng)
    w = rng.standard_normal(10) * 0.3
    sw = ScaleWeights.from_flat(w, ms.channel_plan)
    before = reconstruct_at_scale(ms, sw, ACT, 1)
    tampered_levels = list(ms.levels)
    tampered_levels[2] = ms.levels[2] + 100.0
    tampered = MultiScaleBases(tuple(tampered_levels))
    after = reconstruct_at_scale(tampered, sw, ACT, 1)
    np.testing.assert_array_equal(before.values, after.values)


def test_reconstruct_validates_scale_and_weights():
    rng = np.random.default_rng(12)
    ms = _pyramid(rng)
    sw = ScaleWeights.from_flat(np.zeros(10), ms.channel_plan)
    with pytest.raises(ScaleOutOfRange):
        reconstruct_at_scale(ms, sw, ACT, 3)
    bad = ScaleWeights(bias=0.0, per_level=(np.zeros(2), np.zeros(3)))
    with pytest.raises(DimensionMismatch):
        reconstruct_at_scale(ms, bad, ACT, 1)


def test_fit_then_reconstruct_recovers_planted_weights():
    rng = np.random.default_rng(13)
    ms = _pyramid(rng, hw=(16, 16), plan=(1, 2))
    w_true = rng.standard_normal(ms.total_dim) * 0.4
    field = stacked_field(ms)
    depth_map = ACT.forward(field @ w_true)
    ids = rng.choice(256, size=120, replace=False)
    ids.sort()
    stack = flatten_to_stack(ms, ids)
    samples = SparseDepthSet(depth_map.reshape(-1)[ids], pixel_ids=ids)
    res = fit_gauss_newton(stack, samples, ACT, FitConfig(lam=1e-10, iterations=2))
    sw = ScaleWeights.from_flat(res.weights, ms.channel_plan)
    recon = reconstruct_at_scale(ms, sw, ACT, ms.max_scale)
    assert np.max(np.abs(recon.values - depth_map)) < 1e-6
