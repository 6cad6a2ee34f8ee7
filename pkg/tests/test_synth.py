import numpy as np
import pytest

from basisfit.activation import DepthActivation
from basisfit.errors import CapViolation, NoEligiblePixels
from basisfit.multiscale import stacked_field
from basisfit.synth import (
    SIGMA_FLOOR,
    BasisMode,
    SamplerConfig,
    SceneKind,
    generate_bases,
    generate_scene,
    sample_sparse,
)

ACT = DepthActivation()


def _scene(seed=0, kind=SceneKind.PLANES_AND_BUMPS, hw=(32, 32), cap=10.0):
    return generate_scene(hw[0], hw[1], kind, ACT, cap, seed)


# ---- scenes ------------------------------------------------------------


def test_scene_is_seed_deterministic():
    a = _scene(seed=7)
    b = _scene(seed=7)
    np.testing.assert_array_equal(a.depth, b.depth)
    np.testing.assert_array_equal(a.logit, b.logit)
    c = _scene(seed=8)
    assert not np.array_equal(a.depth, c.depth)


def test_scene_depths_respect_band():
    for seed in range(6):
        for kind in SceneKind:
            sc = _scene(seed=seed, kind=kind)
            assert sc.depth.min() > ACT.a
            assert sc.depth.max() <= sc.depth_cap


def test_scene_logit_depth_invariant_is_exact():
    sc = _scene(seed=3)
    np.testing.assert_array_equal(sc.logit, ACT.inverse(sc.depth))
    np.testing.assert_allclose(ACT.forward(sc.logit), sc.depth, rtol=1e-12)


def test_scene_kinds_differ_in_structure():
    pl = _scene(seed=1, kind=SceneKind.PLANES_AND_BUMPS)
    sm = _scene(seed=1, kind=SceneKind.RANDOM_SMOOTH)
    assert pl.regions is not None and pl.regions.shape == pl.shape
    assert pl.regions.max() >= 1  # at least two planar pieces
    assert sm.regions is None


def test_scene_rejects_cap_at_or_below_bound():
    with pytest.raises(CapViolation):
        _scene(cap=1.0)
    with pytest.raises(CapViolation):
        _scene(cap=0.5)


def test_scene_accepts_string_kind():
    sc = generate_scene(16, 16, "random_smooth", ACT, 10.0, 0)
    assert sc.kind is SceneKind.RANDOM_SMOOTH


# ---- basis pyramids ----------------------------------------------------


def test_bases_follow_channel_plan():
    sc = _scene(seed=2)
    ms, w_true = generate_bases(sc, (2, 3, 4), BasisMode.GENERIC, seed=11)
    assert w_true is None
    assert ms.channel_plan == (2, 3, 4)
    assert ms.full_shape == (32, 32)
    assert ms.levels[0].shape == (8, 8, 2)


def test_bases_seed_deterministic():
    sc = _scene(seed=2)
    a, _ = generate_bases(sc, (2, 2), BasisMode.GENERIC, seed=5)
    b, _ = generate_bases(sc, (2, 2), BasisMode.GENERIC, seed=5)
    c, _ = generate_bases(sc, (2, 2), BasisMode.GENERIC, seed=6)
    for la, lb in zip(a.levels, b.levels):
        np.testing.assert_array_equal(la, lb)
    assert not np.array_equal(a.levels[0], c.levels[0])


def test_generic_channels_are_standardized():
    sc = _scene(seed=4)
    ms, _ = generate_bases(sc, (2, 4), BasisMode.GENERIC, seed=9)
    for level in ms.levels:
        for c in range(level.shape[2]):
            ch = level[:, :, c]
            assert abs(ch.mean()) < 1e-12
            assert abs(ch.std() - 1.0) < 1e-12


def test_realizable_mode_plants_recoverable_weights():
    sc = _scene(seed=5)
    ms, w_true = generate_bases(sc, (2, 3, 4), BasisMode.REALIZABLE, seed=13)
    assert w_true is not None and w_true.shape == (10,)
    assert w_true[0] == pytest.approx(float(sc.logit.mean()))
    assert w_true[-1] == 1.0
    np.testing.assert_array_equal(w_true[1:-1], 0.0)
    # the planted channel makes the scene exactly representable
    field = stacked_field(ms)
    depth = ACT.forward(field @ w_true)
    np.testing.assert_allclose(depth, sc.depth, rtol=0, atol=1e-12)


def test_bases_reject_bad_plan():
    sc = _scene(seed=5)
    with pytest.raises(ValueError):
        generate_bases(sc, (), BasisMode.GENERIC, seed=0)
    with pytest.raises(ValueError):
        generate_bases(sc, (2, 0), BasisMode.GENERIC, seed=0)


# ---- sparse sampling ---------------------------------------------------


def test_sample_count_is_floor_of_density():
    sc = _scene(seed=6)
    out = sample_sparse(sc, SamplerConfig(density=0.04, seed=1))
    assert out.sparse.count == int(np.floor(0.04 * 32 * 32))  # 40


def test_sample_pixels_sorted_unique_and_truthful():
    sc = _scene(seed=6)
    out = sample_sparse(sc, SamplerConfig(density=0.1, seed=2))
    ids = out.sparse.pixel_ids
    assert np.all(np.diff(ids) > 0)
    assert ids.min() >= 0 and ids.max() < 32 * 32
    np.testing.assert_array_equal(out.clean_depths, sc.depth.ravel()[ids])


def test_sample_noise_free_matches_scene_exactly():
    sc = _scene(seed=6)
    out = sample_sparse(sc, SamplerConfig(density=0.1, seed=3))
    np.testing.assert_array_equal(out.sparse.depths, out.clean_depths)
    assert not out.is_outlier.any()
    np.testing.assert_array_equal(out.sparse.sigmas, SIGMA_FLOOR)


def test_sample_determinism():
    sc = _scene(seed=6)
    cfg = SamplerConfig(density=0.05, noise_sigma=0.02, outlier_fraction=0.2, seed=4)
    a = sample_sparse(sc, cfg)
    b = sample_sparse(sc, cfg)
    np.testing.assert_array_equal(a.sparse.depths, b.sparse.depths)
    np.testing.assert_array_equal(a.sparse.pixel_ids, b.sparse.pixel_ids)
    np.testing.assert_array_equal(a.is_outlier, b.is_outlier)


def test_sample_outlier_bookkeeping():
    sc = _scene(seed=6)
    cfg = SamplerConfig(density=0.5, outlier_fraction=0.3, seed=5)
    out = sample_sparse(sc, cfg)
    n = out.sparse.count
    assert out.is_outlier.sum() == int(np.floor(0.3 * n))
    # outliers are clean depth times a factor inside outlier_range
    ratio = out.sparse.depths[out.is_outlier] / out.clean_depths[out.is_outlier]
    assert ratio.min() >= 0.5 - 1e-12 and ratio.max() <= 1.5 + 1e-12
    # no added noise on outliers, and inliers untouched at zero noise
    np.testing.assert_array_equal(
        out.sparse.depths[~out.is_outlier], out.clean_depths[~out.is_outlier]
    )


def test_sample_sigma_floor():
    sc = _scene(seed=6)
    big = sample_sparse(sc, SamplerConfig(density=0.05, noise_sigma=0.5, seed=6))
    np.testing.assert_array_equal(big.sparse.sigmas, 0.5)
    tiny = sample_sparse(sc, SamplerConfig(density=0.05, noise_sigma=1e-9, seed=6))
    np.testing.assert_array_equal(tiny.sparse.sigmas, SIGMA_FLOOR)


def test_sample_respects_eligibility_cap():
    sc = _scene(seed=9)
    cut = float(np.quantile(sc.depth, 0.5))
    n_eligible = int(np.sum(sc.depth <= cut))
    out = sample_sparse(sc, SamplerConfig(density=1.0, depth_cap=cut, seed=7))
    assert out.sparse.count == n_eligible
    assert out.clean_depths.max() <= cut


def test_sample_error_cases():
    sc = _scene(seed=9)
    with pytest.raises(NoEligiblePixels):
        # floor(density * 1024) == 0
        sample_sparse(sc, SamplerConfig(density=1e-4, seed=0))
    with pytest.raises(NoEligiblePixels):
        sample_sparse(sc, SamplerConfig(density=0.5, depth_cap=1.0000001, seed=0))


def test_sampler_config_validation():
    with pytest.raises(ValueError):
        SamplerConfig(density=0.0)
    with pytest.raises(ValueError):
        SamplerConfig(density=1.5)
    with pytest.raises(ValueError):
        SamplerConfig(noise_sigma=-0.1)
    with pytest.raises(ValueError):
        SamplerConfig(outlier_fraction=1.2)
    with pytest.raises(ValueError):
        SamplerConfig(outlier_range=(1.5, 0.5))
