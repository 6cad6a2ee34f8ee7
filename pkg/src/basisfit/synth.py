"""Seeded synthetic scenes, basis pyramids, and sparse sampling.

Scenes are built in logit space and mapped through the activation, which
guarantees depths inside (a, depth_cap] by construction.  Two flavors:
piecewise-planar ramps composited over Voronoi regions with optional
Gaussian bumps, and a low-frequency random field.  Basis pyramids are
band-limited noise channels; in realizable mode one finest-scale channel
is replaced by the scene's centered logit so the scene is exactly
representable and the generating weights are known.  All randomness flows
from explicit integer seeds through numpy's PCG64, so equal seeds give
bit-identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.ndimage import gaussian_filter

from .activation import DepthActivation
from .errors import CapViolation, NoEligiblePixels
from .fitter import SparseDepthSet
from .multiscale import MultiScaleBases

SIGMA_FLOOR = 1e-3
MAX_REDRAWS = 16


class SceneKind(str, Enum):
    PLANES_AND_BUMPS = "planes_and_bumps"
    RANDOM_SMOOTH = "random_smooth"


class BasisMode(str, Enum):
    GENERIC = "generic"
    REALIZABLE = "realizable"


@dataclass(frozen=True)
class Scene:
    """Ground-truth depth and its logit field.

    logit equals act.inverse(depth) pointwise with no clamping; regions
    labels the planar pieces for the planes-and-bumps kind (None otherwise).
    """

    depth: np.ndarray
    logit: np.ndarray
    seed: int
    kind: SceneKind
    depth_cap: float
    regions: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.depth.shape


@dataclass(frozen=True)
class SamplerConfig:
    """Sparse sampling recipe: density is the fraction of all pixels, noise
    is additive Gaussian in depth space, outliers multiply the clean depth
    by a uniform factor (no extra noise on top)."""

    density: float = 0.04
    depth_cap: float = 10.0
    noise_sigma: float = 0.0
    outlier_fraction: float = 0.0
    outlier_range: tuple[float, float] = (0.5, 1.5)
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.density <= 1.0):
            raise ValueError(f"density must be in (0, 1], got {self.density}")
        if self.noise_sigma < 0.0:
            raise ValueError("noise_sigma must be >= 0")
        if not (0.0 <= self.outlier_fraction <= 1.0):
            raise ValueError("outlier_fraction must be in [0, 1]")
        lo, hi = self.outlier_range
        if not (0.0 < lo <= hi):
            raise ValueError(f"outlier_range must be ordered and positive, got {self.outlier_range}")


@dataclass(frozen=True)
class SparseSample:
    """Sampler output: the measurement set plus per-sample ground truth."""

    sparse: SparseDepthSet
    is_outlier: np.ndarray
    clean_depths: np.ndarray


def _voronoi_labels(h: int, w: int, centers: np.ndarray) -> np.ndarray:
    ys, xs = np.meshgrid(
        (np.arange(h) + 0.5) / h, (np.arange(w) + 0.5) / w, indexing="ij"
    )
    d2 = (ys[..., None] - centers[:, 0]) ** 2 + (xs[..., None] - centers[:, 1]) ** 2
    return np.argmin(d2, axis=2)


def _raw_planes_and_bumps(
    h: int, w: int, rng: np.random.Generator, bump_amplitude: float
) -> tuple[np.ndarray, np.ndarray]:
    ys, xs = np.meshgrid(
        (np.arange(h) + 0.5) / h, (np.arange(w) + 0.5) / w, indexing="ij"
    )
    n_regions = int(rng.integers(2, 6))
    centers = rng.random((n_regions, 2))
    labels = _voronoi_labels(h, w, centers)
    field = np.zeros((h, w))
    for r in range(n_regions):
        alpha, beta = rng.uniform(-2.0, 2.0, size=2)
        gamma = rng.uniform(-1.0, 1.0)
        field[labels == r] = (alpha * xs + beta * ys + gamma)[labels == r]
    n_bumps = int(rng.integers(1, 6))
    for _ in range(n_bumps):
        cy, cx = rng.random(2)
        width = rng.uniform(0.05, 0.25)
        amp = rng.uniform(-1.0, 1.0) * bump_amplitude
        field += amp * np.exp(-((ys - cy) ** 2 + (xs - cx) ** 2) / (2.0 * width**2))
    return field, labels


def _raw_random_smooth(h: int, w: int, rng: np.random.Generator) -> np.ndarray:
    white = rng.standard_normal((h, w))
    return gaussian_filter(white, sigma=max(2.0, min(h, w) / 8.0), mode="reflect")


def generate_scene(
    height: int,
    width: int,
    kind: SceneKind,
    act: DepthActivation,
    depth_cap: float,
    seed: int,
    bump_amplitude: float = 1.0,
) -> Scene:
    """Build a seeded scene with depths strictly inside (act.a, depth_cap].

    The raw logit field is affinely rescaled into a randomly drawn depth
    band well inside the range; if verification still fails the parameters
    are redrawn, up to MAX_REDRAWS times, then CapViolation is raised.
    """
    kind = SceneKind(kind)
    a = act.a
    if not depth_cap > a * (1.0 + act.epsilon):
        raise CapViolation(
            f"depth_cap {depth_cap} leaves no room above the activation bound {a}"
        )
    rng = np.random.default_rng(seed)
    for _ in range(MAX_REDRAWS):
        regions = None
        if kind is SceneKind.PLANES_AND_BUMPS:
            raw, regions = _raw_planes_and_bumps(height, width, rng, bump_amplitude)
        else:
            raw = _raw_random_smooth(height, width, rng)
        span = depth_cap - a
        d_lo = a + (0.08 + 0.12 * rng.random()) * span
        d_hi = a + (0.55 + 0.40 * rng.random()) * span
        lo_logit = act.inverse(d_hi)  # activation is decreasing for the sigmoid form
        hi_logit = act.inverse(d_lo)
        raw_min, raw_max = raw.min(), raw.max()
        if raw_max > raw_min:
            norm = (raw - raw_min) / (raw_max - raw_min)
        else:
            norm = np.full_like(raw, 0.5)
        logit = lo_logit + norm * (hi_logit - lo_logit)
        depth = act.forward(logit)
        if np.all(depth > a) and np.all(depth <= depth_cap):
            return Scene(
                depth=depth,
                logit=act.inverse(depth),
                seed=seed,
                kind=kind,
                depth_cap=depth_cap,
                regions=regions,
            )
    raise CapViolation(
        f"could not place depths inside ({a}, {depth_cap}] after {MAX_REDRAWS} draws"
    )


def generate_bases(
    scene: Scene,
    channel_plan,
    mode: BasisMode,
    seed: int,
) -> tuple[MultiScaleBases, np.ndarray | None]:
    """Seeded basis pyramid over the scene's grid.

    Generic mode: smoothed, per-channel standardized noise at every level.
    Realizable mode additionally overwrites the last finest-level channel
    with (scene.logit - mean logit) and returns the generating weights
    w_true (bias = mean logit, that channel = 1, all else 0).
    """
    mode = BasisMode(mode)
    plan = [int(c) for c in channel_plan]
    if not plan or any(c < 1 for c in plan):
        raise ValueError(f"channel plan must be non-empty and positive, got {plan}")
    h, w = scene.shape
    k_max = len(plan) - 1
    rng = np.random.default_rng(seed)
    levels = []
    for k, channels in enumerate(plan):
        factor = 2 ** (k_max - k)
        hk, wk = h // factor, w // factor
        arr = np.empty((hk, wk, channels))
        for c in range(channels):
            noise = rng.standard_normal((hk, wk))
            smooth = gaussian_filter(noise, sigma=rng.uniform(1.5, 3.5), mode="reflect")
            std = smooth.std()
            arr[:, :, c] = (smooth - smooth.mean()) / (std if std > 0 else 1.0)
        levels.append(arr)

    w_true = None
    if mode is BasisMode.REALIZABLE:
        bias = float(scene.logit.mean())
        levels[-1][:, :, -1] = scene.logit - bias
        w_true = np.zeros(1 + sum(plan))
        w_true[0] = bias
        w_true[-1] = 1.0
    return MultiScaleBases(tuple(levels)), w_true


def sample_sparse(scene: Scene, cfg: SamplerConfig) -> SparseSample:
    """Draw sparse measurements from a scene.

    Picks floor(density * H * W) pixels uniformly without replacement among
    those with depth <= cfg.depth_cap, adds Gaussian depth noise, then
    replaces exactly floor(outlier_fraction * N) of them by clean depth
    times a uniform factor from outlier_range.  Reported sigmas are
    max(noise_sigma, SIGMA_FLOOR) for every sample.
    """
    h, w = scene.shape
    n_requested = int(np.floor(cfg.density * h * w))
    eligible = np.flatnonzero(scene.depth.ravel() <= cfg.depth_cap)
    if n_requested < 1 or eligible.size == 0:
        raise NoEligiblePixels(
            f"requested {n_requested} samples from {eligible.size} eligible pixels"
        )
    n = min(n_requested, eligible.size)
    rng = np.random.default_rng(cfg.seed)
    pixel_ids = np.sort(rng.choice(eligible, size=n, replace=False))
    clean = scene.depth.ravel()[pixel_ids].copy()
    depths = clean + rng.normal(0.0, cfg.noise_sigma, size=n)
    n_out = int(np.floor(cfg.outlier_fraction * n))
    is_outlier = np.zeros(n, dtype=bool)
    if n_out > 0:
        which = rng.choice(n, size=n_out, replace=False)
        factors = rng.uniform(cfg.outlier_range[0], cfg.outlier_range[1], size=n_out)
        depths[which] = clean[which] * factors
        is_outlier[which] = True
    depths = np.maximum(depths, 1e-6)
    sigmas = np.full(n, max(cfg.noise_sigma, SIGMA_FLOOR))
    sparse = SparseDepthSet(depths=depths, sigmas=sigmas, pixel_ids=pixel_ids)
    return SparseSample(sparse=sparse, is_outlier=is_outlier, clean_depths=clean)
