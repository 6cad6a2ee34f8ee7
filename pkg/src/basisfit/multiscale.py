"""Multi-scale basis pyramids and their flattening to per-sample rows.

Levels are stored coarsest first; level k has spatial dims H / 2^(K-k) by
W / 2^(K-k) so the last level is full resolution.  Flattening upsamples
every level bilinearly (half-pixel sample centers, the align-corners-false
convention), concatenates channels coarsest first, and prepends a single
global bias channel of ones.  Weight vectors follow the same layout, so a
prefix of the weights reconstructs the prediction up to a chosen scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .activation import DepthActivation
from .errors import DimensionMismatch, PixelOutOfRange, ScaleOutOfRange
from .fitter import BasisStack, DepthGrid, predict_dense


@dataclass(frozen=True)
class MultiScaleBases:
    """Basis channel pyramid.  levels[k] has shape (H_k, W_k, c_k)."""

    levels: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.levels) == 0:
            raise DimensionMismatch("pyramid needs at least one level")
        levels = []
        for arr in self.levels:
            arr = np.ascontiguousarray(arr, dtype=np.float64)
            if arr.ndim != 3:
                raise DimensionMismatch(
                    f"each level must be (H, W, C), got shape {arr.shape}"
                )
            if not np.all(np.isfinite(arr)):
                raise ValueError("basis channels must be finite")
            levels.append(arr)
        h, w = levels[-1].shape[:2]
        k_max = len(levels) - 1
        for k, arr in enumerate(levels):
            factor = 2 ** (k_max - k)
            if h % factor or w % factor:
                raise DimensionMismatch(
                    f"full resolution {h}x{w} not divisible by {factor} at level {k}"
                )
            if arr.shape[:2] != (h // factor, w // factor):
                raise DimensionMismatch(
                    f"level {k} has dims {arr.shape[:2]}, expected "
                    f"{(h // factor, w // factor)}"
                )
        object.__setattr__(self, "levels", tuple(levels))

    @property
    def full_shape(self) -> tuple[int, int]:
        return self.levels[-1].shape[:2]

    @property
    def max_scale(self) -> int:
        return len(self.levels) - 1

    @property
    def channel_plan(self) -> tuple[int, ...]:
        return tuple(arr.shape[2] for arr in self.levels)

    @property
    def total_dim(self) -> int:
        """Channel count of the flattened stack, bias included."""
        return 1 + sum(self.channel_plan)


@dataclass(frozen=True)
class ScaleWeights:
    """Weights split by pyramid level, bias separate."""

    bias: float
    per_level: tuple[np.ndarray, ...]

    def __post_init__(self):
        per_level = tuple(
            np.ascontiguousarray(w, dtype=np.float64) for w in self.per_level
        )
        for w in per_level:
            if w.ndim != 1:
                raise DimensionMismatch("per-level weights must be 1-d")
        object.__setattr__(self, "per_level", per_level)

    @classmethod
    def from_flat(cls, weights: np.ndarray, channel_plan) -> "ScaleWeights":
        weights = np.asarray(weights, dtype=np.float64)
        plan = list(channel_plan)
        if weights.ndim != 1 or weights.size != 1 + sum(plan):
            raise DimensionMismatch(
                f"flat weights length {weights.size} does not match plan {plan}"
            )
        split = np.split(weights[1:], np.cumsum(plan)[:-1]) if plan else []
        return cls(bias=float(weights[0]), per_level=tuple(split))

    def to_flat(self) -> np.ndarray:
        return np.concatenate([[self.bias], *self.per_level])


def upsample_bilinear(grid: np.ndarray, target_hw: tuple[int, int]) -> np.ndarray:
    """Bilinear upsampling with half-pixel centers and edge clamping.

    Sample centers sit at (i + 0.5) / n in unit coordinates on both grids,
    so e.g. a 1x2 row [0, 1] maps to 1x4 as [0, 0.25, 0.75, 1].  Target
    dims must be integer multiples of the source dims.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 3:
        raise DimensionMismatch(f"expected (H, W, C), got shape {grid.shape}")
    h, w = grid.shape[:2]
    th, tw = target_hw
    if th % h or tw % w:
        raise DimensionMismatch(
            f"target dims {target_hw} are not integer multiples of source {h}x{w}"
        )

    def axis_weights(n_src, n_tgt):
        pos = (np.arange(n_tgt) + 0.5) * (n_src / n_tgt) - 0.5
        lo = np.clip(np.floor(pos).astype(np.int64), 0, n_src - 1)
        hi = np.minimum(lo + 1, n_src - 1)
        frac = np.clip(pos - lo, 0.0, 1.0)
        return lo, hi, frac

    y0, y1, fy = axis_weights(h, th)
    x0, x1, fx = axis_weights(w, tw)
    rows = grid[y0] * (1.0 - fy)[:, None, None] + grid[y1] * fy[:, None, None]
    return rows[:, x0] * (1.0 - fx)[None, :, None] + rows[:, x1] * fx[None, :, None]


def stacked_field(ms: MultiScaleBases, upto_scale: int | None = None) -> np.ndarray:
    """Full-resolution concatenation of levels 0..upto_scale, bias channel first."""
    s = ms.max_scale if upto_scale is None else upto_scale
    if not (0 <= s <= ms.max_scale):
        raise ScaleOutOfRange(f"scale {s} outside 0..{ms.max_scale}")
    h, w = ms.full_shape
    parts = [np.ones((h, w, 1))]
    for arr in ms.levels[: s + 1]:
        parts.append(arr if arr.shape[:2] == (h, w) else upsample_bilinear(arr, (h, w)))
    return np.concatenate(parts, axis=2)


def flatten_to_stack(ms: MultiScaleBases, pixel_ids: np.ndarray) -> BasisStack:
    """Gather flattened basis rows at row-major pixel ids."""
    ids = np.asarray(pixel_ids, dtype=np.int64)
    if ids.ndim != 1:
        raise DimensionMismatch("pixel_ids must be 1-d")
    h, w = ms.full_shape
    if ids.size and (ids.min() < 0 or ids.max() >= h * w):
        raise PixelOutOfRange(f"pixel ids must lie in [0, {h * w})")
    field = stacked_field(ms)
    return BasisStack(field.reshape(h * w, -1)[ids])


def reconstruct_at_scale(
    ms: MultiScaleBases,
    weights: ScaleWeights,
    act: DepthActivation,
    scale: int,
) -> DepthGrid:
    """Dense depth from the bias plus levels 0..scale only.

    At scale == max_scale this is the same computation as predict_dense on
    the fully flattened field, including summation order, so the two agree
    bitwise.  Levels above `scale` are never touched.
    """
    if not (0 <= scale <= ms.max_scale):
        raise ScaleOutOfRange(f"scale {scale} outside 0..{ms.max_scale}")
    if len(weights.per_level) != len(ms.levels):
        raise DimensionMismatch("weights and pyramid have different level counts")
    for k in range(scale + 1):
        if weights.per_level[k].size != ms.levels[k].shape[2]:
            raise DimensionMismatch(f"weights at level {k} do not match channel count")
    flat = np.concatenate(
        [[weights.bias], *[weights.per_level[k] for k in range(scale + 1)]]
    )
    return predict_dense(stacked_field(ms, scale), flat, act)
