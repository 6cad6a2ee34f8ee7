"""Fit basis channels to sparse depth measurements.

Two stages share one result type.  The linear stage maps measured depths
to logit targets through the activation inverse and solves a ridge system

    (lambda I + B^T B) w = B^T t

without statistical weights.  The Gauss-Newton stage starts from that
solution and runs a fixed number of damped steps directly on depth-space
residuals r_i = g(w . b_i) - s_i, optionally reweighted by a Huber factor
of the standardized residual.  The iteration count is a budget, not a
convergence test: there is no early exit and no line search, which keeps
the cost profile flat and the computation differentiable step by step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .activation import DepthActivation
from .errors import DimensionMismatch, EmptySparseSet
from .linalg import CholeskyFactor, cholesky, solve_spd


@dataclass(frozen=True)
class BasisStack:
    """Per-sample basis rows, shape (N, M+1).  Column 0 is the bias and must
    be exactly 1 everywhere; the remaining M columns are free channels."""

    rows: np.ndarray
    check_bias: bool = True

    def __post_init__(self):
        rows = np.ascontiguousarray(self.rows, dtype=np.float64)
        if rows.ndim != 2:
            raise DimensionMismatch(f"basis rows must be 2-d, got shape {rows.shape}")
        if rows.shape[0] == 0:
            raise EmptySparseSet("basis stack has no rows")
        if rows.shape[1] < 1:
            raise DimensionMismatch("basis stack needs at least the bias column")
        if not np.all(np.isfinite(rows)):
            raise ValueError("basis rows must be finite")
        if self.check_bias and not np.all(rows[:, 0] == 1.0):
            raise ValueError("bias invariant violated: column 0 must be exactly 1.0")
        object.__setattr__(self, "rows", rows)

    @property
    def n_samples(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        """Total coefficient count M+1, bias included."""
        return self.rows.shape[1]


@dataclass(frozen=True)
class SparseDepthSet:
    """Sparse depth measurements with per-sample noise scales.

    sigmas defaults to 1.0 (unknown noise); pixel_ids defaults to 0..N-1
    and only matters when samples are tied back to a grid.
    """

    depths: np.ndarray
    sigmas: np.ndarray | None = None
    pixel_ids: np.ndarray | None = None

    def __post_init__(self):
        depths = np.ascontiguousarray(self.depths, dtype=np.float64)
        if depths.ndim != 1:
            raise DimensionMismatch(f"depths must be 1-d, got shape {depths.shape}")
        if depths.size == 0:
            raise EmptySparseSet("no sparse depth samples")
        if not np.all(np.isfinite(depths)) or np.any(depths <= 0.0):
            from .errors import NonPositiveDepth

            raise NonPositiveDepth("sparse depths must be finite and > 0")
        sigmas = self.sigmas
        if sigmas is None:
            sigmas = np.ones_like(depths)
        else:
            sigmas = np.ascontiguousarray(sigmas, dtype=np.float64)
            if sigmas.shape != depths.shape:
                raise DimensionMismatch("sigmas must match depths in length")
            if not np.all(np.isfinite(sigmas)) or np.any(sigmas <= 0.0):
                raise ValueError("sigmas must be finite and > 0")
        ids = self.pixel_ids
        if ids is None:
            ids = np.arange(depths.size, dtype=np.int64)
        else:
            ids = np.ascontiguousarray(ids, dtype=np.int64)
            if ids.shape != depths.shape:
                raise DimensionMismatch("pixel_ids must match depths in length")
        object.__setattr__(self, "depths", depths)
        object.__setattr__(self, "sigmas", sigmas)
        object.__setattr__(self, "pixel_ids", ids)

    @property
    def count(self) -> int:
        return self.depths.size


@dataclass(frozen=True)
class FitConfig:
    """Knobs for the fitting stages.

    lam is the ridge strength (reused as step damping inside Gauss-Newton),
    iterations the fixed Gauss-Newton budget, huber_delta the kink of the
    robust weight on standardized residuals.
    """

    lam: float = 1e-4
    iterations: int = 2
    robust: bool = True
    huber_delta: float = 1.0

    def __post_init__(self):
        if not (self.lam >= 0.0) or not np.isfinite(self.lam):
            raise ValueError(f"lambda must be finite and >= 0, got {self.lam}")
        if self.iterations < 0:
            raise ValueError(f"iterations must be >= 0, got {self.iterations}")
        if not (self.huber_delta > 0.0):
            raise ValueError(f"huber_delta must be > 0, got {self.huber_delta}")


@dataclass
class DepthGrid:
    """Dense H x W depth map with a validity mask."""

    values: np.ndarray
    valid: np.ndarray | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise DimensionMismatch(f"depth grid must be 2-d, got shape {values.shape}")
        if self.valid is None:
            valid = np.ones(values.shape, dtype=bool)
        else:
            valid = np.asarray(self.valid, dtype=bool)
            if valid.shape != values.shape:
                raise DimensionMismatch("validity mask must match the depth grid shape")
        self.values = values
        self.valid = valid

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass
class GnIterationRecord:
    """Everything the reverse pass needs about one Gauss-Newton step."""

    w_in: np.ndarray
    logits: np.ndarray
    residuals: np.ndarray
    std_residuals: np.ndarray
    robust_factors: np.ndarray
    factor: CholeskyFactor
    delta_w: np.ndarray


@dataclass
class GnTape:
    """Forward record of a fit, sufficient to replay it in reverse."""

    basis: BasisStack
    samples: SparseDepthSet
    act: DepthActivation
    cfg: FitConfig
    targets: np.ndarray
    clamped: np.ndarray
    w_init: np.ndarray
    records: list[GnIterationRecord] = field(default_factory=list)


@dataclass
class FitResult:
    """Fitted weights plus per-sample diagnostics.

    residuals_depth are prediction-minus-measurement in meters at the final
    weights.  robust_weights are the Huber factors rho'/2 of the final
    standardized residuals (1 for inliers), outlier_mask their strict
    exceedance of huber_delta.  weight_deltas traces |delta w| per
    Gauss-Newton iteration.  clamped_targets marks samples whose logit
    target hit the activation inverse clamp.  tape is populated only when
    the fit was run with keep_tape=True.
    """

    weights: np.ndarray
    residuals_depth: np.ndarray
    robust_weights: np.ndarray
    outlier_mask: np.ndarray
    iterations_run: int
    weight_deltas: np.ndarray
    clamped_targets: np.ndarray
    tape: GnTape | None = None


def huber_factors(std_residuals: np.ndarray, delta: float) -> np.ndarray:
    """Huber IRLS factors rho'/2 = min(1, delta/|u|), exactly 1 for |u| <= delta."""
    u = np.abs(np.asarray(std_residuals, dtype=np.float64))
    k = np.ones_like(u)
    over = u > delta
    k[over] = delta / u[over]
    return k


def _check_paired(basis: BasisStack, samples: SparseDepthSet) -> None:
    if basis.n_samples != samples.count:
        raise DimensionMismatch(
            f"basis has {basis.n_samples} rows, sparse set has {samples.count} samples"
        )


def _normal_system(rows: np.ndarray, lam: float) -> np.ndarray:
    return lam * np.eye(rows.shape[1]) + rows.T @ rows


def _finalize(
    basis: BasisStack,
    samples: SparseDepthSet,
    act: DepthActivation,
    weights: np.ndarray,
    huber_delta: float,
    iterations_run: int,
    weight_deltas: list[float],
    clamped: np.ndarray,
    tape: GnTape | None,
) -> FitResult:
    residuals = act.forward(basis.rows @ weights) - samples.depths
    u = residuals / samples.sigmas
    return FitResult(
        weights=weights,
        residuals_depth=residuals,
        robust_weights=huber_factors(u, huber_delta),
        outlier_mask=np.abs(u) > huber_delta,
        iterations_run=iterations_run,
        weight_deltas=np.asarray(weight_deltas, dtype=np.float64),
        clamped_targets=clamped,
        tape=tape,
    )


def fit_linear(
    basis: BasisStack,
    samples: SparseDepthSet,
    act: DepthActivation,
    lam: float,
    keep_tape: bool = False,
) -> FitResult:
    """Ridge fit of logit targets; the closed-form initialization stage.

    Statistical weights are deliberately not applied here: the linear
    stage treats all samples alike and robustness enters only through the
    Gauss-Newton refinement.
    """
    _check_paired(basis, samples)
    targets, clamped = act.inverse_with_flags(samples.depths)
    rows = basis.rows
    factor = cholesky(_normal_system(rows, lam))
    weights = solve_spd(factor, rows.T @ targets)
    tape = None
    if keep_tape:
        cfg = FitConfig(lam=lam, iterations=0, robust=False)
        tape = GnTape(basis, samples, act, cfg, targets, clamped, weights, [])
    return _finalize(
        basis, samples, act, weights, 1.0, 0, [], clamped, tape
    )


def fit_gauss_newton(
    basis: BasisStack,
    samples: SparseDepthSet,
    act: DepthActivation,
    cfg: FitConfig,
    keep_tape: bool = False,
) -> FitResult:
    """Fixed-budget Gauss-Newton refinement of the linear initialization.

    Each step solves (Jb^T W Jb + lambda I) dw = -Jb^T W rb where Jb and rb
    are the Jacobian rows and residuals scaled by sqrt of the Huber factor
    of the standardized residual (all-ones when cfg.robust is off) and
    W = diag(1/sigma^2).  Runs exactly cfg.iterations steps.
    """
    _check_paired(basis, samples)
    targets, clamped = act.inverse_with_flags(samples.depths)
    rows = basis.rows
    factor0 = cholesky(_normal_system(rows, cfg.lam))
    w = solve_spd(factor0, rows.T @ targets)
    w_init = w.copy()

    depths = samples.depths
    sigmas = samples.sigmas
    eye = cfg.lam * np.eye(rows.shape[1])
    records: list[GnIterationRecord] = []
    deltas: list[float] = []

    for _ in range(cfg.iterations):
        logits = rows @ w
        residuals = act.forward(logits) - depths
        derivs = act.derivative(logits)
        u = residuals / sigmas
        k = huber_factors(u, cfg.huber_delta) if cfg.robust else np.ones_like(u)
        coeff = k / (sigmas * sigmas)
        sq = np.sqrt(coeff)
        scaled_jac = rows * (sq * derivs)[:, None]
        normal = scaled_jac.T @ scaled_jac + eye
        gradient = scaled_jac.T @ (sq * residuals)
        factor = cholesky(normal)
        delta_w = solve_spd(factor, -gradient)
        if keep_tape:
            records.append(
                GnIterationRecord(
                    w_in=w.copy(),
                    logits=logits,
                    residuals=residuals,
                    std_residuals=u,
                    robust_factors=k,
                    factor=factor,
                    delta_w=delta_w,
                )
            )
        w = w + delta_w
        deltas.append(float(np.linalg.norm(delta_w)))

    tape = None
    if keep_tape:
        tape = GnTape(basis, samples, act, cfg, targets, clamped, w_init, records)
    return _finalize(
        basis, samples, act, w, cfg.huber_delta, cfg.iterations, deltas, clamped, tape
    )


def predict_dense(
    bases_grid: np.ndarray, weights: np.ndarray, act: DepthActivation
) -> DepthGrid:
    """Decode a dense depth map from an (H, W, M+1) stacked basis field.

    Channel 0 must be the all-ones bias plane; the logit at each pixel is
    the dot product of its channel vector with the weights.
    """
    grid = np.asarray(bases_grid, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if grid.ndim != 3:
        raise DimensionMismatch(f"bases grid must be (H, W, C), got shape {grid.shape}")
    if weights.ndim != 1 or weights.size != grid.shape[2]:
        raise DimensionMismatch(
            f"weights length {weights.size} does not match {grid.shape[2]} channels"
        )
    if not np.all(grid[:, :, 0] == 1.0):
        raise ValueError("bias invariant violated: channel 0 must be exactly 1.0")
    return DepthGrid(values=act.forward(grid @ weights))


def standardized_residuals(result: FitResult, samples: SparseDepthSet) -> np.ndarray:
    """Final depth residuals divided by per-sample sigma."""
    if result.residuals_depth.shape != samples.depths.shape:
        raise DimensionMismatch("result and sparse set sample counts differ")
    return result.residuals_depth / samples.sigmas
