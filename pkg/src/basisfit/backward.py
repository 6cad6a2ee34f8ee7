"""Reverse-mode sensitivities of the fitted weights.

The linear stage has a closed form.  With A = lambda I + B^T B and
u = A^{-1} grad_w:

    grad_targets = B u
    grad_basis   = r u^T - (B u) w^T,   r = t - B w

The Gauss-Newton stage is differentiated by replaying the recorded tape
backwards, chaining through each step's residual evaluation, Jacobian
build, robust factors, and SPD solve.  Robust factors make the map
piecewise smooth, so gradients near the Huber kink are refused rather
than silently one-sided.

Convention for the two input-side gradients: grad_targets is the total
derivative with respect to the logit targets t under the pairing
s = g(t), and grad_depths chains it through the activation inverse
(zero where the inverse clamp fired).  A finite-difference probe that
perturbs t and rebuilds s, or perturbs s directly, reproduces them.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .activation import DepthActivation
from .errors import DimensionMismatch, KinkProximity
from .fitter import (
    BasisStack,
    FitConfig,
    GnTape,
    SparseDepthSet,
    fit_gauss_newton,
    fit_linear,
)
from .linalg import solve_spd_backward

# Standardized residuals closer than this to the Huber threshold make the
# reverse pass unreliable against a central-difference check.
KINK_MARGIN = 1e-6


@dataclass
class FitGradients:
    """Gradients of a scalar loss with respect to the fit inputs.

    grad_basis covers every entry of the basis rows including the bias
    column; that column is structurally constant, so its gradient is
    reported for completeness but must not be used to update anything.
    """

    grad_basis: np.ndarray
    grad_targets: np.ndarray
    grad_depths: np.ndarray


def backward_linear(
    basis: BasisStack,
    targets: np.ndarray,
    lam: float,
    weights: np.ndarray,
    grad_weights: np.ndarray,
    act: DepthActivation | None = None,
    depths: np.ndarray | None = None,
) -> FitGradients:
    """Closed-form gradients through the ridge stage.

    grad_depths is populated only when the activation and measured depths
    are supplied; otherwise it is zero-filled.
    """
    rows = basis.rows
    targets = np.asarray(targets, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    grad_weights = np.asarray(grad_weights, dtype=np.float64)
    if targets.shape != (basis.n_samples,):
        raise DimensionMismatch("targets must have one entry per basis row")
    if weights.shape != (basis.dim,) or grad_weights.shape != (basis.dim,):
        raise DimensionMismatch("weights and grad_weights must match the basis dim")

    normal = lam * np.eye(basis.dim) + rows.T @ rows
    u = solve_spd_backward(normal, weights, grad_weights)[1]
    bu = rows @ u
    resid = targets - rows @ weights
    grad_basis = np.outer(resid, u) - np.outer(bu, weights)
    grad_targets = bu
    if act is not None and depths is not None:
        grad_depths = grad_targets * act.inverse_derivative(depths)
    else:
        grad_depths = np.zeros_like(grad_targets)
    return FitGradients(grad_basis, grad_targets, grad_depths)


def backward_gn(tape: GnTape, grad_weights: np.ndarray) -> FitGradients:
    """Unrolled reverse pass through every recorded Gauss-Newton step.

    Raises KinkProximity when any recorded standardized residual of a
    robust fit lies within KINK_MARGIN of the Huber threshold.  An empty
    tape reduces to backward_linear.
    """
    grad_w = np.asarray(grad_weights, dtype=np.float64).copy()
    basis = tape.basis
    rows = basis.rows
    act = tape.act
    cfg = tape.cfg
    sigmas = tape.samples.sigmas
    if grad_w.shape != (basis.dim,):
        raise DimensionMismatch("grad_weights must match the basis dimension")

    if cfg.robust:
        for rec in tape.records:
            gap = np.abs(np.abs(rec.std_residuals) - cfg.huber_delta)
            if np.any(gap < KINK_MARGIN):
                raise KinkProximity(
                    "standardized residual within "
                    f"{KINK_MARGIN:g} of the Huber threshold; gradient unreliable"
                )

    grad_rows = np.zeros_like(rows)
    grad_s_direct = np.zeros(basis.n_samples)
    inv_var = 1.0 / (sigmas * sigmas)

    for rec in reversed(tape.records):
        w_in = rec.w_in
        logits = rec.logits
        derivs = act.derivative(logits)
        second = act.second_derivative(logits)
        r = rec.residuals
        u = rec.std_residuals
        k = rec.robust_factors
        coeff = k * inv_var
        a_scalars = coeff * derivs * derivs
        m_scalars = coeff * derivs * r

        # delta_w = normal^{-1} (-gradient); reuse the recorded factor.
        normal = rec.factor.lower @ rec.factor.lower.T
        grad_normal, grad_rhs = solve_spd_backward(
            normal, rec.delta_w, grad_w, factor=rec.factor
        )
        grad_gvec = -grad_rhs

        # normal = sum_i a_i b_i b_i^T + lam I ; gvec = sum_i m_i b_i
        bh = rows @ grad_normal
        grad_a = np.einsum("ij,ij->i", bh, rows)
        grad_m = rows @ grad_gvec
        grad_rows += bh * (2.0 * a_scalars)[:, None]
        grad_rows += np.outer(m_scalars, grad_gvec)

        grad_coeff = grad_a * derivs * derivs + grad_m * derivs * r
        grad_derivs = 2.0 * coeff * derivs * grad_a + grad_m * coeff * r
        grad_r = grad_m * coeff * derivs

        if cfg.robust:
            grad_k = grad_coeff * inv_var
            over = np.abs(u) > cfg.huber_delta
            du = np.zeros_like(u)
            du[over] = -cfg.huber_delta * np.sign(u[over]) / (u[over] * u[over])
            grad_r += grad_k * du / sigmas

        grad_logits = grad_r * derivs + grad_derivs * second
        grad_s_direct -= grad_r
        grad_rows += np.outer(grad_logits, w_in)
        grad_w = grad_w + rows.T @ grad_logits

    lin = backward_linear(basis, tape.targets, cfg.lam, tape.w_init, grad_w)
    grad_basis = grad_rows + lin.grad_basis
    grad_targets = lin.grad_targets + grad_s_direct * act.derivative(tape.targets)
    grad_depths = grad_targets * act.inverse_derivative(tape.samples.depths)
    return FitGradients(grad_basis, grad_targets, grad_depths)


@dataclass(frozen=True)
class FitProblem:
    """A fit instance parametrized by basis rows and logit targets.

    Measured depths are derived as s = act.forward(targets), which keeps
    the target/depth pairing exact for finite-difference probes.
    """

    basis: BasisStack
    targets: np.ndarray
    sigmas: np.ndarray
    act: DepthActivation
    cfg: FitConfig

    def run(self, keep_tape: bool = False):
        samples = SparseDepthSet(
            depths=self.act.forward(self.targets), sigmas=self.sigmas
        )
        if self.cfg.iterations == 0:
            return fit_linear(
                self.basis, samples, self.act, self.cfg.lam, keep_tape=keep_tape
            )
        return fit_gauss_newton(
            self.basis, samples, self.act, self.cfg, keep_tape=keep_tape
        )


def finite_diff_oracle(problem: FitProblem, loss_fn, step: float = 1e-6) -> FitGradients:
    """Central-difference gradients of loss_fn(weights) over every basis
    entry and every logit target, re-running the full fit per perturbation.

    Slow by design; this is the ground truth the analytic backward is
    checked against.  grad_depths is chained from grad_targets through the
    activation inverse at the unperturbed depths.
    """

    def run_loss(pb: FitProblem) -> float:
        return float(loss_fn(pb.run().weights))

    rows = problem.basis.rows
    n, m = rows.shape
    grad_basis = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            bumped = rows.copy()
            bumped[i, j] += step
            hi = run_loss(replace(problem, basis=BasisStack(bumped, check_bias=False)))
            bumped[i, j] -= 2.0 * step
            lo = run_loss(replace(problem, basis=BasisStack(bumped, check_bias=False)))
            grad_basis[i, j] = (hi - lo) / (2.0 * step)

    targets = np.asarray(problem.targets, dtype=np.float64)
    grad_targets = np.zeros(n)
    for i in range(n):
        bumped = targets.copy()
        bumped[i] += step
        hi = run_loss(replace(problem, targets=bumped))
        bumped[i] -= 2.0 * step
        lo = run_loss(replace(problem, targets=bumped))
        grad_targets[i] = (hi - lo) / (2.0 * step)

    depths = problem.act.forward(targets)
    grad_depths = grad_targets * problem.act.inverse_derivative(depths)
    return FitGradients(grad_basis, grad_targets, grad_depths)
