"""Array-in/array-out boundary around the basisfit solver.

py_fit runs the forward fit on per-sample basis rows and returns the
weights, the outlier mask, and a one-shot handle.  py_backward spends
the handle to pull a scalar loss gradient back through the fit, onto
the basis entries and the depth measurements.

The boundary speaks contiguous float64 only; host frameworks convert
on their side.  Solver error types pass through unchanged and are
re-exported here so callers never need to import the solver package
just to catch them.
"""

from __future__ import annotations

from collections.abc import Mapping

import numpy as np

from basisfit import (
    ActivationKind,
    BasisStack,
    DepthActivation,
    FitConfig,
    SparseDepthSet,
    backward_gn,
    fit_gauss_newton,
    fit_linear,
)
from basisfit.errors import (
    BasisFitError,
    ConfigError,
    DimensionMismatch,
    EmptySparseSet,
    KinkProximity,
    NonPositiveDepth,
    NotPositiveDefinite,
)

__version__ = "0.1.0"

__all__ = [
    "BoundFitHandle",
    "HandleConsumed",
    "py_backward",
    "py_fit",
    "__version__",
    # solver errors, re-exported unchanged
    "BasisFitError",
    "ConfigError",
    "DimensionMismatch",
    "EmptySparseSet",
    "KinkProximity",
    "NonPositiveDepth",
    "NotPositiveDefinite",
]

_CONFIG_KEYS = frozenset({"lambda", "iterations", "robust", "huber_delta", "activation"})
_ACTIVATION_KEYS = frozenset({"kind", "a", "epsilon"})


class HandleConsumed(RuntimeError):
    """Raised on a second backward call through an already-spent handle."""


class BoundFitHandle:
    """Opaque ticket for exactly one backward pass through a completed fit.

    The handle owns the forward record of the fit.  py_backward takes the
    record out, leaving the handle spent; taking twice raises
    HandleConsumed.  Distinct handles are independent, but a single handle
    must not be shared between threads.
    """

    __slots__ = ("_tape",)

    def __init__(self, tape):
        self._tape = tape

    @property
    def consumed(self) -> bool:
        return self._tape is None

    def _take(self):
        tape = self._tape
        if tape is None:
            raise HandleConsumed(
                "backward already ran through this handle; refit for a fresh one"
            )
        self._tape = None
        return tape


def _boundary_array(value, name: str, ndim: int) -> np.ndarray:
    """Admit a float64 array of the given rank, made contiguous."""
    arr = np.asarray(value)
    if arr.dtype != np.float64:
        raise TypeError(
            f"{name} must be float64, got {arr.dtype}; the boundary is "
            "float64-only, convert on the caller side"
        )
    if arr.ndim != ndim:
        raise DimensionMismatch(f"{name} must be {ndim}-d, got shape {arr.shape}")
    return np.ascontiguousarray(arr)


def _build_config(config: Mapping | None) -> tuple[FitConfig, DepthActivation]:
    """Translate the boundary config mapping into solver objects.

    Recognized keys: "lambda", "iterations", "robust", "huber_delta" and
    an "activation" sub-mapping with "kind", "a", "epsilon".  Omitted
    keys take the solver defaults; unknown keys are rejected so typos
    never silently fall back to a default.
    """
    if config is None:
        config = {}
    if not isinstance(config, Mapping):
        raise ConfigError(f"config must be a mapping, got {type(config).__name__}")
    for key in config:
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"unknown key {key!r} in fit config")
    act_map = config.get("activation", {})
    if not isinstance(act_map, Mapping):
        raise ConfigError("'activation' must be a mapping")
    for key in act_map:
        if key not in _ACTIVATION_KEYS:
            raise ConfigError(f"unknown key {key!r} in activation config")
    try:
        act = DepthActivation(
            kind=ActivationKind(act_map.get("kind", ActivationKind.INVERSE_SIGMOID.value)),
            a=float(act_map.get("a", 1.0)),
            epsilon=float(act_map.get("epsilon", 1e-6)),
        )
        cfg = FitConfig(
            lam=float(config.get("lambda", 1e-4)),
            iterations=int(config.get("iterations", 2)),
            robust=bool(config.get("robust", True)),
            huber_delta=float(config.get("huber_delta", 1.0)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg, act


def py_fit(basis_array, depths, sigmas, config=None):
    """Fit decoder weights to sparse depths over per-sample basis rows.

    basis_array is N x (M+1) float64 with the bias column of exact ones
    first; depths and sigmas are length-N float64.  config is a mapping
    (see _build_config for the keys); None means solver defaults.

    Returns (weights, outlier_mask, handle): the fitted (M+1,) weight
    vector, the N-long boolean mask of samples whose final standardized
    residual strictly exceeds the robust threshold, and a one-shot
    BoundFitHandle for py_backward.
    """
    rows = _boundary_array(basis_array, "basis_array", 2)
    depth_arr = _boundary_array(depths, "depths", 1)
    sigma_arr = _boundary_array(sigmas, "sigmas", 1)
    cfg, act = _build_config(config)

    basis = BasisStack(rows)
    samples = SparseDepthSet(depths=depth_arr, sigmas=sigma_arr)
    if cfg.iterations == 0:
        result = fit_linear(basis, samples, act, cfg.lam, keep_tape=True)
    else:
        result = fit_gauss_newton(basis, samples, act, cfg, keep_tape=True)
    handle = BoundFitHandle(result.tape)
    return result.weights.copy(), result.outlier_mask.copy(), handle


def py_backward(handle: BoundFitHandle, grad_w):
    """Pull a loss gradient at the fitted weights back to the fit inputs.

    grad_w is the (M+1,) float64 gradient of a scalar loss with respect
    to the weights py_fit returned.  The call spends the handle; invoking
    it again on the same handle raises HandleConsumed.  Malformed grad_w
    is rejected before the handle is spent, so a shape typo does not cost
    the caller a refit.

    Returns (grad_basis, grad_depths).  grad_basis covers every entry of
    the basis rows including the structurally constant bias column, which
    is reported for completeness and must not be used to update anything.
    grad_depths chains through the activation inverse and is exactly zero
    for samples whose logit target hit the inverse clamp.
    """
    if not isinstance(handle, BoundFitHandle):
        raise TypeError(f"handle must be a BoundFitHandle, got {type(handle).__name__}")
    gw = _boundary_array(grad_w, "grad_w", 1)
    tape = handle._tape
    if tape is not None and gw.shape != (tape.basis.dim,):
        raise DimensionMismatch(
            f"grad_w must have length {tape.basis.dim}, got {gw.shape[0]}"
        )
    grads = backward_gn(handle._take(), gw)
    return grads.grad_basis, grads.grad_depths
