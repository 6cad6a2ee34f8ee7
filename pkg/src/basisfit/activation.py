"""Depth activations: invertible maps between unconstrained logits and metric depths.

The default map g(x) = a * (1 + exp(-x)) is strictly decreasing with range
(a, inf), so any real-valued logit grid decodes to a depth strictly greater
than the lower bound a.  Its inverse needs a clamp just above a to stay
total on measured depths.  A ReLU-with-offset variant is provided for
comparison; it is the conventional choice and is kept bug-compatible with
that convention (no lower clamp on the inverse, subgradient 0 at the kink).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import NonPositiveDepth


class ActivationKind(str, Enum):
    INVERSE_SIGMOID = "inverse_sigmoid"
    RELU_OFFSET = "relu_offset"


@dataclass(frozen=True)
class DepthActivation:
    """Parametrized depth activation.

    a is the lower depth bound in meters, epsilon the relative clamp margin
    used by the inverse of the inverse-sigmoid form.
    """

    kind: ActivationKind = ActivationKind.INVERSE_SIGMOID
    a: float = 1.0
    epsilon: float = 1e-6

    def __post_init__(self):
        if not (self.a > 0.0) or not np.isfinite(self.a):
            raise ValueError(f"activation offset a must be positive, got {self.a}")
        if not (0.0 < self.epsilon < 1.0):
            raise ValueError(f"clamp margin must be in (0, 1), got {self.epsilon}")

    # ---- forward -----------------------------------------------------

    def forward(self, x):
        """Depth from logit; total on finite inputs."""
        x = np.asarray(x, dtype=np.float64)
        if self.kind is ActivationKind.INVERSE_SIGMOID:
            with np.errstate(over="ignore"):
                return self.a * (1.0 + np.exp(-x))
        return np.maximum(x, 0.0) + self.a

    def derivative(self, x):
        """d(depth)/d(logit).  For the sigmoid form this equals a - forward(x)."""
        x = np.asarray(x, dtype=np.float64)
        if self.kind is ActivationKind.INVERSE_SIGMOID:
            with np.errstate(over="ignore"):
                return -self.a * np.exp(-x)
        # Kink at 0 takes the subgradient 0.
        return np.where(x > 0.0, 1.0, 0.0)

    def second_derivative(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.kind is ActivationKind.INVERSE_SIGMOID:
            with np.errstate(over="ignore"):
                return self.a * np.exp(-x)
        return np.zeros_like(x)

    # ---- inverse -----------------------------------------------------

    def _check_depths(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=np.float64)
        if not np.all(np.isfinite(s)) or np.any(s <= 0.0):
            raise NonPositiveDepth("depths must be finite and strictly positive")
        return s

    def inverse_with_flags(self, s) -> tuple[np.ndarray, np.ndarray]:
        """Logit target from depth, plus a flag per entry marking where the
        lower clamp fired (sigmoid form only)."""
        s = self._check_depths(s)
        if self.kind is ActivationKind.INVERSE_SIGMOID:
            floor = self.a * (1.0 + self.epsilon)
            clamped = s < floor
            s_c = np.maximum(s, floor)
            return -np.log(s_c / self.a - 1.0), clamped
        return s - self.a, np.zeros(np.shape(s), dtype=bool)

    def inverse(self, s):
        return self.inverse_with_flags(s)[0]

    def inverse_derivative(self, s):
        """d(logit)/d(depth), taken as 0 where the inverse clamp is active."""
        s = self._check_depths(s)
        if self.kind is ActivationKind.INVERSE_SIGMOID:
            floor = self.a * (1.0 + self.epsilon)
            s_c = np.maximum(s, floor)
            out = -1.0 / (s_c - self.a)
            return np.where(s < floor, 0.0, out)
        return np.ones(np.shape(s), dtype=np.float64)
