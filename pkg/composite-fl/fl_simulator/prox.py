"""
Proximal Operators

Closed-form proximal maps for the regularizers supported by the simulator:
the zero function, the scaled L1 norm and the indicator of a coordinate box.

    prox(θ, w) = argmin_u  θ·g(u) + ½‖w − u‖²

The L1 prox is the soft-threshold, the box prox is a clamp and the zero
regularizer leaves its input untouched. All operators are separable across
coordinates, so applying them row-wise to an n×d stack is the blockwise prox.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .errors import InvalidArgumentError, UnsupportedRegularizerError


class RegularizerKind(Enum):
    ZERO = "zero"
    L1 = "l1"
    BOX = "box"


@dataclass(frozen=True, eq=False)
class Regularizer:
    """Convex, possibly non-smooth regularizer g."""
    kind: RegularizerKind
    strength: float = 0.0
    lo: Optional[np.ndarray] = None
    hi: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind is RegularizerKind.L1:
            if not np.isfinite(self.strength) or self.strength < 0:
                raise InvalidArgumentError(f"L1 strength must be finite and >= 0, got {self.strength}")
        if self.kind is RegularizerKind.BOX:
            if self.lo is None or self.hi is None:
                raise InvalidArgumentError("box regularizer needs both lo and hi")
            lo = np.asarray(self.lo, dtype=float)
            hi = np.asarray(self.hi, dtype=float)
            if lo.shape != hi.shape or lo.ndim != 1:
                raise InvalidArgumentError(f"box bounds shape mismatch: {lo.shape} vs {hi.shape}")
            if np.any(lo > hi):
                raise InvalidArgumentError("box lower bound exceeds upper bound")
            object.__setattr__(self, "lo", lo)
            object.__setattr__(self, "hi", hi)

    @classmethod
    def zero(cls) -> "Regularizer":
        return cls(RegularizerKind.ZERO)

    @classmethod
    def l1(cls, strength: float) -> "Regularizer":
        return cls(RegularizerKind.L1, strength=float(strength))

    @classmethod
    def box(cls, lo, hi) -> "Regularizer":
        return cls(RegularizerKind.BOX, lo=np.asarray(lo, dtype=float), hi=np.asarray(hi, dtype=float))

    @property
    def supports_bound(self) -> bool:
        """Whether a uniform subgradient bound exists (needed by the theory reports)."""
        return self.kind is not RegularizerKind.BOX

    def describe(self) -> str:
        if self.kind is RegularizerKind.L1:
            return f"l1({self.strength:g})"
        return self.kind.value


def _as_finite_vector(w, name: str = "w") -> np.ndarray:
    arr = np.asarray(w, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} contains non-finite entries")
    return arr


def _check_threshold(theta: float) -> float:
    theta = float(theta)
    if not np.isfinite(theta) or theta <= 0:
        raise InvalidArgumentError(f"prox threshold must be finite and > 0, got {theta}")
    return theta


def _check_box_shape(reg: Regularizer, w: np.ndarray) -> None:
    if w.shape[-1] != reg.lo.shape[0]:
        raise InvalidArgumentError(
            f"box bounds have dimension {reg.lo.shape[0]}, input has {w.shape[-1]}")


def _apply(reg: Regularizer, theta: float, w: np.ndarray) -> np.ndarray:
    if reg.kind is RegularizerKind.ZERO:
        return w.copy()
    if reg.kind is RegularizerKind.L1:
        return np.sign(w) * np.maximum(np.abs(w) - theta * reg.strength, 0.0)
    _check_box_shape(reg, w)
    return np.clip(w, reg.lo, reg.hi)


def prox(reg: Regularizer, theta: float, w) -> np.ndarray:
    """
    Proximal map of θ·g evaluated at w.

    Args:
        reg: Regularizer g
        theta: Threshold θ > 0
        w: Point in R^d

    Returns:
        The unique minimizer of θ·g(u) + ½‖w − u‖²
    """
    theta = _check_threshold(theta)
    w = _as_finite_vector(w)
    if w.ndim != 1:
        raise InvalidArgumentError(f"prox expects a vector, got shape {w.shape}")
    return _apply(reg, theta, w)


def prox_blocks(reg: Regularizer, theta: float, W) -> np.ndarray:
    """Row-wise prox of an n×d stack of client vectors."""
    theta = _check_threshold(theta)
    W = _as_finite_vector(W, "W")
    if W.ndim != 2:
        raise InvalidArgumentError(f"prox_blocks expects an n×d matrix, got shape {W.shape}")
    return _apply(reg, theta, W)


def regularizer_value(reg: Regularizer, x) -> float:
    """g(x); +inf outside the box for the indicator."""
    x = np.asarray(x, dtype=float)
    if reg.kind is RegularizerKind.ZERO:
        return 0.0
    if reg.kind is RegularizerKind.L1:
        return float(reg.strength * np.sum(np.abs(x)))
    _check_box_shape(reg, x)
    inside = np.all((x >= reg.lo) & (x <= reg.hi))
    return 0.0 if inside else float("inf")


def subgradient_bound(reg: Regularizer, d: int) -> float:
    """
    Uniform bound B_g on ‖∂g(x)‖ over R^d.

    Zero has B_g = 0 and L1 has ϑ√d. The box indicator has unbounded
    subgradients on its boundary and is rejected.
    """
    if d < 1:
        raise InvalidArgumentError(f"dimension must be >= 1, got {d}")
    if reg.kind is RegularizerKind.ZERO:
        return 0.0
    if reg.kind is RegularizerKind.L1:
        return float(reg.strength * np.sqrt(d))
    raise UnsupportedRegularizerError("box indicator has no finite subgradient bound")


def prox_objective_residual(reg: Regularizer, theta: float, w, u) -> float:
    """
    Gap of the prox objective at u against the computed prox.

    Returns θg(u) + ½‖w − u‖² − (θg(p) + ½‖w − p‖²) with p = prox(θ, w),
    clipped at zero; +inf when u is infeasible for the box.
    """
    p = prox(reg, theta, w)
    w = np.asarray(w, dtype=float)
    u = _as_finite_vector(u, "u")

    def objective(v: np.ndarray) -> float:
        return theta * regularizer_value(reg, v) + 0.5 * float(np.dot(w - v, w - v))

    at_u = objective(u)
    if not np.isfinite(at_u):
        return float("inf")
    return max(at_u - objective(p), 0.0)
