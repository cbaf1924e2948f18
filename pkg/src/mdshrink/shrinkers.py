"""
Eigenvalue shrinkage rules and the precision-matrix estimator they induce.

A rule maps each sample-covariance eigenvalue ``lam`` to ``eta(lam) >= 0``; the
estimate of ``Sigma_X^+`` is ``V diag(eta(lam_i)) V^T``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np
from numpy.typing import ArrayLike, NDArray

from . import rmt
from .errors import DomainError, PreconditionError
from .linalg import EigenSystem, check_orthonormal

__all__ = [
    "RuleKind",
    "Threshold",
    "ShrinkageRule",
    "PrecisionEstimate",
    "eta_classical",
    "eta_optimal",
    "apply_rule",
]

CUSTOM_GRID_POINTS = 1000


class RuleKind(str, Enum):
    CLASSICAL = "classical"
    OPTIMAL = "optimal"
    CUSTOM = "custom"


class Threshold(str, Enum):
    """Where the optimal rule starts to be nonzero, in units of ``sigma**2``."""

    BULK_EDGE = "bulk-edge"  # lambda_plus = (1 + sqrt(beta))**2
    ELL_PLUS = "ell-plus"  # sqrt(beta), the threshold as literally printed for general sigma


def _check_sigma(sigma: float) -> float:
    s = float(sigma)
    if not (s > 0.0 and math.isfinite(s)):
        raise DomainError(f"sigma must be finite and positive, got {sigma!r}")
    return s


def _check_eigenvalues(lam: ArrayLike) -> NDArray[np.float64]:
    arr = np.asarray(lam, dtype=np.float64)
    if np.any(~(arr >= 0.0)):
        raise DomainError("shrinkers are defined on [0, inf); got negative or nan eigenvalues")
    return arr


def _classical(lam: NDArray[np.float64], s2: float) -> NDArray[np.float64]:
    out = np.zeros_like(lam)
    above = lam > s2
    out[above] = 1.0 / (lam[above] - s2)
    return out


def _optimal(lam: NDArray[np.float64], s2: float, beta: float, threshold: Threshold) -> NDArray[np.float64]:
    _, lam_plus, ell_plus = rmt.bulk_edges(beta)
    x = lam / s2
    cut = lam_plus if threshold is Threshold.BULK_EDGE else ell_plus
    out = np.zeros_like(lam)
    for i in np.flatnonzero(x > cut):
        xi = float(x.flat[i])
        # between ell_plus and lambda_plus (literal threshold only) the forward map is flat;
        # take its largest preimage ell_plus
        spike = rmt.ell_inv(xi, beta) if xi > lam_plus else ell_plus
        out.flat[i] = 1.0 / (s2 * spike)
    return out


def eta_classical(lam: float, sigma: float) -> float:
    """``1/(lam - sigma**2)`` above ``sigma**2``, zero otherwise."""
    s = _check_sigma(sigma)
    arr = _check_eigenvalues(lam)
    return float(_classical(arr.reshape(1), s * s)[0])


def eta_optimal(lam: float, sigma: float, beta: float, threshold: Threshold | str = Threshold.BULK_EDGE) -> float:
    """
    Optimal shrinker for noise level ``sigma``: ``1/(sigma**2 * ell_inv(lam/sigma**2))``
    once ``lam/sigma**2`` clears the bulk edge, zero otherwise.
    """
    s = _check_sigma(sigma)
    b = rmt._check_beta(beta)
    arr = _check_eigenvalues(lam)
    return float(_optimal(arr.reshape(1), s * s, b, Threshold(threshold))[0])


@dataclass(frozen=True)
class ShrinkageRule:
    """
    An immutable eigenvalue map tagged by kind.

    Build instances with :meth:`classical`, :meth:`optimal` or :meth:`custom`.
    Calling the rule works on scalars and arrays alike.
    """

    kind: RuleKind
    sigma: float
    beta: Optional[float] = None
    custom_fn: Optional[Callable[[float], float]] = field(default=None, compare=False)
    threshold: Threshold = Threshold.BULK_EDGE

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", RuleKind(self.kind))
        object.__setattr__(self, "threshold", Threshold(self.threshold))
        object.__setattr__(self, "sigma", _check_sigma(self.sigma))
        if self.kind is not RuleKind.CLASSICAL:
            if self.beta is None:
                raise DomainError(f"{self.kind.value} rule needs beta")
            object.__setattr__(self, "beta", rmt._check_beta(self.beta))
        if self.kind is RuleKind.CUSTOM:
            if self.custom_fn is None:
                raise DomainError("custom rule needs custom_fn")
            self._validate_custom()
        elif self.custom_fn is not None:
            raise DomainError("custom_fn is only accepted for custom rules")

    @classmethod
    def classical(cls, sigma: float) -> "ShrinkageRule":
        return cls(RuleKind.CLASSICAL, sigma)

    @classmethod
    def optimal(cls, sigma: float, beta: float, threshold: Threshold | str = Threshold.BULK_EDGE) -> "ShrinkageRule":
        return cls(RuleKind.OPTIMAL, sigma, beta, threshold=Threshold(threshold))

    @classmethod
    def custom(cls, fn: Callable[[float], float], sigma: float, beta: float) -> "ShrinkageRule":
        return cls(RuleKind.CUSTOM, sigma, beta, custom_fn=fn)

    @property
    def name(self) -> str:
        return self.kind.value

    @property
    def cutoff(self) -> float:
        """Largest eigenvalue mapped to zero by construction."""
        s2 = self.sigma**2
        if self.kind is RuleKind.CLASSICAL:
            return s2
        _, lam_plus, ell_plus = rmt.bulk_edges(self.beta)
        if self.kind is RuleKind.OPTIMAL and self.threshold is Threshold.ELL_PLUS:
            return s2 * ell_plus
        return s2 * lam_plus

    def __call__(self, lam: ArrayLike) -> float | NDArray[np.float64]:
        arr = _check_eigenvalues(lam)
        flat = arr.reshape(-1)
        s2 = self.sigma**2
        if self.kind is RuleKind.CLASSICAL:
            out = _classical(flat, s2)
        elif self.kind is RuleKind.OPTIMAL:
            out = _optimal(flat, s2, self.beta, self.threshold)
        else:
            out = np.array([self._custom_value(v) for v in flat], dtype=np.float64)
        if arr.ndim == 0:
            return float(out[0])
        return out.reshape(arr.shape)

    def _custom_value(self, v: float) -> float:
        if v <= self.cutoff:
            return 0.0
        return float(self.custom_fn(float(v)))

    def _validate_custom(self) -> None:
        cut = self.cutoff
        grid = np.linspace(0.0, 10.0 * cut, CUSTOM_GRID_POINTS)
        raw = np.array([float(self.custom_fn(float(v))) for v in grid])
        if not np.all(np.isfinite(raw)) or np.any(raw < 0.0):
            raise DomainError("custom shrinker must be finite and nonnegative")
        if np.any(raw[grid <= cut] != 0.0):
            raise DomainError(f"custom shrinker must vanish on [0, {cut:g}]")
        above = grid[grid > cut]
        # refine each coarse interval tenfold: a jump that does not shrink is a discontinuity
        vals = raw[grid > cut]
        scale = 1.0 + float(np.max(np.abs(vals), initial=0.0))
        for lo, hi, f_lo, f_hi in zip(above[:-1], above[1:], vals[:-1], vals[1:]):
            coarse = abs(f_hi - f_lo)
            if coarse <= 1e-3 * scale:
                continue
            fine = np.array([float(self.custom_fn(float(v))) for v in np.linspace(lo, hi, 11)])
            if np.max(np.abs(np.diff(fine))) > 0.5 * coarse:
                raise DomainError(f"custom shrinker looks discontinuous near {lo:g}")


@dataclass(frozen=True)
class PrecisionEstimate:
    """Shrinkage estimate of ``Sigma_X^+`` together with the mapped eigenvalues."""

    matrix: NDArray[np.float64]
    eta: NDArray[np.float64]

    def __post_init__(self) -> None:
        m = self.matrix
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise PreconditionError(f"precision estimate must be square, got {m.shape}")
        scale = max(1.0, float(np.max(np.abs(m), initial=0.0)))
        if np.max(np.abs(m - m.T), initial=0.0) > 1e-10 * scale:
            raise PreconditionError("precision estimate is not symmetric")


def apply_rule(eig: EigenSystem, rule: Callable[[ArrayLike], ArrayLike]) -> PrecisionEstimate:
    """Assemble ``V diag(rule(lam)) V^T`` and symmetrize it."""
    check_orthonormal(eig.vectors)
    eta = np.asarray(rule(eig.values), dtype=np.float64).reshape(eig.values.shape)
    v = eig.vectors
    m = (v * eta) @ v.T
    m = 0.5 * (m + m.T)
    return PrecisionEstimate(m, eta)
