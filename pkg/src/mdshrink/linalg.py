"""
Dense symmetric linear algebra used by the estimators and the simulations.
"""

from __future__ import annotations

from dataclasses import InitVar, dataclass
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import PreconditionError
from .rmt import SpikedModel

__all__ = [
    "SampleSet",
    "EigenSystem",
    "GroundTruth",
    "check_orthonormal",
    "sample_covariance",
    "sym_eig",
    "op_norm_diff",
    "mahalanobis_sq",
    "ground_truth",
    "truth_from_spikes",
    "shrinkage_loss",
]

ORTHO_TOL = 1e-8
SYM_TOL = 1e-8
PSD_TOL = 1e-10


def _as_square(m: ArrayLike, name: str) -> NDArray[np.float64]:
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise PreconditionError(f"{name} must be a square matrix, got shape {arr.shape}")
    return arr


def _check_symmetric(m: NDArray[np.float64], name: str, tol: float = SYM_TOL) -> None:
    scale = max(1.0, float(np.max(np.abs(m), initial=0.0)))
    if np.max(np.abs(m - m.T), initial=0.0) > tol * scale:
        raise PreconditionError(f"{name} is not symmetric")


def check_orthonormal(v: NDArray[np.float64], tol: float = ORTHO_TOL) -> None:
    """Raise unless the columns of ``v`` are orthonormal to within ``tol`` (max-entry norm)."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 2:
        raise PreconditionError(f"expected a matrix of column vectors, got shape {v.shape}")
    k = v.shape[1]
    resid = v.T @ v - np.eye(k)
    if k and np.max(np.abs(resid)) > tol:
        raise PreconditionError(f"columns are not orthonormal (residual {np.max(np.abs(resid)):.3g})")


@dataclass(frozen=True)
class SampleSet:
    """``n`` observations (rows of ``data``) in dimension ``p`` with known population mean."""

    data: NDArray[np.float64]
    mean: NDArray[np.float64]

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=np.float64)
        mean = np.asarray(self.mean, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise PreconditionError(f"data must be an n x p matrix with n, p >= 1, got {data.shape}")
        if mean.shape != (data.shape[1],):
            raise PreconditionError(f"mean has shape {mean.shape}, expected ({data.shape[1]},)")
        if not (np.all(np.isfinite(data)) and np.all(np.isfinite(mean))):
            raise PreconditionError("data and mean must be finite")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "mean", mean)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def p(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class EigenSystem:
    """Eigenvalues in descending order and the matching orthonormal eigenvectors (columns)."""

    values: NDArray[np.float64]
    vectors: NDArray[np.float64]
    check: InitVar[bool] = True

    def __post_init__(self, check: bool) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        vectors = np.asarray(self.vectors, dtype=np.float64)
        p = values.shape[0]
        if values.ndim != 1 or vectors.shape != (p, p):
            raise PreconditionError(f"inconsistent eigensystem shapes {values.shape} and {vectors.shape}")
        if check:
            if np.any(np.diff(values) > 0.0):
                raise PreconditionError("eigenvalues must be sorted in descending order")
            check_orthonormal(vectors)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "vectors", vectors)

    @property
    def p(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class GroundTruth:
    """
    Population signal covariance and its Moore-Penrose pseudo-inverse.

    ``directions`` (p x d, orthonormal) and ``values`` (d positive entries) are the
    factors both matrices were built from; they let losses be computed without
    forming p x p products.
    """

    sigma_x: NDArray[np.float64]
    pseudo_inverse: NDArray[np.float64]
    rank: int
    directions: NDArray[np.float64]
    values: NDArray[np.float64]


def sample_covariance(s: SampleSet) -> NDArray[np.float64]:
    """``(1/n) sum_i (y_i - mu)(y_i - mu)^T`` using the known mean."""
    centered = s.data - s.mean
    cov = centered.T @ centered / s.n
    return 0.5 * (cov + cov.T)


def sym_eig(m: ArrayLike, *, psd: bool = False) -> EigenSystem:
    """
    Eigendecomposition of a symmetric matrix, eigenvalues descending.

    Each eigenvector is signed so that its largest-magnitude entry (first one on
    ties) is positive. With ``psd=True`` eigenvalues within round-off of zero are
    clamped to 0 and clearly negative ones raise.
    """
    a = _as_square(m, "matrix")
    _check_symmetric(a, "matrix")
    values, vectors = np.linalg.eigh(a)
    values = values[::-1].copy()
    vectors = vectors[:, ::-1].copy()
    if vectors.size:
        pivot = np.argmax(np.abs(vectors), axis=0)
        signs = np.sign(vectors[pivot, np.arange(vectors.shape[1])])
        signs[signs == 0.0] = 1.0
        vectors *= signs
    if psd and values.size:
        floor = -PSD_TOL * max(1.0, float(np.max(np.abs(values))))
        if values[-1] < floor:
            raise PreconditionError(f"matrix is not positive semi-definite (eigenvalue {values[-1]:.3g})")
        np.maximum(values, 0.0, out=values)
    return EigenSystem(values, vectors, check=False)


def op_norm_diff(a: ArrayLike, b: ArrayLike) -> float:
    """Spectral norm of ``a - b`` for symmetric ``a`` and ``b``."""
    a = _as_square(a, "a")
    b = _as_square(b, "b")
    if a.shape != b.shape:
        raise PreconditionError(f"shape mismatch {a.shape} vs {b.shape}")
    _check_symmetric(a, "a")
    _check_symmetric(b, "b")
    diff = a - b
    diff = 0.5 * (diff + diff.T)
    if diff.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvalsh(diff))))


def mahalanobis_sq(z: ArrayLike, mu: ArrayLike, m: ArrayLike) -> float:
    """Quadratic form ``(z - mu)^T m (z - mu)``."""
    z = np.asarray(z, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    m = _as_square(m, "m")
    if z.shape != mu.shape or z.shape != (m.shape[0],):
        raise PreconditionError(f"shape mismatch: z {z.shape}, mu {mu.shape}, m {m.shape}")
    w = z - mu
    return float(w @ m @ w)


def ground_truth(values: Sequence[float], directions: ArrayLike, tol: float = 1e-10) -> GroundTruth:
    """
    ``Sigma_X = U diag(values) U^T`` and ``Sigma_X^+ = U diag(1/values) U^T``.

    Repeated values are allowed here; a curved manifold gives a population
    covariance with a tie.
    """
    vals = np.asarray(values, dtype=np.float64).reshape(-1)
    u = np.asarray(directions, dtype=np.float64)
    if u.ndim != 2 or u.shape[1] != vals.shape[0]:
        raise PreconditionError(f"directions shape {u.shape} does not match {vals.shape[0]} values")
    if np.any(~(vals > 0.0)):
        raise PreconditionError("ground-truth spectrum must be strictly positive")
    check_orthonormal(u, tol)
    sigma_x = (u * vals) @ u.T
    pinv = (u / vals) @ u.T
    return GroundTruth(
        sigma_x=0.5 * (sigma_x + sigma_x.T),
        pseudo_inverse=0.5 * (pinv + pinv.T),
        rank=int(vals.shape[0]),
        directions=u,
        values=vals,
    )


def truth_from_spikes(model: SpikedModel, u: ArrayLike) -> GroundTruth:
    """Ground truth for a spiked model whose spike directions are the columns of ``u``."""
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != 2 or u.shape[1] != model.d:
        raise PreconditionError(f"u must have {model.d} columns, got shape {u.shape}")
    return ground_truth(model.spikes, u)


def shrinkage_loss(truth: GroundTruth, eig: EigenSystem, eta: ArrayLike) -> float:
    """
    ``||Sigma_X^+ - V diag(eta) V^T||_op`` restricted to the subspace where the
    difference lives.

    The range of the difference is spanned by the eigenvectors with ``eta != 0``
    and the truth directions, so only a ``(k + d)``-dimensional problem is solved.
    Matches ``op_norm_diff(truth.pseudo_inverse, apply_rule(...).matrix)``.
    """
    eta = np.asarray(eta, dtype=np.float64).reshape(-1)
    if eta.shape[0] != eig.p or truth.sigma_x.shape[0] != eig.p:
        raise PreconditionError("eta or ground truth does not match the eigensystem dimension")
    keep = eta != 0.0
    vk = eig.vectors[:, keep]
    hk = eta[keep]
    u = truth.directions
    if u.shape[1]:
        resid = u - vk @ (vk.T @ u)
        left, sv, _ = np.linalg.svd(resid, full_matrices=False)
        extra = left[:, sv > 1e-12]
        if extra.shape[1]:
            # one more projection pass against round-off leakage into span(vk)
            extra = extra - vk @ (vk.T @ extra)
            extra, _ = np.linalg.qr(extra)
        basis = np.hstack([vk, extra])
    else:
        basis = vk
    if basis.shape[1] == 0:
        return 0.0
    proj = basis.T @ u
    small = (proj / truth.values) @ proj.T
    small[np.arange(hk.size), np.arange(hk.size)] -= hk
    small = 0.5 * (small + small.T)
    return float(np.max(np.abs(np.linalg.eigvalsh(small))))
