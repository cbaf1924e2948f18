"""
Closed-form asymptotics of the spiked covariance model.

All formulas are stated at unit noise level; ``asymptotic_loss`` handles a
general noise level by rescaling spikes and eigenvalues by ``sigma**2``.

Notation used throughout:

    beta         p / n, restricted to (0, 1]
    ell_plus     sqrt(beta), detectability threshold for a population spike
    lambda_plus  (1 + sqrt(beta))**2, upper edge of the Marchenko-Pastur bulk
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

from .errors import DomainError

__all__ = [
    "AspectRatio",
    "SpikedModel",
    "LossSurfacePoint",
    "bulk_edges",
    "mp_density",
    "lambda_fwd",
    "ell_inv",
    "cosine",
    "sine",
    "delta_loss",
    "optimal_delta",
    "asymptotic_loss",
]


@dataclass(frozen=True, slots=True)
class AspectRatio:
    """Dimension-to-sample ratio ``p/n`` together with the derived bulk edges."""

    beta: float

    def __post_init__(self) -> None:
        _check_beta(self.beta)

    @property
    def ell_plus(self) -> float:
        return math.sqrt(self.beta)

    @property
    def lambda_plus(self) -> float:
        return (1.0 + math.sqrt(self.beta)) ** 2

    @property
    def lambda_minus(self) -> float:
        return (1.0 - math.sqrt(self.beta)) ** 2


BetaLike = Union[float, AspectRatio]


def _check_beta(beta: BetaLike) -> float:
    if isinstance(beta, AspectRatio):
        return beta.beta
    b = float(beta)
    # written so that nan fails too
    if not (0.0 < b <= 1.0):
        raise DomainError(f"aspect ratio beta must lie in (0, 1], got {beta!r}")
    return b


def _check_nonneg(x: float, name: str) -> float:
    v = float(x)
    if not v >= 0.0:
        raise DomainError(f"{name} must be nonnegative, got {x!r}")
    return v


@dataclass(frozen=True, slots=True)
class SpikedModel:
    """
    Population description: spikes ``l_1 > ... > l_d > 0``, noise level and aspect ratio.

    An empty ``spikes`` tuple is the null case.
    """

    spikes: tuple[float, ...]
    sigma: float
    beta: float

    def __post_init__(self) -> None:
        spikes = tuple(float(s) for s in self.spikes)
        object.__setattr__(self, "spikes", spikes)
        if any(not (s > 0.0 and math.isfinite(s)) for s in spikes):
            raise DomainError(f"spikes must be finite and strictly positive, got {spikes}")
        if any(a <= b for a, b in zip(spikes, spikes[1:])):
            raise DomainError(f"spikes must be strictly decreasing, got {spikes}")
        if not (float(self.sigma) >= 0.0 and math.isfinite(self.sigma)):
            raise DomainError(f"sigma must be finite and nonnegative, got {self.sigma!r}")
        object.__setattr__(self, "beta", _check_beta(self.beta))

    @property
    def d(self) -> int:
        return len(self.spikes)


@dataclass(frozen=True, slots=True)
class LossSurfacePoint:
    alpha: float
    zeta: float
    value: float

    @classmethod
    def at(cls, alpha: float, zeta: float, beta: BetaLike) -> "LossSurfacePoint":
        return cls(float(alpha), float(zeta), delta_loss(alpha, zeta, beta))


def bulk_edges(beta: BetaLike) -> tuple[float, float, float]:
    """Return ``(lambda_minus, lambda_plus, ell_plus)`` for aspect ratio ``beta``."""
    b = _check_beta(beta)
    root = math.sqrt(b)
    return (1.0 - root) ** 2, (1.0 + root) ** 2, root


def mp_density(x: float, beta: BetaLike) -> float:
    """Marchenko-Pastur density at unit noise level; zero off ``[lambda_minus, lambda_plus]``."""
    b = _check_beta(beta)
    x = _check_nonneg(x, "x")
    lo, hi, _ = bulk_edges(b)
    if x <= lo or x >= hi:
        return 0.0
    return math.sqrt((hi - x) * (x - lo)) / (2.0 * math.pi * b * x)


def lambda_fwd(alpha: float, beta: BetaLike) -> float:
    """
    Almost-sure limit of the sample eigenvalue attached to a population spike ``alpha``.

    Spikes at or below ``sqrt(beta)`` stick to the bulk edge.
    """
    b = _check_beta(beta)
    a = _check_nonneg(alpha, "alpha")
    root = math.sqrt(b)
    if a > root:
        return 1.0 + a + b + b / a
    return (1.0 + root) ** 2


def ell_inv(lam: float, beta: BetaLike) -> float:
    """
    Invert ``lambda_fwd`` on the supercritical branch.

    Only defined for ``lam > lambda_plus``; below the edge no spike can be recovered.
    """
    b = _check_beta(beta)
    lam = float(lam)
    lo, hi, _ = bulk_edges(b)
    if not lam > hi:
        raise DomainError(f"ell_inv needs lam > lambda_plus = {hi!r}, got {lam!r}")
    shifted = lam + 1.0 - b
    # (lam+1-beta)^2 - 4 lam == (lam - lambda_plus)(lam - lambda_minus); the factored
    # form keeps relative accuracy next to the edge
    disc = max((lam - hi) * (lam - lo), 0.0)
    return 0.5 * (shifted + math.sqrt(disc)) - 1.0


def _sine_sq(a: float, b: float) -> float:
    # 1 - c(a)^2 in closed form, a > sqrt(b)
    return b * (a + 1.0) / (a * (a + b))


def cosine(alpha: float, beta: BetaLike) -> float:
    """Limiting |cos| of the angle between a population spike direction and its sample eigenvector."""
    b = _check_beta(beta)
    a = _check_nonneg(alpha, "alpha")
    if a <= math.sqrt(b):
        return 0.0
    return math.sqrt((a * a - b) / (a * a + b * a))


def sine(alpha: float, beta: BetaLike) -> float:
    b = _check_beta(beta)
    a = _check_nonneg(alpha, "alpha")
    if a <= math.sqrt(b):
        return 1.0
    return math.sqrt(_sine_sq(a, b))


def delta_loss(alpha: float, zeta: float, beta: BetaLike) -> float:
    """
    Asymptotic operator-norm loss contributed by one spike.

    ``alpha`` is the population spike and ``zeta`` the value the shrinker assigns to
    its sample eigenvalue. Inside the bulk the loss is ``1/alpha`` regardless of
    ``zeta``, because a shrinker vanishes there.
    """
    b = _check_beta(beta)
    a = _check_nonneg(alpha, "alpha")
    z = _check_nonneg(zeta, "zeta")
    if a == 0.0:
        return 0.0
    if a <= math.sqrt(b):
        return 1.0 / a
    gap = 1.0 / a - z
    rad = math.sqrt(gap * gap + 4.0 * z * _sine_sq(a, b) / a)
    if z <= 1.0 / a:
        return 0.5 * (gap + rad)
    return 0.5 * (rad - gap)


def optimal_delta(alpha: float, beta: BetaLike) -> float:
    """Loss of the optimal shrinker for a single spike: ``s(alpha)/alpha`` above the threshold."""
    b = _check_beta(beta)
    a = _check_nonneg(alpha, "alpha")
    if a == 0.0:
        return 0.0
    if a <= math.sqrt(b):
        return 1.0 / a
    return math.sqrt(b) / a**1.5 * math.sqrt((1.0 + a) / (b + a))


def asymptotic_loss(rule: Callable[[float], float], model: SpikedModel) -> float:
    """
    Limiting loss ``||Sigma_X^+ - eta(S_n)||_op`` of a shrinkage rule on a spiked model.

    The model is rescaled to unit noise, each spike is evaluated through
    ``delta_loss`` and the worst one is returned. Only eigenvalues attached to
    spikes are accounted for, so the value is the true limit only for rules that
    vanish on the noise bulk; rules such as the classical one that are nonzero
    inside the bulk pick up extra loss from noise eigenvalues that this formula
    does not see.
    """
    s2 = float(model.sigma) ** 2
    if s2 == 0.0:
        raise DomainError("asymptotic_loss needs sigma > 0")
    worst = 0.0
    for spike in model.spikes:
        a = spike / s2
        lam = lambda_fwd(a, model.beta)
        zeta = s2 * float(rule(s2 * lam))
        worst = max(worst, delta_loss(a, zeta, model.beta) / s2)
    return worst


def alpha_grid(start: float = 0.1, stop: float = 3.0, step: float = 0.01) -> list[float]:
    """Inclusive grid ``start, start+step, ..., stop`` with values rounded to 12 decimals."""
    if not (start > 0.0 and stop > start and step > 0.0):
        raise DomainError(f"invalid grid start={start!r} stop={stop!r} step={step!r}")
    count = int(math.floor((stop - start) / step + 1e-9))
    return [round(start + k * step, 12) for k in range(count + 1)]


def critical_sigmas(spikes: Sequence[float], beta: BetaLike) -> tuple[float, ...]:
    """Largest noise level at which each spike stays detectable, ``sqrt(l_i / sqrt(beta))``."""
    b = _check_beta(beta)
    return tuple(math.sqrt(float(s) / math.sqrt(b)) for s in spikes)
