"""
Data generators and Monte-Carlo drivers for the spiked and manifold experiments.

Every repetition draws from its own generator,
``PCG64(SeedSequence(master_seed, spawn_key=(i_beta, i_sigma, rep)))``, so results
do not depend on execution order or on the number of worker threads.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np
from numpy.typing import NDArray

from . import rmt
from .errors import ConfigurationError, PreconditionError, SimulationError
from .linalg import (
    GroundTruth,
    SampleSet,
    check_orthonormal,
    ground_truth,
    mahalanobis_sq,
    sample_covariance,
    shrinkage_loss,
    sym_eig,
    truth_from_spikes,
)
from .rmt import SpikedModel
from .shrinkers import ShrinkageRule, Threshold, apply_rule

__all__ = [
    "RNG_ALGORITHM",
    "NOISE_SCALINGS",
    "Summary",
    "summarize",
    "rep_rng",
    "resolve_workers",
    "haar_orthogonal",
    "gen_spiked_sample",
    "SpikedExperimentConfig",
    "SpikedCell",
    "LossReport",
    "run_spiked_experiment",
    "ManifoldExperimentConfig",
    "paraboloid",
    "manifold_population",
    "gen_manifold_sample",
    "ManifoldCell",
    "ErrorReport",
    "normalized_error",
    "run_manifold_experiment",
]

RNG_ALGORITHM = "numpy.random.PCG64 seeded by SeedSequence(master_seed, spawn_key=(i_beta, i_sigma, rep))"
NOISE_SCALINGS = ("sigma", "sigma-squared")
THREADS_ENV = "MDSHRINK_THREADS"
LOG_FLOOR = 1e-12
ZERO_DISTANCE = 1e-12
RULES = ("classical", "optimal")

T = TypeVar("T")


# --------------------------------------------------------------------------
# statistics and plumbing
# --------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Summary:
    mean: float
    std: float
    median: float
    iqr: float


def summarize(samples: Iterable[float]) -> Summary:
    """Mean, sample std (``ddof=1``, 0 for a singleton), median and interquartile range."""
    x = np.asarray(list(samples), dtype=np.float64)
    if x.size == 0:
        raise ValueError("cannot summarize an empty sample")
    std = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
    q25, q75 = np.percentile(x, [25.0, 75.0])
    return Summary(float(np.mean(x)), std, float(np.median(x)), float(q75 - q25))


def rep_rng(master_seed: int, *indices: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(master_seed), spawn_key=tuple(indices))))


def resolve_workers(workers: int | None = None) -> int:
    """Worker count: explicit argument, else ``$MDSHRINK_THREADS``, else the CPU count."""
    if workers is None:
        env = os.environ.get(THREADS_ENV)
        if env:
            try:
                workers = int(env)
            except ValueError:
                raise ConfigurationError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
        else:
            workers = os.cpu_count() or 1
    if workers < 1:
        raise ConfigurationError(f"worker count must be >= 1, got {workers}")
    return workers


def _map(fn: Callable[[T], object], tasks: Sequence[T], workers: int) -> list:
    if workers == 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def _noise_amplitude(sigma: float, scaling: str) -> float:
    if scaling == "sigma":
        return sigma
    if scaling == "sigma-squared":
        return sigma * sigma
    raise ConfigurationError(f"noise scaling must be one of {NOISE_SCALINGS}, got {scaling!r}")


# --------------------------------------------------------------------------
# spiked model
# --------------------------------------------------------------------------


def haar_orthogonal(p: int, rng: np.random.Generator) -> NDArray[np.float64]:
    """Haar-distributed element of O(p): QR of a Gaussian matrix with R's diagonal signs folded into Q."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    q, r = np.linalg.qr(rng.standard_normal((p, p)))
    signs = np.sign(np.diag(r))
    signs[signs == 0.0] = 1.0
    return q * signs


def gen_spiked_sample(
    model: SpikedModel,
    n: int,
    rotation: NDArray[np.float64] | None,
    rng: np.random.Generator,
    *,
    p: int | None = None,
    noise_scaling: str = "sigma",
) -> tuple[SampleSet, GroundTruth]:
    """
    Draw ``y_i = A x_i + sigma xi_i`` with ``x_i`` Gaussian on the first ``d``
    coordinates, variances ``l_1..l_d``, and ``xi_i ~ N(0, I_p)``.

    ``rotation=None`` means ``A = I``, which avoids building a p x p matrix when
    rotation invariance makes it irrelevant; ``p`` is then required. With
    ``noise_scaling="sigma-squared"`` the noise amplitude is ``sigma**2``.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    d = model.d
    if rotation is None:
        if p is None:
            raise ValueError("p is required when rotation is None")
        directions = np.eye(p, d)
    else:
        rotation = np.asarray(rotation, dtype=np.float64)
        if rotation.ndim != 2 or rotation.shape[0] != rotation.shape[1]:
            raise PreconditionError(f"rotation must be square, got {rotation.shape}")
        if p is not None and p != rotation.shape[0]:
            raise PreconditionError(f"p={p} disagrees with rotation of size {rotation.shape[0]}")
        p = rotation.shape[0]
        check_orthonormal(rotation, 1e-8)
        directions = rotation[:, :d]
    if d > p:
        raise ConfigurationError(f"model has {d} spikes but p={p}")
    amp = _noise_amplitude(model.sigma, noise_scaling)
    latent = rng.standard_normal((n, d)) * np.sqrt(np.asarray(model.spikes))
    data = latent @ directions.T
    noise = rng.standard_normal((n, p))
    if amp != 0.0:
        data = data + amp * noise
    truth = truth_from_spikes(model, directions)
    return SampleSet(data, np.zeros(p)), truth


@dataclass(frozen=True)
class SpikedExperimentConfig:
    n: int = 300
    beta_grid: tuple[float, ...] = (0.2, 0.4, 0.6, 0.8, 1.0)
    spikes: tuple[float, ...] = (1.0,)
    sigma_grid: tuple[float, ...] = tuple(round(0.225 * k, 12) for k in range(1, 9))
    reps: int = 200
    master_seed: int = 0
    noise_scaling: str = "sigma"
    threshold: Threshold = Threshold.BULK_EDGE

    def __post_init__(self) -> None:
        object.__setattr__(self, "beta_grid", tuple(float(b) for b in self.beta_grid))
        object.__setattr__(self, "sigma_grid", tuple(float(s) for s in self.sigma_grid))
        object.__setattr__(self, "spikes", tuple(sorted((float(s) for s in self.spikes), reverse=True)))
        object.__setattr__(self, "threshold", Threshold(self.threshold))
        if self.reps < 1:
            raise ConfigurationError("reps must be >= 1")
        if self.n < 1:
            raise ConfigurationError("n must be >= 1")
        if not self.beta_grid or not self.sigma_grid:
            raise ConfigurationError("beta and sigma grids must be nonempty")
        if any(not (s > 0.0) for s in self.sigma_grid):
            raise ConfigurationError("all sigma values must be positive")
        for b in self.beta_grid:
            try:
                rmt.bulk_edges(b)
            except ValueError as exc:
                raise ConfigurationError(str(exc)) from None
            if self.p_for(b) < max(1, len(self.spikes)):
                raise ConfigurationError(f"beta={b} gives p={self.p_for(b)}, too small for {len(self.spikes)} spikes")
        _noise_amplitude(1.0, self.noise_scaling)
        SpikedModel(self.spikes, 1.0, self.beta_grid[0])

    @classmethod
    def with_d(cls, d: int, **kwargs) -> "SpikedExperimentConfig":
        """Spikes ``d, d-1, ..., 1``."""
        return cls(spikes=tuple(float(i) for i in range(d, 0, -1)), **kwargs)

    def p_for(self, beta: float) -> int:
        return int(round(beta * self.n))


@dataclass(frozen=True)
class SpikedCell:
    beta: float
    sigma: float
    n: int
    p: int
    losses: dict[str, NDArray[np.float64]]
    theoretical_optimal_loss: float
    critical_sigmas: tuple[float, ...]
    log_excess: dict[str, NDArray[np.float64]] = field(init=False)
    clamp_counts: dict[str, int] = field(init=False)

    def __post_init__(self) -> None:
        log_excess, clamps = {}, {}
        for rule, losses in self.losses.items():
            diff = losses - self.theoretical_optimal_loss
            clamps[rule] = int(np.count_nonzero(diff < LOG_FLOOR))
            log_excess[rule] = np.log10(np.maximum(diff, LOG_FLOOR))
        object.__setattr__(self, "log_excess", log_excess)
        object.__setattr__(self, "clamp_counts", clamps)

    def summary(self, rule: str) -> Summary:
        return summarize(self.losses[rule])

    def log_excess_quartiles(self, rule: str) -> tuple[float, float, float]:
        """25th, 50th and 75th percentile of ``log10(L_n - L_inf)``."""
        q = np.percentile(self.log_excess[rule], [25.0, 50.0, 75.0])
        return float(q[0]), float(q[1]), float(q[2])


@dataclass(frozen=True)
class LossReport:
    config: SpikedExperimentConfig
    cells: list[SpikedCell]
    rng_algorithm: str = RNG_ALGORITHM

    def cell(self, beta: float, sigma: float) -> SpikedCell:
        for c in self.cells:
            if math.isclose(c.beta, beta) and math.isclose(c.sigma, sigma):
                return c
        raise KeyError((beta, sigma))


def _spiked_rep(cfg: SpikedExperimentConfig, ib: int, isg: int, rep: int) -> tuple[float, float]:
    beta, sigma = cfg.beta_grid[ib], cfg.sigma_grid[isg]
    p = cfg.p_for(beta)
    try:
        rng = rep_rng(cfg.master_seed, ib, isg, rep)
        model = SpikedModel(cfg.spikes, sigma, beta)
        rotation = haar_orthogonal(p, rng)
        sample, truth = gen_spiked_sample(model, cfg.n, rotation, rng, noise_scaling=cfg.noise_scaling)
        eig = sym_eig(sample_covariance(sample), psd=True)
        rules = (ShrinkageRule.classical(sigma), ShrinkageRule.optimal(sigma, beta, cfg.threshold))
        return tuple(shrinkage_loss(truth, eig, rule(eig.values)) for rule in rules)
    except Exception as exc:
        raise SimulationError(f"spiked experiment failed at beta={beta}, sigma={sigma}, rep={rep}: {exc}") from exc


def run_spiked_experiment(cfg: SpikedExperimentConfig, *, workers: int | None = None) -> LossReport:
    """Monte-Carlo operator-norm losses of the classical and optimal rules over the (beta, sigma) grid."""
    workers = resolve_workers(workers)
    tasks = [
        (ib, isg, rep)
        for ib in range(len(cfg.beta_grid))
        for isg in range(len(cfg.sigma_grid))
        for rep in range(cfg.reps)
    ]
    results = _map(lambda t: _spiked_rep(cfg, *t), tasks, workers)
    table = np.asarray(results, dtype=np.float64).reshape(len(cfg.beta_grid), len(cfg.sigma_grid), cfg.reps, 2)

    cells = []
    for ib, beta in enumerate(cfg.beta_grid):
        for isg, sigma in enumerate(cfg.sigma_grid):
            model = SpikedModel(cfg.spikes, sigma, beta)
            linf = rmt.asymptotic_loss(ShrinkageRule.optimal(sigma, beta, cfg.threshold), model)
            cells.append(
                SpikedCell(
                    beta=beta,
                    sigma=sigma,
                    n=cfg.n,
                    p=cfg.p_for(beta),
                    losses={RULES[0]: table[ib, isg, :, 0].copy(), RULES[1]: table[ib, isg, :, 1].copy()},
                    theoretical_optimal_loss=linf,
                    critical_sigmas=rmt.critical_sigmas(cfg.spikes, beta),
                )
            )
    return LossReport(cfg, cells)


# --------------------------------------------------------------------------
# manifold model
# --------------------------------------------------------------------------

PARABOLOID_COEFFS = (4.0 / 9.0, 5.0 / 9.0)


def paraboloid(s: NDArray[np.float64] | float, t: NDArray[np.float64] | float, p: int) -> NDArray[np.float64]:
    """Chart ``(s, t) -> [s, t, 4(s/3)^2 + 5(t/3)^2, 0, ..., 0]``; vectorized over leading axes."""
    s = np.asarray(s, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    out = np.zeros(np.broadcast(s, t).shape + (p,))
    out[..., 0] = s
    out[..., 1] = t
    out[..., 2] = PARABOLOID_COEFFS[0] * s**2 + PARABOLOID_COEFFS[1] * t**2
    return out


def _uniform_moment(a: float, b: float, k: int) -> float:
    return (b ** (k + 1) - a ** (k + 1)) / ((k + 1) * (b - a))


def manifold_population(p: int, param_range: tuple[float, float]) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """
    Exact mean and covariance of the paraboloid under independent uniform ``s, t``.

    Only the leading 3 x 3 block of the covariance is nonzero.
    """
    a, b = map(float, param_range)
    if not b > a:
        raise ConfigurationError(f"empty parameter range {param_range}")
    m1, m2, m3, m4 = (_uniform_moment(a, b, k) for k in (1, 2, 3, 4))
    c1, c2 = PARABOLOID_COEFFS
    var = m2 - m1**2
    var_sq = m4 - m2**2
    cov_lin_sq = m3 - m1 * m2
    mean = np.zeros(p)
    mean[:3] = (m1, m1, (c1 + c2) * m2)
    cov = np.zeros((p, p))
    cov[0, 0] = cov[1, 1] = var
    cov[0, 2] = cov[2, 0] = c1 * cov_lin_sq
    cov[1, 2] = cov[2, 1] = c2 * cov_lin_sq
    cov[2, 2] = (c1**2 + c2**2) * var_sq
    return mean, cov


@dataclass(frozen=True)
class ManifoldExperimentConfig:
    p: int = 100
    beta_grid: tuple[float, ...] = (0.1, 0.5, 1.0)
    sigma_grid: tuple[float, ...] = (1.0, 1.5, 2.0)
    reps: int = 500
    param_range: tuple[float, float] = (-5.0, 5.0)
    test_points: tuple[tuple[float, float], ...] = ((0.0, 0.0), (2.0, 2.0))
    master_seed: int = 0
    noise_scaling: str = "sigma"
    threshold: Threshold = Threshold.BULK_EDGE

    def __post_init__(self) -> None:
        object.__setattr__(self, "beta_grid", tuple(float(b) for b in self.beta_grid))
        object.__setattr__(self, "sigma_grid", tuple(float(s) for s in self.sigma_grid))
        object.__setattr__(self, "param_range", tuple(float(v) for v in self.param_range))
        object.__setattr__(self, "test_points", tuple(tuple(float(v) for v in tp) for tp in self.test_points))
        object.__setattr__(self, "threshold", Threshold(self.threshold))
        if self.p < 3:
            raise ConfigurationError("the paraboloid needs p >= 3")
        if self.reps < 1:
            raise ConfigurationError("reps must be >= 1")
        if any(not (s > 0.0) for s in self.sigma_grid):
            raise ConfigurationError("all sigma values must be positive")
        for b in self.beta_grid:
            try:
                rmt.bulk_edges(b)
            except ValueError as exc:
                raise ConfigurationError(str(exc)) from None
        if any(len(tp) != 2 for tp in self.test_points):
            raise ConfigurationError("test points are (s, t) pairs")
        _noise_amplitude(1.0, self.noise_scaling)
        manifold_population(self.p, self.param_range)

    def n_for(self, beta: float) -> int:
        return int(round(self.p / beta))

    def truth(self) -> tuple[NDArray[np.float64], GroundTruth]:
        mean, cov = manifold_population(self.p, self.param_range)
        vals, vecs = np.linalg.eigh(cov[:3, :3])
        keep = vals > 1e-12 * vals.max()
        directions = np.zeros((self.p, int(keep.sum())))
        directions[:3] = vecs[:, keep]
        return mean, ground_truth(vals[keep], directions)


def gen_manifold_sample(
    cfg: ManifoldExperimentConfig, beta: float, sigma: float, rng: np.random.Generator
) -> tuple[SampleSet, GroundTruth]:
    """``n = round(p/beta)`` noisy paraboloid points with uniform parameters; truth from exact moments."""
    n = cfg.n_for(beta)
    a, b = cfg.param_range
    params = rng.uniform(a, b, size=(n, 2))
    clean = paraboloid(params[:, 0], params[:, 1], cfg.p)
    amp = _noise_amplitude(sigma, cfg.noise_scaling)
    noise = rng.standard_normal((n, cfg.p))
    data = clean + amp * noise if amp != 0.0 else clean
    mean, truth = cfg.truth()
    return SampleSet(data, mean), truth


def normalized_error(estimate_sq: float, truth_sq: float, convention: str = "squared") -> float:
    """
    Relative error of an estimated Mahalanobis distance.

    ``convention="squared"`` compares the quadratic forms ``d^2`` directly,
    ``"root"`` compares their square roots.
    """
    if truth_sq <= 0.0:
        raise ConfigurationError("true Mahalanobis distance is zero; the error cannot be normalized")
    if convention == "squared":
        return abs(estimate_sq - truth_sq) / truth_sq
    if convention == "root":
        root = math.sqrt(truth_sq)
        return abs(math.sqrt(max(estimate_sq, 0.0)) - root) / root
    raise ValueError(f"unknown convention {convention!r}")


@dataclass(frozen=True)
class ManifoldCell:
    """
    Raw quadratic forms for one (beta, sigma) cell.

    ``estimates[rule]`` has shape ``(reps, n_test_points)``; ``truth_sq`` holds the
    true squared distance of each test point.
    """

    beta: float
    sigma: float
    n: int
    estimates: dict[str, NDArray[np.float64]]
    truth_sq: NDArray[np.float64]

    def errors(self, rule: str, test_index: int, convention: str = "squared") -> NDArray[np.float64]:
        t = float(self.truth_sq[test_index])
        return np.array([normalized_error(e, t, convention) for e in self.estimates[rule][:, test_index]])

    def summary(self, rule: str, test_index: int, convention: str = "squared", percent: bool = True) -> Summary:
        errs = self.errors(rule, test_index, convention)
        return summarize(100.0 * errs if percent else errs)


@dataclass(frozen=True)
class ErrorReport:
    config: ManifoldExperimentConfig
    cells: list[ManifoldCell]
    test_points: tuple[NDArray[np.float64], ...]
    rng_algorithm: str = RNG_ALGORITHM

    def cell(self, beta: float, sigma: float) -> ManifoldCell:
        for c in self.cells:
            if math.isclose(c.beta, beta) and math.isclose(c.sigma, sigma):
                return c
        raise KeyError((beta, sigma))


def _manifold_rep(cfg: ManifoldExperimentConfig, points, ib: int, isg: int, rep: int) -> NDArray[np.float64]:
    beta, sigma = cfg.beta_grid[ib], cfg.sigma_grid[isg]
    try:
        rng = rep_rng(cfg.master_seed, ib, isg, rep)
        sample, _ = gen_manifold_sample(cfg, beta, sigma, rng)
        eig = sym_eig(sample_covariance(sample), psd=True)
        out = np.empty((len(RULES), len(points)))
        rules = (ShrinkageRule.classical(sigma), ShrinkageRule.optimal(sigma, beta, cfg.threshold))
        for r, rule in enumerate(rules):
            m = apply_rule(eig, rule).matrix
            for k, z in enumerate(points):
                out[r, k] = mahalanobis_sq(z, sample.mean, m)
        return out
    except Exception as exc:
        raise SimulationError(f"manifold experiment failed at beta={beta}, sigma={sigma}, rep={rep}: {exc}") from exc


def run_manifold_experiment(cfg: ManifoldExperimentConfig, *, workers: int | None = None) -> ErrorReport:
    """Estimate Mahalanobis distances of the test points on fresh noisy samples for every cell."""
    workers = resolve_workers(workers)
    mean, truth = cfg.truth()
    points = tuple(paraboloid(s, t, cfg.p) for s, t in cfg.test_points)
    truth_sq = np.array([mahalanobis_sq(z, mean, truth.pseudo_inverse) for z in points])
    # distances are scale free, so an absolute floor separates round-off from signal
    if np.any(truth_sq <= ZERO_DISTANCE):
        raise ConfigurationError("a test point has zero true Mahalanobis distance; the error cannot be normalized")

    tasks = [
        (ib, isg, rep)
        for ib in range(len(cfg.beta_grid))
        for isg in range(len(cfg.sigma_grid))
        for rep in range(cfg.reps)
    ]
    results = _map(lambda t: _manifold_rep(cfg, points, *t), tasks, workers)
    table = np.asarray(results).reshape(len(cfg.beta_grid), len(cfg.sigma_grid), cfg.reps, len(RULES), len(points))

    cells = []
    for ib, beta in enumerate(cfg.beta_grid):
        for isg, sigma in enumerate(cfg.sigma_grid):
            cells.append(
                ManifoldCell(
                    beta=beta,
                    sigma=sigma,
                    n=cfg.n_for(beta),
                    estimates={rule: table[ib, isg, :, r, :].copy() for r, rule in enumerate(RULES)},
                    truth_sq=truth_sq,
                )
            )
    return ErrorReport(cfg, cells, points)
