"""Synthetic environments and the experiment drivers built on them.

* coverage study: how often ESS-corrected intervals contain the true value
  of a shifted Gaussian target, across target spreads and sample sizes;
* sample-size reduction: smallest N at which each interval reaches a
  coverage level, relative to the plain CLT interval;
* curse of dimensionality: distance CDFs and central box mass for uniform
  and normal sampling as d grows;
* a learning benchmark with a known reward maximiser.

Replication ``r`` always draws from stream ``r`` of the master seed, so the
tables do not depend on how the work is split across processes.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import ndtr

from mvopl import kernels
from mvopl.core import (
    Deterministic,
    IsotropicGaussian,
    LoggedDataset,
    Policy,
    RngSeed,
    UniformBox,
    ValidationError,
    as_action,
    gaussian_params,
    log_density,
    sample,
)
from mvopl.estimators import EssMethod, EstimatorKind, WeightSummary, z_for_alpha

WORKERS_ENV = "MVOPL_WORKERS"
REWARD_RATE = 0.1
BENCHMARK_OPTIMUM = 0.3
CDF_GRID_POINTS = 1000

DEFAULT_SIGMAS = (1.0, 0.5, 0.25, 0.125, 0.0625)


def default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            value = int(env)
        except ValueError:
            raise ValidationError(f"{WORKERS_ENV} must be a positive integer, got {env!r}")
        if value < 1:
            raise ValidationError(f"{WORKERS_ENV} must be a positive integer, got {env!r}")
        return value
    return os.cpu_count() or 1


def _map_chunks(fn: Callable, jobs: Sequence, workers: Optional[int]) -> list:
    """``[fn(job) for job in jobs]``, possibly spread over processes, in order."""
    workers = default_workers() if workers is None else workers
    if workers <= 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(fn, jobs))


# -- environments -----------------------------------------------------------


def poisson_rate(actions) -> np.ndarray:
    a = np.asarray(actions, dtype=np.float64)
    return np.maximum(0.0, REWARD_RATE * a.mean(axis=-1))


def poisson_reward(action, seed: RngSeed) -> int:
    """One Poisson reward with rate ``max(0, 0.1 * mean(action))``."""
    rate = float(poisson_rate(as_action(action)))
    return int(seed.generator().poisson(rate))


def true_value(target: Policy, d: int) -> float:
    """Exact expected Poisson reward under a Gaussian target.

    The action mean is ``N(m, s^2)`` with ``s = sqrt(sum sigma_k^2) / d``, so the
    clamped rate has the rectified-Gaussian mean ``m Phi(m/s) + s phi(m/s)``.
    """
    if isinstance(target, (Deterministic, UniformBox)):
        raise ValidationError("true_value needs a Gaussian target policy")
    if target.dim != d:
        raise ValidationError(f"target has dimension {target.dim}, expected {d}")
    mean, sigmas = gaussian_params(target)
    m = float(mean.mean())
    s = math.sqrt(float(np.sum(sigmas**2))) / d
    t = m / s
    return REWARD_RATE * (m * float(ndtr(t)) + s * math.exp(-0.5 * t * t) / math.sqrt(2 * math.pi))


def coverage_logging_dataset(seed: RngSeed, n: int, d: int) -> LoggedDataset:
    """Logged data from ``N(0, I_d)`` with the Poisson reward of the coverage study."""
    logging = IsotropicGaussian(np.zeros(d), 1.0)
    rng = seed.generator()
    actions = sample(logging, rng, n)
    rewards = rng.poisson(poisson_rate(actions)).astype(np.float64)
    return LoggedDataset(actions, rewards, np.exp(log_density(logging, actions)), logging, d)


def benchmark_reward_probability(actions) -> np.ndarray:
    a = np.asarray(actions, dtype=np.float64)
    return np.exp(-0.5 * np.sum((a - BENCHMARK_OPTIMUM) ** 2, axis=-1))


def make_learning_benchmark(seed: RngSeed, n: int, d: int) -> LoggedDataset:
    """Bernoulli rewards peaking at ``0.3 * 1``, logged under ``N(0, I_d)``."""
    if n < 1:
        raise ValidationError("n must be positive")
    logging = IsotropicGaussian(np.zeros(d), 1.0)
    rng = seed.generator()
    actions = sample(logging, rng, n)
    rewards = rng.binomial(1, benchmark_reward_probability(actions)).astype(np.float64)
    return LoggedDataset(actions, rewards, np.exp(log_density(logging, actions)), logging, d)


# -- coverage study -----------------------------------------------------------


@dataclass(frozen=True)
class CoverageConfig:
    master_seed: int
    d: int = 5
    logging: Optional[Policy] = None
    target_mean: float = 0.5
    target_sigmas: tuple[float, ...] = DEFAULT_SIGMAS
    sample_sizes: tuple[int, ...] = tuple(2**k for k in range(3, 15))
    replications: int = 500
    alpha: float = 0.05
    kinds: tuple[EstimatorKind, ...] = (EstimatorKind.SNIPS, EstimatorKind.IPS)
    methods: tuple[EssMethod, ...] = tuple(EssMethod)

    def __post_init__(self):
        RngSeed(self.master_seed)
        if self.d < 1:
            raise ValidationError("d must be positive")
        logging = self.logging or IsotropicGaussian(np.zeros(self.d), 1.0)
        if logging.dim != self.d:
            raise ValidationError("logging policy dimension differs from d")
        if isinstance(logging, Deterministic):
            raise ValidationError("logging policy must be stochastic")
        object.__setattr__(self, "logging", logging)
        object.__setattr__(self, "target_sigmas", tuple(float(s) for s in self.target_sigmas))
        object.__setattr__(self, "sample_sizes", tuple(int(n) for n in self.sample_sizes))
        object.__setattr__(self, "kinds", tuple(EstimatorKind(k) for k in self.kinds))
        object.__setattr__(self, "methods", tuple(EssMethod(m) for m in self.methods))
        if not self.target_sigmas or min(self.target_sigmas) <= 0:
            raise ValidationError("target_sigmas must be positive")
        sizes = self.sample_sizes
        if not sizes or sizes[0] < 1 or any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ValidationError("sample_sizes must be positive and strictly increasing")
        if self.replications < 2:
            raise ValidationError("replications must be at least 2")
        if not self.kinds or not self.methods:
            raise ValidationError("at least one estimator kind and ESS method required")
        z_for_alpha(self.alpha)

    @classmethod
    def full_scale(cls, master_seed: int, **overrides) -> "CoverageConfig":
        """Full grid: N from 2^3 to 2^20, 2000 replications (long-running)."""
        params = dict(sample_sizes=tuple(2**k for k in range(3, 21)), replications=2000)
        params.update(overrides)
        return cls(master_seed, **params)

    def target(self, sigma: float) -> IsotropicGaussian:
        return IsotropicGaussian(np.full(self.d, self.target_mean), sigma)


@dataclass(frozen=True)
class CoverageRow:
    kind: EstimatorKind
    method: EssMethod
    target_sigma: float
    n: int
    coverage: float
    mean_ci_width: float
    mean_ess: float
    mean_value: float = math.nan
    value_se: float = math.nan


def _coverage_replication(args: tuple[CoverageConfig, int]) -> np.ndarray:
    """Per-cell ``(covered, width, ess, value)`` for one replication.

    Shape ``(n_sigmas, n_sizes, n_kinds, n_methods, 4)``.
    """
    config, r = args
    rng = RngSeed(config.master_seed, r).generator()
    z = z_for_alpha(config.alpha)
    truths = [true_value(config.target(s), config.d) for s in config.target_sigmas]
    means = np.full(config.d, config.target_mean)
    out = np.empty(
        (len(config.target_sigmas), len(config.sample_sizes), len(config.kinds),
         len(config.methods), 4)
    )
    for j, n in enumerate(config.sample_sizes):
        actions = sample(config.logging, rng, n)
        rewards = rng.poisson(poisson_rate(actions)).astype(np.float64)
        log0 = log_density(config.logging, actions)
        for i, sigma in enumerate(config.target_sigmas):
            log_t = kernels.diag_gauss_logpdf(actions, means, np.full(config.d, sigma))
            summary = WeightSummary.from_log_weights(log_t - log0, rewards)
            for k, kind in enumerate(config.kinds):
                for m, method in enumerate(config.methods):
                    value, _, ess_, _, low, high = summary.interval(kind, method, z)
                    out[i, j, k, m] = (low <= truths[i] <= high, high - low, ess_, value)
    return out


def _replication_block(args: tuple[CoverageConfig, range]) -> np.ndarray:
    config, block = args
    return np.stack([_coverage_replication((config, r)) for r in block])


def _blocks(total: int, workers: Optional[int]) -> list[range]:
    workers = default_workers() if workers is None else workers
    n_blocks = max(1, min(total, 4 * workers)) if workers > 1 else 1
    edges = np.linspace(0, total, n_blocks + 1).astype(int)
    return [range(a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def run_coverage_study(config: CoverageConfig, workers: Optional[int] = None) -> list[CoverageRow]:
    """Monte-Carlo coverage of every (kind, ESS method) interval.

    Rows are ordered by target sigma, then N, then kind, then method.
    """
    blocks = _blocks(config.replications, workers)
    parts = _map_chunks(_replication_block, [(config, b) for b in blocks], workers)
    results = np.concatenate(parts, axis=0)
    reps = config.replications
    rows = []
    for i, sigma in enumerate(config.target_sigmas):
        for j, n in enumerate(config.sample_sizes):
            for k, kind in enumerate(config.kinds):
                for m, method in enumerate(config.methods):
                    cell = results[:, i, j, k, m]
                    rows.append(
                        CoverageRow(
                            kind=kind,
                            method=method,
                            target_sigma=sigma,
                            n=n,
                            coverage=float(np.count_nonzero(cell[:, 0])) / reps,
                            mean_ci_width=float(np.mean(cell[:, 1])),
                            mean_ess=float(np.mean(cell[:, 2])),
                            mean_value=float(np.mean(cell[:, 3])),
                            value_se=float(np.std(cell[:, 3], ddof=1) / math.sqrt(reps)),
                        )
                    )
    return rows


# -- sample-size reduction ------------------------------------------------------


@dataclass(frozen=True)
class ReductionRow:
    kind: EstimatorKind
    method: EssMethod
    target_sigma: float
    n_star: Optional[int]
    ratio_vs_clt: Optional[float]


def min_sample_size_for_coverage(
    rows: Sequence[CoverageRow], level: float = 0.95
) -> list[ReductionRow]:
    """Smallest grid N from which coverage stays at or above ``level``.

    ``n_star`` is None when the level is not held at the largest N;
    ``ratio_vs_clt`` is ``n_star(CLT) / n_star(method)`` when both exist.
    """
    cells: dict[tuple, list[CoverageRow]] = {}
    for row in rows:
        cells.setdefault((row.kind, row.method, row.target_sigma), []).append(row)
    n_star: dict[tuple, Optional[int]] = {}
    for key, cell in cells.items():
        best = None
        for row in sorted(cell, key=lambda r: r.n, reverse=True):
            if row.coverage < level:
                break
            best = row.n
        n_star[key] = best
    out = []
    for (kind, method, sigma), value in n_star.items():
        clt = n_star.get((kind, EssMethod.CLT_ONLY, sigma))
        ratio = clt / value if clt is not None and value is not None else None
        out.append(ReductionRow(kind, method, sigma, value, ratio))
    return out


# -- curse of dimensionality ---------------------------------------------------


@dataclass(frozen=True)
class CodConfig:
    master_seed: int
    dims: tuple[int, ...] = (1, 2, 4, 8, 16)
    n_samples: int = 100_000
    normal_sigma: float = 0.25
    epsilons: tuple[float, ...] = tuple(round(0.05 * k, 2) for k in range(1, 11))
    cdf_max: float = 1.5

    def __post_init__(self):
        RngSeed(self.master_seed)
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "epsilons", tuple(float(e) for e in self.epsilons))
        if not self.dims or min(self.dims) < 1:
            raise ValidationError("dims must be positive")
        if self.n_samples < 1 or self.normal_sigma <= 0 or self.cdf_max <= 0:
            raise ValidationError("n_samples, normal_sigma and cdf_max must be positive")
        if any(not 0 < e <= 0.5 for e in self.epsilons):
            raise ValidationError("epsilons must lie in (0, 0.5]")


@dataclass(frozen=True)
class CdfRow:
    family: str
    d: int
    normalised_distance: float
    cdf: float


@dataclass(frozen=True)
class MassRow:
    family: str
    d: int
    epsilon: float
    empirical_fraction: float
    analytic_fraction: float
    # (1 - 2 eps)^d: the alternative closed form, kept for comparison
    complement_fraction: float = math.nan


@dataclass
class CodResult:
    cdf: list[CdfRow] = field(default_factory=list)
    mass: list[MassRow] = field(default_factory=list)


FAMILIES = ("uniform", "normal")


def cod_policy(family: str, d: int, normal_sigma: float = 0.25) -> Policy:
    if family == "uniform":
        return UniformBox(np.full(d, -0.5), np.full(d, 0.5))
    if family == "normal":
        return IsotropicGaussian(np.zeros(d), normal_sigma)
    raise ValidationError(f"unknown family {family!r}")


def cod_samples(config: CodConfig, family: str, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Normalised distances ``|x| / sqrt(0.25 d)`` and ``max_k |x_k|`` of the sample."""
    policy = cod_policy(family, d, config.normal_sigma)
    rng = RngSeed(config.master_seed, config.dims.index(d)).generator(FAMILIES.index(family))
    dist = np.empty(config.n_samples)
    maxabs = np.empty(config.n_samples)
    chunk = 1 << 16
    for start in range(0, config.n_samples, chunk):
        stop = min(start + chunk, config.n_samples)
        x = sample(policy, rng, stop - start)
        dist[start:stop] = np.sqrt(np.einsum("ij,ij->i", x, x) / (0.25 * d))
        maxabs[start:stop] = np.abs(x).max(axis=1)
    return dist, maxabs


def _cod_cell(args: tuple[CodConfig, str, int]) -> tuple[list[CdfRow], list[MassRow]]:
    config, family, d = args
    dist, maxabs = cod_samples(config, family, d)
    grid = np.linspace(0.0, config.cdf_max, CDF_GRID_POINTS)
    dist.sort()
    cdf = np.searchsorted(dist, grid, side="right") / config.n_samples
    cdf_rows = [CdfRow(family, d, float(g), float(c)) for g, c in zip(grid, cdf)]
    maxabs.sort()
    mass_rows = []
    for eps in config.epsilons:
        empirical = np.searchsorted(maxabs, eps, side="right") / config.n_samples
        if family == "uniform":
            analytic = (2.0 * eps) ** d
            complement = (1.0 - 2.0 * eps) ** d
        else:
            analytic = (2.0 * float(ndtr(eps / config.normal_sigma)) - 1.0) ** d
            complement = math.nan
        mass_rows.append(MassRow(family, d, eps, float(empirical), analytic, complement))
    return cdf_rows, mass_rows


def run_cod_study(config: CodConfig, workers: Optional[int] = None) -> CodResult:
    """Distance CDFs and central-box mass for uniform and normal sampling."""
    jobs = [(config, family, d) for family in FAMILIES for d in config.dims]
    result = CodResult()
    for cdf_rows, mass_rows in _map_chunks(_cod_cell, jobs, workers):
        result.cdf.extend(cdf_rows)
        result.mass.extend(mass_rows)
    return result
