"""Actions, policies, logged data, and importance weights.

Actions are scalarisation weight vectors in R^d. Policies are distributions
over them; a deterministic policy is only density-queried through a Gaussian
kernel centred on its point. Every density is handled in log space.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence, Union

import numpy as np

from mvopl import kernels

LOG_CONSISTENCY_TOL = 1e-6


class ValidationError(ValueError):
    """Invalid input: bad parameters, dimension mismatch, or corrupt data."""


def _vector(values, name: str) -> tuple[float, ...]:
    arr = np.asarray(values, dtype=np.float64).reshape(-1)
    if arr.size == 0:
        raise ValidationError(f"{name} must have at least one entry")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} must be finite, got {arr.tolist()}")
    return tuple(float(v) for v in arr)


def _positive(values, name: str) -> tuple[float, ...]:
    vec = _vector(values, name)
    if min(vec) <= 0.0:
        raise ValidationError(f"{name} must be strictly positive, got {list(vec)}")
    return vec


def as_action(a, d: Optional[int] = None) -> np.ndarray:
    """Validate an action (or a batch of actions stacked on the first axis)."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if not np.all(np.isfinite(arr)):
        raise ValidationError("actions must be finite")
    if d is not None and arr.shape[-1] != d:
        raise ValidationError(f"action has dimension {arr.shape[-1]}, expected {d}")
    return arr


@dataclass(frozen=True)
class IsotropicGaussian:
    mean: tuple[float, ...]
    sigma: float

    def __post_init__(self):
        object.__setattr__(self, "mean", _vector(self.mean, "mean"))
        object.__setattr__(self, "sigma", _positive([self.sigma], "sigma")[0])

    @property
    def dim(self) -> int:
        return len(self.mean)

    @property
    def sigmas(self) -> tuple[float, ...]:
        return (self.sigma,) * self.dim


@dataclass(frozen=True)
class DiagonalGaussian:
    mean: tuple[float, ...]
    sigmas: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "mean", _vector(self.mean, "mean"))
        object.__setattr__(self, "sigmas", _positive(self.sigmas, "sigmas"))
        if len(self.sigmas) != len(self.mean):
            raise ValidationError("mean and sigmas differ in length")

    @property
    def dim(self) -> int:
        return len(self.mean)


@dataclass(frozen=True)
class UniformBox:
    low: tuple[float, ...]
    high: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "low", _vector(self.low, "low"))
        object.__setattr__(self, "high", _vector(self.high, "high"))
        if len(self.low) != len(self.high):
            raise ValidationError("low and high differ in length")
        if any(lo >= hi for lo, hi in zip(self.low, self.high)):
            raise ValidationError("uniform box needs low < high in every dimension")

    @property
    def dim(self) -> int:
        return len(self.low)

    @property
    def log_volume(self) -> float:
        return float(np.sum(np.log(np.subtract(self.high, self.low))))


@dataclass(frozen=True)
class Deterministic:
    point: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "point", _vector(self.point, "point"))

    @property
    def dim(self) -> int:
        return len(self.point)


Policy = Union[IsotropicGaussian, DiagonalGaussian, UniformBox, Deterministic]
GAUSSIAN_POLICIES = (IsotropicGaussian, DiagonalGaussian)


@dataclass(frozen=True)
class KernelConfig:
    """Diagonal Gaussian bandwidth used to smooth a deterministic policy."""

    bandwidth_sigmas: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(
            self, "bandwidth_sigmas", _positive(self.bandwidth_sigmas, "bandwidth_sigmas")
        )

    @classmethod
    def isotropic(cls, sigma: float, d: int) -> "KernelConfig":
        return cls((float(sigma),) * d)

    @property
    def dim(self) -> int:
        return len(self.bandwidth_sigmas)


@dataclass(frozen=True)
class RngSeed:
    """A reproducible random stream: ``(master_seed, stream_index)``.

    Distinct stream indices under one master seed give independent streams
    (numpy ``SeedSequence`` spawn keys).
    """

    master_seed: int
    stream_index: int = 0

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValidationError("master_seed must be a 64-bit unsigned integer")
        if int(self.stream_index) < 0:
            raise ValidationError("stream_index must be nonnegative")

    def generator(self, *substream: int) -> np.random.Generator:
        seq = np.random.SeedSequence(
            int(self.master_seed), spawn_key=(int(self.stream_index),) + tuple(substream)
        )
        return np.random.Generator(np.random.PCG64(seq))


@dataclass(frozen=True)
class LoggedSample:
    action: tuple[float, ...]
    reward: float
    logging_density: float


@dataclass(eq=False)
class LoggedDataset:
    """N logged ``(action, reward, logging density)`` triples in dimension d.

    Arrays are stored read-only. When ``logging_policy`` is given, every stored
    propensity is checked against it in log space at construction.
    """

    actions: np.ndarray
    rewards: np.ndarray
    logging_density: np.ndarray
    logging_policy: Optional[Policy] = None
    d: int = field(default=0)
    log_logging_density: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        actions = np.array(self.actions, dtype=np.float64, order="C")
        if actions.ndim == 1 and actions.size == 0:
            actions = actions.reshape(0, self.d if self.d else 0)
        if actions.ndim != 2:
            raise ValidationError("actions must be an (N, d) array")
        d = self.d or actions.shape[1]
        if d < 1:
            raise ValidationError("dimension d must be positive")
        if actions.shape[1] != d:
            raise ValidationError(f"actions have dimension {actions.shape[1]}, expected {d}")
        rewards = np.array(self.rewards, dtype=np.float64).reshape(-1)
        density = np.array(self.logging_density, dtype=np.float64).reshape(-1)
        n = actions.shape[0]
        if rewards.shape[0] != n or density.shape[0] != n:
            raise ValidationError("actions, rewards and logging_density differ in length")
        if not np.all(np.isfinite(actions)):
            raise ValidationError("actions must be finite")
        if not np.all(np.isfinite(rewards)):
            raise ValidationError("rewards must be finite")
        bad = np.flatnonzero(~(density > 0.0) | ~np.isfinite(density))
        if bad.size:
            raise ValidationError(
                f"sample {bad[0]} has logging_density {density[bad[0]]!r}; must be positive"
            )
        log_density_ = np.log(density)
        if self.logging_policy is not None:
            if self.logging_policy.dim != d:
                raise ValidationError("logging policy dimension does not match dataset")
            expected = log_density(self.logging_policy, actions) if n else np.empty(0)
            gap = np.abs(log_density_ - expected)
            bad = np.flatnonzero(~(gap <= LOG_CONSISTENCY_TOL))
            if bad.size:
                i = bad[0]
                raise ValidationError(
                    f"sample {i}: stored logging density disagrees with the logging "
                    f"policy (log gap {gap[i]:.3g})"
                )
        for arr in (actions, rewards, density, log_density_):
            arr.setflags(write=False)
        self.actions, self.rewards, self.logging_density = actions, rewards, density
        self.log_logging_density = log_density_
        self.d = d

    @classmethod
    def from_samples(
        cls, samples: Sequence[LoggedSample], d: int, logging_policy: Optional[Policy] = None
    ) -> "LoggedDataset":
        actions = np.array([s.action for s in samples], dtype=np.float64).reshape(-1, d)
        return cls(
            actions=actions,
            rewards=[s.reward for s in samples],
            logging_density=[s.logging_density for s in samples],
            logging_policy=logging_policy,
            d=d,
        )

    @property
    def samples(self) -> Iterator[LoggedSample]:
        for a, r, p in zip(self.actions, self.rewards, self.logging_density):
            yield LoggedSample(tuple(float(x) for x in a), float(r), float(p))

    def __len__(self) -> int:
        return self.actions.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, LoggedDataset):
            return NotImplemented
        return (
            self.d == other.d
            and self.logging_policy == other.logging_policy
            and np.array_equal(self.actions, other.actions)
            and np.array_equal(self.rewards, other.rewards)
            and np.array_equal(self.logging_density, other.logging_density)
        )


def gaussian_params(policy: Policy) -> tuple[np.ndarray, np.ndarray]:
    """Mean and per-dimension standard deviations of a Gaussian policy."""
    if isinstance(policy, IsotropicGaussian):
        return np.asarray(policy.mean), np.full(policy.dim, policy.sigma)
    if isinstance(policy, DiagonalGaussian):
        return np.asarray(policy.mean), np.asarray(policy.sigmas)
    raise ValidationError(f"{type(policy).__name__} is not a Gaussian policy")


def smoothed(policy: Policy, kernel: Optional[KernelConfig]) -> Policy:
    """Replace a deterministic policy by its Gaussian-kernel surrogate."""
    if not isinstance(policy, Deterministic):
        return policy
    if kernel is None:
        raise ValidationError("deterministic policy has no density; supply a KernelConfig")
    if kernel.dim != policy.dim:
        raise ValidationError(f"kernel has dimension {kernel.dim}, policy has {policy.dim}")
    return DiagonalGaussian(policy.point, kernel.bandwidth_sigmas)


def log_density(policy: Policy, a) -> Union[float, np.ndarray]:
    """Log density of ``policy`` at an action, or at each row of a batch.

    Uniform boxes are closed on both ends and give ``-inf`` outside.
    """
    if isinstance(policy, Deterministic):
        raise ValidationError("deterministic policy has no density; supply a KernelConfig")
    arr = as_action(a, policy.dim)
    batch = np.ascontiguousarray(arr.reshape(-1, policy.dim))
    if isinstance(policy, UniformBox):
        inside = np.all((batch >= policy.low) & (batch <= policy.high), axis=1)
        out = np.where(inside, -policy.log_volume, -np.inf)
    else:
        mean, sigmas = gaussian_params(policy)
        out = kernels.diag_gauss_logpdf(batch, mean, sigmas)
    if arr.ndim == 1:
        return float(out[0])
    return np.asarray(out).reshape(arr.shape[:-1])


def kernel_log_density(point, kernel: KernelConfig, a) -> Union[float, np.ndarray]:
    point = as_action(point)
    if point.ndim != 1 or point.shape[0] != kernel.dim:
        raise ValidationError("kernel and point dimensions differ")
    return log_density(DiagonalGaussian(point, kernel.bandwidth_sigmas), a)


def sample(policy: Policy, seed: Union[RngSeed, np.random.Generator], n: int) -> np.ndarray:
    """Draw ``n`` i.i.d. actions as an ``(n, d)`` array."""
    if n < 1:
        raise ValidationError("n must be positive")
    rng = seed.generator() if isinstance(seed, RngSeed) else seed
    if isinstance(policy, Deterministic):
        return np.tile(np.asarray(policy.point), (n, 1))
    if isinstance(policy, UniformBox):
        return rng.uniform(policy.low, policy.high, size=(n, policy.dim))
    mean, sigmas = gaussian_params(policy)
    return rng.standard_normal((n, policy.dim)) * sigmas + mean


def log_importance_weights(
    dataset: LoggedDataset, target: Policy, kernel: Optional[KernelConfig] = None
) -> np.ndarray:
    if target.dim != dataset.d:
        raise ValidationError(f"target has dimension {target.dim}, dataset has {dataset.d}")
    target = smoothed(target, kernel)
    if len(dataset) == 0:
        return np.empty(0)
    return log_density(target, dataset.actions) - dataset.log_logging_density


def importance_weights(
    dataset: LoggedDataset, target: Policy, kernel: Optional[KernelConfig] = None
) -> np.ndarray:
    """``pi_target(a_i) / pi_0(a_i)``, formed as one ``exp`` of a log difference.

    ``kernel`` is required for (and only used with) a deterministic target.
    """
    return np.exp(log_importance_weights(dataset, target, kernel))


def scalarise(scores, weights) -> np.ndarray:
    """Item indices ranked by descending weighted score; ties keep index order."""
    scores = np.asarray(scores, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64).reshape(-1)
    if scores.ndim != 2 or scores.shape[1] != weights.shape[0]:
        raise ValidationError(
            f"scores have {scores.shape[-1]} objectives, weights have {weights.shape[0]}"
        )
    return np.argsort(-(scores @ weights), kind="stable")
