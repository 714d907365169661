"""Pessimistic policy learning over deterministic scalarisation weights.

The objective is the lower end of the ESS-corrected interval for a
deterministic policy smoothed by a Gaussian kernel. It is maximised by
gradient ascent on central-difference gradients with a halving line search.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from mvopl.core import (
    Deterministic,
    KernelConfig,
    LoggedDataset,
    ValidationError,
    as_action,
    gaussian_params,
)
from mvopl.estimators import (
    EssMethod,
    EstimatorKind,
    EvaluationReport,
    WeightSummary,
    ZeroMassError,
    alpha_for_z,
    evaluate,
)
from mvopl import kernels

MAX_HALVINGS = 30


@dataclass(frozen=True)
class CrmConfig:
    kernel: KernelConfig
    kind: EstimatorKind = EstimatorKind.SNIPS
    method: EssMethod = EssMethod.DINFR
    z: float = 1.959964  # 0 is allowed and gives the point estimate
    step_size: float = 1.0
    max_iters: int = 200
    grad_tol: float = 1e-6
    fd_step: float = 1e-4

    def __post_init__(self):
        object.__setattr__(self, "kind", EstimatorKind(self.kind))
        object.__setattr__(self, "method", EssMethod(self.method))
        if not (math.isfinite(self.z) and self.z >= 0):
            raise ValidationError(f"z must be nonnegative, got {self.z!r}")
        for name in ("step_size", "grad_tol", "fd_step"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValidationError(f"{name} must be positive, got {value!r}")
        if self.max_iters < 0:
            raise ValidationError("max_iters must be nonnegative")


@dataclass
class LearnResult:
    mu: np.ndarray
    final_report: EvaluationReport
    trajectory: list[tuple[int, float, float]] = field(default_factory=list)

    @property
    def objective(self) -> float:
        return self.trajectory[-1][1]


def _summary(dataset: LoggedDataset, mu: np.ndarray, kernel: KernelConfig) -> WeightSummary:
    if kernel.dim != dataset.d:
        raise ValidationError(f"kernel has dimension {kernel.dim}, dataset has {dataset.d}")
    log_t = kernels.diag_gauss_logpdf(
        dataset.actions, np.ascontiguousarray(mu, dtype=np.float64),
        np.asarray(kernel.bandwidth_sigmas),
    )
    return WeightSummary.from_log_weights(log_t - dataset.log_logging_density, dataset.rewards)


def crm_lower_bound(dataset: LoggedDataset, mu, config: CrmConfig) -> float:
    """Point estimate minus ``z`` ESS-corrected standard errors.

    Returns ``-inf`` where the corrected sample size collapses to one.
    """
    if len(dataset) == 0:
        raise ValidationError("cannot evaluate on an empty dataset")
    mu = as_action(mu, dataset.d)
    summary = _summary(dataset, mu, config.kernel)
    _, _, _, _, low, _ = summary.interval(config.kind, config.method, config.z)
    return low


def snips_analytic_gradient(dataset: LoggedDataset, mu, kernel: KernelConfig) -> np.ndarray:
    """Gradient of the kernel-smoothed SNIPS value with respect to the policy point.

    With normalised weights ``wbar`` this is
    ``sum_i wbar_i (r_i - snips) (a_i - mu) / sigma**2``.
    """
    mu = as_action(mu, dataset.d)
    sig = np.asarray(kernel.bandwidth_sigmas)
    log_t = kernels.diag_gauss_logpdf(dataset.actions, np.ascontiguousarray(mu), sig)
    log_w = log_t - dataset.log_logging_density
    shift = log_w.max()
    if shift == -np.inf:
        raise ZeroMassError("zero effective mass under target policy")
    w = np.exp(log_w - shift)
    w_bar = w / w.sum()
    centred = dataset.rewards - np.dot(w_bar, dataset.rewards)
    return ((w_bar * centred) @ (dataset.actions - mu)) / sig**2


def finite_difference_gradient(
    objective: Callable[[np.ndarray], float], mu, h: float = 1e-4
) -> np.ndarray:
    """Central differences with per-coordinate step ``h * (1 + |mu_k|)``."""
    mu = np.asarray(mu, dtype=np.float64).reshape(-1)
    grad = np.empty_like(mu)
    for k in range(mu.size):
        step = h * (1.0 + abs(mu[k]))
        up, down = mu.copy(), mu.copy()
        up[k] += step
        down[k] -= step
        f_up, f_down = objective(up), objective(down)
        if not (math.isfinite(f_up) and math.isfinite(f_down)):
            raise ValidationError(f"objective is not finite near mu along coordinate {k}")
        grad[k] = (f_up - f_down) / (up[k] - down[k])
    return grad


def learn(
    dataset: LoggedDataset, config: CrmConfig, init: Optional[np.ndarray] = None
) -> LearnResult:
    """Maximise :func:`crm_lower_bound` from ``init``.

    ``init`` defaults to the logging policy's mean (the production weights)
    or the origin when no logging policy is recorded. Each iteration tries the
    full step and halves it until the objective does not decrease; the run
    stops at ``max_iters``, when the gradient norm drops below ``grad_tol``,
    or when no halving yields an improvement.
    """
    if init is None:
        try:
            init = gaussian_params(dataset.logging_policy)[0]
        except ValidationError:
            init = np.zeros(dataset.d)
    mu = np.array(as_action(init, dataset.d), dtype=np.float64)

    def objective(x: np.ndarray) -> float:
        return crm_lower_bound(dataset, x, config)

    value = objective(mu)
    if not math.isfinite(value):
        raise ValidationError(
            "initial point has degenerate effective sample size; widen kernel or change init"
        )
    trajectory: list[tuple[int, float, float]] = []
    for it in range(config.max_iters):
        grad = finite_difference_gradient(objective, mu, config.fd_step)
        norm = float(np.linalg.norm(grad))
        trajectory.append((it, value, norm))
        if norm < config.grad_tol:
            break
        step = config.step_size
        for _ in range(MAX_HALVINGS + 1):
            candidate = mu + step * grad
            cand_value = objective(candidate)
            if cand_value >= value:
                break
            step *= 0.5
        else:
            break
        if cand_value == value and np.array_equal(candidate, mu):
            break
        mu, value = candidate, cand_value
    else:
        grad = finite_difference_gradient(objective, mu, config.fd_step)
        trajectory.append((config.max_iters, value, float(np.linalg.norm(grad))))
    report = evaluate(
        dataset,
        Deterministic(mu),
        config.kernel,
        config.kind,
        config.method,
        # z = 0 maximises the bare point estimate; report a 95% interval then
        alpha_for_z(config.z) if config.z > 0 else 0.05,
    )
    return LearnResult(mu=mu, final_report=report, trajectory=trajectory)
