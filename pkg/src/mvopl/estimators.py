"""IPS/SNIPS value estimates, variances, ESS corrections and intervals.

The effective sample size of the importance weights deflates the sample size
used inside the variance estimate and the interval, widening intervals when
the weights are concentrated on a few samples.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from enum import Enum
from typing import NamedTuple, Optional

import numpy as np
from scipy.special import ndtr, ndtri

from mvopl import kernels
from mvopl.core import (
    KernelConfig,
    LoggedDataset,
    Policy,
    ValidationError,
    log_importance_weights,
)

DEGENERATE_EPS = 1e-9


class DegenerateSampleSizeError(ValidationError):
    """Effective sample size too close to one for a variance estimate."""


class ZeroMassError(ValidationError):
    """All importance weights are zero."""


class EssMethod(str, Enum):
    CLT_ONLY = "clt"
    P2 = "p2"
    P2R = "p2r"
    DINF = "dinf"
    DINFR = "dinfr"

    @property
    def reward_dependent(self) -> bool:
        return self in (EssMethod.P2R, EssMethod.DINFR)

    @property
    def reward_free(self) -> "EssMethod":
        return {EssMethod.P2R: EssMethod.P2, EssMethod.DINFR: EssMethod.DINF}.get(self, self)


class EstimatorKind(str, Enum):
    IPS = "ips"
    SNIPS = "snips"


@dataclass(frozen=True)
class EvaluationReport:
    kind: EstimatorKind
    method: EssMethod
    n: int
    value: float
    variance: float
    ess: float
    n_tilde: float
    ci_low: float
    ci_high: float
    alpha: float
    mean_weight: float
    max_normalized_weight: float
    support_flag: bool

    @property
    def ci_width(self) -> float:
        return self.ci_high - self.ci_low

    def to_dict(self) -> dict:
        out = asdict(self)
        out["kind"] = self.kind.value
        out["method"] = self.method.value
        return out


def normal_quantile(p: float) -> float:
    """Standard normal quantile function."""
    if not 0.0 < p < 1.0:
        raise ValidationError(f"quantile level must lie in (0, 1), got {p}")
    return float(ndtri(p))


def z_for_alpha(alpha: float) -> float:
    if not 0.0 < alpha < 1.0:
        raise ValidationError(f"alpha must lie in (0, 1), got {alpha}")
    return normal_quantile(1.0 - alpha / 2.0)


def alpha_for_z(z: float) -> float:
    return float(2.0 * (1.0 - ndtr(z)))


def _pair(weights, rewards) -> tuple[np.ndarray, np.ndarray]:
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    r = np.asarray(rewards, dtype=np.float64).reshape(-1)
    if w.shape != r.shape:
        raise ValidationError("weights and rewards differ in length")
    if w.size == 0:
        raise ValidationError("empty input")
    if np.any(w < 0):
        raise ValidationError("importance weights must be nonnegative")
    return w, r


def ips_value(weights, rewards) -> float:
    w, r = _pair(weights, rewards)
    return float(np.mean(w * r))


def snips_value(weights, rewards) -> float:
    w, r = _pair(weights, rewards)
    total = w.sum()
    if total <= 0:
        raise ZeroMassError("zero effective mass under target policy")
    return float(np.dot(w, r) / total)


def _check_n_eff(n_eff: float) -> None:
    if n_eff <= 1.0 + DEGENERATE_EPS:
        raise DegenerateSampleSizeError(f"degenerate effective sample size {n_eff!r}")


def ips_variance(weights, rewards, ips: float, n_eff: float) -> float:
    _check_n_eff(n_eff)
    w, r = _pair(weights, rewards)
    return float(np.sum((w * r - ips) ** 2) / (n_eff - 1.0))


def snips_variance(weights, rewards, snips: float, n_eff: float) -> float:
    """Delta-method variance of SNIPS with ``n_eff - 1`` as the normaliser.

    The mean-weight factor in the denominator always averages over the true
    dataset size.
    """
    _check_n_eff(n_eff)
    w, r = _pair(weights, rewards)
    mean_w = w.mean()
    if mean_w <= 0:
        raise ZeroMassError("zero effective mass under target policy")
    return float(np.sum((w * r - w * snips) ** 2) / ((n_eff - 1.0) * mean_w**2))


def ess(weights, rewards=None, method: EssMethod = EssMethod.P2) -> float:
    """Effective sample size of the weights, clipped to ``[1, N]``.

    Reward-dependent methods normalise ``w * |r|``; when every such product is
    zero they fall back to their reward-free counterpart.
    """
    method = EssMethod(method)
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    n = w.size
    if n == 0:
        raise ValidationError("empty input")
    if method is EssMethod.CLT_ONLY:
        return float(n)
    if w.sum() <= 0:
        raise ZeroMassError("zero effective mass under target policy")
    if method.reward_dependent:
        if rewards is None:
            raise ValidationError(f"ESS method {method.value} needs rewards")
        w, r = _pair(w, rewards)
        w_r = w * np.abs(r)
        if w_r.sum() > 0:
            w = w_r
        method = method.reward_free
    w_bar = w / w.sum()
    if method is EssMethod.P2:
        value = 1.0 / np.dot(w_bar, w_bar)
    else:
        value = 1.0 / w_bar.max()
    return float(min(max(value, 1.0), n))


def corrected_sample_size(n: int, ess: float) -> float:
    """``1 + n (ess - 1) / ess``: equals n at ess = n and 1 at ess = 1."""
    if not 1.0 <= ess <= n:
        raise ValidationError(f"ESS {ess!r} outside [1, {n}]")
    return min(max(1.0 + n * (ess - 1.0) / ess, 1.0), float(n))


def _half_width(var_ess: float, n_tilde: float, z: float) -> float:
    if n_tilde <= 1.0 + DEGENERATE_EPS:
        return math.inf
    return z * math.sqrt(var_ess / n_tilde)


def confidence_interval(
    value: float, var_ess: float, n_tilde: float, alpha: float = 0.05
) -> tuple[float, float]:
    if var_ess < 0:
        raise ValidationError("variance must be nonnegative")
    hw = _half_width(var_ess, n_tilde, z_for_alpha(alpha))
    return value - hw, value + hw


def support_diagnostics(weights) -> tuple[float, bool]:
    """Mean weight and a three-sigma flag for ``E[w] != 1``.

    Under common support the weights average to one; a mean further than
    ``3 sd / sqrt(N)`` from one points at support violation or severe
    mismatch, and a SNIPS value should not be trusted without a look.
    """
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    mean_w = float(w.mean())
    if w.size < 2:
        return mean_w, False
    sd = float(w.std(ddof=1))
    return mean_w, bool(abs(mean_w - 1.0) > 3.0 * sd / math.sqrt(w.size))


def baseline_shifted_ips(weights, rewards, beta: float) -> float:
    w, r = _pair(weights, rewards)
    return float(beta + np.mean(w * (r - beta)))


class WeightSummary(NamedTuple):
    """Single-pass statistics of ``w' = exp(log_w - shift)``, ``shift = max log_w``.

    IPS-type quantities scale with ``exp(shift)``; SNIPS and ESS quantities
    are scale free and never see the shift.
    """

    n: int
    shift: float
    sum_w: float
    sum_w2: float
    max_w: float
    sum_wr: float
    sum_war: float
    sum_war2: float  # of (w' |r| / max_war)^2
    max_war: float
    ss_ips: float
    ss_snips: float
    ss_w: float

    @classmethod
    def from_log_weights(cls, log_w, rewards) -> "WeightSummary":
        log_w = np.ascontiguousarray(log_w, dtype=np.float64)
        rewards = np.ascontiguousarray(rewards, dtype=np.float64)
        return cls(log_w.shape[0], *kernels.weight_summary(log_w, rewards))

    @property
    def scale(self) -> float:
        return math.exp(self.shift) if self.shift != -math.inf else 0.0

    def ess(self, method: EssMethod) -> float:
        if method is EssMethod.CLT_ONLY:
            return float(self.n)
        if self.sum_w <= 0:
            raise ZeroMassError("zero effective mass under target policy")
        # max_w is 1 after the shift; sum_war2 is already relative to max_war
        if method.reward_dependent and self.max_war > 0:
            ratio, s2 = self.sum_war / self.max_war, self.sum_war2
        else:
            ratio, s2 = self.sum_w / self.max_w, self.sum_w2 / (self.max_w * self.max_w)
        value = ratio * ratio / s2 if method.reward_free is EssMethod.P2 else ratio
        return min(max(value, 1.0), float(self.n))

    def interval(
        self, kind: EstimatorKind, method: EssMethod, z: float
    ) -> tuple[float, float, float, float, float, float]:
        """``(value, variance, ess, n_tilde, low, high)`` for one estimator."""
        n = self.n
        ess_ = self.ess(method)
        n_tilde = corrected_sample_size(n, ess_)
        if kind is EstimatorKind.IPS:
            scale = self.scale
            value = scale * self.sum_wr / n
            ss = scale * scale * self.ss_ips
        else:
            if self.sum_w <= 0:
                raise ZeroMassError("zero effective mass under target policy")
            value = self.sum_wr / self.sum_w
            mean_w = self.sum_w / n
            ss = self.ss_snips / (mean_w * mean_w)
        if n_tilde <= 1.0 + DEGENERATE_EPS:
            return value, math.inf, ess_, n_tilde, -math.inf, math.inf
        variance = ss / (n_tilde - 1.0)
        hw = _half_width(variance, n_tilde, z)
        return value, variance, ess_, n_tilde, value - hw, value + hw


def report_from_summary(
    summary: WeightSummary, kind: EstimatorKind, method: EssMethod, alpha: float
) -> EvaluationReport:
    kind, method = EstimatorKind(kind), EssMethod(method)
    value, variance, ess_, n_tilde, low, high = summary.interval(
        kind, method, z_for_alpha(alpha)
    )
    n, scale = summary.n, summary.scale
    mean_w = scale * summary.sum_w / n
    if n >= 2:
        sd = scale * math.sqrt(summary.ss_w / (n - 1))
        flag = abs(mean_w - 1.0) > 3.0 * sd / math.sqrt(n)
    else:
        flag = False
    return EvaluationReport(
        kind=kind,
        method=method,
        n=n,
        value=value,
        variance=variance,
        ess=ess_,
        n_tilde=n_tilde,
        ci_low=low,
        ci_high=high,
        alpha=alpha,
        mean_weight=mean_w,
        max_normalized_weight=summary.max_w / summary.sum_w if summary.sum_w > 0 else 0.0,
        support_flag=bool(flag),
    )


def evaluate(
    dataset: LoggedDataset,
    target: Policy,
    kernel: Optional[KernelConfig] = None,
    kind: EstimatorKind = EstimatorKind.SNIPS,
    method: EssMethod = EssMethod.DINFR,
    alpha: float = 0.05,
) -> EvaluationReport:
    """Point estimate, ESS-corrected variance and interval, and diagnostics.

    With ``method=EssMethod.CLT_ONLY`` this is the classical CLT interval.
    """
    if len(dataset) == 0:
        raise ValidationError("cannot evaluate on an empty dataset")
    log_w = log_importance_weights(dataset, target, kernel)
    summary = WeightSummary.from_log_weights(log_w, dataset.rewards)
    return report_from_summary(summary, kind, method, alpha)
