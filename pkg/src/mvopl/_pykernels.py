"""Pure-numpy versions of the compiled kernels in ``_kernels.pyx``.

Both modules expose the same two functions with the same return layout, so
:mod:`mvopl.kernels` can swap one for the other at import time.
"""
import numpy as np

LOG_2PI = float(np.log(2.0 * np.pi))


def diag_gauss_logpdf(actions, mean, sigmas):
    actions = np.asarray(actions, dtype=np.float64)
    mean = np.asarray(mean, dtype=np.float64)
    sigmas = np.asarray(sigmas, dtype=np.float64)
    if actions.ndim != 2 or mean.shape != (actions.shape[1],) or sigmas.shape != mean.shape:
        raise ValueError("dimension mismatch between actions and Gaussian parameters")
    z = (actions - mean) / sigmas
    norm_const = np.log(sigmas).sum() + 0.5 * actions.shape[1] * LOG_2PI
    return -0.5 * np.einsum("ij,ij->i", z, z) - norm_const


def weight_summary(log_w, rewards):
    """Sufficient statistics of max-shifted weights ``exp(log_w - max(log_w))``.

    Returns ``(shift, sum_w, sum_w2, max_w, sum_wr, sum_war, sum_war2, max_war,
    ss_ips, ss_snips, ss_w)`` where every quantity except ``shift`` refers to the
    shifted weights and ``war`` abbreviates ``w * |r|``. ``sum_war2`` is taken
    over ``war / max_war`` so that it cannot underflow.
    """
    log_w = np.asarray(log_w, dtype=np.float64)
    rewards = np.asarray(rewards, dtype=np.float64)
    if rewards.shape != log_w.shape:
        raise ValueError("weights and rewards differ in length")
    n = log_w.shape[0]
    if n == 0:
        raise ValueError("empty input")
    shift = float(log_w.max())
    if shift == -np.inf:
        return (shift,) + (0.0,) * 10
    w = np.exp(log_w - shift)
    wr = w * rewards
    wa = np.abs(wr)
    s_w = float(w.sum())
    s_wr = float(wr.sum())
    ips = s_wr / n
    snips = s_wr / s_w
    return (
        shift,
        s_w,
        float(np.dot(w, w)),
        float(w.max()),
        s_wr,
        float(wa.sum()),
        float(np.sum((wa / wa.max()) ** 2)) if wa.max() > 0 else 0.0,
        float(wa.max()),
        float(np.sum((wr - ips) ** 2)),
        float(np.sum((w * (rewards - snips)) ** 2)),
        float(np.sum((w - s_w / n) ** 2)),
    )
