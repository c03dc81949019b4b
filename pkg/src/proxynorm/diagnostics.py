"""Power decomposition and channel-wise linearity measurements.

Per channel c, with mu_{x,c} / sigma_{x,c} the per-sample spatial mean
and population std:

    p1 = (E_x[mu])^2     squared dataset mean
    p2 = Var_x[mu]       variance of instance means
    p3 = (E_x[sigma])^2  squared mean instance std
    p4 = Var_x[sigma]    variance of instance stds

and p1+p2+p3+p4 equals the channel power E[y^2] identically. All E/Var
are over the uniform empirical distribution, i.e. population
(divide-by-n) convention.

Accumulation is single-pass: every element starts as a (count=1, mean,
M2=0) statistic and statistics merge pairwise in a balanced binary tree
(Chan's update), which fixes the summation order and keeps the variance
update stable. The naive two-pass version lives in the test suite as the
oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class InsufficientDataError(ValueError):
    """Fewer samples than the statistic needs."""


@dataclass(frozen=True, eq=False)
class PowerTerms:
    """One power decomposition record; fields are arrays per channel or
    floats at the layer level."""

    p_total: np.ndarray | float
    p1: np.ndarray | float
    p2: np.ndarray | float
    p3: np.ndarray | float
    p4: np.ndarray | float


@dataclass(frozen=True, eq=False)
class PowerDecomposition:
    per_channel: PowerTerms
    layer: PowerTerms
    rho_ratio: float


@dataclass(frozen=True, eq=False)
class LinearFitReport:
    """lam[c] is the least-squares coefficient of phi(y) on y per channel;
    residual_ratio is P(phi(y) - lam*y) / P(phi(y)) over the whole layer."""

    lam: np.ndarray
    residual_ratio: float


def _tree_moments(values, axis):
    """(count, mean, M2) of `values` along `axis` by pairwise merging.

    Returns arrays shaped like `values` with `axis` removed. A trailing
    odd node is carried to the next round unchanged, so counts stay
    balanced within a factor of two.
    """
    vals = np.moveaxis(np.asarray(values, dtype=np.float64), axis, -1)
    mean = np.ascontiguousarray(vals)
    m2 = np.zeros_like(mean)
    counts = np.ones(mean.shape[-1])
    while mean.shape[-1] > 1:
        m = mean.shape[-1]
        pairs = m // 2
        na = counts[0:2 * pairs:2]
        nb = counts[1:2 * pairs:2]
        tot = na + nb
        ma = mean[..., 0:2 * pairs:2]
        mb = mean[..., 1:2 * pairs:2]
        delta = mb - ma
        merged_mean = ma + delta * (nb / tot)
        merged_m2 = (
            m2[..., 0:2 * pairs:2]
            + m2[..., 1:2 * pairs:2]
            + delta * delta * (na * nb / tot)
        )
        if m % 2:
            mean = np.concatenate([merged_mean, mean[..., -1:]], axis=-1)
            m2 = np.concatenate([merged_m2, m2[..., -1:]], axis=-1)
            counts = np.concatenate([tot, counts[-1:]])
        else:
            mean, m2, counts = merged_mean, merged_m2, tot
    return counts[0], mean[..., 0], m2[..., 0]


def streaming_mean_var(values, axis):
    """(mean, population variance) along `axis` via the pairwise tree."""
    count, mean, m2 = _tree_moments(values, axis)
    return mean, m2 / count


def power_decomposition(y) -> PowerDecomposition:
    """Four-term decomposition of the per-channel power of y.

    y is an ActivationTensor or a (n, h, w, c) array; n >= 2 is required
    for the across-sample variances to exist.
    """
    data = getattr(y, "data", y)
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 4:
        raise ValueError(f"expected rank-4 input, got shape {data.shape}")
    n, h, w, c = data.shape
    if n < 2:
        raise InsufficientDataError("power decomposition needs n_samples >= 2")

    flat = data.reshape(n, h * w, c)
    mu, var = streaming_mean_var(flat, axis=1)          # per (sample, channel)
    sigma = np.sqrt(var)

    mu_mean, mu_var = streaming_mean_var(mu, axis=0)    # across samples
    sig_mean, sig_var = streaming_mean_var(sigma, axis=0)

    p1 = mu_mean ** 2
    p2 = mu_var
    p3 = sig_mean ** 2
    p4 = sig_var
    # Total power measured directly (not summed from the terms), so the
    # decomposition identity stays a real check.
    _, sq_mean, _ = _tree_moments((data * data).reshape(n * h * w, c), axis=0)

    per_channel = PowerTerms(sq_mean, p1, p2, p3, p4)
    layer = PowerTerms(
        float(sq_mean.mean()), float(p1.mean()), float(p2.mean()),
        float(p3.mean()), float(p4.mean()),
    )
    return PowerDecomposition(per_channel, layer, _layer_rho(layer))


def _layer_rho(layer: PowerTerms) -> float:
    if layer.p_total == 0.0:
        return 0.0
    return (layer.p_total - layer.p1) / layer.p_total


def rho_ratio(d: PowerDecomposition) -> float:
    """(P - P1)/P at the layer level; 0 for an all-zero tensor."""
    return _layer_rho(d.layer)


def linear_best_fit(y_tilde, phi) -> LinearFitReport:
    """Per-channel least squares of phi(y) on y.

    lam_c = E[y*phi(y)] / E[y^2] over (sample, position), 0 where the
    denominator vanishes. The residual ratio compares the power of
    phi(y) - lam*y against the power of phi(y) over the whole layer and
    is 0 when the latter is 0.
    """
    data = getattr(y_tilde, "data", y_tilde)
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 4:
        raise ValueError(f"expected rank-4 input, got shape {data.shape}")
    n, h, w, c = data.shape
    flat = data.reshape(n * h * w, c)
    phi_vals = phi.apply(flat)

    num = np.mean(flat * phi_vals, axis=0)
    den = np.mean(flat * flat, axis=0)
    lam = np.divide(num, den, out=np.zeros(c), where=den > 0.0)

    resid = phi_vals - lam * flat
    resid_power = float(np.mean(resid * resid))
    signal_power = float(np.mean(phi_vals * phi_vals))
    ratio = 0.0 if signal_power == 0.0 else resid_power / signal_power
    return LinearFitReport(lam, ratio)
