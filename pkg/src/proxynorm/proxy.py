"""Proxy-normalized activations.

The activation step's output is re-standardized by the mean and variance
it would have if the pre-activation were an idealized Gaussian proxy
Y_c ~ N(beta_tilde_c, (1 + gamma_tilde_c)^2):

    z_tilde = (phi(gamma*y + beta) - m_c) / sqrt(v_c + eps)

with (m_c, v_c) the proxy moments of phi(gamma_c*Y_c + beta_c). Moments
are computed by a deterministic quantile grid: n points uniformly spaced
in probability at midpoints (i + 0.5)/n, mapped through the inverse
normal CDF. The grid is a quadrature, so its variance is the population
(divide-by-n) kind.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._gauss import norm_ppf
from .tensor import ActivationTensor, ChannelParams, ParameterError

inv_norm_cdf = norm_ppf


class DegenerateProxyError(ValueError):
    """The proxy variance plus eps vanished; nothing to divide by."""


@dataclass(frozen=True, eq=False)
class ProxyParams:
    """Per-channel proxy settings.

    beta_tilde / gamma_tilde hold one value per channel, or a single
    value to be broadcast (see broadcast_to). Defaults follow the
    no-extra-parameters variant: beta_tilde = gamma_tilde = 0.
    """

    beta_tilde: np.ndarray
    gamma_tilde: np.ndarray
    eps: float = 0.03
    n_quantiles: int = 200

    def __post_init__(self):
        bt = np.atleast_1d(np.asarray(self.beta_tilde, dtype=np.float64))
        gt = np.atleast_1d(np.asarray(self.gamma_tilde, dtype=np.float64))
        if bt.ndim != 1 or gt.ndim != 1 or bt.shape != gt.shape:
            raise ValueError("beta_tilde and gamma_tilde must be 1-d and same length")
        if not (np.isfinite(bt).all() and np.isfinite(gt).all()):
            raise ValueError("proxy parameters must be finite")
        if not np.isfinite(self.eps) or self.eps < 0:
            raise ValueError("eps must be finite and >= 0")
        if int(self.n_quantiles) < 2:
            raise ValueError("n_quantiles must be >= 2")
        object.__setattr__(self, "beta_tilde", bt)
        object.__setattr__(self, "gamma_tilde", gt)
        object.__setattr__(self, "n_quantiles", int(self.n_quantiles))

    @classmethod
    def zeros(cls, channels, eps=0.03, n_quantiles=200):
        return cls(np.zeros(channels), np.zeros(channels), eps, n_quantiles)

    def broadcast_to(self, channels):
        """This ProxyParams resized to `channels` entries (scalars fan out)."""
        if self.beta_tilde.shape[0] == channels:
            return self
        if self.beta_tilde.shape[0] == 1:
            return ProxyParams(
                np.full(channels, self.beta_tilde[0]),
                np.full(channels, self.gamma_tilde[0]),
                self.eps,
                self.n_quantiles,
            )
        raise ValueError(
            f"proxy arrays of length {self.beta_tilde.shape[0]} cannot "
            f"apply to {channels} channels"
        )


def _grid_moments(phi, gamma, beta, mean, std, n):
    """Vectorized quantile-grid moments per channel.

    All of gamma, beta, mean, std are 1-d arrays of equal length C;
    returns (means, population variances), each length C. This single
    code path serves both the scalar contract and pn_act so the two are
    bit-identical.
    """
    if (std < 0).any():
        raise ParameterError("proxy std must be >= 0")
    n = int(n)
    if n < 2:
        raise ValueError("n must be >= 2")
    q = norm_ppf((np.arange(n) + 0.5) / n)
    y = mean[:, None] + std[:, None] * q[None, :]
    v = phi.apply(gamma[:, None] * y + beta[:, None])
    m = v.mean(axis=1)
    var = np.mean((v - m[:, None]) ** 2, axis=1)
    return m, var


def proxy_moments(phi, gamma_c, beta_c, mean, std, n):
    """(mean, population variance) of phi(gamma_c*Y + beta_c) where
    Y = mean + std*Z, evaluated on the n-point midpoint quantile grid."""
    m, v = _grid_moments(
        phi,
        np.asarray([gamma_c], dtype=np.float64),
        np.asarray([beta_c], dtype=np.float64),
        np.asarray([mean], dtype=np.float64),
        np.asarray([std], dtype=np.float64),
        n,
    )
    return float(m[0]), float(v[0])


def pn_act(
    y: ActivationTensor,
    params: ChannelParams,
    phi,
    proxy: ProxyParams,
) -> ActivationTensor:
    """The proxy-normalized activation step.

    Proxy moments are computed once per channel (never per pixel) under
    Y_c ~ N(beta_tilde_c, (1 + gamma_tilde_c)^2).
    """
    c = y.channels
    if params.channels != c:
        raise ValueError(f"params for {params.channels} channels applied to {c}")
    proxy = proxy.broadcast_to(c)
    m, v = _grid_moments(
        phi,
        params.gamma,
        params.beta,
        proxy.beta_tilde,
        1.0 + proxy.gamma_tilde,
        proxy.n_quantiles,
    )
    denom_sq = v + proxy.eps
    if (denom_sq <= 0.0).any():
        bad = int(np.flatnonzero(denom_sq <= 0.0)[0])
        raise DegenerateProxyError(
            f"channel {bad}: proxy variance plus eps is zero"
        )
    z = phi.apply(y.data * params.gamma + params.beta)
    return ActivationTensor((z - m) / np.sqrt(denom_sq))
