"""Rank-4 tensor containers, the seeded RNG, and sampling distributions.

Activations live in (sample, height, width, channel) order, kernels in
(kh, kw, c_in, c_out); both store contiguous float64 and reject
non-finite entries at construction, so every downstream operation can
assume clean data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._gauss import norm_ppf

_MAX_REJECTION_ROUNDS = 1000


class ParameterError(ValueError):
    """A distribution or RNG parameter is out of its legal range."""


def _as_clean_array(data, rank, what):
    arr = np.ascontiguousarray(np.asarray(data, dtype=np.float64))
    if arr.ndim != rank:
        raise ValueError(f"{what} must be rank-{rank}, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{what} contains non-finite entries")
    return arr


@dataclass(frozen=True, eq=False)
class ActivationTensor:
    """Dense (n_samples, height, width, channels) activations."""

    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _as_clean_array(self.data, 4, "activation tensor"))

    @classmethod
    def from_flat(cls, shape, flat):
        n, h, w, c = (int(s) for s in shape)
        flat = np.asarray(flat, dtype=np.float64)
        if flat.ndim != 1 or flat.size != n * h * w * c:
            raise ValueError(
                f"flat data of length {flat.size} does not fill shape {(n, h, w, c)}"
            )
        return cls(flat.reshape(n, h, w, c))

    @property
    def shape(self):
        return self.data.shape

    @property
    def n_samples(self):
        return self.data.shape[0]

    @property
    def height(self):
        return self.data.shape[1]

    @property
    def width(self):
        return self.data.shape[2]

    @property
    def channels(self):
        return self.data.shape[3]


@dataclass(frozen=True, eq=False)
class Kernel:
    """Convolution weights (kh, kw, c_in, c_out); kh and kw must be odd."""

    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _as_clean_array(self.data, 4, "kernel"))
        kh, kw = self.data.shape[:2]
        if kh % 2 == 0 or kw % 2 == 0:
            raise ValueError(f"kernel spatial dims must be odd, got {kh}x{kw}")

    @property
    def shape(self):
        return self.data.shape

    @property
    def c_in(self):
        return self.data.shape[2]

    @property
    def c_out(self):
        return self.data.shape[3]

    @property
    def fan_in(self):
        kh, kw, cin, _ = self.data.shape
        return kh * kw * cin


@dataclass(frozen=True, eq=False)
class ChannelParams:
    """Per-channel affine scale and shift."""

    gamma: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "gamma", _as_clean_array(self.gamma, 1, "gamma"))
        object.__setattr__(self, "beta", _as_clean_array(self.beta, 1, "beta"))
        if self.gamma.shape != self.beta.shape:
            raise ValueError("gamma and beta must have the same length")

    @property
    def channels(self):
        return self.gamma.shape[0]


class Rng:
    """Deterministic random stream.

    Wraps a Philox 4x64 counter generator but consumes only its raw
    64-bit output; uniforms are u = ((raw >> 11) + 0.5) * 2**-53 (open
    interval) and normals go through the package's own inverse-CDF, so
    identical seeds give bit-identical float streams on any platform.
    """

    def __init__(self, seed):
        seed = int(seed)
        if not 0 <= seed < 2 ** 64:
            raise ParameterError("seed must be a 64-bit unsigned integer")
        self.seed = seed
        self._bits = np.random.Philox(key=seed)

    def raw64(self, n):
        return self._bits.random_raw(n)

    def uniform(self, n):
        """n doubles strictly inside (0, 1)."""
        r = self.raw64(n) >> np.uint64(11)
        u = r.astype(np.float64)
        np.add(u, 0.5, out=u)
        np.multiply(u, 2.0 ** -53, out=u)
        return u

    def standard_normal(self, n):
        return norm_ppf(self.uniform(n))


def derive_seed(seed, stream):
    """Decorrelated 64-bit child seed (splitmix64 finalizer).

    Used where one recorded seed must drive several independent streams,
    e.g. a net's parameters and its input batch.
    """
    x = (int(seed) + (int(stream) + 1) * 0x9E3779B97F4A7C15) % 2 ** 64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) % 2 ** 64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) % 2 ** 64
    return x ^ (x >> 31)


def _check_finite_params(*vals):
    if not all(np.isfinite(v) for v in vals):
        raise ParameterError("distribution parameters must be finite")


@dataclass(frozen=True)
class Normal:
    mean: float
    std: float

    def __post_init__(self):
        _check_finite_params(self.mean, self.std)
        if self.std < 0:
            raise ParameterError("std must be >= 0")


@dataclass(frozen=True)
class TruncatedNormal:
    """Normal(mean, std) conditioned on [lo, hi] by rejection; the std is
    not renormalized after truncation."""

    mean: float
    std: float
    lo: float
    hi: float

    def __post_init__(self):
        _check_finite_params(self.mean, self.std, self.lo, self.hi)
        if self.std < 0:
            raise ParameterError("std must be >= 0")
        if not self.lo < self.hi:
            raise ParameterError("truncation requires lo < hi")


@dataclass(frozen=True)
class Constant:
    value: float

    def __post_init__(self):
        _check_finite_params(self.value)


Distribution = Normal | TruncatedNormal | Constant


def sample(dist, rng, n):
    """n i.i.d. draws from dist as a float64 array."""
    n = int(n)
    if n < 1:
        raise ValueError("n must be >= 1")
    if isinstance(dist, Constant):
        return np.full(n, float(dist.value))
    if isinstance(dist, Normal):
        if dist.std == 0.0:
            return np.full(n, float(dist.mean))
        z = rng.standard_normal(n)
        np.multiply(z, dist.std, out=z)
        np.add(z, dist.mean, out=z)
        return z
    if isinstance(dist, TruncatedNormal):
        return _sample_truncated(dist, rng, n)
    raise ParameterError(f"unknown distribution {dist!r}")


def _sample_truncated(dist, rng, n):
    if dist.std == 0.0:
        if dist.lo <= dist.mean <= dist.hi:
            return np.full(n, float(dist.mean))
        raise ParameterError("degenerate truncated normal: mean outside [lo, hi]")
    out = sample(Normal(dist.mean, dist.std), rng, n)
    bad = (out < dist.lo) | (out > dist.hi)
    rounds = 0
    while bad.any():
        rounds += 1
        if rounds > _MAX_REJECTION_ROUNDS:
            raise ParameterError("truncation interval has negligible probability mass")
        redraw = sample(Normal(dist.mean, dist.std), rng, int(bad.sum()))
        out[bad] = redraw
        bad[bad] = (redraw < dist.lo) | (redraw > dist.hi)
    return out


def second_moment(dist):
    """E[X^2] of a distribution, in closed form.

    For the truncated case, with a=(lo-mean)/std, b=(hi-mean)/std and
    Z = Phi(b) - Phi(a):
        E[Zt]   = (pdf(a) - pdf(b)) / Z
        E[Zt^2] = 1 + (a*pdf(a) - b*pdf(b)) / Z
        E[X^2]  = mean^2 + 2*mean*std*E[Zt] + std^2*E[Zt^2]
    """
    if isinstance(dist, Constant):
        return float(dist.value) ** 2
    if isinstance(dist, Normal):
        return float(dist.mean) ** 2 + float(dist.std) ** 2
    if isinstance(dist, TruncatedNormal):
        if dist.std == 0.0:
            return float(dist.mean) ** 2
        from scipy.special import ndtr

        a = (dist.lo - dist.mean) / dist.std
        b = (dist.hi - dist.mean) / dist.std
        mass = ndtr(b) - ndtr(a)
        if mass <= 0.0:
            raise ParameterError("truncation interval has no probability mass")
        pdf_a = np.exp(-0.5 * a * a) / np.sqrt(2.0 * np.pi)
        pdf_b = np.exp(-0.5 * b * b) / np.sqrt(2.0 * np.pi)
        ez = (pdf_a - pdf_b) / mass
        ez2 = 1.0 + (a * pdf_a - b * pdf_b) / mass
        return float(dist.mean ** 2 + 2.0 * dist.mean * dist.std * ez + dist.std ** 2 * ez2)
    raise ParameterError(f"unknown distribution {dist!r}")


def fan_in_scaled_kernel(dist, rng, shape):
    """Kernel of i.i.d. draws divided by sqrt(kh*kw*c_in).

    Entries are drawn in row-major (kh, kw, c_in, c_out) order, which
    fixes the stream layout for reproducibility.
    """
    kh, kw, cin, cout = (int(s) for s in shape)
    if min(kh, kw, cin, cout) < 1:
        raise ValueError(f"invalid kernel shape {shape}")
    draws = sample(dist, rng, kh * kw * cin * cout)
    np.multiply(draws, 1.0 / np.sqrt(kh * kw * cin), out=draws)
    return Kernel(draws.reshape(kh, kw, cin, cout))
