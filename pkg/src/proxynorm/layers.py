"""Propagation steps: periodic convolution, normalization, activation.

A layer maps z -> conv_periodic -> x -> normalize -> y -> act -> z'.
Normalizers differ only in their conditioning set: per channel over the
whole batch (BatchNorm), per sample (LayerNorm), per sample and channel
(InstanceNorm), or per sample and channel-class mod G (GroupNorm).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .tensor import ActivationTensor, ChannelParams, Kernel


class ConfigurationError(ValueError):
    """A norm or layer configuration that cannot apply to the given tensor."""


class DegenerateKernelError(ValueError):
    """Weight standardization hit a zero-variance fan-in slice."""


@dataclass(frozen=True)
class BatchNorm:
    eps: float = 0.0

    def __post_init__(self):
        _check_eps(self.eps)


@dataclass(frozen=True)
class LayerNorm:
    eps: float = 0.0

    def __post_init__(self):
        _check_eps(self.eps)


@dataclass(frozen=True)
class InstanceNorm:
    eps: float = 0.0

    def __post_init__(self):
        _check_eps(self.eps)


@dataclass(frozen=True)
class GroupNorm:
    groups: int
    eps: float = 0.0

    def __post_init__(self):
        if int(self.groups) < 1:
            raise ConfigurationError("groups must be >= 1")
        _check_eps(self.eps)


def _check_eps(eps):
    if not np.isfinite(eps) or eps < 0:
        raise ValueError("eps must be finite and >= 0")


NormKind = BatchNorm | LayerNorm | InstanceNorm | GroupNorm


@dataclass(frozen=True)
class Identity:
    def apply(self, u):
        return np.asarray(u, dtype=np.float64)


@dataclass(frozen=True)
class ReLU:
    def apply(self, u):
        return np.maximum(u, 0.0)


@dataclass(frozen=True)
class TwoSlope:
    """a_pos * max(u, 0) + a_neg * min(u, 0); ReLU is (1, 0), Identity (1, 1)."""

    a_pos: float
    a_neg: float

    def apply(self, u):
        return self.a_pos * np.maximum(u, 0.0) + self.a_neg * np.minimum(u, 0.0)


@dataclass(frozen=True)
class Swish:
    def apply(self, u):
        return u * expit(u)


Activation = Identity | ReLU | TwoSlope | Swish


def is_positive_homogeneous(phi):
    """phi(k*u) = k*phi(u) for k > 0: the two-slope family."""
    return isinstance(phi, (Identity, ReLU, TwoSlope))


def conv_periodic(z: ActivationTensor, w: Kernel, stride: int = 1) -> ActivationTensor:
    """Periodic-boundary convolution (cross-correlation indexing).

    out[s, i, j, co] = sum over (ki, kj, ci) of
        w[ki, kj, ci, co] * z[s, (i*stride + ki - kh//2) % h,
                                 (j*stride + kj - kw//2) % w, ci]
    """
    if z.channels != w.c_in:
        raise ValueError(
            f"channel mismatch: tensor has {z.channels}, kernel expects {w.c_in}"
        )
    if stride not in (1, 2):
        raise ValueError("stride must be 1 or 2")
    n, h, wd, cin = z.shape
    if h % stride or wd % stride:
        raise ValueError("height and width must be divisible by the stride")
    kh, kw = w.shape[:2]
    ho, wo = h // stride, wd // stride

    acc = np.zeros((n * ho * wo, w.c_out))
    data = z.data
    for ki in range(kh):
        di = ki - kh // 2
        rolled_i = np.roll(data, -di, axis=1) if di else data
        for kj in range(kw):
            dj = kj - kw // 2
            rolled = np.roll(rolled_i, -dj, axis=2) if dj else rolled_i
            if stride > 1:
                rolled = rolled[:, ::stride, ::stride, :]
            acc += rolled.reshape(n * ho * wo, cin) @ w.data[ki, kj]
    return ActivationTensor(acc.reshape(n, ho, wo, w.c_out))


def _conditioning_stats(x: ActivationTensor, kind: NormKind):
    """Mean and population variance over the conditioning set, broadcast
    back to the tensor's shape."""
    d = x.data
    n, h, w, c = d.shape
    if isinstance(kind, BatchNorm):
        if n * h * w < 2:
            raise ValueError("BatchNorm needs at least two values per channel")
        mu = d.mean(axis=(0, 1, 2), keepdims=True)
        var = d.var(axis=(0, 1, 2), keepdims=True)
        return mu, var
    if isinstance(kind, LayerNorm):
        mu = d.mean(axis=(1, 2, 3), keepdims=True)
        var = d.var(axis=(1, 2, 3), keepdims=True)
        return mu, var
    if isinstance(kind, InstanceNorm):
        mu = d.mean(axis=(1, 2), keepdims=True)
        var = d.var(axis=(1, 2), keepdims=True)
        return mu, var
    if isinstance(kind, GroupNorm):
        g = int(kind.groups)
        if c % g:
            raise ConfigurationError(f"{g} groups do not divide {c} channels")
        # Channels c' with c' = c mod G share a group: reshape the channel
        # axis to (c//g, g) so the last axis indexes the congruence class.
        grouped = d.reshape(n, h, w, c // g, g)
        mu = grouped.mean(axis=(1, 2, 3), keepdims=True)
        var = grouped.var(axis=(1, 2, 3), keepdims=True)
        shape = (n, h, w, c)
        return (
            np.broadcast_to(mu, grouped.shape).reshape(shape),
            np.broadcast_to(var, grouped.shape).reshape(shape),
        )
    raise ConfigurationError(f"unknown norm kind {kind!r}")


def normalize(x: ActivationTensor, kind: NormKind) -> ActivationTensor:
    """(x - mu) / sqrt(var + eps) over the kind's conditioning set.

    Where the set's variance and eps are both zero the output is zero
    over that set (the 0/0 convention); see degenerate_set_count to
    detect that case instead of silently accepting it.
    """
    mu, var = _conditioning_stats(x, kind)
    denom = np.sqrt(var + kind.eps)
    centered = x.data - mu
    out = np.divide(
        centered, denom, out=np.zeros_like(centered), where=denom > 0.0
    )
    return ActivationTensor(out)


def degenerate_set_count(x: ActivationTensor, kind: NormKind) -> int:
    """Number of conditioning sets whose variance is exactly zero."""
    _, var = _conditioning_stats(x, kind)
    if isinstance(kind, GroupNorm):
        # var was broadcast back to full shape; count distinct sets only
        g = int(kind.groups)
        n, h, w, c = x.shape
        var = var.reshape(n, h, w, c // g, g)[:, 0, 0, 0, :]
    return int(np.count_nonzero(var == 0.0))


def act(y: ActivationTensor, params: ChannelParams, phi) -> ActivationTensor:
    """z = phi(gamma_c * y + beta_c)."""
    if params.channels != y.channels:
        raise ValueError(
            f"params for {params.channels} channels applied to {y.channels}"
        )
    u = y.data * params.gamma + params.beta
    return ActivationTensor(phi.apply(u))


def affine_image(y: ActivationTensor, params: ChannelParams) -> ActivationTensor:
    """gamma_c * y + beta_c without the nonlinearity (the pre-activation)."""
    if params.channels != y.channels:
        raise ValueError(
            f"params for {params.channels} channels applied to {y.channels}"
        )
    return ActivationTensor(y.data * params.gamma + params.beta)


def weight_standardize(w: Kernel) -> Kernel:
    """Per output channel: fan-in entries shifted/scaled to mean 0, population
    std 1. The stability constant is zero, so a zero-variance slice is an
    error rather than a silent division."""
    kh, kw, cin, cout = w.shape
    fan_in = kh * kw * cin
    if fan_in < 2:
        raise ValueError("weight standardization needs fan-in >= 2")
    flat = w.data.reshape(fan_in, cout)
    mu = flat.mean(axis=0)
    std = flat.std(axis=0)
    if (std == 0.0).any():
        bad = int(np.flatnonzero(std == 0.0)[0])
        raise DegenerateKernelError(
            f"output channel {bad} has zero fan-in variance"
        )
    return Kernel(((flat - mu) / std).reshape(w.shape))
