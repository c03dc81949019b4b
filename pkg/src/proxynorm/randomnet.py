"""Random convolutional stacks with per-layer diagnostics.

A net of depth L repeats (periodic conv -> normalize -> activation),
with kernels, gains and shifts all sampled i.i.d. from configured
distributions. Running a batch forward records, per layer, the power
decompositions of the post-norm tensor y and of the layer output z,
plus the best channel-wise linear fit of the activation on the
pre-activation affine image.

Parameters are drawn from a single counter-based stream seeded by the
config, in a fixed order (kernel, then gamma, then beta, layer by
layer), so a config is reproducible bitwise across platforms and across
the materialized and streaming evaluation paths.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diagnostics import (
    LinearFitReport,
    PowerDecomposition,
    linear_best_fit,
    power_decomposition,
)
from .layers import (
    Activation,
    ConfigurationError,
    GroupNorm,
    LayerNorm,
    NormKind,
    ReLU,
    act,
    affine_image,
    conv_periodic,
    degenerate_set_count,
    normalize,
    weight_standardize,
)
from .proxy import ProxyParams, pn_act
from .tensor import (
    ActivationTensor,
    ChannelParams,
    Distribution,
    Kernel,
    Normal,
    ParameterError,
    Rng,
    TruncatedNormal,
    fan_in_scaled_kernel,
    sample,
    second_moment,
)


class PropagationDegeneracyError(RuntimeError):
    """A forward pass hit a zero-variance conditioning set with eps = 0."""


@dataclass(frozen=True)
class RandomNetConfig:
    """Everything needed to build and run one random net.

    widths has length depth + 1: widths[0] is the input channel count,
    widths[l] the output width of layer l. kernel_sizes is one odd size
    per layer (a bare int fans out to every layer).
    """

    depth: int
    widths: tuple
    kernel_sizes: tuple
    nu_omega: Distribution
    nu_gamma: Distribution
    nu_beta: Distribution
    norm: NormKind
    phi: Activation
    use_pn: bool = False
    use_ws: bool = False
    proxy: ProxyParams = field(default_factory=lambda: ProxyParams.zeros(1))
    first_layer_stride: int = 1
    seed: int = 0

    def __post_init__(self):
        depth = int(self.depth)
        if depth < 1:
            raise ConfigurationError("depth must be >= 1")
        widths = tuple(int(w) for w in np.atleast_1d(self.widths))
        if len(widths) != depth + 1:
            raise ConfigurationError(
                f"widths must hold the input channel count plus one width per "
                f"layer ({depth + 1} values for depth {depth}, got {len(widths)})"
            )
        if min(widths) < 1:
            raise ConfigurationError("widths must be >= 1")
        sizes = self.kernel_sizes
        if np.isscalar(sizes):
            sizes = (int(sizes),) * depth
        else:
            sizes = tuple(int(k) for k in sizes)
        if len(sizes) != depth:
            raise ConfigurationError(
                f"need one kernel size per layer ({depth}), got {len(sizes)}"
            )
        if any(k < 1 or k % 2 == 0 for k in sizes):
            raise ConfigurationError("kernel sizes must be odd and >= 1")
        for name in ("nu_omega", "nu_gamma", "nu_beta"):
            if not isinstance(getattr(self, name), Distribution):
                raise ConfigurationError(f"{name} must be a Distribution")
        if not isinstance(self.norm, NormKind):
            raise ConfigurationError("norm must be a NormKind")
        if not isinstance(self.phi, Activation):
            raise ConfigurationError("phi must be an Activation")
        if isinstance(self.norm, GroupNorm):
            for w in widths[1:]:
                if w % self.norm.groups:
                    raise ConfigurationError(
                        f"{self.norm.groups} groups do not divide width {w}"
                    )
        if self.first_layer_stride not in (1, 2):
            raise ConfigurationError("first_layer_stride must be 1 or 2")
        seed = int(self.seed)
        if not 0 <= seed < 2**64:
            raise ConfigurationError("seed must fit in 64 bits")
        object.__setattr__(self, "depth", depth)
        object.__setattr__(self, "widths", widths)
        object.__setattr__(self, "kernel_sizes", sizes)
        object.__setattr__(self, "seed", seed)

    @property
    def in_channels(self):
        return self.widths[0]

    @classmethod
    def uniform(
        cls,
        depth,
        width,
        *,
        in_channels=3,
        kernel_size=3,
        nu_omega=TruncatedNormal(0.0, 1.0, -2.0, 2.0),
        nu_gamma=Normal(1.0, 0.2),
        nu_beta=Normal(0.0, 0.2),
        norm=LayerNorm(0.0),
        phi=ReLU(),
        **kwargs,
    ):
        """A constant-width net with the usual random-net distributions."""
        return cls(
            depth=depth,
            widths=(in_channels,) + (width,) * depth,
            kernel_sizes=(kernel_size,) * depth,
            nu_omega=nu_omega,
            nu_gamma=nu_gamma,
            nu_beta=nu_beta,
            norm=norm,
            phi=phi,
            **kwargs,
        )


@dataclass(frozen=True)
class LayerTrace:
    layer_index: int  # 1-based
    decomp_y: PowerDecomposition
    decomp_z: PowerDecomposition
    linearity: LinearFitReport


@dataclass(frozen=True)
class RandomNet:
    config: RandomNetConfig
    kernels: tuple
    params: tuple


def rho_from_moments(nu_gamma, nu_beta):
    """rho = E[gamma^2] / (E[gamma^2] + E[beta^2]).

    Computed from the configured distributions' closed-form second
    moments, never re-estimated from draws.
    """
    g2 = second_moment(nu_gamma)
    b2 = second_moment(nu_beta)
    if g2 + b2 <= 0.0:
        raise ParameterError(
            "gamma and beta distributions are both identically zero"
        )
    return g2 / (g2 + b2)


def _sample_layers(config, rng):
    """Yield (kernel, channel params) per layer in the pinned draw order."""
    c_prev = config.widths[0]
    for l in range(config.depth):
        c_out = config.widths[l + 1]
        k = config.kernel_sizes[l]
        kern = fan_in_scaled_kernel(config.nu_omega, rng, (k, k, c_prev, c_out))
        if config.use_ws:
            kern = weight_standardize(kern)
        gamma = sample(config.nu_gamma, rng, c_out)
        beta = sample(config.nu_beta, rng, c_out)
        yield kern, ChannelParams(gamma, beta)
        c_prev = c_out


def build(config: RandomNetConfig) -> RandomNet:
    """Materialize every layer's parameters. Deterministic in config.seed.

    Holds all kernels in memory at once; for wide deep nets prefer
    stream_traces, which walks the same stream one layer at a time.
    """
    kernels = []
    params = []
    for kern, par in _sample_layers(config, Rng(config.seed)):
        kernels.append(kern)
        params.append(par)
    return RandomNet(config, tuple(kernels), tuple(params))


def _check_batch(config, batch):
    if batch.channels != config.widths[0]:
        raise ValueError(
            f"batch has {batch.channels} channels, net expects {config.widths[0]}"
        )
    if batch.n_samples < 2:
        raise ValueError("forward needs a batch of at least two samples")


def _walk(config, layers, batch):
    """Drive the stack: yields (layer_index, params, y, z) per layer."""
    z = batch
    for l, (kern, par) in enumerate(layers, start=1):
        stride = config.first_layer_stride if l == 1 else 1
        x = conv_periodic(z, kern, stride)
        if config.norm.eps == 0.0:
            n_bad = degenerate_set_count(x, config.norm)
            if n_bad:
                raise PropagationDegeneracyError(
                    f"layer {l}: {n_bad} conditioning set(s) have zero "
                    f"variance with eps = 0"
                )
        y = normalize(x, config.norm)
        if config.use_pn:
            z = pn_act(y, par, config.phi, config.proxy)
        else:
            z = act(y, par, config.phi)
        yield l, par, y, z


def _trace(config, l, par, y, z):
    return LayerTrace(
        layer_index=l,
        decomp_y=power_decomposition(y),
        decomp_z=power_decomposition(z),
        linearity=linear_best_fit(affine_image(y, par), config.phi),
    )


def layer_activations(net: RandomNet, batch: ActivationTensor):
    """Iterate (layer_index, y, z) over the stack without diagnostics."""
    _check_batch(net.config, batch)

    def gen():
        for l, _, y, z in _walk(net.config, zip(net.kernels, net.params), batch):
            yield l, y, z

    return gen()


def forward(net: RandomNet, batch: ActivationTensor):
    """Run the batch through the net; one LayerTrace per layer, in order."""
    _check_batch(net.config, batch)
    return [
        _trace(net.config, l, par, y, z)
        for l, par, y, z in _walk(net.config, zip(net.kernels, net.params), batch)
    ]


def stream_traces(config: RandomNetConfig, batch: ActivationTensor):
    """build + forward fused: sample each layer, use it, drop it.

    Produces traces bit-identical to forward(build(config), batch) while
    holding at most one layer's kernel, so full-scale depths fit in
    memory.
    """
    _check_batch(config, batch)

    def gen():
        layers = _sample_layers(config, Rng(config.seed))
        for l, par, y, z in _walk(config, layers, batch):
            yield _trace(config, l, par, y, z)

    return gen()


def stream_activations(config: RandomNetConfig, batch: ActivationTensor):
    """Like stream_traces but yields the raw (layer_index, y, z) tensors
    with no diagnostics attached, for callers that only need a subset;
    the parameter stream is identical."""
    _check_batch(config, batch)

    def gen():
        layers = _sample_layers(config, Rng(config.seed))
        for l, _, y, z in _walk(config, layers, batch):
            yield l, y, z

    return gen()
