"""Normalization-pipeline diagnostics at desk scale.

Periodic-convolution / normalize / activate stacks with optional
proxy-normalized activations and weight standardization, four-term
power-decomposition diagnostics, collapse-ratio and channel-linearity
measurements, and seeded random-net suites that check the governing
propagation theorems.
"""

__version__ = "0.1.0"

from .diagnostics import (
    InsufficientDataError,
    LinearFitReport,
    PowerDecomposition,
    PowerTerms,
    linear_best_fit,
    power_decomposition,
    rho_ratio,
)
from .ingest import (
    Cifar10Dir,
    DegenerateInputError,
    FormatError,
    SyntheticGaussian,
    SyntheticStructured,
    dump_tensor,
    load_batch,
    load_tensor,
)
from .layers import (
    BatchNorm,
    ConfigurationError,
    GroupNorm,
    Identity,
    InstanceNorm,
    LayerNorm,
    ReLU,
    Swish,
    TwoSlope,
    act,
    conv_periodic,
    normalize,
    weight_standardize,
)
from .proxy import DegenerateProxyError, ProxyParams, pn_act, proxy_moments
from .randomnet import (
    LayerTrace,
    PropagationDegeneracyError,
    RandomNet,
    RandomNetConfig,
    build,
    forward,
    rho_from_moments,
    stream_activations,
    stream_traces,
)
from .tensor import (
    ActivationTensor,
    ChannelParams,
    Constant,
    Kernel,
    Normal,
    ParameterError,
    Rng,
    TruncatedNormal,
    derive_seed,
)
from .verify import (
    HypothesisError,
    VerificationReport,
    config_digest,
    read_report,
    verify_linearity_link,
    verify_thm1,
    verify_thm2,
    verify_thm3,
    write_report,
)

__all__ = [name for name in dir() if not name.startswith("_")]
