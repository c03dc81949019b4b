"""Executable theorem suites with machine-readable reports.

Each suite runs seeded forward passes, compares measured layer
statistics against the theorem's bound, and returns a
VerificationReport. Reports serialize to JSON under a stable versioned
schema; the non-reproducible fields (timestamp, wall-clock runtime) are
confined to the metadata block so the report block itself is bitwise
stable across reruns.

Gating convention: bound_or_target holds exactly the quantities that
decide `passed`. A name ending in "_fraction" must reach its bound from
above (measured >= bound - tolerance); any other name is an upper bound
(measured <= bound + tolerance). Other entries of `measured` are
informational. The theorem constants are asymptotic, so every finite
eta here is an empirical choice; reports carry the width and tolerance
actually used.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import defaults
from .diagnostics import power_decomposition, rho_ratio
from .ingest import SyntheticGaussian, load_batch
from .layers import (
    Identity,
    InstanceNorm,
    LayerNorm,
    ReLU,
    Swish,
    TwoSlope,
    is_positive_homogeneous,
)
from .proxy import ProxyParams, pn_act
from .randomnet import rho_from_moments, stream_activations, stream_traces
from .tensor import ActivationTensor, ChannelParams, Rng, derive_seed

REPORT_SCHEMA_VERSION = 1


class HypothesisError(ValueError):
    """The configuration violates the theorem's hypotheses."""


@dataclass(frozen=True)
class VerificationReport:
    check_id: str
    config_digest: str
    seeds: tuple
    measured: dict
    bound_or_target: dict
    tolerance: dict
    passed: bool
    runtime: float
    notes: tuple = ()


def _gate(measured, bounds, tolerance):
    """Apply the gating convention documented in the module docstring."""
    for name, bound in bounds.items():
        m = measured[name]
        tol = tolerance.get(name, 0.0)
        if name.endswith("_fraction"):
            if m < bound - tol:
                return False
        elif m > bound + tol:
            return False
    return True


def _finish(check_id, config, seeds, measured, bounds, tolerance, t0, notes=()):
    measured = {k: float(v) for k, v in measured.items()}
    bounds = {k: float(v) for k, v in bounds.items()}
    tolerance = {k: float(v) for k, v in tolerance.items()}
    return VerificationReport(
        check_id=check_id,
        config_digest=config_digest(config),
        seeds=tuple(int(s) for s in seeds),
        measured=measured,
        bound_or_target=bounds,
        tolerance=tolerance,
        passed=_gate(measured, bounds, tolerance),
        runtime=time.perf_counter() - t0,
        notes=tuple(notes),
    )


# ---------------------------------------------------------------------------
# canonical digests and JSON serialization


def _canonical(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        doc = {"type": type(obj).__name__}
        for f in dataclasses.fields(obj):
            doc[f.name] = _canonical(getattr(obj, f.name))
        return doc
    if isinstance(obj, np.ndarray):
        return [float(v) for v in obj.ravel()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if isinstance(obj, dict):
        return {str(k): _canonical(v) for k, v in sorted(obj.items())}
    return obj


def config_digest(config) -> str:
    """sha256 over a canonical JSON rendering of any config dataclass."""
    doc = json.dumps(_canonical(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(doc.encode()).hexdigest()


def report_document(report: VerificationReport, *, written_at=None) -> dict:
    """The JSON document for a report. Everything under "report" is a
    pure function of config and seeds; wall-clock values (written_at,
    runtime) go under "metadata" so reruns differ only there."""
    if written_at is None:
        written_at = datetime.now(timezone.utc).isoformat()
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "defaults_version": defaults.DEFAULTS_VERSION,
        "metadata": {
            "written_at": written_at,
            "runtime_seconds": report.runtime,
        },
        "report": {
            "check_id": report.check_id,
            "config_digest": report.config_digest,
            "seeds": list(report.seeds),
            "measured": report.measured,
            "bound_or_target": report.bound_or_target,
            "tolerance": report.tolerance,
            "passed": report.passed,
            "notes": list(report.notes),
        },
    }


def write_report(report: VerificationReport, path, *, written_at=None):
    doc = report_document(report, written_at=written_at)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_report(path) -> VerificationReport:
    doc = json.loads(Path(path).read_text())
    if doc.get("schema_version") != REPORT_SCHEMA_VERSION:
        raise ValueError(f"unsupported report schema {doc.get('schema_version')}")
    r = doc["report"]
    return VerificationReport(
        check_id=r["check_id"],
        config_digest=r["config_digest"],
        seeds=tuple(r["seeds"]),
        measured=r["measured"],
        bound_or_target=r["bound_or_target"],
        tolerance=r["tolerance"],
        passed=r["passed"],
        runtime=doc["metadata"]["runtime_seconds"],
        notes=tuple(r["notes"]),
    )


# ---------------------------------------------------------------------------
# suite plumbing


def _seed_list(base, n):
    return tuple(base + i for i in range(int(n)))


def _suite_batch(config, batch_size, source, seed, standardize=True):
    """Per-seed input batch; the data stream is split from the net seed
    so parameter and input draws never overlap."""
    if source is None:
        source = SyntheticGaussian(defaults.SPATIAL, defaults.SPATIAL, config.in_channels)
    return load_batch(source, batch_size, Rng(derive_seed(seed, 1)), standardize)


def _is_linear(phi):
    return isinstance(phi, Identity) or (
        isinstance(phi, TwoSlope) and phi.a_pos == phi.a_neg
    )


# ---------------------------------------------------------------------------
# suites


def verify_thm1(
    config,
    n_seeds=defaults.THM1["n_seeds"],
    eta=defaults.THM1["eta"],
    min_pass_fraction=defaults.THM1["min_pass_fraction"],
    *,
    batch_size=defaults.THM1["batch"],
    source=None,
    power_tol=None,
) -> VerificationReport:
    """Collapse bound: per layer, rho_ratio(y^l) <= rho^(l-1) + eta and
    |P(y^l) - 1| <= power_tol; a seed passes if every layer does; the
    check passes if >= min_pass_fraction of seeds do.

    With a linear activation the equality case holds and the lower
    bound rho_ratio >= rho^(l-1) - eta is asserted too. A width too
    small for the bound at the chosen eta is reported as failed, never
    raised.
    """
    t0 = time.perf_counter()
    if not isinstance(config.norm, LayerNorm):
        raise HypothesisError("the collapse bound is stated for LayerNorm")
    if not is_positive_homogeneous(config.phi):
        raise HypothesisError(
            "the collapse bound needs a positive homogeneous activation"
        )
    if power_tol is None:
        power_tol = eta
    two_sided = _is_linear(config.phi)
    rho = rho_from_moments(config.nu_gamma, config.nu_beta)
    seeds = _seed_list(config.seed, n_seeds)

    ok = 0
    max_excess = -np.inf
    max_shortfall = -np.inf
    max_power_dev = 0.0
    for s in seeds:
        cfg = dataclasses.replace(config, seed=s)
        batch = _suite_batch(cfg, batch_size, source, s)
        good = True
        # Only the normalized y statistics enter the bound, so skip the
        # full trace (post-activation decomposition, linearity fit) and
        # decompose y alone; at width 1024 that is most of a seed's cost
        # beyond sampling the kernels themselves.
        for l, y, _ in stream_activations(cfg, batch):
            decomp = power_decomposition(y)
            bound = rho ** (l - 1)
            r = rho_ratio(decomp)
            excess = r - bound
            shortfall = bound - r
            power_dev = abs(decomp.layer.p_total - 1.0)
            max_excess = max(max_excess, excess)
            max_shortfall = max(max_shortfall, shortfall)
            max_power_dev = max(max_power_dev, power_dev)
            if excess > eta or power_dev > power_tol:
                good = False
            if two_sided and shortfall > eta:
                good = False
        ok += good

    measured = {
        "pass_fraction": ok / len(seeds),
        "rho": rho,
        "max_rho_excess": max_excess,
        "max_power_deviation": max_power_dev,
    }
    if two_sided:
        measured["max_rho_shortfall"] = max_shortfall
    notes = (
        f"width={config.widths[-1]}",
        f"eta={eta}",
        f"power_tol={power_tol}",
        f"two_sided={two_sided}",
        "eta and min_pass_fraction are empirical finite-size choices; the "
        "bound's constant is not quantified, so they are pinned by pilot "
        "runs, not by the statement being checked",
        "truncated normals are not renormalized after truncation",
    )
    return _finish(
        "thm1-identity" if two_sided else "thm1",
        config,
        seeds,
        measured,
        {"pass_fraction": min_pass_fraction},
        {"pass_fraction": 0.0},
        t0,
        notes,
    )


def verify_thm2(
    config,
    n_seeds=defaults.THM2["n_seeds"],
    *,
    batch_size=defaults.THM2["batch"],
    source=None,
    tol=defaults.THM2["tol"],
) -> VerificationReport:
    """Instance-statistics exactness: per layer and channel the power
    terms are (0, 0, 1, 0) to within tol. Exact, never statistical; a
    zero instance variance raises rather than gating."""
    t0 = time.perf_counter()
    if not isinstance(config.norm, InstanceNorm) or config.norm.eps != 0.0:
        raise HypothesisError(
            "instance-statistics exactness needs InstanceNorm with eps = 0"
        )
    seeds = _seed_list(config.seed, n_seeds)
    worst = {"max_abs_p1": 0.0, "max_abs_p2": 0.0, "max_abs_p4": 0.0,
             "max_abs_p3_minus_1": 0.0}
    for s in seeds:
        cfg = dataclasses.replace(config, seed=s)
        batch = _suite_batch(cfg, batch_size, source, s)
        for tr in stream_traces(cfg, batch):
            pc = tr.decomp_y.per_channel
            worst["max_abs_p1"] = max(worst["max_abs_p1"], np.abs(pc.p1).max())
            worst["max_abs_p2"] = max(worst["max_abs_p2"], np.abs(pc.p2).max())
            worst["max_abs_p4"] = max(worst["max_abs_p4"], np.abs(pc.p4).max())
            worst["max_abs_p3_minus_1"] = max(
                worst["max_abs_p3_minus_1"], np.abs(pc.p3 - 1.0).max()
            )
    bounds = {k: 0.0 for k in worst}
    return _finish(
        "thm2", config, seeds, worst, bounds, {k: tol for k in worst}, t0,
        (f"width={config.widths[-1]}", f"tol={tol}"),
    )


def verify_thm3(
    n_channels=defaults.THM3["n_channels"],
    n_samples=defaults.THM3["n_samples"],
    phi=None,
    params=None,
    n_quantiles=defaults.THM3["n_quantiles"],
    *,
    seed=0,
    tol_mean=None,
    tol_power=None,
) -> VerificationReport:
    """Proxy-normalization guarantee: exactly Gaussian channels pushed
    through the PN step come out with near-zero mean and near-unit
    power, for any activation.

    Default tolerances combine the two error sources, both reported:
    sampling noise of the empirical moments (~1/sqrt(N)) and the
    quantile grid's tail-clipping bias (measured ~1/n, not the square).
    """
    t0 = time.perf_counter()
    if phi is None:
        phi = ReLU()
    if params is None:
        params = ChannelParams(np.ones(n_channels), np.zeros(n_channels))
    if params.channels != n_channels:
        raise ValueError(
            f"params for {params.channels} channels, expected {n_channels}"
        )
    sampling_mean = 5.0 / np.sqrt(n_samples)
    sampling_power = (20.0 if isinstance(phi, Swish) else 10.0) / np.sqrt(n_samples)
    quadrature = 3.0 / n_quantiles
    if tol_mean is None:
        tol_mean = sampling_mean + quadrature
    if tol_power is None:
        tol_power = sampling_power + quadrature

    proxy = ProxyParams.zeros(n_channels, eps=0.0, n_quantiles=n_quantiles)
    rng = Rng(derive_seed(seed, 2))
    y = ActivationTensor(
        rng.standard_normal(n_samples * n_channels).reshape(n_samples, 1, 1, n_channels)
    )
    z = pn_act(y, params, phi, proxy)
    means = z.data.mean(axis=(0, 1, 2))
    powers = np.mean(z.data**2, axis=(0, 1, 2))

    measured = {
        "max_abs_mean": np.abs(means).max(),
        "max_power_deviation": np.abs(powers - 1.0).max(),
        "sampling_error_mean": sampling_mean,
        "sampling_error_power": sampling_power,
        "quadrature_error": quadrature,
    }
    bounds = {"max_abs_mean": 0.0, "max_power_deviation": 0.0}
    tols = {"max_abs_mean": tol_mean, "max_power_deviation": tol_power}
    cfg = {
        "n_channels": n_channels,
        "n_samples": n_samples,
        "phi": type(phi).__name__,
        "params": params,
        "n_quantiles": n_quantiles,
    }
    return _finish(
        "thm3", cfg, (seed,), measured, bounds, tols, t0,
        (f"phi={type(phi).__name__}", f"n_quantiles={n_quantiles}"),
    )


def verify_linearity_link(
    config,
    n_seeds=defaults.LINEARITY["n_seeds"],
    *,
    batch_size=defaults.LINEARITY["batch"],
    source=None,
    slack=defaults.LINEARITY["slack"],
    min_pass_fraction=0.9,
    l0_cap=None,
) -> VerificationReport:
    """Collapse implies linearity: the per-layer linearity residual of
    the pre-activation affine image is eventually decreasing.

    l0 is the first layer after the last slack violation (1 if the
    whole sequence already decreases within slack); a seed passes when
    l0 falls in the first half of the stack (configurable cap) and the
    final residual is below the first. The worst l0 and the final
    residuals are reported.
    """
    t0 = time.perf_counter()
    if not isinstance(config.norm, LayerNorm):
        raise HypothesisError("the linearity link is stated for LayerNorm")
    if not is_positive_homogeneous(config.phi):
        raise HypothesisError("the linearity link needs a two-slope activation")
    if l0_cap is None:
        l0_cap = defaults.linearity_l0_cap(config.depth)
    seeds = _seed_list(config.seed, n_seeds)

    ok = 0
    max_l0 = 1
    finals = []
    for s in seeds:
        cfg = dataclasses.replace(config, seed=s)
        batch = _suite_batch(cfg, batch_size, source, s)
        resid = [tr.linearity.residual_ratio for tr in stream_traces(cfg, batch)]
        l0 = 1
        for l in range(1, len(resid)):
            if resid[l] > resid[l - 1] + slack:
                l0 = l + 1  # 1-based layer where the decreasing tail restarts
        finals.append(resid[-1])
        max_l0 = max(max_l0, l0)
        ok += (l0 <= l0_cap) and (resid[-1] < resid[0])

    measured = {
        "pass_fraction": ok / len(seeds),
        "max_l0": max_l0,
        "final_residual_max": max(finals),
        "final_residual_median": float(np.median(finals)),
    }
    bounds = {"pass_fraction": min_pass_fraction, "max_l0": l0_cap}
    notes = (f"width={config.widths[-1]}", f"slack={slack}", f"l0_cap={l0_cap}")
    return _finish(
        "linearity", config, seeds, measured, bounds,
        {"pass_fraction": 0.0, "max_l0": 0.0}, t0, notes,
    )
