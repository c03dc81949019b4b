"""Command-line surface: power plots, theorem suites, proxy tables.

Configuration is layered: built-in defaults (including the
PROXYNORM_OUT environment variable for the output directory), then an
INI config file, then flags; later layers win. Every config-file key
has a flag twin with the same name.

Exit codes: 0 success / all checks passed, 1 verification failure or
propagation failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import json
import math
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import defaults
from ._gauss import ndtr
from ._svg import stacked_area_chart
from .diagnostics import rho_ratio
from .ingest import Cifar10Dir, SyntheticGaussian, SyntheticStructured, load_batch
from .layers import (
    BatchNorm,
    GroupNorm,
    Identity,
    InstanceNorm,
    LayerNorm,
    ReLU,
    Swish,
)
from .proxy import proxy_moments
from .randomnet import PropagationDegeneracyError, RandomNetConfig, stream_traces
from .tensor import Rng, derive_seed
from .verify import (
    config_digest,
    report_document,
    verify_linearity_link,
    verify_thm1,
    verify_thm2,
    verify_thm3,
    write_report,
)

_NORMS = {
    "bn": lambda s: BatchNorm(s["eps"]),
    "ln": lambda s: LayerNorm(s["eps"]),
    "gn": lambda s: GroupNorm(s["groups"], s["eps"]),
    "in": lambda s: InstanceNorm(s["eps"]),
}
_PHIS = {"relu": ReLU, "identity": Identity, "swish": Swish}
_SUITES = ("thm1", "thm1-identity", "thm2", "thm3", "linearity")

# every settable key, its type, and its built-in default; None means
# "resolved per command" (each subcommand fills its own value)
_SCHEMA = {
    "width": (int, None),
    "depth": (int, None),
    "kernel_size": (int, defaults.KERNEL_SIZE),
    "norm": (str, ""),
    "groups": (int, 8),
    "eps": (float, None),
    "phi": (str, ""),
    "pn": (bool, False),
    "ws": (bool, False),
    "seed": (int, 0),
    "seeds": (int, None),
    "batch": (int, None),
    "spatial": (int, defaults.SPATIAL),
    "source": (str, "gaussian"),
    "cifar_dir": (str, ""),
    "subsample_stride": (int, 1),
    "correlation_length": (float, 2.0),
    "out": (str, ""),
    "formats": (str, "csv,svg"),
    "eta": (float, None),
    "power_tol": (float, None),
    "min_pass_fraction": (float, None),
    "slack": (float, defaults.LINEARITY["slack"]),
    "n_quantiles": (int, defaults.THM3["n_quantiles"]),
    "samples": (int, defaults.THM3["n_samples"]),
    "full_scale": (bool, False),
}


class CliConfigError(ValueError):
    """Bad key, value, or combination in the file/flag configuration."""


def _parse_value(key, raw):
    typ = _SCHEMA[key][0]
    try:
        if typ is bool:
            lowered = str(raw).strip().lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return typ(raw)
    except ValueError:
        raise CliConfigError(f"bad value for {key!r}: {raw!r}") from None


def _read_config_file(path):
    parser = configparser.ConfigParser()
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as e:
        raise CliConfigError(f"cannot read config file: {e}") from None
    except configparser.Error as e:
        raise CliConfigError(f"malformed config file: {e}") from None
    values = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            key = key.replace("-", "_")
            if key not in _SCHEMA:
                raise CliConfigError(f"unknown config key {key!r} in [{section}]")
            values[key] = _parse_value(key, raw)
    return values


def _settings(args):
    """Defaults, then config file, then explicit flags."""
    merged = {key: default for key, (_, default) in _SCHEMA.items()}
    merged["out"] = os.environ.get("PROXYNORM_OUT", "out")
    if getattr(args, "config", None):
        merged.update(_read_config_file(args.config))
    for key in _SCHEMA:
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
    if merged["full_scale"]:
        for key, value in (
            ("width", defaults.FULL_WIDTH),
            ("depth", defaults.FULL_DEPTH),
            ("batch", defaults.FULL_BATCH),
        ):
            if merged[key] is None:
                merged[key] = value
    return merged


def _fill(settings, **command_defaults):
    out = dict(settings)
    for key, value in command_defaults.items():
        if out[key] is None:
            out[key] = value
    return out


def _input_source(s):
    kind = s["source"]
    if kind == "gaussian":
        return SyntheticGaussian(s["spatial"], s["spatial"], defaults.IN_CHANNELS)
    if kind == "structured":
        return SyntheticStructured(
            s["spatial"], s["spatial"], defaults.IN_CHANNELS, s["correlation_length"]
        )
    if kind == "cifar":
        if not s["cifar_dir"]:
            raise CliConfigError("source=cifar needs cifar_dir")
        return Cifar10Dir(s["cifar_dir"], s["subsample_stride"])
    raise CliConfigError(f"unknown source {s['source']!r}")


def _phi(s, fallback="relu"):
    name = s["phi"] or fallback
    if name not in _PHIS:
        raise CliConfigError(f"unknown activation {name!r}")
    return _PHIS[name]()


def _variant_config(label, s):
    base, _, mods = label.partition("+")
    if base not in _NORMS:
        raise CliConfigError(f"unknown norm {base!r}")
    mods = set(mods.split("+")) if mods else set()
    if not mods <= {"pn", "ws"}:
        raise CliConfigError(f"unknown variant modifier in {label!r}")
    return RandomNetConfig.uniform(
        depth=s["depth"],
        width=s["width"],
        kernel_size=s["kernel_size"],
        norm=_NORMS[base](s),
        phi=_phi(s),
        use_pn="pn" in mods,
        use_ws="ws" in mods,
        seed=s["seed"],
    )


def _outdir(s):
    path = Path(s["out"])
    path.mkdir(parents=True, exist_ok=True)
    return path


# ---------------------------------------------------------------------------
# powerplot

CSV_COLUMNS = ("layer",) + tuple(
    f"{name}_{stat}"
    for name in ("p1", "p2", "p3", "p4", "rho", "linearity_residual")
    for stat in ("mean", "std")
)


def powerplot_table(config, source, n_seeds, batch_size):
    """Per-layer power terms, collapse ratio, and linearity residual of
    the normalized activations, aggregated over seeds (mean and
    population std per column)."""
    rows = {name: [] for name in ("p1", "p2", "p3", "p4", "rho", "linearity_residual")}
    for s in range(config.seed, config.seed + n_seeds):
        cfg = dataclasses.replace(config, seed=s)
        batch = load_batch(source, batch_size, Rng(derive_seed(s, 1)), True)
        per_layer = {name: [] for name in rows}
        for tr in stream_traces(cfg, batch):
            layer = tr.decomp_y.layer
            per_layer["p1"].append(layer.p1)
            per_layer["p2"].append(layer.p2)
            per_layer["p3"].append(layer.p3)
            per_layer["p4"].append(layer.p4)
            per_layer["rho"].append(rho_ratio(tr.decomp_y))
            per_layer["linearity_residual"].append(tr.linearity.residual_ratio)
        for name in rows:
            rows[name].append(per_layer[name])
    return {name: np.asarray(vals) for name, vals in rows.items()}  # (seeds, depth)


def _table_rows(table, depth):
    for l in range(depth):
        row = [l + 1]
        for name in ("p1", "p2", "p3", "p4", "rho", "linearity_residual"):
            col = table[name][:, l]
            row.append(float(col.mean()))
            row.append(float(col.std()))
        yield row


def _write_csv(path, table, depth):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for row in _table_rows(table, depth):
            writer.writerow([row[0]] + [f"{v:.12g}" for v in row[1:]])


def _write_svg(path, label, table, depth, s):
    x = np.arange(1, depth + 1)
    bands = [table[name].mean(axis=0) for name in ("p1", "p2", "p3", "p4")]
    overlay = table["rho"].mean(axis=0)
    svg = stacked_area_chart(
        x,
        bands,
        ("P1 (squared mean)", "P2 (var of means)", "P3 (squared mean std)",
         "P4 (var of stds)"),
        overlays=[overlay],
        overlay_labels=["collapse ratio"],
        title=f"{label}  width {s['width']}  depth {depth}",
    )
    Path(path).write_text(svg)


def _write_table_json(path, label, config, table, depth):
    doc = {
        "schema_version": 1,
        "defaults_version": defaults.DEFAULTS_VERSION,
        "metadata": {"written_at": datetime.now(timezone.utc).isoformat()},
        "variant": label,
        "config_digest": config_digest(config),
        "columns": list(CSV_COLUMNS),
        "rows": [row for row in _table_rows(table, depth)],
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def cmd_powerplot(s):
    formats = {f.strip() for f in s["formats"].split(",") if f.strip()}
    if not formats:
        raise CliConfigError("need at least one emit format")
    if not formats <= {"csv", "svg", "json"}:
        raise CliConfigError(f"unknown emit format in {s['formats']!r}")
    s = _fill(
        s,
        width=defaults.POWERPLOT["width"],
        depth=defaults.POWERPLOT["depth"],
        batch=defaults.POWERPLOT["batch"],
        seeds=defaults.POWERPLOT["n_seeds"],
        eps=defaults.EPS_DEMO,
    )
    if s["norm"]:
        label = s["norm"]
        if s["pn"]:
            label += "+pn"
        if s["ws"]:
            label += "+ws"
        variants = (label,)
    else:
        variants = defaults.VARIANTS
    outdir = _outdir(s)
    source = _input_source(s)
    for label in variants:
        cfg = _variant_config(label, s)
        table = powerplot_table(cfg, source, s["seeds"], s["batch"])
        stem = outdir / f"powerplot_{label.replace('+', '_')}"
        if "csv" in formats:
            _write_csv(stem.with_suffix(".csv"), table, s["depth"])
            print(f"wrote {stem.with_suffix('.csv')}")
        if "svg" in formats:
            _write_svg(stem.with_suffix(".svg"), label, table, s["depth"], s)
            print(f"wrote {stem.with_suffix('.svg')}")
        if "json" in formats:
            _write_table_json(stem.with_suffix(".json"), label, cfg, table, s["depth"])
            print(f"wrote {stem.with_suffix('.json')}")
    return 0


# ---------------------------------------------------------------------------
# verify


def _run_suite(name, s):
    """Returns a list of (file_stem, report)."""
    if name == "thm1":
        t = _fill(s, width=defaults.THM1["width"], depth=defaults.THM1["depth"],
                  batch=defaults.THM1["batch"], seeds=defaults.THM1["n_seeds"],
                  eta=defaults.THM1["eta"],
                  min_pass_fraction=defaults.THM1["min_pass_fraction"], eps=0.0)
        cfg = RandomNetConfig.uniform(
            depth=t["depth"], width=t["width"], kernel_size=t["kernel_size"],
            norm=LayerNorm(t["eps"]), phi=_phi(t), seed=t["seed"],
        )
        rep = verify_thm1(
            cfg, n_seeds=t["seeds"], eta=t["eta"],
            min_pass_fraction=t["min_pass_fraction"], batch_size=t["batch"],
            source=_input_source(t), power_tol=t["power_tol"],
        )
        return [(rep.check_id, rep)]
    if name == "thm1-identity":
        t = _fill(s, width=defaults.THM1_IDENTITY["width"],
                  depth=defaults.THM1_IDENTITY["depth"],
                  batch=defaults.THM1_IDENTITY["batch"],
                  seeds=defaults.THM1_IDENTITY["n_seeds"],
                  eta=defaults.THM1_IDENTITY["eta"],
                  min_pass_fraction=defaults.THM1_IDENTITY["min_pass_fraction"],
                  eps=0.0)
        cfg = RandomNetConfig.uniform(
            depth=t["depth"], width=t["width"], kernel_size=t["kernel_size"],
            norm=LayerNorm(t["eps"]), phi=Identity(), seed=t["seed"],
        )
        rep = verify_thm1(
            cfg, n_seeds=t["seeds"], eta=t["eta"],
            min_pass_fraction=t["min_pass_fraction"], batch_size=t["batch"],
            source=_input_source(t), power_tol=t["power_tol"],
        )
        return [(rep.check_id, rep)]
    if name == "thm2":
        t = _fill(s, width=defaults.THM2["width"], depth=defaults.THM2["depth"],
                  batch=defaults.THM2["batch"], seeds=defaults.THM2["n_seeds"],
                  eps=0.0)
        cfg = RandomNetConfig.uniform(
            depth=t["depth"], width=t["width"], kernel_size=t["kernel_size"],
            norm=InstanceNorm(t["eps"]), phi=_phi(t), seed=t["seed"],
        )
        rep = verify_thm2(cfg, n_seeds=t["seeds"], batch_size=t["batch"],
                          source=_input_source(t))
        return [(rep.check_id, rep)]
    if name == "thm3":
        phis = (s["phi"],) if s["phi"] else ("relu", "identity", "swish")
        out = []
        for phi_name in phis:
            if phi_name not in _PHIS:
                raise CliConfigError(f"unknown activation {phi_name!r}")
            rep = verify_thm3(
                n_samples=s["samples"], phi=_PHIS[phi_name](),
                n_quantiles=s["n_quantiles"], seed=s["seed"],
            )
            out.append((f"thm3_{phi_name}", rep))
        return out
    if name == "linearity":
        t = _fill(s, width=defaults.LINEARITY["width"],
                  depth=defaults.LINEARITY["depth"],
                  batch=defaults.LINEARITY["batch"],
                  seeds=defaults.LINEARITY["n_seeds"],
                  min_pass_fraction=0.9, eps=0.0)
        cfg = RandomNetConfig.uniform(
            depth=t["depth"], width=t["width"], kernel_size=t["kernel_size"],
            norm=LayerNorm(t["eps"]), phi=_phi(t), seed=t["seed"],
        )
        rep = verify_linearity_link(
            cfg, n_seeds=t["seeds"], batch_size=t["batch"],
            source=_input_source(t), slack=t["slack"],
            min_pass_fraction=t["min_pass_fraction"],
        )
        return [(rep.check_id, rep)]
    raise CliConfigError(f"unknown suite {name!r}")


def cmd_verify(s, suite):
    names = _SUITES if suite == "all" else (suite,)
    outdir = _outdir(s)
    all_passed = True
    for name in names:
        for stem, rep in _run_suite(name, s):
            path = outdir / f"report_{stem}.json"
            write_report(rep, path)
            verdict = "PASS" if rep.passed else "FAIL"
            print(f"{stem:<14} {verdict}  ({rep.runtime:.1f}s)  {path}")
            all_passed &= rep.passed
    return 0 if all_passed else 1


# ---------------------------------------------------------------------------
# proxy-table


def _relu_gaussian_moments(gamma, beta):
    """Closed-form mean/variance of relu(gamma*Z + beta), Z ~ N(0,1)."""
    s = abs(gamma)
    if s == 0.0:
        m = max(beta, 0.0)
        return m, 0.0
    t = beta / s
    pdf = math.exp(-0.5 * t * t) / math.sqrt(2.0 * math.pi)
    cdf = float(ndtr(np.asarray([t]))[0])
    mean = beta * cdf + s * pdf
    second = (beta * beta + s * s) * cdf + beta * s * pdf
    return mean, second - mean * mean


def cmd_proxy_table(s, phi_name, gamma, beta, n):
    if n < 2:
        raise CliConfigError("n must be >= 2")
    phi = _PHIS[phi_name]()
    grid_mean, grid_var = proxy_moments(phi, gamma, beta, 0.0, 1.0, n)
    if phi_name == "identity":
        analytic = (beta, gamma * gamma)
    elif phi_name == "relu":
        analytic = _relu_gaussian_moments(gamma, beta)
    else:
        analytic = None
    print(f"phi={phi_name} gamma={gamma:g} beta={beta:g} n={n}")
    print(f"{'':8s}{'grid':>16s}{'analytic':>16s}{'abs error':>14s}")
    for label, grid, exact in (
        ("mean", grid_mean, analytic[0] if analytic else None),
        ("var", grid_var, analytic[1] if analytic else None),
    ):
        if exact is None:
            print(f"{label:8s}{grid:16.9f}{'n/a':>16s}{'n/a':>14s}")
        else:
            print(f"{label:8s}{grid:16.9f}{exact:16.9f}{abs(grid - exact):14.2e}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _add_setting_flags(parser, keys):
    for key in keys:
        typ = _SCHEMA[key][0]
        flag = "--" + key.replace("_", "-")
        if typ is bool:
            parser.add_argument(flag, action="store_const", const=True, default=None)
        else:
            parser.add_argument(flag, type=typ, default=None)


_NET_KEYS = ("width", "depth", "kernel_size", "norm", "groups", "eps", "phi",
             "pn", "ws", "seed")
_RUN_KEYS = ("seeds", "batch", "spatial", "source", "cifar_dir",
             "subsample_stride", "correlation_length", "out", "formats",
             "full_scale")
_VERIFY_KEYS = ("eta", "power_tol", "min_pass_fraction", "slack", "n_quantiles",
                "samples")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="proxynorm",
        description="Random-net power diagnostics and theorem suites.",
        epilog="PROXYNORM_OUT sets the default output directory.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_plot = sub.add_parser(
        "powerplot",
        help="per-layer power decomposition tables and charts per norm variant",
    )
    p_plot.add_argument("--config", default=None)
    _add_setting_flags(p_plot, _NET_KEYS + _RUN_KEYS)

    p_verify = sub.add_parser("verify", help="run theorem suites, write reports")
    p_verify.add_argument("suite", choices=_SUITES + ("all",))
    p_verify.add_argument("--config", default=None)
    _add_setting_flags(p_verify, _NET_KEYS + _RUN_KEYS + _VERIFY_KEYS)

    p_table = sub.add_parser(
        "proxy-table",
        help="grid vs analytic proxy moments for one channel",
    )
    p_table.add_argument("phi", choices=sorted(_PHIS))
    p_table.add_argument("gamma", type=float)
    p_table.add_argument("beta", type=float)
    p_table.add_argument("n", type=int)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        if args.command == "proxy-table":
            return cmd_proxy_table({}, args.phi, args.gamma, args.beta, args.n)
        settings = _settings(args)
        if args.command == "powerplot":
            return cmd_powerplot(settings)
        return cmd_verify(settings, args.suite)
    except PropagationDegeneracyError as e:
        print(f"propagation error: {e}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
