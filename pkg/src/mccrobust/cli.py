"""Command-line entry point: ``mccrobust {generate,estimate,bound,sweep,verify}``.

Settings resolve as built-in defaults < ``--config`` JSON file <
``MCCROBUST_SEED`` (seed only) < command-line flags.  Exit codes: 0 success
or informational, 1 verification failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import BoundInputs, check_assumptions, compute_bound
from .estimators import (
    EstimationError,
    MCCConfig,
    lad_estimate,
    mcc_estimate,
    mse_estimate,
    tls_estimate,
)
from .experiments import PRESETS, SweepSpec, preset, run_sweep, verify_bound_property, write_summary
from .model import (
    DEFAULT_FIR_WEIGHTS,
    GaussianMixtureSpec,
    InputSpec,
    VectorEIVDataset,
    generate_fir_dataset,
    generate_scalar_dataset,
    read_dataset,
    write_dataset,
)

SEED_ENV = "MCCROBUST_SEED"
DEFAULT_SEED = 0

DEFAULTS = {
    "generate": dict(scenario="scalar", w0=None, n=1000, alpha=0.15, beta=0.15, mu_u=10.0,
                     mu_v=10.0, var_u=0.001, var_v=0.001, input="two-interval",
                     input_variance=1.0, noise_free=False, noise_placement="row",
                     output="dataset.csv"),
    "estimate": dict(dataset=None, estimators="mse,lad,tls,mcc", sigma=1.0, solver="fixed-point",
                     search_lo=None, search_hi=None, grid_points=2000, tls_ratio="auto",
                     output="-"),
    "bound": dict(dataset=None, n=None, m=None, eps_u=0.0, eps_v=0.0, w0_abs=None, c=None,
                  sigma=None, lam=None, output="-"),
    "sweep": dict(preset=None, runs=None, jobs=1, output=None, set=None, sweep=None),
    "verify": dict(trials=200, samples=100),
}


class UsageError(Exception):
    pass


def _float_list(text):
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    parser = argparse.ArgumentParser(prog="mccrobust", argument_default=S,
                                     description="Maximum-correntropy estimation for EIV models.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False, argument_default=S)
    common.add_argument("--config", help="JSON file with settings keyed like the flags")
    common.add_argument("--seed", type=int, help="master seed (default 0)")
    common.add_argument("--output", help="output path ('-' for stdout where supported)")
    common.add_argument("--format", choices=["csv"], help="output format (csv only)")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], argument_default=S, help="synthesize a dataset")
    g.add_argument("--scenario", choices=["scalar", "fir"])
    g.add_argument("--w0", help="true parameter; comma-separated taps for fir")
    g.add_argument("--n", type=int)
    g.add_argument("--alpha", type=float)
    g.add_argument("--beta", type=float)
    g.add_argument("--mu-u", dest="mu_u", type=float)
    g.add_argument("--mu-v", dest="mu_v", type=float)
    g.add_argument("--var-u", dest="var_u", type=float)
    g.add_argument("--var-v", dest="var_v", type=float)
    g.add_argument("--input", choices=["two-interval", "gaussian", "constant"])
    g.add_argument("--input-variance", dest="input_variance", type=float)
    g.add_argument("--noise-free", dest="noise_free", action="store_true")
    g.add_argument("--noise-placement", dest="noise_placement", choices=["row", "series"])

    e = sub.add_parser("estimate", parents=[common], argument_default=S, help="fit estimators")
    e.add_argument("--dataset")
    e.add_argument("--estimators", help="comma list from mse,lad,tls,mcc")
    e.add_argument("--sigma", type=float)
    e.add_argument("--solver", choices=["fixed-point", "grid", "eda", "gradient-ascent"])
    e.add_argument("--search-lo", dest="search_lo", type=float)
    e.add_argument("--search-hi", dest="search_hi", type=float)
    e.add_argument("--grid-points", dest="grid_points", type=int)
    e.add_argument("--tls-ratio", dest="tls_ratio",
                   help="var(v)/var(u) for TLS; 'auto' reads it from the metadata")

    b = sub.add_parser("bound", parents=[common], argument_default=S, help="error bound report")
    b.add_argument("--dataset")
    b.add_argument("--n", type=int)
    b.add_argument("--m", type=int)
    b.add_argument("--eps-u", dest="eps_u", type=float)
    b.add_argument("--eps-v", dest="eps_v", type=float)
    b.add_argument("--w0-abs", dest="w0_abs", type=float)
    b.add_argument("--c", type=float)
    b.add_argument("--sigma", type=float)
    b.add_argument("--lambda", dest="lam", type=float)

    s = sub.add_parser("sweep", parents=[common], argument_default=S, help="Monte Carlo sweep")
    s.add_argument("--preset", help=f"one of {', '.join(sorted(PRESETS))}")
    s.add_argument("--runs", type=int)
    s.add_argument("--jobs", type=int, help="worker processes (output is unaffected)")
    s.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override an experiment setting, value parsed as JSON")

    v = sub.add_parser("verify", parents=[common], argument_default=S, help="check the error bound")
    v.add_argument("--trials", type=int)
    v.add_argument("--samples", type=int, help="sampled parameters outside the ball per trial")
    return parser


def resolve(args: argparse.Namespace, environ=None) -> dict:
    """Merge defaults, config file, environment and flags into one settings dict."""
    environ = os.environ if environ is None else environ
    flags = vars(args).copy()
    command = flags.pop("command")
    settings = dict(DEFAULTS[command])
    settings["seed"] = DEFAULT_SEED
    config_path = flags.pop("config", None)
    if config_path:
        try:
            data = json.loads(Path(config_path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {config_path}: {exc}") from exc
        if not isinstance(data, dict):
            raise UsageError("config file must hold a JSON object")
        settings.update({k.replace("-", "_"): val for k, val in data.items()})
    if SEED_ENV in environ:
        try:
            settings["seed"] = int(environ[SEED_ENV])
        except ValueError as exc:
            raise UsageError(f"{SEED_ENV} must be an integer") from exc
    settings.update(flags)
    settings["command"] = command
    return settings


def _open_out(path):
    if path in (None, "-"):
        return sys.stdout, False
    return open(path, "w", newline=""), True


def _write_records(records: list, path) -> None:
    keys = []
    for rec in records:
        keys += [k for k in rec if k not in keys]
    fh, close = _open_out(path)
    try:
        writer = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
        writer.writeheader()
        for rec in records:
            writer.writerow({k: _cell(rec.get(k)) for k in keys})
    finally:
        if close:
            fh.close()


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "" if math.isnan(value) else format(value, ".10g")
    return value


# -- commands ----------------------------------------------------------------

def cmd_generate(cfg: dict) -> int:
    noise_u = noise_v = None
    if not cfg["noise_free"]:
        noise_u = GaussianMixtureSpec(cfg["alpha"], cfg["mu_u"], cfg["var_u"])
        noise_v = GaussianMixtureSpec(cfg["beta"], cfg["mu_v"], cfg["var_v"])
    if cfg["scenario"] == "scalar":
        w0 = _float_list(cfg["w0"]) if cfg["w0"] is not None else [3.0]
        if len(w0) != 1:
            raise UsageError("scalar scenario takes a single --w0")
        inp = InputSpec(kind=cfg["input"], variance=cfg["input_variance"])
        ds = generate_scalar_dataset(w0[0], inp, noise_u, noise_v, cfg["n"], cfg["seed"])
    else:
        w0 = _float_list(cfg["w0"]) if cfg["w0"] is not None else list(DEFAULT_FIR_WEIGHTS)
        ds = generate_fir_dataset(w0, cfg["n"], cfg["input_variance"], noise_u, noise_v,
                                  cfg["seed"], noise_placement=cfg["noise_placement"])
    ds.meta["settings"] = {k: cfg[k] for k in sorted(cfg) if k not in ("command", "format")}
    csv_path, meta_path = write_dataset(ds, cfg["output"])
    print(f"wrote {csv_path} ({ds.n} rows) and {meta_path}")
    return 0


def _tls_ratio_from(ds, setting) -> float:
    if setting not in (None, "auto"):
        return float(setting)
    specs = [ds.meta.get("u_spec"), ds.meta.get("v_spec")]
    if ds.meta.get("scenario") is None or any(s is None for s in specs):
        return 1.0
    var_u, var_v = (s["variance"] + s["weight"] * s["outlier_mean"] ** 2 for s in specs)
    return var_v / var_u


def cmd_estimate(cfg: dict) -> int:
    if not cfg["dataset"]:
        raise UsageError("estimate needs --dataset")
    try:
        ds = read_dataset(cfg["dataset"])
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot parse dataset: {exc}") from exc
    names = [s.strip() for s in str(cfg["estimators"]).split(",") if s.strip()]
    unknown = set(names) - {"mse", "lad", "tls", "mcc"}
    if unknown:
        raise UsageError(f"unknown estimators: {sorted(unknown)}")
    mcc_cfg = MCCConfig(sigma=cfg["sigma"], solver=cfg["solver"], search_lo=cfg["search_lo"],
                        search_hi=cfg["search_hi"], grid_points=cfg["grid_points"], seed=cfg["seed"])
    records = []
    for name in names:
        try:
            if name == "mse":
                res = mse_estimate(ds)
            elif name == "lad":
                res = lad_estimate(ds)
            elif name == "tls":
                res = tls_estimate(ds, _tls_ratio_from(ds, cfg["tls_ratio"]))
            else:
                res = mcc_estimate(ds, mcc_cfg, rng=np.random.default_rng(cfg["seed"]))
            rec = res.to_record()
            rec.update(failed=False, message="")
        except EstimationError as exc:
            rec = {"estimator": name, "failed": True, "message": str(exc)}
        records.append(rec)
    _write_records(records, cfg["output"])
    return 0


def cmd_bound(cfg: dict) -> int:
    n, m, c, w0_abs = cfg["n"], cfg["m"], cfg["c"], cfg["w0_abs"]
    if cfg["dataset"]:
        try:
            ds = read_dataset(cfg["dataset"])
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot parse dataset: {exc}") from exc
        if isinstance(ds, VectorEIVDataset):
            raise UsageError("bounds exist for scalar datasets only")
        if not ds.has_noises:
            raise UsageError("dataset lacks the true noises needed for the clean set")
        chk = check_assumptions(ds, cfg["eps_u"], cfg["eps_v"])
        n, m, c = ds.n, chk.clean.m, chk.clean.c
        if w0_abs is None:
            if ds.w0 is None:
                raise UsageError("dataset metadata has no w0; pass --w0-abs")
            w0_abs = abs(ds.w0)
    if n is None or m is None:
        raise UsageError("bound needs --n and --m (or --dataset)")
    inputs = BoundInputs(n=n, m=m, eps_u=cfg["eps_u"], eps_v=cfg["eps_v"],
                         w0_abs=0.0 if w0_abs is None else w0_abs, c=c,
                         sigma=cfg["sigma"], lam=cfg["lam"])
    report = compute_bound(inputs)
    _write_records([report.to_record()], cfg["output"])
    return 0


def _parse_sets(items) -> dict:
    out = {}
    for item in items or []:
        if isinstance(item, str):
            key, sep, raw = item.partition("=")
            if not sep:
                raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
            try:
                val = json.loads(raw)
            except json.JSONDecodeError:
                val = raw
            out[key.strip().replace("-", "_")] = val
    return out


def cmd_sweep(cfg: dict) -> int:
    overrides = {}
    if isinstance(cfg["set"], dict):
        overrides.update(cfg["set"])
    else:
        overrides.update(_parse_sets(cfg["set"]))
    overrides["seed"] = cfg["seed"]
    if cfg["runs"] is not None:
        overrides["runs"] = int(cfg["runs"])
    for key in ("w0", "estimators"):
        if key in overrides:
            overrides[key] = tuple(np.atleast_1d(overrides[key]).tolist())

    if cfg["sweep"] is not None:
        spec = SweepSpec.from_dict(cfg["sweep"])
        name = cfg["preset"] or "custom"
        spec = replace(spec, config=replace(spec.config, **overrides))
    elif cfg["preset"]:
        if cfg["preset"] not in PRESETS:
            raise UsageError(f"unknown preset {cfg['preset']!r}; choose from {', '.join(sorted(PRESETS))}")
        name = cfg["preset"]
        spec = preset(name, **overrides)
    else:
        raise UsageError("sweep needs --preset (or a 'sweep' object in --config)")
    summary = run_sweep(spec, jobs=int(cfg["jobs"]))
    out = cfg["output"] or f"{name}.csv"
    csv_path, manifest = write_summary(summary, out, preset_name=name)
    print(f"wrote {csv_path} and {manifest}")
    return 0


def cmd_verify(cfg: dict) -> int:
    report = verify_bound_property(int(cfg["trials"]), seed=cfg["seed"], samples=int(cfg["samples"]))
    buf = io.StringIO()
    print(f"trials: {report.trials}", file=buf)
    print(f"checked: {report.checked}", file=buf)
    print(f"violations: {report.violations}", file=buf)
    print(f"ball_violations: {report.ball_violations}", file=buf)
    print(f"dominance_violations: {report.dominance_violations}", file=buf)
    print(f"oracle_failures: {report.oracle_failures}", file=buf)
    print(f"corollary2_trials: {report.corollary2_trials}", file=buf)
    for q, val in report.margin_quantiles().items():
        print(f"margin_q{int(round(q * 100)):03d}: {val:.6g}", file=buf)
    text = buf.getvalue()
    if cfg.get("output") not in (None, "-"):
        Path(cfg["output"]).write_text(text)
    sys.stdout.write(text)
    return 1 if report.violations else 0


COMMANDS = {
    "generate": cmd_generate,
    "estimate": cmd_estimate,
    "bound": cmd_bound,
    "sweep": cmd_sweep,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args)
        return COMMANDS[cfg["command"]](cfg)
    except (UsageError, ValueError, KeyError, TypeError, OSError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"mccrobust {args.command}: error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
