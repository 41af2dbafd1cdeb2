"""Command-line front end: ``boxhaz {fit,select,simulate,diagnose,replay}``.

Exit codes: 0 success, 2 invalid input or configuration, 3 sampler
initialization failure.  Every flag can also be set through an environment
variable ``BOXHAZ_<FLAG>`` (upper case, dashes as underscores); explicit flags
win over the environment.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path

import numpy as np

from . import data_io, inference, sampler, selection
from .model import ModelConfig, ModelError

ENV_PREFIX = "BOXHAZ_"
EXIT_OK, EXIT_INVALID, EXIT_INIT = 0, 2, 3

DEFAULT_GAMMAS = "0,0.25,0.5,0.75,1"
DEFAULT_JS = "1,5,10"



class _DefaultsFormatter(argparse.ArgumentDefaultsHelpFormatter):
    """Append ``(default: X)`` only when there is a concrete default to show."""

    def _get_help_string(self, action):
        if action.default is None or "default" in (action.help or ""):
            return action.help
        return super()._get_help_string(action)

def _version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def _float_list(text):
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text):
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _str_list(text):
    return [v.strip() for v in str(text).split(",") if v.strip()]


def _tuples(width):
    def parse(text):
        out = []
        for item in _str_list(text):
            parts = item.split(":")
            if len(parts) != width:
                raise argparse.ArgumentTypeError(
                    f"expected {width} colon-separated numbers per entry, got {item!r}"
                )
            out.append(tuple(float(v) for v in parts))
        return out
    parse.__name__ = f"tuple{width}"
    return parse


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _add_data_flags(p):
    p.add_argument("--data", required=True, help="input CSV (time,status,covariates...)")
    p.add_argument("--time-col", default="time", help="name of the time column")
    p.add_argument("--status-col", default="status", help="name of the event indicator column")
    p.add_argument("--covariates", type=_str_list, default=None,
                   help="comma-separated covariate columns (default: all other columns)")


def _add_model_flags(p):
    p.add_argument("--constrained-covariate", default=None,
                   help="covariate whose coefficient gets the truncated prior (default: first)")
    p.add_argument("--sigma", type=float, default=100.0, help="prior SD of every coefficient")
    p.add_argument("--alpha", type=float, default=2.0, help="Gamma prior shape for baseline levels")
    p.add_argument("--xi", type=float, default=0.01, help="Gamma prior rate for baseline levels")
    p.add_argument("--burn-in", type=int, default=2000, help="sweeps discarded before storing")
    p.add_argument("--thin", type=int, default=5, help="keep every thin-th sweep")
    p.add_argument("--samples", type=int, default=10000, help="number of retained draws M")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--level", type=float, default=0.95, help="HPD interval level")
    p.add_argument("--out", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    fmt = _DefaultsFormatter
    parser = _Parser(prog="boxhaz", description="Bayesian Box-Cox transformation hazard models.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {_version()}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit one (gamma, J) model", formatter_class=fmt)
    _add_data_flags(p)
    p.add_argument("--gamma", type=float, required=True, help="transformation parameter in [0, 1]")
    p.add_argument("--intervals", type=int, default=1, help="number of baseline intervals J")
    _add_model_flags(p)
    p.add_argument("--trace", default=None, help="write per-sweep NDJSON trace here")

    p = sub.add_parser("select", help="grid search over gamma and J", formatter_class=fmt)
    _add_data_flags(p)
    p.add_argument("--gammas", type=_float_list, default=DEFAULT_GAMMAS, help="gamma grid")
    p.add_argument("--intervals-list", type=_int_list, default=DEFAULT_JS, help="J grid")
    _add_model_flags(p)
    p.add_argument("--jobs", type=int, default=1, help="cells fitted concurrently")

    p = sub.add_parser("simulate", help="generate a synthetic dataset", formatter_class=fmt)
    p.add_argument("--n", type=int, default=300, help="sample size")
    p.add_argument("--gamma-true", type=float, default=0.5, help="generating gamma")
    p.add_argument("--lambda0", type=float, default=0.5, help="constant baseline hazard")
    p.add_argument("--beta", type=_float_list, default="0.7,1", help="true coefficients")
    p.add_argument("--normal", type=_tuples(2), default="5:1",
                   help="normal covariates as mean:sd, comma-separated")
    p.add_argument("--binary", type=_tuples(3), default="1:2:0.5",
                   help="binary covariates as a:b:q (value b with probability q)")
    p.add_argument("--censoring", choices=("uniform", "none"), default="uniform",
                   help="censoring mechanism")
    p.add_argument("--censoring-rate", type=float, default=0.25, help="target censoring rate")
    p.add_argument("--seed", type=int, default=2024, help="random seed")
    p.add_argument("--out", required=True, help="output CSV path")

    p = sub.add_parser("diagnose", help="Geweke diagnostics for a samples file", formatter_class=fmt)
    p.add_argument("--samples", required=True, help="samples CSV written by fit")
    p.add_argument("--trace", default=None, help="optional NDJSON trace for acceptance rates")
    p.add_argument("--early", type=float, default=0.1, help="early window fraction")
    p.add_argument("--late", type=float, default=0.5, help="late window fraction")
    p.add_argument("--out", default=None, help="JSON report path (default: stdout)")

    p = sub.add_parser("replay", help="re-run a command from its manifest", formatter_class=fmt)
    p.add_argument("manifest", help="manifest.json written by an earlier run")
    p.add_argument("--out", default=None, help="override the output location")

    for sp in sub.choices.values():
        _apply_env(sp)
    return parser


def _apply_env(parser):
    """Turn ``BOXHAZ_<DEST>`` environment variables into flag defaults."""
    for action in parser._actions:
        if not action.option_strings or action.dest in ("help", "version"):
            continue
        raw = os.environ.get(ENV_PREFIX + action.dest.upper())
        if raw is None:
            continue
        action.default = raw
        action.required = False


def _finalize(args):
    # argparse applies `type` to string defaults, env values included, but
    # list defaults given as strings need the same treatment
    for name in ("gammas", "intervals_list", "beta", "normal", "binary", "covariates"):
        v = getattr(args, name, None)
        if isinstance(v, str):
            conv = {"gammas": _float_list, "intervals_list": _int_list, "beta": _float_list,
                    "normal": _tuples(2), "binary": _tuples(3), "covariates": _str_list}[name]
            setattr(args, name, conv(v))
    return args


def _canonical_argv(parser, args):
    """Explicit argv reproducing ``args`` without relying on the environment."""
    sub = parser._subparsers._group_actions[0].choices[args.command]
    argv = [args.command]
    for action in sub._actions:
        if not action.option_strings or action.dest == "help":
            continue
        v = getattr(args, action.dest, None)
        if v is None:
            continue
        if isinstance(v, list):
            if v and isinstance(v[0], tuple):
                v = ",".join(":".join(repr(x) for x in t) for t in v)
            else:
                v = ",".join(str(x) for x in v)
        argv += [action.option_strings[-1], str(v)]
    return argv


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _write_manifest(path, parser, args, inputs, started, extra=None):
    config = {k: v for k, v in vars(args).items()}
    manifest = {
        "command": args.command,
        "argv": _canonical_argv(parser, args),
        "config": config,
        "seed": getattr(args, "seed", None),
        "version": _version(),
        "inputs": {str(p): _sha256(p) for p in inputs},
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
    }
    if extra:
        manifest.update(extra)
    Path(path).write_text(json.dumps(manifest, indent=2, default=str), encoding="utf-8")
    return manifest


def _load_data(args):
    return data_io.read_dataset(args.data, args.time_col, args.status_col, args.covariates)


def _config(args, data, gamma, J):
    name = args.constrained_covariate
    if name is None:
        k = 0
    elif name in data.covariate_names:
        k = data.covariate_names.index(name)
    else:
        raise ModelError(f"unknown constrained covariate {name!r}; have {list(data.covariate_names)}")
    return ModelConfig(gamma=gamma, J=J, k=k, sigma=(args.sigma,), alpha=args.alpha, xi=args.xi)


def _settings(args):
    return sampler.SamplerSettings(burn_in=args.burn_in, thin=args.thin, M=args.samples,
                                   seed=args.seed)


def _model_dict(cfg, data):
    return {"gamma": cfg.gamma, "J": cfg.J, "constrained_covariate": data.covariate_names[cfg.k],
            "sigma": list(cfg.sigma), "alpha": cfg.alpha, "xi": cfg.xi}


def cmd_fit(args, parser):
    started = datetime.now(timezone.utc).isoformat()
    data = _load_data(args)
    cfg = _config(args, data, args.gamma, args.intervals)
    cfg.check_data(data)
    settings = _settings(args)
    part = data_io.build_partition(data, args.intervals)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as tr:
            chain = sampler.run_chain(data, part, cfg, settings, trace=tr)
    else:
        chain = sampler.run_chain(data, part, cfg, settings)
    summary = inference.summarize(chain, args.level)
    fit = selection.fit_statistics(chain, data)
    geweke = sampler.geweke_diagnostic(chain) if chain.M >= 100 else None
    data_io.write_samples(chain, out / "samples.csv")
    config = _model_dict(cfg, data) | {
        "burn_in": settings.burn_in, "thin": settings.thin, "M": settings.M,
        "seed": settings.seed, "cut_points": part.s.tolist(),
    }
    extra = {"sampler_stats": chain.stats}
    if fit.dic_error:
        extra["warnings"] = [fit.dic_error]
    data_io.write_summary(out / "summary.json", config, summary, fit, geweke, extra)
    zbar = data.Z.mean(axis=0)
    curves = {}
    try:
        edges, levels = inference.hazard_steps(chain, zbar)
        curves[("hazard_mean_profile", "all")] = (edges[:-1], levels)
    except ModelError:
        pass
    na = inference.nelson_aalen(data)["all"]
    curves[("nelson_aalen", "all")] = (na.times, na.values)
    data_io.write_curves(curves, out / "curves.csv")
    _write_manifest(out / "manifest.json", parser, args, [args.data], started)
    print(f"fit written to {out}")
    return EXIT_OK


def cmd_select(args, parser):
    started = datetime.now(timezone.utc).isoformat()
    data = _load_data(args)
    if not args.gammas or not args.intervals_list:
        raise ModelError("gamma and J lists must be non-empty")
    cfg = _config(args, data, args.gammas[0], 1)
    cfg.check_data(data) if max(args.gammas) > 0 else None
    settings = _settings(args)
    grid = selection.run_grid(data, args.gammas, args.intervals_list, cfg, settings, jobs=args.jobs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data_io.write_grid(grid, out / "grid.csv")
    cells = [{"gamma": c.gamma, "J": c.J, "status": c.status, "message": c.message,
              "fit": c.fit.to_dict() if c.fit else None,
              "summaries": c.summary.to_records() if c.summary else None}
             for c in grid.cells]
    Path(out / "grid.json").write_text(json.dumps(
        {"cells": cells, "best_by_B": grid.best_by_B, "best_by_DIC": grid.best_by_DIC}, indent=2),
        encoding="utf-8")
    _write_manifest(out / "manifest.json", parser, args, [args.data], started)
    failed = [c for c in grid.cells if c.status != "ok"]
    for c in failed:
        print(f"cell gamma={c.gamma:g} J={c.J} failed: {c.message}", file=sys.stderr)
    if len(failed) == len(grid.cells):
        return EXIT_INIT
    print(f"grid of {len(grid.cells)} cells written to {out}")
    return EXIT_OK


def cmd_simulate(args, parser):
    started = datetime.now(timezone.utc).isoformat()
    spec = data_io.SimulationSpec(
        n=args.n, gamma_true=args.gamma_true, lambda0=args.lambda0, beta_true=tuple(args.beta),
        normal_covariates=tuple(args.normal), binary_covariates=tuple(args.binary),
        censoring=args.censoring, censoring_rate=args.censoring_rate, seed=args.seed,
    )
    res = data_io.simulate(spec)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    data_io.write_dataset(res.data, out)
    _write_manifest(out.with_name(out.stem + ".manifest.json"), parser, args, [], started,
                    {"simulation": res.info})
    print(f"{spec.n} rows written to {out}")
    return EXIT_OK


def _trace_acceptance(path):
    counts, n = None, 0
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            flags = np.asarray(json.loads(line)["lambda_accepted"], dtype=float)
            counts = flags if counts is None else counts + flags
            n += 1
    if not n:
        return None
    return {"sweeps": n, "lambda_accept_rate": (counts / n).tolist()}


def cmd_diagnose(args, parser):
    try:
        names, draws, _ = data_io.read_samples(args.samples)
        if args.trace:
            acc = _trace_acceptance(args.trace)
    except (ValueError, KeyError, OSError) as exc:
        raise ModelError(f"malformed input: {exc}") from exc
    rep = sampler.geweke_diagnostic(draws, args.early, args.late)
    rep.names = list(names)
    obj = rep.to_dict()
    if args.trace:
        obj["acceptance"] = acc
    text = json.dumps(obj, indent=2)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        print(text)
    return EXIT_OK


def cmd_replay(args, parser):
    manifest = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
    for path, digest in manifest.get("inputs", {}).items():
        if not Path(path).exists() or _sha256(path) != digest:
            print(f"warning: input {path} differs from the recorded digest", file=sys.stderr)
    argv = list(manifest["argv"])
    if args.out is not None:
        i = argv.index("--out")
        argv[i + 1] = args.out
    return main(argv)


COMMANDS = {"fit": cmd_fit, "select": cmd_select, "simulate": cmd_simulate,
            "diagnose": cmd_diagnose, "replay": cmd_replay}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _finalize(parser.parse_args(argv))
    except SystemExit as exc:
        return int(exc.code or 0)
    except argparse.ArgumentTypeError as exc:
        print(f"boxhaz: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        return COMMANDS[args.command](args, parser)
    except sampler.InitializationError as exc:
        print(f"boxhaz: initialization failed: {exc}", file=sys.stderr)
        return EXIT_INIT
    except (ModelError, ValueError, OSError) as exc:
        print(f"boxhaz: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
