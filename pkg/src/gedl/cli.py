"""Command-line interface: ``gedl {train,eval,sweep,severity,verify,presets}``.

Settings are resolved as defaults < ``--config`` file < command-line flags.
Exit codes: 0 success, 1 verification or metric-threshold failure, 2 invalid
configuration.
"""

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import fields

import numpy as np

from . import evidential, nnet
from .checks import CHECKS, format_report, run_checks
from .data import DatasetSpec, generate_dataset
from .training import ConfigError, RunConfig, TrainingError, evaluate, load_config_file, run, seed_streams, severity_study, severity_trend, sweep

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

# RunConfig fields exposed as flags; hidden_dims takes "64,64"
_RUN_FLAGS = ("variant", "c_w", "c_tau", "w0", "t0", "epochs", "hidden_dims", "lr", "beta1", "beta2", "eps", "batch_size")


def _add_common(p):
    p.add_argument("--config", help="INI-style key/value file with [run] [variant] [model] [optim] [data] sections")
    p.add_argument("--seed", type=int, help="master seed (data, init and shuffle streams)")
    p.add_argument("--out-dir", dest="out_dir", help="directory for outputs")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_run_flags(p):
    g = p.add_argument_group("run configuration")
    defaults = RunConfig()
    for name in _RUN_FLAGS:
        default = getattr(defaults, name)
        kind = str if name in ("variant", "hidden_dims") else type(default)
        g.add_argument("--" + name.replace("_", "-"), dest=name, type=kind, help=f"(default: {default})")
    g.add_argument(
        "--data",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help=f"dataset spec override, repeatable; keys: {', '.join(f.name for f in fields(DatasetSpec))}",
    )


def _resolve_config(args, base=None):
    """Merge defaults, an optional base mapping, the config file and flags."""
    mapping = dict(base or {})
    if getattr(args, "config", None):
        mapping.update(load_config_file(args.config))
    for name in (*_RUN_FLAGS, "seed", "out_dir"):
        value = getattr(args, name, None)
        if value is not None:
            mapping[name] = value
    for item in getattr(args, "data", []) or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--data expects KEY=VALUE, got {item!r}")
        mapping[f"data.{key.strip()}"] = value.strip()
    return RunConfig.from_mapping(mapping)


def _flat_from_dict(d):
    d = dict(d)
    data = d.pop("data", {}) or {}
    d.update({f"data.{k}": v for k, v in data.items()})
    return d


def _threshold_failures(summary, args):
    bad = []
    if args.min_accuracy is not None and summary["accuracy"] < args.min_accuracy:
        bad.append(f"accuracy {summary['accuracy']:.4f} < {args.min_accuracy}")
    return bad


def cmd_train(args):
    config = _resolve_config(args)
    _, tlog, report = run(config, write=True)
    summary = report.summary()
    print(json.dumps({"variant": config.variant, "seed": config.seed, **summary}, indent=2, sort_keys=True))
    print(f"wrote {config.out_dir}/{{metrics.json,records.csv,training_log.csv,model.json}}")
    bad = _threshold_failures(summary, args)
    for msg in bad:
        print("FAIL:", msg, file=sys.stderr)
    return EXIT_FAIL if bad else EXIT_OK


def cmd_eval(args):
    try:
        model, meta = nnet.load_checkpoint(args.model)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot load checkpoint {args.model}: {exc}") from exc
    config = _resolve_config(args, base=_flat_from_dict(meta.get("config", {})))
    if args.out_dir is None:
        config = RunConfig.from_mapping({**_flat_from_dict(config.to_dict()), "out_dir": os.path.dirname(os.path.abspath(args.model))})
    # rebuild the same dataset the checkpoint was trained on
    data_rng, _, _ = seed_streams(config.seed)
    ds = generate_dataset(config.data, rng=data_rng)
    if model.input_dim != ds.features.shape[1] or model.K != ds.K:
        raise ConfigError(f"checkpoint expects {model.input_dim} features / {model.K} classes, dataset has {ds.features.shape[1]} / {ds.K}")
    x, y = ds.subset(args.split)
    report = evaluate(model, x, y, ds.ood_features, config.variant_config(), bins=args.bins)
    report.write(config.out_dir, extra={"variant": config.variant, "seed": config.seed, "split": args.split})
    summary = report.summary()
    print(json.dumps(summary, indent=2, sort_keys=True))
    bad = _threshold_failures(summary, args)
    for msg in bad:
        print("FAIL:", msg, file=sys.stderr)
    return EXIT_FAIL if bad else EXIT_OK


def _grid(text):
    try:
        vals = [float(v) for v in text.replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigError(f"bad grid {text!r}") from exc
    if not vals or not all(np.isfinite(vals)):
        raise ConfigError(f"grid must be a non-empty list of finite numbers, got {text!r}")
    return vals


def cmd_sweep(args):
    config = _resolve_config(args)
    c_w_grid, c_tau_grid = _grid(args.c_w_grid), _grid(args.c_tau_grid)
    os.makedirs(config.out_dir, exist_ok=True)
    path = os.path.join(config.out_dir, "sweep.csv")
    rows = sweep(config, c_w_grid, c_tau_grid, jobs=args.jobs, csv_path=path)
    for r in rows:
        if r["status"] == "ok":
            print(f"C_w={r['c_w']:<6g} C_tau={r['c_tau']:<7g} acc={r['accuracy']:.4f} um_aupr={r['ood_um_aupr']:.4f} mp_aupr={r['ood_mp_aupr']:.4f}")
        else:
            print(f"C_w={r['c_w']:<6g} C_tau={r['c_tau']:<7g} FAILED {r['error']}")
    print(f"wrote {path}")
    return EXIT_FAIL if any(r["status"] != "ok" for r in rows) else EXIT_OK


def cmd_severity(args):
    if args.model:
        model, meta = nnet.load_checkpoint(args.model)
        config = _resolve_config(args, base=_flat_from_dict(meta.get("config", {})))
        data_rng, _, _ = seed_streams(config.seed)
        ds = generate_dataset(config.data, rng=data_rng)
    else:
        config = _resolve_config(args)
        from .training import train

        model, _, ds = train(config)
    x, y = ds.subset("test")
    levels = _grid(args.levels)
    if any(lv < 0 for lv in levels):
        raise ConfigError("noise levels must be >= 0")
    rows = severity_study(model, x, config.variant_config(), levels, seed=config.seed, labels=y)
    os.makedirs(config.out_dir, exist_ok=True)
    path = os.path.join(config.out_dir, "severity.csv")
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    for r in rows:
        print("  ".join(f"{k}={v:.5g}" for k, v in r.items()))
    if len(rows) > 1:
        print(f"Spearman(severity, mean um) = {severity_trend(rows):.4f}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_verify(args):
    names = None
    if args.only:
        names = set(args.only)
        unknown = names - set(CHECKS)
        if unknown:
            raise ConfigError(f"unknown checks {sorted(unknown)}; available: {sorted(CHECKS)}")
    skip = ("behaviour.bench_v1",) if args.quick else ()
    results = run_checks(names, skip, progress=lambda r: print(r.line(), flush=True))
    report = format_report(results)
    out_dir = args.out_dir or "."
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "verify_report.txt")
    with open(path, "w") as fh:
        fh.write(report)
    print(report.splitlines()[-1])
    print(f"wrote {path}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


def cmd_presets(args):
    for name, cfg in evidential.PRESETS.items():
        print(f"{name:<9} W={cfg.prior_strength_rule:<8} tau={cfg.tau_rule:<13} kl={cfg.kl_masking:<18} lik={cfg.likelihood:<4} {cfg.description}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="gedl", description="Generalized evidential deep learning toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one model and evaluate it on bench data")
    _add_common(p)
    _add_run_flags(p)
    p.add_argument("--min-accuracy", type=float, help="exit 1 if test accuracy falls below this")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a saved checkpoint")
    p.add_argument("model", help="model.json written by train")
    _add_common(p)
    _add_run_flags(p)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--bins", type=int, default=15, help="ECE bins")
    p.add_argument("--min-accuracy", type=float, help="exit 1 if accuracy falls below this")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="grid over C_w x C_tau, one seeded run per cell")
    _add_common(p)
    _add_run_flags(p)
    p.add_argument("--c-w-grid", default="0.3,0.5,0.7")
    p.add_argument("--c-tau-grid", default="70,100,150")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("severity", help="uncertainty versus Gaussian input-noise severity")
    _add_common(p)
    _add_run_flags(p)
    p.add_argument("--model", help="checkpoint to study (trains a fresh model if omitted)")
    p.add_argument("--levels", default="0,0.5,1,2,4,8")
    p.set_defaults(func=cmd_severity)

    p = sub.add_parser("verify", help="run the verification suite")
    _add_common(p)
    p.add_argument("--quick", action="store_true", help="skip the end-to-end behavioural check")
    p.add_argument("--only", nargs="+", metavar="CHECK", help="run only these checks")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("presets", help="list variant presets")
    p.set_defaults(func=cmd_presets)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors, which is our invalid-config code too
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingError as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
