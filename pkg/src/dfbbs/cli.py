"""
Command-line entry point.

    dfbbs validate <config|preset>
    dfbbs run <config|preset> [--out DIR] [--set key=value ...] [--no-plots]
    dfbbs sweep <config|preset> --param KEY --values V1,V2,...
    dfbbs preset <name>

Exit codes: 0 success, 1 configuration error, 2 runtime failure. The number
of worker threads for independent runs is read from ``DFBBS_THREADS``.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

from .config import AUTO, ConfigError, ExperimentConfig, override, parse_config
from .experiment import build_instance, resolve_solver, run_experiment
from .presets import PRESETS, preset_text
from .solvers import ConfigurationError, stepsize_bound

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _config_text(ref: str) -> tuple[str, str]:
    if ref in PRESETS:
        return preset_text(ref), f"preset:{ref}"
    p = Path(ref)
    if not p.is_file():
        raise ConfigError(f"{ref!r} is neither a preset ({', '.join(PRESETS)}) nor a readable file")
    return p.read_text(), str(p)


def _load(ref: str, sets: list[str] | None = None, out: str | None = None) -> ExperimentConfig:
    text, src = _config_text(ref)
    if sets:
        text = override(text, sets)
    cfg = parse_config(text, source=src)
    return cfg.with_output(out) if out else cfg


def cmd_validate(args) -> int:
    cfg = _load(args.config, args.set)
    inst = build_instance(cfg)
    rep = inst.report
    print(f"agents m={cfg.problem.m}, edges={len(inst.graph.edges)}, network seed={inst.network_seed}")
    print(f"lambda_min(W)={rep.lambda_min:.6g}  lambda_max(W)={rep.lambda_max:.6g}  "
          f"rho_mix={rep.rho_mix:.6g}  gershgorin_min={rep.gershgorin_min:.6g}")
    print(f"weights admissible: {'yes' if rep.passes_assumption1 else 'no'}")
    for msg in rep.messages:
        print(f"  ! {msg}")
    print(f"alpha={inst.alpha:.6g}  L_f={inst.lip:.6g}  theta*={inst.truth.theta_star}")
    for spec in cfg.solvers:
        for p in cfg.network.p:
            stochastic = p < 1.0
            try:
                sc = resolve_solver(spec, inst, p, cfg)
                rng = stepsize_bound(spec.algorithm, rep, inst.alpha, inst.lip, cfg.mu, stochastic)
            except ConfigurationError as exc:
                print(f"{spec.label} (p={p:g}): not runnable: {exc}")
                continue
            if spec.algorithm in ("dadmm", "dlm"):
                extra = f", rho={sc.rho:.6g}{' (auto)' if spec.rho == AUTO else ''}" if spec.algorithm == "dlm" else ""
                print(f"{spec.label} [{spec.algorithm}] p={p:g}: c={sc.penalty:.6g}{extra}")
                continue
            lo = f"{rng.lower:.6g}" if rng.lower > 0 else "0"
            hi = f"{rng.upper:.6g}" if math.isfinite(rng.upper) else "inf"
            note = "" if sc.gamma in rng or spec.algorithm == "dsm" else "  OUTSIDE admissible range"
            src = " (auto)" if spec.gamma == AUTO else ""
            print(f"{spec.label} [{spec.algorithm}] p={p:g}: gamma={sc.gamma:.6g}{src}, "
                  f"admissible ({lo}, {hi}){note}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _load(args.config, args.set, args.out)
    if args.no_plots:
        cfg = _replace_plots(cfg)
    res = run_experiment(cfg)
    print(f"wrote {len(res.files)} files to {cfg.output}")
    if res.failures:
        print(f"{len(res.failures)} failed cell(s); see {Path(cfg.output) / 'failures.csv'}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigError("--values must list at least one value")
    base = _load(args.config, args.set, args.out)
    for v in values:
        sub = Path(base.output) / f"{args.param}={v}"
        cfg = _load(args.config, (args.set or []) + [f"{args.param}={v}"], str(sub))
        if args.no_plots:
            cfg = _replace_plots(cfg)
        res = run_experiment(cfg)
        print(f"{args.param}={v}: wrote {len(res.files)} files to {sub}"
              + (f", {len(res.failures)} failed cell(s)" if res.failures else ""))
    return EXIT_OK


def cmd_preset(args) -> int:
    sys.stdout.write(preset_text(args.name))
    return EXIT_OK


def _replace_plots(cfg: ExperimentConfig) -> ExperimentConfig:
    from dataclasses import replace
    return replace(cfg, plots=False)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dfbbs", description="Distributed forward-backward Bregman splitting experiments")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("config", help="config file or preset name")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
        if out:
            p.add_argument("--out", help="output directory (overrides output.path)")
            p.add_argument("--no-plots", action="store_true", help="write CSV files only")

    p = sub.add_parser("validate", help="report topology and stepsize bounds")
    common(p, out=False)
    p.set_defaults(func=cmd_validate)
    p = sub.add_parser("run", help="run an experiment and write CSV files")
    common(p)
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("sweep", help="run once per value of one config key")
    common(p)
    p.add_argument("--param", required=True, help="config key, e.g. solver.dfbbs.gamma")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("preset", help="print a preset's config text")
    p.add_argument("name", choices=sorted(PRESETS))
    p.set_defaults(func=cmd_preset)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ConfigurationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - the CLI maps every failure to an exit code
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
