"""Command-line entry point: ``cbrw run|sweep|validate|bounds``."""

from __future__ import annotations

import argparse
import sys
from typing import List, Optional

from ..hierarchy import ground_truth_targets
from ..seqtest import lemma1_bound
from ..streams import random_source
from ..walk import WalkMode
from .config import ConfigError, load_config
from .runner import build_tree, run_experiment, sweep, sweep_axis
from .stats import fit_scaling

EXIT_OK, EXIT_CONFIG, EXIT_VALIDATE = 0, 1, 2


def _cmd_run(args) -> int:
    spec = load_config(args.config)
    if args.trials:
        spec = spec.with_param("harness.trials", str(args.trials))
    summary, _ = run_experiment(spec, out=args.out, trace=args.trace)
    print(summary.text())
    print()
    print("\n".join(summary.kv_lines()))
    return EXIT_OK


def _cmd_sweep(args) -> int:
    spec = load_config(args.config)
    param = args.param or spec.sweep_param
    values = [v.strip() for v in args.values.split(",")] if args.values else list(spec.sweep_values)
    if not param or not values:
        raise ConfigError("sweep needs --param and --values (or a [sweep] section)", "sweep")
    results = sweep(spec, param, values, out=args.out)
    print(f"{param:>16}  {'error':>8}  {'mean samples':>12}")
    for v, s in results:
        print(f"{v:>16}  {s.error_rate:8.4f}  {s.mean_samples:12.1f}")
    if len(results) >= 3:
        fit = fit_scaling([(sweep_axis(param, v), s) for v, s in results])
        axis = "log(1/epsilon)" if param.endswith("epsilon") else param
        print(f"fit: mean samples = {fit.slope:.3f} * {axis} + {fit.intercept:.3f}  (R^2 = {fit.r_squared:.4f})")
    return EXIT_OK


def _cmd_validate(args) -> int:
    from .acceptance import run_all

    only = [int(x) for x in args.only.split(",")] if args.only else None
    results = run_all(scale=args.scale, workers=args.workers, only=only,
                      report=lambda r: print(r.line(), flush=True))
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return EXIT_VALIDATE if failed else EXIT_OK


def _cmd_bounds(args) -> int:
    from .bounds import tree_bound

    spec = load_config(args.config)
    cfg, inst = spec.walk, spec.instance
    print(f"lemma1(gap={inst.delta}, p0={cfg.p0}) = {lemma1_bound(inst.delta, cfg.p0):.2f}")
    if inst.kind != "synthetic":
        print("finite-time bounds need a generator-built (synthetic) instance")
        return EXIT_OK
    tree = build_tree(spec, random_source(spec.seed, "instance", 0))
    targets = sorted(ground_truth_targets(tree))
    if not targets:
        print("instance has no target")
        return EXIT_OK
    hierarchical = cfg.mode is WalkMode.HIERARCHICAL
    for t in targets:
        if not hierarchical and t.l != 0:
            continue
        name = "hierarchical" if hierarchical else "leaf"
        print(f"{name} bound for target {t}: {tree_bound(tree, t, cfg.p0, cfg.epsilon, hierarchical):.1f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cbrw", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the configured experiment")
    run.add_argument("--config", required=True)
    run.add_argument("--out", help="output directory (overrides harness.out)")
    run.add_argument("--trace", action="store_true", help="also write trace.jsonl and tests.csv")
    run.add_argument("--trials", type=int, help="override harness.trials")
    run.set_defaults(fn=_cmd_run)

    sw = sub.add_parser("sweep", help="repeat the experiment over one parameter")
    sw.add_argument("--config", required=True)
    sw.add_argument("--param", help="section.key, e.g. instance.depth or walk.epsilon")
    sw.add_argument("--values", help="comma-separated values")
    sw.add_argument("--out")
    sw.set_defaults(fn=_cmd_sweep)

    va = sub.add_parser("validate", help="run the acceptance checks")
    va.add_argument("--scale", type=float, default=1.0, help="fraction of the full trial counts")
    va.add_argument("--workers", type=int, default=1)
    va.add_argument("--only", help="comma-separated criterion numbers")
    va.set_defaults(fn=_cmd_validate)

    bo = sub.add_parser("bounds", help="print sample-complexity bounds for the configured instance")
    bo.add_argument("--config", required=True)
    bo.set_defaults(fn=_cmd_bounds)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError) as err:
        # malformed instance files (trees, traces, group-testing blocks) surface here
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
