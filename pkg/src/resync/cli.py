"""Command line entry point: ``simulate``, ``verify-metagame``, ``repro``."""
from __future__ import annotations

import argparse
import sys

import numpy as np

from . import harness
from .metagame import MetaState, verify_bound


def _simulate_parser(sub):
    p = sub.add_parser("simulate", help="run a batch of simulations")
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--algo", choices=harness.ALGOS)
    p.add_argument("--attacker", choices=harness.ATTACKERS)
    for flag, kind in (("--K", int), ("--N", int), ("--M", int), ("--T", int),
                       ("--delta-floor", float), ("--t0", int), ("--seed", int),
                       ("--runs", int), ("--stride", int), ("--budget", int),
                       ("--uniform-rounds", int), ("--burst-length", int)):
        p.add_argument(flag, type=kind)
    p.add_argument("--sensing", choices=("nd", "d"))
    p.add_argument("--out-csv")
    p.add_argument("--out-svg")
    p.add_argument("--workers", type=int, default=1)
    return p


def cmd_simulate(args) -> int:
    overrides = {k: getattr(args, k) for k in
                 ("algo", "attacker", "K", "N", "M", "T", "delta_floor", "t0", "seed", "runs",
                  "stride", "budget", "uniform_rounds", "burst_length", "sensing")}
    try:
        config = harness.load_config(args.config, **overrides)
    except (harness.ConfigError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    print(harness.config_summary(config))
    result = harness.run_experiment(config, workers=args.workers)
    for r in result.runs:
        line = f"run {r.index}: "
        if r.ok:
            line += f"final_regret={r.trace.final_regret:.3f} attack_cost={r.trace.attack_cost}"
        if r.conformance is not None:
            line += f" conformance_mismatches={len(r.conformance.mismatches)}"
        if r.faults:
            line += " faults=" + "; ".join(r.faults)
        print(line)
    agg = result.aggregate
    if agg.n_runs:
        print(f"mean final regret {agg.final_mean:.3f} (std {agg.std[-1]:.3f}) over {agg.n_runs} runs; "
              f"mean attack cost {np.mean(agg.attack_costs):.1f}")
    if args.out_csv:
        rows = harness.emit_csv(result.runs, args.out_csv, config.stride)
        print(f"wrote {rows} rows to {args.out_csv}")
    if args.out_svg:
        harness.emit_svg({config.algo: agg}, args.out_svg, harness.config_summary(config), config.stride)
        print(f"wrote {args.out_svg}")
    if result.mismatches:
        print(f"meta-game conformance FAILED: {result.mismatches} mismatches", file=sys.stderr)
        return 1
    return 0


def cmd_verify(args) -> int:
    starts = [MetaState[s.upper()] for s in args.starts] if args.starts else list(MetaState)
    report = verify_bound(args.horizon, args.budget, starts)
    print(report.summary())
    for s, n in report.violations_by_start.items():
        print(f"  start {s.name}: {n} violating sequences")
    return 0 if report.ok else 1


def cmd_repro(args) -> int:
    try:
        results = harness.repro(args.figure, args.out_dir, args.runs, args.seed, args.T,
                                args.workers, args.stride)
    except (harness.ConfigError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    bad = 0
    for algo, res in results.items():
        agg = res.aggregate
        print(f"{args.figure} {algo}: mean final regret {agg.final_mean:.1f} "
              f"(std {agg.std[-1] if agg.n_runs else 0:.1f}), faulted runs {len(res.faults)}, "
              f"conformance mismatches {res.mismatches}")
        bad += res.mismatches
    if args.figure in ("fig5", "fig6"):
        print(harness.OMITTED_NOTE)
    return 1 if bad else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="resync-sim")
    sub = parser.add_subparsers(dest="command", required=True)
    _simulate_parser(sub)
    v = sub.add_parser("verify-metagame", help="exhaustively check the non-exploit epoch bound")
    v.add_argument("--horizon", type=int, required=True)
    v.add_argument("--budget", type=int)
    v.add_argument("--starts", nargs="+", choices=[s.name.lower() for s in MetaState])
    r = sub.add_parser("repro", help="reproduce one of the experiment figures")
    r.add_argument("figure", choices=sorted(harness.FIGURES))
    r.add_argument("--out-dir", default=".")
    r.add_argument("--runs", type=int, default=20)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--T", type=int, default=100_000)
    r.add_argument("--stride", type=int, default=100)
    r.add_argument("--workers", type=int, default=1)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"simulate": cmd_simulate, "verify-metagame": cmd_verify, "repro": cmd_repro}
    return handler[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
