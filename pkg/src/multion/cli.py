"""Command-line entry point: multion gen|eval|sweep-found|cross-eval|replay|report.

Exit codes: 0 ok, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import sys

from . import __version__, harness
from .errors import ConfigError, MultionError


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="multion", description=__doc__)
    p.add_argument("--version", action="version", version=f"multion {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="JSON run-config file")
        sp.add_argument("--seed", type=int, default=None, help="override config seed")
        sp.add_argument("--workers", type=int, default=None, help="override worker count")
        sp.add_argument("--out", default=None, help="override output directory")

    common(sub.add_parser("gen", help="generate worlds and episode sets"))
    common(sub.add_parser("eval", help="evaluate configured agents"))
    sp = sub.add_parser("sweep-found", help="sweep the wrong-FOUND budget")
    common(sp)
    sp.add_argument("--budgets", default="0,1,2,3,5", help="comma-separated budgets")
    common(sub.add_parser("cross-eval", help="agents configured for one m, evaluated on all"))
    sp = sub.add_parser("replay", help="re-simulate a trace into text-art frames")
    common(sp)
    sp.add_argument("trace", help="trace file to replay")
    sp.add_argument("--frames-out", default=None, help="frames output path")
    common(sub.add_parser("report", help="write the combined markdown report"))
    return p


def load_config(args) -> harness.RunConfig:
    cfg = harness.RunConfig.from_file(args.config)
    if args.seed is not None:
        cfg = harness.RunConfig(
            **{
                **_as_kwargs(cfg),
                "seed": args.seed,
            }
        )
    if args.workers is not None:
        cfg.workers = args.workers
    if args.out is not None:
        cfg.out_dir = args.out
    return cfg


def _as_kwargs(cfg: harness.RunConfig) -> dict:
    return {
        "seed": cfg.seed,
        "out_dir": cfg.out_dir,
        "workers": cfg.workers,
        "split": cfg.split,
        "worlds": cfg.worlds,
        "episodes": cfg.episodes,
        "sim": cfg.sim,
        "map": cfg.map,
        "agents": cfg.agents,
        "write_traces": cfg.write_traces,
    }


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        if args.command == "gen":
            manifest = harness.cmd_gen(cfg)
            print(f"generated {sum(len(v) for v in manifest['worlds'].values())} worlds "
                  f"under {cfg.out_dir}")
        elif args.command == "eval":
            rows = harness.cmd_eval(cfg)
            for r in rows:
                print(
                    f"{r['agent']:32s} {r['m']}ON n={r['count']:4d} "
                    f"success={r['success']:.3f} progress={r['progress']:.3f} "
                    f"spl={r['spl']:.3f} ppl={r['ppl']:.3f}"
                )
        elif args.command == "sweep-found":
            budgets = [int(b) for b in args.budgets.split(",")]
            rows = harness.cmd_sweep_found_budget(cfg, budgets)
            for r in rows:
                print(f"budget={r['budget']:3d} success={r['success']:.3f} "
                      f"progress={r['progress']:.3f}")
        elif args.command == "cross-eval":
            matrix = harness.cmd_cross_eval(cfg)
            ms = cfg.episodes["m_values"]
            print("success matrix (configured x evaluated):")
            for mc in ms:
                print("  " + " ".join("%.3f" % matrix["success"][(mc, me)] for me in ms))
        elif args.command == "replay":
            out = harness.cmd_replay(cfg, args.trace, args.frames_out)
            print(f"frames written to {out}")
        elif args.command == "report":
            out = harness.cmd_report(cfg)
            print(f"report written to {out}")
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except MultionError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
