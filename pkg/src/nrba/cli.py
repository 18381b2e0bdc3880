"""Command-line entry point: ``nrba analyze | simulate | patterns | synth``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import yaml

from . import simlab
from .errors import NrbaError
from .pipeline import NrbaConfig, run_patterns, run_pipeline, write_bundled_example


def _phis(text: str):
    return [float(p) for p in text.split(",") if p.strip()]


def _load(args) -> NrbaConfig:
    cfg = NrbaConfig.from_file(args.config)
    if args.output:
        cfg.output_dir = Path(args.output)
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "phi", None):
        cfg.phis = _phis(args.phi)
        cfg.__post_init__()
    return cfg


def cmd_analyze(args) -> int:
    report = run_pipeline(_load(args))
    print(f"report written to {report.output_dir}")
    for w in report.warnings:
        print(f"  step {w['step']}: {w['code']}: {w['message']}")
    return 0


def cmd_patterns(args) -> int:
    report = run_patterns(_load(args))
    s = report.step(1)
    print(f"monotone: {s['monotone']}; unit response rate {s['unit_response_rate']:.3f}")
    return 0


def cmd_simulate(args) -> int:
    opts = {}
    if args.config:
        opts = (yaml.safe_load(Path(args.config).read_text()) or {}).get("simulation", {}) or {}
    reps = args.reps if args.reps is not None else int(opts.get("reps", 500))
    n = args.n if args.n is not None else int(opts.get("n", 1000))
    seed = args.seed if args.seed is not None else int(opts.get("seed", 0))
    cells = tuple(args.cells.split(",")) if args.cells else tuple(opts.get("cells", simlab.CELLS))
    table, _ = simlab.run_grid(reps=reps, n=n, seed=seed, m=int(opts.get("m", 20)), cells=cells,
                               low=float(opts.get("low", simlab.STRENGTH["L"])),
                               high=float(opts.get("high", simlab.STRENGTH["H"])))
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(out, index=False, float_format="%.10g", lineterminator="\n")
    cols = ["cell", "bias_CC", "bias_IPW", "bias_MI", "var_ratio_IPW", "var_ratio_MI"]
    print(table[cols].to_string(index=False, float_format=lambda v: f"{v:.4g}"))
    print(f"written to {out}")
    return 0


def cmd_synth(args) -> int:
    path = write_bundled_example(args.output, seed=args.seed if args.seed is not None else 20110901)
    print(f"config written to {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nrba", description="Nonresponse bias analysis toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    for name, fn, helptext in (("analyze", cmd_analyze, "run the ten-step analysis"),
                               ("patterns", cmd_patterns, "missing-data patterns only")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--config", required=True)
        s.add_argument("--output", help="output directory (overrides the config)")
        s.add_argument("--seed", type=int)
        s.add_argument("--phi", help="comma-separated phi grid, e.g. 0,0.5,1")
        s.set_defaults(func=fn)

    s = sub.add_parser("simulate", help="Monte Carlo grid of CC, IPW and MI")
    s.add_argument("--config", help="YAML file with a 'simulation' section")
    s.add_argument("--reps", type=int)
    s.add_argument("--n", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--cells", help="comma-separated cell codes such as LLL,HHH")
    s.add_argument("--output", default="simulation.csv")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("synth", help="write the bundled synthetic dataset and config")
    s.add_argument("--output", default="example")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NrbaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
