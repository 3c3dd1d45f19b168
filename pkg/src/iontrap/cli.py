"""Command-line entry point: ``iontrap {run,scan,curves,spectrum,wigner,presets-list}``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from .errors import ConfigError, IonTrapError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def _add_common(p, out_required=True):
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", metavar="PATH", help="INI run configuration")
    src.add_argument("--preset", metavar="NAME", help="named scenario (see presets-list)")
    p.add_argument("--override", metavar="KEY=VALUE", action="append", default=[],
                   help="section.key=value, applied after config and preset (repeatable)")
    p.add_argument("--out", metavar="DIR", required=out_required, help="output directory")
    p.add_argument("--threads", type=int, default=1, metavar="N", help="worker processes (scan) or BLAS hint")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="iontrap", description="Two-level trapped-ion wave-packet simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="propagate and write series, snapshots and analysis")
    _add_common(p)

    p = sub.add_parser("scan", help="grid scan of parameters for bistable splitting")
    _add_common(p)
    p.add_argument("--vary", action="append", default=[], metavar="NAME=LO:HI:COUNT",
                   help="parameter range, e.g. lam=0.06:0.07:3 (repeatable)")
    p.add_argument("--target", type=float, default=0.4, help="target splitting fraction")
    p.add_argument("--budget", type=int, default=64, help="maximum number of propagations")

    p = sub.add_parser("curves", help="write potential-curve tables")
    _add_common(p)
    p.add_argument("--family", action="append", choices=["bare", "diabatic", "adiabatic"],
                   help="curve family (default: all)")

    p = sub.add_parser("spectrum", help="single-channel spectrum and time scales")
    _add_common(p)
    p.add_argument("--curve", default="A+", help="curve label such as A+, D-, H")
    p.add_argument("--n0", type=int, default=None, help="expansion index (default: packet mean energy)")

    p = sub.add_parser("wigner", help="Wigner distribution of a checkpointed state")
    p.add_argument("--checkpoint", required=True, metavar="PATH")
    p.add_argument("--out", required=True, metavar="FILE")
    p.add_argument("--p-range", nargs=3, type=float, metavar=("PMIN", "PMAX", "COUNT"))
    p.add_argument("--x-stride", type=int, default=1)
    p.add_argument("--threads", type=int, default=1, metavar="N")

    sub.add_parser("presets-list", help="list the shipped scenario presets")
    return parser


def _load_spec(args):
    from .config import load_preset, parse_config

    if args.config:
        try:
            with open(args.config) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read {args.config}: {exc}") from None
        return parse_config(text, args.override)
    if args.preset:
        return load_preset(args.preset, args.override)
    raise ConfigError("one of --config or --preset is required")


def _parse_vary(items):
    vary = {}
    for item in items:
        name, sep, rng = item.partition("=")
        parts = rng.split(":")
        if not sep or len(parts) not in (1, 3):
            raise ConfigError(f"--vary {item!r} must look like name=lo:hi:count or name=value")
        try:
            vals = [float(parts[0])] if len(parts) == 1 else \
                np.linspace(float(parts[0]), float(parts[1]), int(parts[2])).tolist()
        except ValueError as exc:
            raise ConfigError(f"--vary {item!r}: {exc}") from None
        vary[name.strip()] = vals
    return vary


def cmd_run(args):
    from .runner import execute

    manifest = execute(_load_spec(args), args.out, threads=args.threads)
    print(json.dumps(manifest["headline"], indent=2, sort_keys=True, default=float))


def cmd_scan(args):
    from .analysis import bistability_scan, write_scan

    spec = _load_spec(args)
    vary = _parse_vary(args.vary)
    if not vary:
        raise ConfigError("scan needs at least one --vary range")
    try:
        results = bistability_scan(spec.params, vary, args.target, args.budget, initial=spec.initial,
                                   n_points=spec.grid.n_points, extent=spec.grid.x_extent or 9.0,
                                   threads=args.threads)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "scan.tsv")
    write_scan(path, results)
    print(path)


def cmd_curves(args):
    from .bases import potential_curves, write_curves_table

    spec = _load_spec(args)
    os.makedirs(args.out, exist_ok=True)
    x = np.linspace(*spec.outputs.curves_range, spec.outputs.curves_points)
    for family in args.family or ["diabatic", "adiabatic", "bare"]:
        path = os.path.join(args.out, f"curves_{family}.tsv")
        write_curves_table(path, x, *potential_curves(family, spec.params, x))
        print(path)


def cmd_spectrum(args):
    from .analysis import single_channel_timescales
    from .config import resolved_extent
    from .initial import make_initial
    from .model import build_grid

    spec = _load_spec(args)
    grid = build_grid(spec.params, spec.grid.x_center, resolved_extent(spec), spec.grid.n_points)
    s0 = make_initial(spec.initial, spec.params, grid)
    table, ts, e_mean = single_channel_timescales(args.curve, spec.params, grid, s0, args.n0)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, f"spectrum_{args.curve}.tsv")
    table.write(path)
    print(json.dumps({"curve": args.curve, "n0": ts.n0, "mean_energy": e_mean, "T_cl": ts.T_cl,
                      "T_rev": ts.T_rev, "T_sup": ts.T_sup, "file": path}, indent=2))


def cmd_wigner(args):
    from .observables import wigner
    from .propagation import read_checkpoint

    state, _ = read_checkpoint(args.checkpoint)
    p_axis = None
    if args.p_range:
        lo, hi, n = args.p_range
        p_axis = np.linspace(lo, hi, int(n))
    wg = wigner(state, p_axis=p_axis, x_stride=args.x_stride)
    wg.write(args.out)
    print(args.out)


def cmd_presets(args):
    from .config import PRESETS

    for name in PRESETS:
        print(name)


COMMANDS = {"run": cmd_run, "scan": cmd_scan, "curves": cmd_curves, "spectrum": cmd_spectrum,
            "wigner": cmd_wigner, "presets-list": cmd_presets}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IonTrapError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
