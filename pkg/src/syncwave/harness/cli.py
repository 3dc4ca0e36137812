"""Command line: ``syncwave simulate|sweep|defect|threshold|preset``.

Successful commands exit 0.  Failures exit nonzero and print one JSON line
``{"error": kind, "field": ..., "message": ...}`` on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys

from ..diagnostics import Modes, Nodes, completeness_defect
from ..errors import ConfigurationError, StepFailure, SyncwaveError
from ..spectral import ModelDomain, build_basis
from .config import (
    OUTPUT_DIR_ENV,
    apply_overrides,
    deep_merge,
    load_toml,
    validate_experiment,
    validate_sweep,
)
from .presets import PRESETS, get_preset
from .runner import output_dir, run, sweep, threshold_search, write_summary

EXIT_ERROR = 2
EXIT_STEP_FAILURE = 3


def experiment_from_file(path, overrides=()):
    data = load_toml(path)
    if "preset" in data:
        data = deep_merge(get_preset(data["preset"]), data)
    return validate_experiment(apply_overrides(data, overrides))


def _report(result) -> int:
    print(f"trajectory={result.csv_path}")
    print(f"summary={result.summary_path}")
    if result.summary.get("status") == "step_failure":
        t = result.summary["failure_time"]
        raise StepFailure(result.summary.get("failure_message", "step failure"), time=t)
    return 0


def cmd_simulate(args) -> int:
    cfg = experiment_from_file(args.config, args.set)
    return _report(run(cfg, args.output_dir))


def cmd_preset(args) -> int:
    if args.list or args.name is None:
        for name, data in PRESETS.items():
            print(f"{name}\t{data.get('description', '')}")
        return 0
    data = apply_overrides(get_preset(args.name), args.overrides)
    cfg = validate_experiment(data)
    if args.dump:
        print(json.dumps(cfg.model_dump(), indent=2))
        return 0
    return _report(run(cfg, args.output_dir))


def cmd_sweep(args) -> int:
    scfg = validate_sweep(load_toml(args.config))
    header, rows, path = sweep(scfg, args.output_dir)
    print(f"table={path}")
    return 0


def _parse_nodes(text: str, dim: int):
    try:
        if dim == 1:
            return tuple(float(x) for x in text.split(","))
        return tuple(tuple(float(c) for c in p.split(",")) for p in text.split(";"))
    except ValueError:
        raise ConfigurationError(f"cannot parse nodes {text!r}", field="nodes") from None


def cmd_defect(args) -> int:
    parts = args.domain.split("-")
    if len(parts) != 3:
        raise ConfigurationError("domain must look like interval-dirichlet-laplacian", field="domain")
    basis = build_basis(ModelDomain(*parts), args.basis_modes)
    if args.modes is not None:
        functionals = Modes(args.modes)
    else:
        functionals = Nodes(_parse_nodes(args.nodes, basis.domain.dim))
    eps = completeness_defect(basis, functionals, args.m_trunc)
    print(f"epsilon_L={eps!r}")
    return 0


def cmd_threshold(args) -> int:
    cfg = experiment_from_file(args.config, args.set)
    res = threshold_search(cfg, args.kappa_min, args.kappa_max, args.target, args.horizon, args.rel_width)
    summary = res.as_dict()
    for key, value in summary.items():
        print(f"{key}={value!r}" if isinstance(value, float) else f"{key}={value}")
    d = output_dir(cfg.output.directory, args.output_dir)
    d.mkdir(parents=True, exist_ok=True)
    write_summary(d / f"{cfg.output.name}.threshold.txt", summary)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="syncwave",
        description="Spectral simulation of coupled damped wave and plate equations.",
        epilog=f"Output directory: --output-dir, else ${OUTPUT_DIR_ENV}, else the config's output.directory.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run one experiment from a TOML file")
    s.add_argument("config")
    s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="dotted override")
    s.add_argument("--output-dir")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", help="run a parameter sweep from a TOML file")
    s.add_argument("config")
    s.add_argument("--output-dir")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("defect", help="completeness defect of a family of functionals")
    s.add_argument("--domain", default="interval-dirichlet-laplacian",
                   help="geometry-boundary-operator, e.g. rectangle-dirichlet-hinged")
    s.add_argument("--basis-modes", type=int, default=128)
    s.add_argument("--m-trunc", type=int, default=None)
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--modes", type=int, help="first N modal functionals")
    g.add_argument("--nodes", help="x1,x2,... on the interval or x1,y1;x2,y2 on the rectangle")
    s.set_defaults(func=cmd_defect)

    s = sub.add_parser("threshold", help="bisect for the synchronization threshold in kappa")
    s.add_argument("config")
    s.add_argument("--kappa-min", type=float, required=True)
    s.add_argument("--kappa-max", type=float, required=True)
    s.add_argument("--target", type=float, default=1e-8)
    s.add_argument("--horizon", type=float, default=None)
    s.add_argument("--rel-width", type=float, default=0.05)
    s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    s.add_argument("--output-dir")
    s.set_defaults(func=cmd_threshold)

    s = sub.add_parser("preset", help="run a named preset with optional dotted overrides")
    s.add_argument("name", nargs="?")
    s.add_argument("overrides", nargs="*", metavar="KEY=VALUE")
    s.add_argument("--list", action="store_true")
    s.add_argument("--dump", action="store_true", help="print the resolved configuration and exit")
    s.add_argument("--output-dir")
    s.set_defaults(func=cmd_preset)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SyncwaveError as exc:
        err = {"error": exc.kind, "field": exc.field, "message": str(exc)}
        if isinstance(exc, StepFailure):
            err["time"] = exc.time
        print(json.dumps(err), file=sys.stderr)
        return EXIT_STEP_FAILURE if isinstance(exc, StepFailure) else EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
