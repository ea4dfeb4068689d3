"""Command-line entry point.

    couplab flip-prob --lambda 1 --trials 100000 --out flip.csv
    couplab sweep --config configs/example.toml --lambda 0,0.5,1,2,5,10 --out sweep.csv

Exit status: 0 on success, 1 for usage or configuration errors, 2 for
runtime failures (integration blow-ups, fitting failures, I/O).
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from .. import __version__
from ..errors import ConfigError, CouplabError, DomainError
from .config import ExperimentConfig
from .io import RunManifest, format_rows, format_trace, manifest_path
from .runner import cells, purify_result, run_cell, sweep

HELP = {
    "purify": "purify one input and print the output state",
    "flip-prob": "label-flip probability of the 1-D toy problem",
    "prop1": "first-passage flips with and without guidance on shared noise",
    "bound-audit": "check sampled paths against the distance bound",
    "credibility": "windowed-posterior spread versus the credibility band",
    "robustness": "clean and robust accuracy under PGD",
    "sweep": "run the configured experiment over every parameter cell",
    "trace": "confidence trace CSV of a noise-free purification",
}

SUBCOMMANDS = {
    "purify": "purify",
    "flip-prob": "flip_probability",
    "prop1": "prop1",
    "bound-audit": "bound_audit",
    "credibility": "credibility",
    "robustness": "robustness",
    "sweep": None,
    "trace": "trace",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _floats(text):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number or comma-separated numbers, got {text!r}")
    return vals


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML experiment config")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--out", type=Path, help="results CSV (stdout when omitted)")
    common.add_argument("--trials", type=int)
    common.add_argument("--lambda", dest="lam", type=_floats, help="guidance weight, or a comma list")
    common.add_argument("--tstar", type=_floats, help="purification time, or a comma list")
    common.add_argument("--c", type=_floats, help="classifier noise level, or a comma list")
    common.add_argument("--step", type=float)
    common.add_argument("--threads", type=int)
    common.add_argument("--mode", choices=("endpoint", "first-passage"))
    common.add_argument("--x", type=_floats, help="input state, comma-separated components")

    parser = _Parser(prog="couplab", description="Guided diffusion purification experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, parents=[common], help=HELP[name])
        if name == "purify":
            p.add_argument("--trace", type=Path, help="also write the trajectory as a trace CSV")
    return parser


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    data = {k: dict(v) for k, v in cfg.data.items()}
    exp, pur = data["experiment"], data["purifier"]
    for key, value in (("master_seed", args.seed), ("trials", args.trials),
                       ("threads", args.threads), ("mode", args.mode)):
        if value is not None:
            exp[key] = value
    if args.lam is not None:
        pur["lambda"] = args.lam
    if args.tstar is not None:
        pur["t_star"] = args.tstar
    if args.step is not None:
        pur["step"] = args.step
    if args.x is not None:
        pur["x0"] = args.x
    if args.c is not None:
        data["classifier"]["c"] = args.c
    return ExperimentConfig.from_dict(data)


def _emit(text: str, out: Path | None, cfg: ExperimentConfig, started: float, command: str):
    if out is None:
        sys.stdout.write(text)
        return
    out.write_text(text, encoding="utf-8")
    RunManifest(cfg.digest(), cfg["experiment"]["master_seed"], __version__,
                round(time.perf_counter() - started, 6), command).write(manifest_path(out))


def _run(args) -> None:
    started = time.perf_counter()
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig.from_dict({})
    cfg = _apply_overrides(cfg, args)
    kind = SUBCOMMANDS[args.command]
    seed = cfg["experiment"]["master_seed"]
    threads = cfg["experiment"]["threads"]
    todo = cells(cfg)

    if kind in ("trace", "purify") and len(todo) != 1:
        raise ConfigError(f"{args.command} takes a single (lambda, c, t_star) point")

    if kind == "trace":
        cell = todo[0]
        res = purify_result(cfg, cell.lam, cell.c, cell.t_star, seed, noise=False)
        text = _trace_text(cfg, res, cell.c)
        _emit(text, args.out, cfg, started, args.command)
        return

    if args.command == "sweep" or len(todo) > 1:
        rows = sweep(cfg, kind, threads)
    else:
        rows = run_cell(cfg, kind, todo[0], seed, threads)

    if kind == "purify":
        cell = todo[0]
        print("x_out = " + " ".join(repr(r.value) for r in rows))
        if args.trace is not None:
            res = purify_result(cfg, cell.lam, cell.c, cell.t_star, seed)
            args.trace.write_text(_trace_text(cfg, res, cell.c), encoding="utf-8")
        if args.out is None:
            return
    _emit(format_rows(rows), args.out, cfg, started, args.command)


def _trace_text(cfg, res, c) -> str:
    traj = res.trajectory
    exp = cfg["experiment"]
    clf = cfg.classifier(c)
    for y in (exp["y_true"], exp["y_adv"]):
        if not 0 <= y < clf.n_classes:
            raise ConfigError(f"tracked label {y} out of range")
    p = clf.probs(traj.states)
    return format_trace(traj.times, traj.states, p[:, exp["y_true"]], p[:, exp["y_adv"]])


def run_cli(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_help())
    except UsageError as exc:
        print(str(exc).rstrip(), file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        _run(args)
    except (ConfigError, DomainError) as exc:
        print(f"couplab: configuration error: {exc}", file=sys.stderr)
        return 1
    except (CouplabError, ArithmeticError, OSError) as exc:
        print(f"couplab: runtime error: {exc}", file=sys.stderr)
        return 2
    return 0


def main():  # pragma: no cover
    sys.exit(run_cli())
