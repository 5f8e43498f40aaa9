"""dcmbqc command line.

Exit codes: 0 success, 1 usage, 2 validation, 3 internal.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import sys
from pathlib import Path

from .frontend import FAMILIES, circuit_to_dict, gen_benchmark, load_circuit, translate
from .metrics import loss_probability
from .model import BundleError, bundle_to_dict, load_bundle
from .partition import PartitionConfig, adaptive_partition
from .pipeline import (
    SWEEP_COLUMNS, SWEEP_PARAMS, RunConfig, StageError, compile_bundle, run_distributed, run_summary, sweep,
)

log = logging.getLogger("dcmbqc")

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ------------------------------------------------------------------ output


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _flatten(obj, prefix=""):
    if isinstance(obj, dict):
        for key in sorted(obj):
            yield from _flatten(obj[key], f"{prefix}{key}.")
    elif isinstance(obj, list) and not all(isinstance(x, (int, float)) for x in obj):
        for i, item in enumerate(obj):
            yield from _flatten(item, f"{prefix}{i}.")
    else:
        yield prefix[:-1], obj


def _csv_text(rows, columns) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\r\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _cell(row.get(k, "")) for k in columns})
    return buf.getvalue()


def _cell(value):
    if isinstance(value, list):
        return json.dumps(value)
    if value is None:
        return ""
    return value


def _as_text(obj, fmt: str) -> str:
    if fmt == "json":
        return _json_text(obj)
    return _csv_text([{"key": k, "value": v} for k, v in _flatten(obj)], ("key", "value"))


def _emit(args, text: str, name: str) -> None:
    if args.out is None:
        sys.stdout.write(text)
        return
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(text)
    log.info("wrote %s", path)


# ------------------------------------------------------------------ inputs


def _read_bundle(path):
    if not Path(path).is_file():
        raise UsageError(f"no such bundle file: {path}")
    return load_bundle(path)


_CFG_FLAGS = (
    "qpus", "kmax", "alpha_max", "eps_q", "gamma", "sa_t0", "sa_cooling", "sa_iters",
    "fill_factor", "ordering", "clock_ns",
)


def _config(args) -> RunConfig:
    data = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"no such config file: {path}")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"config is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise UsageError("config file must hold a JSON object")
    for name in _CFG_FLAGS:
        value = getattr(args, name, None)
        if value is not None:
            data[name] = value
    if args.seed is not None:
        data["seed"] = args.seed
    if getattr(args, "no_bdir", False):
        data["bdir"] = False
    try:
        cfg = RunConfig.from_mapping(data)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    if cfg.qpus < 1 or cfg.kmax < 1 or cfg.sa_iters < 0:
        raise UsageError("qpus and kmax must be >= 1, sa_iters >= 0")
    return cfg


def _parse_values(text: str, param: str) -> list:
    cast = int if param == "kmax" else float
    try:
        return [cast(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"bad --values for {param}: {text!r}") from None


# ------------------------------------------------------------------ commands


def cmd_gen(args):
    circuit = gen_benchmark(args.family, args.qubits, args.seed or 0)
    if args.translate:
        _emit(args, _json_text(bundle_to_dict(translate(circuit))), f"{circuit.meta['name']}.bundle.json")
    else:
        _emit(args, _json_text(circuit_to_dict(circuit)), f"{circuit.meta['name']}.circuit.json")


def cmd_translate(args):
    if not Path(args.circuit).is_file():
        raise UsageError(f"no such circuit file: {args.circuit}")
    bundle = translate(load_circuit(args.circuit))
    _emit(args, _json_text(bundle_to_dict(bundle)), f"{bundle.meta.get('name') or 'program'}.bundle.json")


def cmd_partition(args):
    bundle = _read_bundle(args.bundle)
    cfg = _config(args)
    result = adaptive_partition(
        bundle.graph,
        PartitionConfig(k=cfg.qpus, eps_q=cfg.eps_q, gamma=cfg.gamma, alpha_max=cfg.alpha_max, seed=cfg.seed),
    )
    _emit(args, _as_text(result.to_dict(), args.format), f"partition.{args.format}")


def cmd_compile(args):
    bundle = _read_bundle(args.bundle)
    report = compile_bundle(bundle, _config(args))
    _emit(args, _as_text(report, args.format), f"report.{args.format}")


def cmd_schedule(args):
    bundle = _read_bundle(args.bundle)
    cfg = _config(args)
    run = run_distributed(bundle, cfg)
    out = {
        "config": dataclasses.asdict(cfg),
        "schedule": {**run.schedule.to_dict(run.instance), "cost": run.report.to_dict()},
        "plans": [plan.to_dict() for plan in run.plans],
        "summary": run_summary(run),
    }
    _emit(args, _as_text(out, args.format), f"schedule.{args.format}")


def cmd_report(args):
    path = Path(args.report)
    if not path.is_file():
        raise UsageError(f"no such report file: {path}")
    try:
        report = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"report is not valid JSON: {exc}") from None
    columns = ("run", "qpus", "exec_time", "tau_fusee", "tau_measuree", "tau_remote", "tau_photon",
               "loss_probability", "cut", "modularity")
    rows = []
    for run in ("baseline", "distributed"):
        if run not in report:
            raise BundleError(f"report lacks a {run!r} section")
        summary = report[run]
        row = {"run": run, "qpus": summary["qpus"], **summary["report"], **summary["partition"]}
        rows.append({k: row.get(k) for k in columns})
    improvement = report.get("improvement", {})
    if args.format == "csv":
        _emit(args, _csv_text(rows, columns), "report.csv")
    else:
        _emit(args, _json_text({"rows": rows, "improvement": improvement}), "report.json")


def cmd_sweep(args):
    bundle = _read_bundle(args.bundle)
    cfg = _config(args)
    rows = sweep(bundle, args.param, _parse_values(args.values, args.param), cfg)
    if args.format == "json":
        _emit(args, _json_text({"config": dataclasses.asdict(cfg), "rows": rows}), f"sweep_{args.param}.json")
    else:
        _emit(args, _csv_text(rows, SWEEP_COLUMNS), f"sweep_{args.param}.csv")


def cmd_loss(args):
    p = loss_probability(args.cycles, args.clock_ns if args.clock_ns is not None else 1.0)
    if args.format == "json":
        _emit(args, _json_text({"cycles": args.cycles, "clock_ns": args.clock_ns or 1.0, "loss_probability": p}), "loss.json")
    else:
        _emit(args, f"{p:.6f}\n", "loss.txt")


# ------------------------------------------------------------------ parser


def _add_run_flags(p):
    p.add_argument("--qpus", type=int)
    p.add_argument("--kmax", type=int)
    p.add_argument("--sa-t0", type=float)
    p.add_argument("--sa-cooling", type=float)
    p.add_argument("--sa-iters", type=int)
    p.add_argument("--no-bdir", action="store_true", help="stop after list scheduling")
    p.add_argument("--alpha-max", type=float)
    p.add_argument("--eps-q", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--fill-factor", type=float)
    p.add_argument("--ordering", choices=("bfs", "cuthill_mckee"))
    p.add_argument("--clock-ns", type=float)


def build_parser() -> argparse.ArgumentParser:
    # SUPPRESS lets a global flag given before the subcommand survive the subparser
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--seed", type=int)
    common.add_argument("--config", help="JSON file whose keys mirror RunConfig fields")
    common.add_argument("--out", help="write the result into this directory instead of stdout")
    common.add_argument("--format", choices=("json", "csv"))
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="dcmbqc", description="Distributed MBQC compilation toolkit.", parents=[common])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", parents=[common], help="generate a benchmark circuit")
    p.add_argument("family", choices=FAMILIES)
    p.add_argument("qubits", type=int)
    p.add_argument("--translate", action="store_true", help="emit the translated bundle instead")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("translate", parents=[common], help="circuit JSON to program bundle")
    p.add_argument("circuit")
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("partition", parents=[common], help="adaptive k-way partition")
    p.add_argument("bundle")
    p.add_argument("--qpus", type=int)
    p.add_argument("--alpha-max", type=float)
    p.add_argument("--eps-q", type=float)
    p.add_argument("--gamma", type=float)
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("compile", parents=[common], help="full pipeline plus one-QPU baseline")
    p.add_argument("bundle")
    _add_run_flags(p)
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("schedule", parents=[common], help="emit plans and the layer schedule")
    p.add_argument("bundle")
    _add_run_flags(p)
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser("report", parents=[common], help="tabulate a compile report")
    p.add_argument("report")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("sweep", parents=[common], help="sweep kmax or alpha_max")
    p.add_argument("bundle")
    p.add_argument("--param", choices=SWEEP_PARAMS, required=True)
    p.add_argument("--values", required=True, help="comma-separated list")
    _add_run_flags(p)
    p.set_defaults(func=cmd_sweep, default_format="csv")

    p = sub.add_parser("loss", parents=[common], help="photon loss after a storage time")
    p.add_argument("cycles", type=float)
    p.add_argument("--clock-ns", type=float)
    p.set_defaults(func=cmd_loss)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name, value in (("seed", None), ("config", None), ("out", None), ("verbose", False)):
        if not hasattr(args, name):
            setattr(args, name, value)
    if not hasattr(args, "format"):
        args.format = getattr(args, "default_format", "json")
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        print(f"dcmbqc: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StageError as exc:
        print(f"dcmbqc: {exc}", file=sys.stderr)
        return EXIT_VALIDATION if isinstance(exc.cause, (BundleError, ValueError)) else EXIT_INTERNAL
    except (BundleError, ValueError) as exc:
        print(f"dcmbqc: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"dcmbqc: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
