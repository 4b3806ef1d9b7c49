"""``dfuse`` command line: roc, pdfield, table and selftest subcommands.

Exit status: 0 success, 1 invalid configuration, 2 runtime or degenerate
statistic, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, build_network, build_scenario, parse_config, table_prior
from .errors import ConfigurationError, DegenerateStatisticError, DfuseError
from .model import TargetParams
from .selftest import run_selftest
from .sim import empirical_roc, pd_at_pfa, pd_field, run_trials

log = logging.getLogger("dfuse")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_IO = 0, 1, 2, 3


class OutputError(OSError):
    pass


def num(x: float) -> str:
    """Shortest round-trip decimal; refuses NaN and infinities."""
    x = float(x)
    if not math.isfinite(x):
        raise ArithmeticError(f"refusing to write non-finite value {x!r}")
    return repr(x)


def _write_text(path: Path, text: str):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _write_json(path: Path, obj):
    _write_text(path, json.dumps(obj, indent=2, sort_keys=False, allow_nan=False) + "\n")


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def prepare_out_dir(path) -> Path:
    """Create ``path`` and make sure it is writable before any work starts."""
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".dfuse-write-test"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        raise OutputError(f"output directory {out} is not writable: {exc}") from exc
    return out


def roc_csv(rocs: dict) -> str:
    rows = []
    for rule in sorted(rocs):
        curve = rocs[rule]
        order = np.argsort(curve.pfa, kind="stable")
        rows.extend((rule, num(curve.pfa[i]), num(curve.pd[i])) for i in order)
    return _csv_text(("rule", "pfa", "pd"), rows)


def _summary_entry(samples, target):
    r = pd_at_pfa(samples, target)
    return {"pfa_target": target, "pfa_achieved": r.achieved_pfa, "pd": r.pd}


def cmd_roc(cfg: RunConfig, out_dir: Path, threads: int | None) -> list[Path]:
    scenario = build_scenario(cfg)
    samples = run_trials(scenario, threads=threads)
    rocs = {rule: empirical_roc(s) for rule, s in samples.items()}
    summary = {}
    for rule in scenario.rules:
        entries = [_summary_entry(samples[rule], t) for t in cfg.pfa_targets]
        summary[rule] = entries[0] if len(entries) == 1 else entries
    roc_path, sum_path = out_dir / "roc.csv", out_dir / "summary.json"
    _write_text(roc_path, roc_csv(rocs))
    _write_json(sum_path, summary)
    return [roc_path, sum_path]


def cmd_pdfield(cfg: RunConfig, out_dir: Path, threads: int | None = None) -> list[Path]:
    net = build_network(cfg)
    sensor = net.nodes[0]
    power = cfg.target_power if cfg.pdfield.power is None else cfg.pdfield.power
    target = TargetParams(np.asarray(cfg.pdfield.target_position), power)
    field, xs, ys = pd_field(sensor, cfg.aaf.build(), target, cfg.pdfield.resolution, cfg.region_box)
    csv_path, axes_path = out_dir / "pdfield.csv", out_dir / "pdfield_axes.json"
    _write_text(csv_path, "".join(",".join(num(v) for v in row) + "\n" for row in field))
    _write_json(axes_path, {
        "rows": "x",
        "columns": "y",
        "x": [float(v) for v in xs],
        "y": [float(v) for v in ys],
        "target_position": list(target.position.tolist()),
        "power": power,
    })
    return [csv_path, axes_path]


def run_table(cfg: RunConfig, threads: int | None = None) -> dict:
    """Detection rate and achieved false-alarm rate per rule and variant."""
    prior = table_prior(cfg)
    columns = {}
    for v in cfg.table.variants:
        scenario = build_scenario(cfg, aaf_kind=v.aaf, bep=v.bep, prior=prior)
        samples = run_trials(scenario, threads=threads)
        columns[v.label] = {
            "aaf": v.aaf,
            "bep": v.bep,
            "cells": {rule: _summary_entry(samples[rule], cfg.table.pfa_target) for rule in scenario.rules},
        }
        log.info("table column %s done", v.label)
    return {"preset": cfg.table.preset, "pfa_target": cfg.table.pfa_target, "columns": columns}


def cmd_table(cfg: RunConfig, out_dir: Path, threads: int | None) -> list[Path]:
    table = run_table(cfg, threads)
    labels = list(table["columns"])
    header = ["rule"] + [f"{lab}_{k}" for lab in labels for k in ("pd", "pfa")]
    rows = []
    for rule in cfg.rules:
        row = [rule]
        for lab in labels:
            cell = table["columns"][lab]["cells"][rule]
            row += [num(cell["pd"]), num(cell["pfa_achieved"])]
        rows.append(row)
    csv_path, json_path = out_dir / "table.csv", out_dir / "table.json"
    _write_text(csv_path, _csv_text(header, rows))
    _write_json(json_path, table)
    return [csv_path, json_path]


def cmd_selftest(cfg: RunConfig | None, out_dir: Path | None, threads: int | None = None) -> list[Path]:
    report = run_selftest()
    for line in report.lines():
        print(line)
    written = []
    if out_dir is not None:
        path = out_dir / "selftest.json"
        _write_json(path, report.to_dict())
        written.append(path)
    if not report.passed:
        raise RuntimeError("selftest failed")
    return written


COMMANDS = {"roc": cmd_roc, "pdfield": cmd_pdfield, "table": cmd_table, "selftest": cmd_selftest}


class _Parser(argparse.ArgumentParser):
    # usage errors count as validation errors, not argparse's default status 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dfuse", description="Decision fusion simulator for sensor networks.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, help=f"run the {name} command")
        sp.add_argument("--config", required=name != "selftest", help="JSON configuration file")
        sp.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")
        sp.add_argument("--out-dir", default=".", help="directory for output files (default: .)")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    threads = args.threads if args.threads is not None else (os.cpu_count() or 1)
    try:
        if threads < 1:
            raise ConfigurationError(f"--threads must be >= 1, got {threads}")
        cfg = parse_config(args.config) if args.config else None
        out_dir = prepare_out_dir(args.out_dir)
        for path in COMMANDS[args.command](cfg, out_dir, threads):
            log.info("wrote %s", path)
    except DegenerateStatisticError as exc:
        print(f"dfuse: degenerate statistic: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ConfigurationError as exc:
        print(f"dfuse: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"dfuse: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (DfuseError, ArithmeticError, RuntimeError) as exc:
        print(f"dfuse: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
