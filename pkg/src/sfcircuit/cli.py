"""Command line entry point: ``sfcircuit <command> --config run.ini --out results``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from .circuit import PAPER_PARAMS, staircase, simulate_circuit, write_events_csv, write_trace_csv
from .fieldio import write_snapshot
from .harness import config as cfgmod
from .harness.plots import emit_plot_data
from .harness.runner import (SweepTable, compare_circuit, run_groundstate, run_single,
                             sweep_bias, sweep_geometry, write_manifest)
from .observables import read_trace_csv

log = logging.getLogger("sfcircuit")

FAST_BIASES = tuple(np.linspace(0.0, 0.1, 11).tolist())
PAPER_BIASES = tuple(np.linspace(0.0, 0.1, 51).tolist())
PAPER_WIDTHS = (0.3, 0.4, 0.5, 0.6, 0.7, 0.8)
PAPER_LENGTHS = (1.0, 2.0, 3.0, 4.0)


def _load(args) -> cfgmod.ExperimentConfig:
    cfg = cfgmod.load(args.config) if args.config else cfgmod.ExperimentConfig()
    if args.workers is not None:
        cfg = replace(cfg, output=replace(cfg.output, workers=args.workers))
    return cfg


def _out(args, cfg) -> Path:
    out = Path(args.out or cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_groundstate(args) -> int:
    cfg = _load(args)
    out = _out(args, cfg)
    res = run_groundstate(cfg)
    write_snapshot(out / "groundstate.gpe2", res.psi, res.grid.dx, res.grid.dy, 0.0)
    summary = {"energy": res.energy, "chemical_potential": res.chemical_potential,
               "eta0": res.eta0, "iterations": res.iterations,
               "V_over_Vc": cfg.protocol.V_over_Vc}
    (out / "groundstate.json").write_text(json.dumps(summary, indent=2))
    write_manifest(out, cfg.physics_hash(), {"snapshot": "groundstate.gpe2",
                                             "summary": "groundstate.json"})
    print(json.dumps(summary, indent=2))
    return 0


def cmd_evolve(args) -> int:
    cfg = _load(args)
    out = _out(args, cfg)
    rec = run_single(cfg, out)
    print(json.dumps({k: v for k, v in asdict(rec).items() if k != "trace"}, indent=2))
    return 0


def cmd_sweep_bias(args) -> int:
    cfg = _load(args)
    out = _out(args, cfg)
    biases = cfg.sweep.V_over_Vc or (PAPER_BIASES if args.slow else FAST_BIASES)
    table = sweep_bias(cfg, biases, out_dir=out)
    write_manifest(out, cfg.physics_hash(), {"sweep_bias": "sweep_bias.csv"})
    _report_failures(table)
    print(f"{len(table.rows)} runs -> {out / 'sweep_bias.csv'}")
    return 1 if table.failures else 0


def cmd_sweep_geometry(args) -> int:
    cfg = _load(args)
    ls, ds = cfg.sweep.l, cfg.sweep.d
    if not (ls or ds):
        if not args.slow:
            print("no [sweep] l/d lists in the config; pass --slow for the full paper grid",
                  file=sys.stderr)
            return 2
        ls, ds = PAPER_LENGTHS, PAPER_WIDTHS
    out = _out(args, cfg)
    table = sweep_geometry(cfg, ls or None, ds or None, out_dir=out)
    write_manifest(out, cfg.physics_hash(), {"sweep_geometry": "sweep_geometry.csv"})
    _report_failures(table)
    print(f"{len(table.rows)} geometries -> {out / 'sweep_geometry.csv'}")
    return 1 if table.failures else 0


def cmd_circuit(args) -> int:
    cfg = _load(args)
    out = _out(args, cfg)
    params = cfg.circuit or PAPER_PARAMS
    eta0 = cfg.protocol.V_over_Vc
    h = cfg.solver.dt * cfg.solver.sample_every
    tr = simulate_circuit(params, eta0 / 2.0, 0.0, cfg.solver.T, h)
    write_trace_csv(tr, out / "circuit_trace.csv")
    write_events_csv(tr.events, out / "circuit_events.csv")
    eta0s = cfg.sweep.V_over_Vc or PAPER_BIASES
    rows = [asdict(s) for s in staircase(params, sorted(eta0s))]
    SweepTable(("eta0",), rows).to_csv(out / "circuit_staircase.csv")
    write_manifest(out, cfg.physics_hash(), {"trace": "circuit_trace.csv",
                                             "events": "circuit_events.csv",
                                             "staircase": "circuit_staircase.csv"})
    print(f"{len(tr.events)} regulator events; staircase of {len(rows)} points in {out}")
    return 0


def cmd_compare(args) -> int:
    cfg = _load(args)
    out = _out(args, cfg)
    src = out / "sweep_bias.csv"
    table = SweepTable.from_csv(src, ["V_over_Vc"]) if src.exists() else None
    if table is None:
        log.info("no sweep_bias.csv in %s: circuit-only comparison", out)
    cmp = compare_circuit(cfg, table)
    cmp.to_csv(out / "compare.csv")
    (out / "compare_params.json").write_text(json.dumps(asdict(cmp.params), indent=2))
    write_manifest(out, cfg.physics_hash(), {"compare": "compare.csv",
                                             "params": "compare_params.json"})
    print(f"circuit params {cmp.params} -> {out / 'compare.csv'}")
    return 0


def _sweep_traces(out: Path) -> dict:
    traces = {}
    for rec_path in sorted(out.glob("run_*/record.json")):
        rec = json.loads(rec_path.read_text())
        traces[rec["V_over_Vc"]] = read_trace_csv(rec_path.parent / "trace.csv", rec["eta0"])
    return traces


def cmd_emit_plots(args) -> int:
    cfg = _load(args)
    out = _out(args, cfg)
    figs = out / "figures"
    written = []
    bias = out / "sweep_bias.csv"
    if bias.exists():
        table = SweepTable.from_csv(bias, ["V_over_Vc"])
        for fig in ("fig4a", "fig4b", "fig5a"):
            written += emit_plot_data(table, fig, figs)
        traces = _sweep_traces(out)
        if traces:
            written += emit_plot_data(traces, "fig2a", figs)
    geo = out / "sweep_geometry.csv"
    if geo.exists():
        table = SweepTable.from_csv(geo, ["l", "d"])
        for fig in ("fig3a", "fig3b", "fig4c", "fig4d", "fig5f", "fig5g"):
            written += emit_plot_data(table, fig, figs)
    params = cfg.circuit or PAPER_PARAMS
    h = cfg.solver.dt * cfg.solver.sample_every
    circ = {e: simulate_circuit(params, e / 2.0, 0.0, cfg.solver.T, h)
            for e in np.linspace(0.0, 0.1, 11)}
    written += emit_plot_data(circ, "fig6", figs)
    write_manifest(figs, cfg.physics_hash(), {p.name: p.name for p in written})
    print(f"wrote {len(written)} files to {figs}")
    return 0


def _report_failures(table: SweepTable) -> None:
    for key, msg in table.failures:
        print(f"FAILED {key}: {msg}", file=sys.stderr)


COMMANDS = {
    "groundstate": cmd_groundstate,
    "evolve": cmd_evolve,
    "sweep-bias": cmd_sweep_bias,
    "sweep-geometry": cmd_sweep_geometry,
    "circuit": cmd_circuit,
    "compare": cmd_compare,
    "emit-plots": cmd_emit_plots,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sfcircuit", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment INI file (defaults if omitted)")
    common.add_argument("--out", help="output directory (overrides [output] dir)")
    common.add_argument("--workers", type=int, help="parallel runs for sweeps")
    common.add_argument("--slow", action="store_true",
                        help="use the full paper-scale sweeps when the config gives none")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except cfgmod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
