"""Command-line entry point: ``epitome-pim {map,simulate,search,quant}``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigurationError, PimError, SpecParseError
from .mapping import XbarConfig, compression_rate
from .netspec import (apply_uniform, dump_network, load_candidates, load_network,
                      resolve_candidates)
from .perf import HardwareProfile
from .pipeline import (functional_check, map_network, network_evaluator, quantize_network,
                       resolve_xbar, simulate_network)
from .quant import RangeWeights
from .search import SearchConfig, evolve, exhaustive_best

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_CONFIG = 3
EXIT_INFEASIBLE = 4
EXIT_EQUIVALENCE = 5

CSV_SCHEMA = "epitome-pim-csv/1"

log = logging.getLogger("epitome_pim")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def atomic_write(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def csv_text(kind: str, rows: list[dict], columns: list[str] | None = None) -> str:
    buf = io.StringIO()
    buf.write(f"# {CSV_SCHEMA} {kind}\n")
    columns = columns or (list(rows[0]) if rows else [])
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: _fmt(r.get(k, "")) for k in columns})
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def print_table(rows: list[dict], columns: list[str], out=None) -> None:
    out = out or sys.stdout
    cells = [[_cell(r.get(c, "")) for c in columns] for r in rows]
    widths = [max([len(c)] + [len(row[i]) for row in cells]) for i, c in enumerate(columns)]
    out.write("  ".join(c.ljust(w) for c, w in zip(columns, widths)) + "\n")
    for row in cells:
        out.write("  ".join(v.rjust(w) if _numeric(v) else v.ljust(w) for v, w in zip(row, widths)) + "\n")


def _cell(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _numeric(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def _emit(args, rows, columns, kind):
    if args.json:
        json.dump(rows, sys.stdout, indent=2)
        sys.stdout.write("\n")
    else:
        print_table(rows, columns)
    if getattr(args, "csv", None):
        atomic_write(args.csv, csv_text(kind, rows, columns))


def _xbar_override(args, net) -> XbarConfig:
    base = resolve_xbar(net)
    fields = {k: getattr(args, k) for k in ("rows", "cols", "cell_bits", "polarity", "slicing")
              if getattr(args, k, None) is not None}
    if not fields:
        return base
    try:
        return XbarConfig(**{**base.__dict__, **fields})
    except ConfigurationError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from None


def _load_profile(path) -> HardwareProfile:
    profile = HardwareProfile.load(path) if path else HardwareProfile.default()
    profile.validate()
    return profile


def _parse_uniform(text: str) -> tuple[int, int]:
    try:
        r, c = text.lower().split("x")
        return int(r), int(c)
    except ValueError:
        raise CliError(f"--epitome-uniform expects RxC, got {text!r}", EXIT_PARSE) from None


def _wrap_flag(value):
    return None if value is None else value == "on"


# --- map -------------------------------------------------------------------

def cmd_map(args) -> int:
    net = load_network(args.network)
    xbar = _xbar_override(args, net)
    baseline_net = None
    if args.epitome_uniform:
        rows, cols = _parse_uniform(args.epitome_uniform)
        baseline_net = net
        net = apply_uniform(net, rows, cols, xbar)
    if args.baseline:
        baseline_net = load_network(args.baseline)

    mapping = map_network(net, xbar)
    if not net.layers:
        log.warning("network %s has no layers", net.name)
    rows = [m.record() for m in mapping.layers]
    for r, layer in zip(rows, net.layers):
        r["epitome"] = (f"{layer.epitome.rows}x{layer.epitome.e_cout}" if layer.epitome else "-")
    columns = ["layer", "epitome", "row_blocks", "col_blocks", "slices", "polarity", "crossbars",
               "utilization"]
    _emit(args, rows, columns, "map")
    summary = {"network": net.name, "crossbars": mapping.crossbars, "utilization": mapping.utilization}
    if baseline_net is not None:
        base = map_network(baseline_net, xbar).crossbars
        summary["baseline_crossbars"] = base
        if mapping.crossbars > 0:
            summary["compression_rate"] = compression_rate(base, mapping.crossbars)
    _summary(args, summary)
    return EXIT_OK


def _summary(args, summary: dict) -> None:
    out = sys.stderr if args.json else sys.stdout
    parts = [f"{k}={_cell(v)}" for k, v in summary.items()]
    out.write("total: " + " ".join(parts) + "\n")


# --- simulate --------------------------------------------------------------

SIM_COLUMNS = ["layer", "crossbars", "rounds", "wrap_factor", "latency_ns", "energy_pj",
               "xbar_reads", "dac_conversions", "adc_conversions", "input_buffer_reads",
               "output_buffer_writes", "joint_adds", "joint_concats"]


def cmd_simulate(args) -> int:
    net = load_network(args.network)
    xbar = _xbar_override(args, net)
    profile = _load_profile(args.profile)
    wrap = _wrap_flag(args.wrap)
    sim = simulate_network(net, xbar, profile, wrap=wrap)
    rows = []
    for m, t, p, r in zip(sim.mappings.layers, sim.traces, sim.report.per_layer, sim.wrap_factors):
        rows.append({
            "layer": m.layer, "crossbars": m.crossbars, "rounds": t.activation_rounds,
            "wrap_factor": r, "latency_ns": p.latency, "energy_pj": p.energy,
            "xbar_reads": t.xbar_reads, "dac_conversions": t.dac_conversions,
            "adc_conversions": t.adc_conversions, "input_buffer_reads": t.input_buffer_reads,
            "output_buffer_writes": t.output_buffer_writes, "joint_adds": t.joint_adds,
            "joint_concats": t.joint_concats,
        })
    _emit(args, rows, SIM_COLUMNS, "simulate")
    rep = sim.report
    _summary(args, {"network": net.name, "latency_ns": rep.latency, "energy_pj": rep.energy,
                    "edp": rep.edp, "crossbars": sim.mappings.crossbars})
    if args.functional:
        results = functional_check(net, xbar, seed=args.seed, wrap=wrap)
        exact = sum(r.exact for r in results)
        out = sys.stderr if args.json else sys.stdout
        for r in results:
            if not r.exact:
                out.write(f"MISMATCH {r.layer}: max |diff| = {r.max_abs_diff}\n")
        out.write(f"equivalence: {exact}/{len(results)} layers exact\n")
        if exact != len(results):
            return EXIT_EQUIVALENCE
    return EXIT_OK


# --- search ----------------------------------------------------------------

HISTORY_COLUMNS = ["generation", "best_reward", "best_crossbars", "best_objective_value",
                   "population_feasible_count"]


def cmd_search(args) -> int:
    net = load_network(args.network)
    xbar = _xbar_override(args, net)
    profile = _load_profile(args.profile)
    candidates = resolve_candidates(net, load_candidates(args.candidates), xbar, args.candidates)
    evaluator = network_evaluator(net, candidates, xbar, profile, wrap=_wrap_flag(args.wrap))
    if args.exhaustive:
        result = exhaustive_best(candidates, evaluator, args.budget, args.objective)
    else:
        config = SearchConfig(population_size=args.population, max_iterations=args.iterations,
                              parent_count=args.parents, mutation_rate=args.mutation_rate,
                              seed=args.seed, objective=args.objective, budget=args.budget)
        result = evolve(config, candidates, evaluator)

    out_dir = Path(args.out_dir)
    if result.history:
        atomic_write(out_dir / "history.csv", csv_text("search-history", result.history, HISTORY_COLUMNS))
    if not result.feasible:
        raise CliError(f"no feasible combination within a budget of {args.budget} crossbars",
                       EXIT_INFEASIBLE)
    best = result.best
    chosen = net.with_epitomes(candidates[i][c] for i, c in enumerate(best.combo))
    chosen = type(chosen)(f"{net.name}-{args.objective}-opt", chosen.layers, xbar)
    atomic_write(out_dir / "best_network.yaml", dump_network(chosen))
    ev = best.evaluation
    summary = {"objective": args.objective, "objective_value": ev.objective(args.objective),
               "latency_ns": ev.latency, "energy_pj": ev.energy, "crossbars": ev.crossbars,
               "budget": args.budget, "reward": best.reward}
    if args.json:
        json.dump(summary, sys.stdout, indent=2)
        sys.stdout.write("\n")
    else:
        _summary(args, summary)
    return EXIT_OK


# --- quant -----------------------------------------------------------------

QUANT_COLUMNS = ["layer", "crossbar_id", "alpha", "beta", "scale", "zero_point", "bitwidth", "max_error"]


def cmd_quant(args) -> int:
    if abs(args.w1 + args.w2 - 1.0) > 1e-9 or args.w1 < 0 or args.w2 < 0:
        raise CliError(f"--w1 and --w2 must be non-negative and sum to 1 (got {args.w1} + {args.w2})",
                       EXIT_PARSE)
    if args.bits < 2:
        raise CliError("--bits must be >= 2", EXIT_PARSE)
    net = load_network(args.network)
    xbar = _xbar_override(args, net)
    tensors = {}
    if args.weights:
        with np.load(args.weights) as data:
            tensors = {k: data[k] for k in data.files}
    records = quantize_network(net, xbar, args.bits, RangeWeights(args.w1, args.w2),
                               per_crossbar=args.per_crossbar, tensors=tensors, seed=args.seed)
    rows = [r.record() for r in records]
    _emit(args, rows, QUANT_COLUMNS, "quant")
    scales = {r["scale"] for r in rows}
    _summary(args, {"records": len(rows), "distinct_scales": len(scales), "seed": args.seed,
                    "max_error": max((r["max_error"] for r in rows), default=0.0)})
    return EXIT_OK


# --- parser ----------------------------------------------------------------

def _add_xbar_flags(p):
    g = p.add_argument_group("crossbar (overrides the network file's xbar section)")
    g.add_argument("--rows", type=int)
    g.add_argument("--cols", type=int)
    g.add_argument("--cell-bits", dest="cell_bits", type=int)
    g.add_argument("--polarity", type=int, choices=(1, 2))
    g.add_argument("--slicing", choices=("plain", "sign"))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="epitome-pim", description=__doc__)
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("map", help="crossbar counts, utilization and compression rate")
    p.add_argument("network")
    p.add_argument("--baseline", help="network file to compute the compression rate against")
    p.add_argument("--epitome-uniform", metavar="RxC",
                   help="put an RxC epitome on every layer that can host one")
    p.add_argument("--csv")
    p.add_argument("--json", action="store_true")
    _add_xbar_flags(p)
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("simulate", help="trace-level latency/energy per layer")
    p.add_argument("network")
    p.add_argument("--profile", help="hardware profile CSV (default: shipped synthetic profile)")
    p.add_argument("--wrap", choices=("on", "off"), help="override every layer's channel wrapping")
    p.add_argument("--functional", action="store_true",
                   help="also run value-level equivalence checks on seeded integer tensors")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv")
    p.add_argument("--json", action="store_true")
    _add_xbar_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("search", help="evolutionary layer-wise epitome design")
    p.add_argument("network")
    p.add_argument("--candidates", help="candidate file (default: built-in RxC grid)")
    p.add_argument("--profile")
    p.add_argument("--objective", choices=("latency", "energy"), default="latency")
    p.add_argument("--budget", type=int, required=True, help="crossbar budget")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--population", type=int, default=16)
    p.add_argument("--iterations", type=int, default=50)
    p.add_argument("--parents", type=int)
    p.add_argument("--mutation-rate", dest="mutation_rate", type=float, default=0.2)
    p.add_argument("--wrap", choices=("on", "off"))
    p.add_argument("--exhaustive", action="store_true", help="enumerate the whole space instead")
    p.add_argument("--out-dir", dest="out_dir", default=".")
    p.add_argument("--json", action="store_true")
    _add_xbar_flags(p)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("quant", help="per-crossbar quantization parameters")
    p.add_argument("network")
    p.add_argument("--bits", type=int, default=3)
    p.add_argument("--w1", type=float, default=0.7)
    p.add_argument("--w2", type=float, default=0.3)
    p.add_argument("--per-crossbar", dest="per_crossbar", action=argparse.BooleanOptionalAction,
                   default=True)
    p.add_argument("--weights", help=".npz of stored tensors keyed by layer name")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv")
    p.add_argument("--json", action="store_true")
    _add_xbar_flags(p)
    p.set_defaults(func=cmd_quant)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except SpecParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (ConfigurationError, ValueError, PimError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
