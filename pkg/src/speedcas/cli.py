"""Command-line pipeline: solve -> generate -> simulate -> evaluate/profile.

Exit codes: 0 success, 2 usage or configuration error, 3 data error
(missing/corrupt input), 4 internal numeric failure. Every command
validates its inputs before writing any output, and all artifacts are
byte-deterministic for a fixed config and seed regardless of worker count.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import encounters as enc_mod
from . import metrics as metrics_mod
from . import policy
from .logic import make_logic
from .simulator import (
    SimConfig,
    load_results,
    run_set,
    save_results,
    save_summary_csv,
)
from .solver import SolverFailure, solve

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


def _load_config(path: str | None) -> SimConfig:
    if path is None:
        return SimConfig()
    p = Path(path)
    if not p.exists():
        raise DataError(f"config file not found: {p}")
    try:
        return SimConfig.load(p)
    except (ValueError, KeyError, TypeError, json.JSONDecodeError) as err:
        raise UsageError(f"invalid config {p}: {err}")


def _load_tables(paths) -> list:
    tables = []
    for p in paths or ():
        if not Path(p).exists():
            raise DataError(f"Q-table file not found: {p}")
        try:
            tables.append(policy.load(p))
        except policy.CorruptTableError as err:
            raise DataError(f"{p}: {err}")
    return tables


def _load_encounters(path):
    if not Path(path).exists():
        raise DataError(f"encounter file not found: {path}")
    try:
        return enc_mod.load_set(path)
    except enc_mod.EncounterParseError as err:
        raise DataError(f"{path}: {err}")


def _load_result_file(path):
    if not Path(path).exists():
        raise DataError(f"results file not found: {path}")
    try:
        return load_results(path)
    except (json.JSONDecodeError, TypeError, KeyError) as err:
        raise DataError(f"{path}: malformed results: {err}")


# ----------------------------------------------------------------- solve


def cmd_solve(args) -> int:
    if not 0.0 < args.scale <= 1.0:
        raise UsageError(f"scale must be in (0, 1], got {args.scale}")
    config = _load_config(args.config)
    logic = make_logic(args.logic, config.logic)
    grid = logic.default_grid(args.scale)
    t0 = time.perf_counter()
    try:
        table = solve(logic, grid, config.logic.rewards,
                      progress=not args.quiet)
    except SolverFailure as err:
        print(f"solver failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    elapsed = time.perf_counter() - t0
    policy.save(table, args.out)
    print(f"{args.logic} logic: {grid.n_stages} stages x "
          f"{grid.stage_size} vertices x {table.n_actions} actions "
          f"solved in {elapsed:.1f} s -> {args.out}", file=sys.stderr)
    return 0


# -------------------------------------------------------------- generate


def cmd_generate(args) -> int:
    if args.kind == "opsuit":
        encs = enc_mod.gen_opsuit_like(args.n, args.seed,
                                       duration=args.duration)
    elif args.kind == "hovering":
        encs = enc_mod.gen_hovering(args.n, args.seed, duration=args.duration)
    elif args.kind == "pairwise":
        if args.geometry is None:
            raise UsageError("pairwise generation requires --geometry")
        encs = [enc_mod.gen_pairwise(
            args.geometry, r0=args.r0, v_own=args.v_own, v_int=args.v_int,
            altitude_offset=args.alt_offset,
            crossing_angle_deg=args.angle)]
    else:  # pragma: no cover - argparse restricts choices
        raise UsageError(f"unknown kind {args.kind}")
    enc_mod.save_set(encs, args.out)
    print(f"wrote {len(encs)} encounters -> {args.out}", file=sys.stderr)
    return 0


# -------------------------------------------------------------- simulate


def cmd_simulate(args) -> int:
    config = _load_config(args.config)
    encs = _load_encounters(args.set)
    own_tables = _load_tables(args.tables)
    int_tables = _load_tables(args.intruder_tables) or None
    results = run_set(encs, own_tables, int_tables, config,
                      base_seed=args.seed, repetitions=args.reps,
                      workers=args.workers)
    save_results(results, args.out)
    if args.summary:
        save_summary_csv(results, args.summary)
    nmacs = sum(r.nmac for r in results)
    print(f"{len(results)} runs, {nmacs} NMACs -> {args.out}",
          file=sys.stderr)
    return 0


# -------------------------------------------------------------- evaluate


def cmd_evaluate(args) -> int:
    results = _load_result_file(args.results)
    baseline = _load_result_file(args.baseline)
    encs = _load_encounters(args.encounters)
    weights = metrics_mod.encounter_weights(encs)
    report = metrics_mod.MetricsReport(
        encounter_count=len(encs),
        nmac_count=sum(1 for p in
                       metrics_mod.per_encounter_pnmac(results).values()
                       if p > 0),
        baseline_nmac_count=sum(
            1 for p in metrics_mod.per_encounter_pnmac(baseline).values()
            if p > 0),
    )
    try:
        report.risk_ratio = metrics_mod.risk_ratio(results, baseline, weights)
    except metrics_mod.UndefinedRatioError as err:
        raise DataError(str(err))
    except ValueError as err:
        raise DataError(str(err))
    report.alert_rate = metrics_mod.alert_rate(results, weights)
    report.annotate_thresholds()
    if args.histogram:
        edges, counts = metrics_mod.nmac_heading_histogram(
            results, encs, args.bin_deg)
        report.histogram_bin_deg = args.bin_deg
        report.histogram = [[float(e), int(c)] for e, c in
                            zip(edges, counts)]
        with open(args.histogram, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["bin_start_deg", "count"])
            writer.writerows(report.histogram)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(report.to_json())
        fh.write("\n")
    print(f"risk ratio {report.risk_ratio:.4f}, alert rate "
          f"{report.alert_rate:.4f} -> {args.out}", file=sys.stderr)
    return 0


# --------------------------------------------------------------- profile


def cmd_profile(args) -> int:
    config = _load_config(args.config)
    tables = _load_tables(args.tables)
    if not tables:
        raise UsageError("profile requires at least one Q-table")
    rows = metrics_mod.alerting_profile(
        tables, own_speed=args.own_speed, int_speed=args.int_speed,
        extent_nmi=args.extent_nmi, cell_nmi=args.cell_nmi, config=config,
        base_seed=args.seed)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["cross_track_nmi", "along_track_nmi", "category"])
        writer.writerows(rows)
    print(f"{len(rows)} cells -> {args.out}", file=sys.stderr)
    return 0


# -------------------------------------------------------- response model


REQUIRED_SUBSETS = ("None", "H", "V", "S", "H+S", "V+S", "H+V", "H+V+S")


def _read_pnmac_csv(path) -> dict[str, float]:
    if not Path(path).exists():
        raise DataError(f"P(NMAC) table not found: {path}")
    table: dict[str, float] = {}
    with open(path, "r", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or \
                {"subset", "p_nmac"} - set(reader.fieldnames):
            raise DataError(f"{path}: expected columns subset,p_nmac")
        for row in reader:
            try:
                label = metrics_mod.normalize_subset_label(row["subset"])
            except ValueError as err:
                raise DataError(f"{path}: {err}")
            table[label] = float(row["p_nmac"])
    missing = [s for s in REQUIRED_SUBSETS if s not in table]
    if missing:
        raise DataError(f"{path}: missing subset rows: {', '.join(missing)}")
    return table


def cmd_response_model(args) -> int:
    pnmac = _read_pnmac_csv(args.pnmac)
    with_speed = metrics_mod.weighted_system_pnmac(
        pnmac, metrics_mod.response_subset_probs(args.p_no_response, 3))
    no_speed = {k: pnmac[k] for k in ("None", "H", "V", "H+V")}
    without = metrics_mod.weighted_system_pnmac(
        no_speed, metrics_mod.response_subset_probs(args.p_no_response, 2))
    sweep = np.arange(0.0, 1.0 + 1e-12, args.step)
    if sweep[-1] != 1.0:
        sweep = np.append(sweep, 1.0)
    rows = metrics_mod.response_curve(pnmac, sweep)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["p_no_response", "with_speed", "without_speed"])
        for p, ws, wo in rows:
            writer.writerow([f"{p:.6g}", repr(float(ws)), repr(float(wo))])
    if args.report:
        payload = {
            "p_no_response": args.p_no_response,
            "total_system_pnmac_with_speed": with_speed,
            "total_system_pnmac_without_speed": without,
            "ratio": with_speed / without,
        }
        with open(args.report, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    print(f"system P(NMAC): with speed {with_speed:.3e}, "
          f"without {without:.3e} (ratio {with_speed / without:.2f})",
          file=sys.stderr)
    return 0


# ----------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="speedcas",
        description="Compile, execute, and evaluate speed-advisory "
                    "collision avoidance logics.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="compile a logic into a Q-table")
    p.add_argument("--logic", choices=("speed", "horizontal", "vertical"),
                   required=True)
    p.add_argument("--scale", type=float, default=1.0,
                   help="grid resolution scale in (0, 1]")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--quiet", action="store_true",
                   help="suppress per-stage progress on stderr")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("generate", help="write a seeded encounter set")
    p.add_argument("--kind", choices=("opsuit", "hovering", "pairwise"),
                   required=True)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--duration", type=float, default=180.0)
    p.add_argument("--geometry",
                   choices=("head_on", "overtake", "crossing"), default=None)
    p.add_argument("--r0", type=float, default=20000.0)
    p.add_argument("--v-own", type=float, default=150.0)
    p.add_argument("--v-int", type=float, default=150.0)
    p.add_argument("--alt-offset", type=float, default=0.0)
    p.add_argument("--angle", type=float, default=90.0,
                   help="crossing angle, degrees")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("simulate", help="run a Monte Carlo campaign")
    p.add_argument("--set", required=True, help="encounter JSONL")
    p.add_argument("--tables", nargs="*", default=[],
                   help="ownship Q-tables (none = unequipped)")
    p.add_argument("--intruder-tables", nargs="*", default=[])
    p.add_argument("--out", required=True, help="results JSONL")
    p.add_argument("--summary", default=None, help="optional summary CSV")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", help="reduce a campaign to metrics")
    p.add_argument("--results", required=True)
    p.add_argument("--baseline", required=True,
                   help="no-CAS results for the risk-ratio denominator")
    p.add_argument("--encounters", required=True)
    p.add_argument("--out", required=True, help="metrics report JSON")
    p.add_argument("--histogram", default=None,
                   help="optional NMAC heading histogram CSV")
    p.add_argument("--bin-deg", type=float, default=7.2)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("profile", help="alerting profile over a start grid")
    p.add_argument("--tables", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--extent-nmi", type=float, default=8.0)
    p.add_argument("--cell-nmi", type=float, default=0.5)
    p.add_argument("--own-speed", type=float, default=150.0)
    p.add_argument("--int-speed", type=float, default=150.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("response-model",
                       help="pilot-response weighted system P(NMAC)")
    p.add_argument("--pnmac", required=True,
                   help="CSV with columns subset,p_nmac")
    p.add_argument("--out", required=True, help="sweep curve CSV")
    p.add_argument("--report", default=None, help="totals JSON")
    p.add_argument("--p-no-response", type=float, default=0.10)
    p.add_argument("--step", type=float, default=0.005)
    p.set_defaults(func=cmd_response_model)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DATA
    except SolverFailure as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
