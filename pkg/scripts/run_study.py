#!/usr/bin/env python3
"""End-to-end desk-scale study: solve the three logics, run the encounter
campaigns, and emit every CSV/JSON artifact the figure scripts consume.

Outputs (under --out):
  tables/{speed,horizontal,vertical}.qtbl
  sets/{opsuit,hovering}.jsonl
  results/<combo>.jsonl                per-combination campaign results
  scatter.csv                          alert rate vs risk ratio per combo
  heading_histogram.csv                hovering NMAC headings (speed + horizontal)
  profile.csv                          alerting-profile categories
  response_curve.csv / response_totals.json
"""

import argparse
import csv
import itertools
import sys
import time
from pathlib import Path

from speedcas import policy
from speedcas.encounters import gen_hovering, gen_opsuit_like, save_set
from speedcas.logic import make_logic
from speedcas.metrics import (
    alert_rate,
    alerting_profile,
    encounter_weights,
    nmac_heading_histogram,
    response_curve,
    response_subset_probs,
    risk_ratio,
    weighted_system_pnmac,
)
from speedcas.simulator import SimConfig, run_set, save_results
from speedcas.solver import solve

# P(NMAC) per flown-advisory subset used by the pilot-response artifacts
SUBSET_PNMAC = {
    "None": 3.01e-3, "H": 8.08e-5, "V": 2.14e-5, "S": 1.32e-3,
    "H+S": 4.33e-5, "V+S": 1.50e-5, "H+V": 1.68e-5, "H+V+S": 1.41e-5,
}

COMBOS = ["S", "H", "V", "S+H", "S+V", "V+H", "S+V+H"]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="out", help="artifact directory")
    parser.add_argument("--scale", type=float, default=0.05,
                        help="grid resolution scale for the solved tables")
    parser.add_argument("--n-opsuit", type=int, default=1000)
    parser.add_argument("--n-hovering", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=20240801)
    parser.add_argument("--workers", type=int, default=1)
    args = parser.parse_args()

    out = Path(args.out)
    for sub in ("tables", "sets", "results"):
        (out / sub).mkdir(parents=True, exist_ok=True)

    config = SimConfig(pilot_delay_s=5.0)
    tables = {}
    for kind, letter in (("speed", "S"), ("horizontal", "H"),
                         ("vertical", "V")):
        path = out / "tables" / f"{kind}.qtbl"
        t0 = time.perf_counter()
        logic = make_logic(kind, config.logic)
        table = solve(logic, logic.default_grid(args.scale),
                      config.logic.rewards)
        policy.save(table, path)
        tables[letter] = table
        print(f"solved {kind} in {time.perf_counter() - t0:.0f} s -> {path}",
              file=sys.stderr)

    opsuit = gen_opsuit_like(args.n_opsuit, args.seed)
    hovering = gen_hovering(args.n_hovering, args.seed + 1)
    save_set(opsuit, out / "sets" / "opsuit.jsonl")
    save_set(hovering, out / "sets" / "hovering.jsonl")
    weights = encounter_weights(opsuit)

    baseline = run_set(opsuit, [], None, config, base_seed=args.seed,
                       workers=args.workers)
    save_results(baseline, out / "results" / "nocas.jsonl")

    rows = []
    for combo in COMBOS:
        combo_tables = [tables[x] for x in combo.split("+")]
        res = run_set(opsuit, combo_tables, None, config,
                      base_seed=args.seed, workers=args.workers)
        save_results(res, out / "results" / f"{combo.replace('+', '')}.jsonl")
        rows.append((combo, alert_rate(res, weights),
                     risk_ratio(res, baseline, weights)))
        print(f"{combo}: alert={rows[-1][1]:.3f} rr={rows[-1][2]:.3f}",
              file=sys.stderr)
    with open(out / "scatter.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["combo", "alert_rate", "risk_ratio"])
        writer.writerows(rows)

    # hovering NMAC heading histogram for the speed and horizontal logics
    hist_rows = {}
    for letter in ("S", "H"):
        res = run_set(hovering, [tables[letter]], None,
                      SimConfig(pilot_delay_s=0.0,
                                sensor=config.sensor),
                      base_seed=args.seed + 2, workers=args.workers)
        edges, counts = nmac_heading_histogram(res, hovering, 7.2)
        hist_rows[letter] = counts
    with open(out / "heading_histogram.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["bin_start_deg", "speed", "horizontal"])
        for e, s_count, h_count in zip(edges, hist_rows["S"], hist_rows["H"]):
            writer.writerow([float(e), int(s_count), int(h_count)])

    profile = alerting_profile([tables[x] for x in ("S", "H", "V")],
                               own_speed=150.0, int_speed=150.0,
                               extent_nmi=8.0, cell_nmi=1.0, config=config,
                               base_seed=args.seed + 3)
    with open(out / "profile.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["cross_track_nmi", "along_track_nmi", "category"])
        writer.writerows(profile)

    sweep = [i * 0.005 for i in range(201)]
    with open(out / "response_curve.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["p_no_response", "with_speed", "without_speed"])
        for p, ws, wo in response_curve(SUBSET_PNMAC, sweep):
            writer.writerow([f"{p:.6g}", repr(float(ws)), repr(float(wo))])
    with_speed = weighted_system_pnmac(SUBSET_PNMAC,
                                       response_subset_probs(0.10, 3))
    no_speed = {k: SUBSET_PNMAC[k] for k in ("None", "H", "V", "H+V")}
    without = weighted_system_pnmac(no_speed, response_subset_probs(0.10, 2))
    (out / "response_totals.json").write_text(
        f'{{"with_speed": {with_speed!r}, "without_speed": {without!r}, '
        f'"ratio": {with_speed / without!r}}}\n')

    print(f"artifacts -> {out}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
