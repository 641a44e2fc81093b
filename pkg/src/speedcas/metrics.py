"""Campaign reductions: risk ratios, alert rates, pilot-response weighting,
NMAC heading histograms, and alerting profiles.

Conventions: response subsets use table-style labels ("None", "H", "V",
"S", "H+V", ...); alerting-profile categories use the profile legend order
("COC", "H", "V", "S", "V+H", "V+S", "H+S", "V+H+S"). Subset labels are
normalized on input, so "V+H" and "H+V" name the same subset.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Mapping, Sequence

import numpy as np

from .encounters import Encounter, gen_pairwise
from .simulator import SimConfig, SimResult, simulate

NMI_FT = 6076.115485564

# target risk ratios annotated on every report (informational only)
THRESHOLDS = {
    "icao_unequipped": 0.18,
    "icao_equipped": 0.04,
    "astm_suas_cooperative": 0.18,
}

_DIM_LETTER = {"horizontal": "H", "vertical": "V", "speed": "S"}
_LETTER_ORDER = {"H": 0, "V": 1, "S": 2}

PROFILE_CATEGORIES = ("COC", "H", "V", "S", "V+H", "V+S", "H+S", "V+H+S")
_PROFILE_LABEL = {
    frozenset(): "COC",
    frozenset("H"): "H",
    frozenset("V"): "V",
    frozenset("S"): "S",
    frozenset("VH"): "V+H",
    frozenset("VS"): "V+S",
    frozenset("HS"): "H+S",
    frozenset("VHS"): "V+H+S",
}


class UndefinedRatioError(Exception):
    """Risk ratio denominator is zero: no baseline NMACs to compare against."""


def normalize_subset_label(label: str) -> str:
    """Canonical form of a response-subset label ("V+H" -> "H+V")."""
    text = label.strip()
    if text.lower() in ("none", ""):
        return "None"
    letters = [part.strip().upper() for part in text.split("+")]
    for letter in letters:
        if letter not in _LETTER_ORDER:
            raise ValueError(f"unknown advisory dimension {letter!r}")
    if len(set(letters)) != len(letters):
        raise ValueError(f"repeated dimension in subset label {label!r}")
    return "+".join(sorted(letters, key=_LETTER_ORDER.get))


def per_encounter_pnmac(results: Sequence[SimResult]) -> dict[str, float]:
    """Repetition-averaged NMAC indicator per encounter id."""
    hits: dict[str, list[bool]] = {}
    for res in results:
        hits.setdefault(res.encounter_id, []).append(res.nmac)
    return {k: float(np.mean(v)) for k, v in hits.items()}


def risk_ratio(cas_results: Sequence[SimResult],
               nocas_results: Sequence[SimResult],
               weights: Mapping[str, float]) -> float:
    """Weighted P(NMAC with CAS) over weighted P(NMAC without).

    Both result sets must cover the same encounter ids; ``weights`` maps
    encounter id to its statistical weight.
    """
    p_cas = per_encounter_pnmac(cas_results)
    p_nocas = per_encounter_pnmac(nocas_results)
    if set(p_cas) != set(p_nocas):
        raise ValueError("result sets cover different encounter ids")
    missing = set(p_cas) - set(weights)
    if missing:
        raise ValueError(f"missing weights for {sorted(missing)[:3]}")
    num = sum(weights[k] * p_cas[k] for k in sorted(p_cas))
    den = sum(weights[k] * p_nocas[k] for k in sorted(p_nocas))
    if den == 0.0:
        raise UndefinedRatioError(
            "no NMACs in the baseline (no-CAS) results; ratio undefined")
    return num / den


def alert_rate(results: Sequence[SimResult],
               weights: Mapping[str, float] | None = None) -> float:
    """Weighted fraction of encounters alerting in any repetition."""
    if not results:
        raise ValueError("empty result set")
    alerted: dict[str, bool] = {}
    for res in results:
        alerted[res.encounter_id] = alerted.get(res.encounter_id,
                                                False) or res.alerted
    if weights is None:
        weights = {k: 1.0 for k in alerted}
    total = sum(weights[k] for k in alerted)
    return sum(weights[k] for k, hit in alerted.items() if hit) / total


def encounter_weights(encounters: Iterable[Encounter]) -> dict[str, float]:
    return {enc.id: enc.weight for enc in encounters}


# ------------------------------------------------------- pilot response


def _subset_dims(n_dims: int) -> tuple[str, ...]:
    if n_dims == 3:
        return ("H", "V", "S")
    if n_dims == 2:
        return ("H", "V")
    raise ValueError("n_dims must be 2 or 3")


def response_subset_probs(p_no_response: float, n_dims: int) -> dict[str, float]:
    """Probability the pilot flies exactly each subset of advisory
    dimensions, assuming independent per-dimension response with
    P = 1 - p_no_response**(1/n_dims)."""
    if not 0.0 <= p_no_response <= 1.0:
        raise ValueError("p_no_response must be in [0, 1]")
    dims = _subset_dims(n_dims)
    p = 1.0 - p_no_response ** (1.0 / n_dims)
    out: dict[str, float] = {}
    for k in range(n_dims + 1):
        for combo in combinations(dims, k):
            label = "None" if not combo else normalize_subset_label(
                "+".join(combo))
            out[label] = p ** k * (1.0 - p) ** (n_dims - k)
    return out


def weighted_system_pnmac(pnmac_by_subset: Mapping[str, float],
                          subset_probs: Mapping[str, float]) -> float:
    """Response-probability-weighted system P(NMAC)."""
    pnmac = {normalize_subset_label(k): v for k, v in pnmac_by_subset.items()}
    probs = {normalize_subset_label(k): v for k, v in subset_probs.items()}
    if set(pnmac) != set(probs):
        raise ValueError(
            f"subset keys differ: {sorted(set(pnmac) ^ set(probs))}")
    return sum(probs[k] * pnmac[k] for k in sorted(probs))


_NO_SPEED_SUBSETS = ("None", "H", "V", "H+V")


def response_curve(pnmac_by_subset: Mapping[str, float],
                   sweep: Sequence[float]) -> list[tuple[float, float, float]]:
    """(p_no_response, with-speed, without-speed) system P(NMAC) rows.

    Values are normalized by the no-response P(NMAC), so both variants end
    at exactly 1.0 when the pilot never responds.
    """
    pnmac = {normalize_subset_label(k): v for k, v in pnmac_by_subset.items()}
    base = pnmac["None"]
    no_speed = {k: pnmac[k] for k in _NO_SPEED_SUBSETS}
    rows = []
    for p in sweep:
        with_speed = weighted_system_pnmac(pnmac, response_subset_probs(p, 3))
        without = weighted_system_pnmac(no_speed, response_subset_probs(p, 2))
        rows.append((float(p), with_speed / base, without / base))
    return rows


# ----------------------------------------------------------- histograms


def nmac_heading_histogram(results: Sequence[SimResult],
                           encounters: Sequence[Encounter],
                           bin_width_deg: float = 7.2):
    """NMAC encounter counts binned by relative heading at CPA.

    Returns (bin start angles in degrees, counts). An encounter counts as
    an NMAC if any repetition hit; the heading comes from the encounter's
    constructed CPA geometry.
    """
    n_bins = 360.0 / bin_width_deg
    if abs(n_bins - round(n_bins)) > 1e-9:
        raise ValueError("bin width must divide 360")
    n_bins = int(round(n_bins))
    headings = {}
    for enc in encounters:
        if enc.cpa is None:
            raise ValueError(f"encounter {enc.id} has no CPA geometry")
        headings[enc.id] = math.degrees(enc.cpa.rel_heading_rad) % 360.0
    counts = np.zeros(n_bins, dtype=int)
    for enc_id, p in per_encounter_pnmac(results).items():
        if p > 0.0:
            counts[int(headings[enc_id] // bin_width_deg) % n_bins] += 1
    edges = np.arange(n_bins) * bin_width_deg
    return edges, counts


# ------------------------------------------------------ alerting profile


def _alerted_dims(result: SimResult) -> frozenset[str]:
    letters = set()
    for _, names in result.advisories:
        for dim, name in names.items():
            if name != "COC":
                letters.add(_DIM_LETTER[dim])
    return frozenset(letters)


def alerting_profile(tables, own_speed: float, int_speed: float,
                     extent_nmi: float, cell_nmi: float,
                     config: SimConfig | None = None,
                     base_seed: int = 0,
                     duration: float = 240.0):
    """Categorical alerting map over intruder start positions.

    For every cell of a square grid of initial intruder offsets, a
    co-altitude encounter is simulated: ownship flies along-track and never
    responds; the intruder flies the reciprocal heading. The cell records
    which logics alerted at any time, labeled per PROFILE_CATEGORIES.
    Returns a list of (cross_track_nmi, along_track_nmi, category) rows.
    """
    if extent_nmi <= 0 or cell_nmi <= 0:
        raise ValueError("extent and cell size must be positive")
    cfg = config or SimConfig()
    # unresponsive ownship: advisories are recorded but never flown
    cfg = SimConfig(dt=cfg.dt, sensor=cfg.sensor,
                    pilot_delay_s=cfg.pilot_delay_s, p_no_response=1.0,
                    repetitions=1, max_speed_ftps=cfg.max_speed_ftps,
                    tau_max_s=cfg.tau_max_s, logic=cfg.logic)
    offsets = np.arange(-extent_nmi, extent_nmi + 1e-9, cell_nmi)
    rows = []
    cell_index = 0
    for along in offsets:
        for cross in offsets:
            enc = _profile_encounter(cross * NMI_FT, along * NMI_FT,
                                     own_speed, int_speed, duration)
            res = simulate(enc, list(tables), None, cfg,
                           seed=base_seed + cell_index)
            rows.append((float(cross), float(along),
                         _PROFILE_LABEL[_alerted_dims(res)]))
            cell_index += 1
    return rows


def _profile_encounter(cross_ft: float, along_ft: float, own_speed: float,
                       int_speed: float, duration: float) -> Encounter:
    from .encounters import AircraftInit, BASE_ALTITUDE_FT

    return Encounter(
        id=f"profile-{cross_ft:.0f}-{along_ft:.0f}",
        weight=1.0,
        ownship=AircraftInit(0.0, 0.0, BASE_ALTITUDE_FT, 0.0, own_speed),
        intruder=AircraftInit(cross_ft, along_ft, BASE_ALTITUDE_FT,
                              -math.pi, int_speed),
        duration=duration,
    )


# --------------------------------------------------------------- report


@dataclass
class MetricsReport:
    """Aggregate campaign metrics with threshold annotations."""

    risk_ratio: float | None = None
    alert_rate: float | None = None
    encounter_count: int = 0
    nmac_count: int = 0
    baseline_nmac_count: int = 0
    histogram_bin_deg: float | None = None
    histogram: list = field(default_factory=list)
    response: dict = field(default_factory=dict)
    thresholds: dict = field(default_factory=lambda: dict(THRESHOLDS))

    def annotate_thresholds(self) -> None:
        if self.risk_ratio is None:
            return
        self.thresholds = {
            name: {"target": target, "met": bool(self.risk_ratio <= target)}
            for name, target in THRESHOLDS.items()
        }

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        return cls(**json.loads(text))
