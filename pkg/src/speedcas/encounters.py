"""Seeded synthetic two-aircraft encounter sets.

Encounters are constructed backwards from a sampled closest point of
approach, so an unresponsive simulation reproduces the sampled miss
distances exactly. World frame: x east, y north, z altitude (ft); headings
in radians, 0 = north, positive counterclockwise.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .grid import wrap_angle


def heading_unit(h: float) -> np.ndarray:
    """Planar unit vector for a heading (0 = north/+y, ccw positive)."""
    return np.array([-math.sin(h), math.cos(h)])


class EncounterParseError(Exception):
    """An encounter file line failed to parse; carries the line number."""

    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


@dataclass(frozen=True)
class AircraftInit:
    """Initial kinematic state of one aircraft."""

    x: float
    y: float
    z: float
    heading: float            # rad, 0 = north, ccw positive
    speed: float              # ft/s ground speed
    vertical_rate_fpm: float = 0.0

    def __post_init__(self):
        if self.speed < 0:
            raise ValueError("speed must be >= 0")


@dataclass(frozen=True)
class ManeuverSegment:
    """Piecewise-constant intruder control starting at ``time``."""

    time: float
    turn_rate: float = 0.0        # rad/s, ccw positive
    accel: float = 0.0            # ft/s^2 along track
    vertical_rate_fpm: float = 0.0


@dataclass(frozen=True)
class CpaSpec:
    """The sampled closest-point-of-approach geometry an encounter was
    built around."""

    time: float
    hmd_ft: float
    vmd_ft: float
    rel_heading_rad: float


@dataclass(frozen=True)
class Encounter:
    """One weighted two-aircraft scenario."""

    id: str
    weight: float
    ownship: AircraftInit
    intruder: AircraftInit
    duration: float
    intruder_script: tuple[ManeuverSegment, ...] = ()
    cpa: CpaSpec | None = None

    def __post_init__(self):
        if self.weight <= 0:
            raise ValueError("weight must be positive")
        times = [seg.time for seg in self.intruder_script]
        if times != sorted(times):
            raise ValueError("script times must ascend")
        if times and (times[0] < 0 or times[-1] > self.duration):
            raise ValueError("script times must lie within [0, duration]")


BASE_ALTITUDE_FT = 5000.0
DEFAULT_DURATION_S = 180.0


def _perp_unit(v: np.ndarray, fallback_heading: float) -> np.ndarray:
    norm = float(np.hypot(v[0], v[1]))
    if norm < 1e-9:
        return heading_unit(fallback_heading + math.pi / 2)
    return np.array([-v[1], v[0]]) / norm


def _backconstruct(own_cpa, own_heading, v0, int_heading, v1, hmd, side,
                   t_cpa):
    """Place the intruder so the straight-line CPA hits (hmd, t_cpa)."""
    w = v1 * heading_unit(int_heading) - v0 * heading_unit(own_heading)
    n = _perp_unit(w, int_heading)
    int_cpa = own_cpa + hmd * side * n
    return int_cpa - v1 * t_cpa * heading_unit(int_heading)


def gen_opsuit_like(n: int, seed: int, duration: float = DEFAULT_DURATION_S,
                    level_fraction: float = 0.5,
                    max_vrate_fpm: float = 1000.0) -> list[Encounter]:
    """Uncorrelated cruising encounters with uniform miss distances.

    Horizontal miss distance samples U(0, 10000) ft, vertical miss distance
    U(0, 2000) ft, relative heading at CPA U(0, 2pi); both aircraft fly
    straight (constant-velocity) lines through a CPA at duration/2. A
    ``1 - level_fraction`` share of intruders hold a steady climb or descent
    (back-constructed so the sampled vertical miss still occurs at CPA);
    the rest are level. Weights are uniform.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    out = []
    t_cpa = duration / 2.0
    for i, child in enumerate(np.random.SeedSequence(seed).spawn(n)):
        rng = np.random.default_rng(child)
        h0 = rng.uniform(0.0, 2 * math.pi)
        psi = rng.uniform(0.0, 2 * math.pi)
        v0 = rng.uniform(50.0, 237.0)
        v1 = rng.uniform(0.0, 237.0)
        hmd = rng.uniform(0.0, 10000.0)
        vmd = rng.uniform(0.0, 2000.0)
        side = 1.0 if rng.random() < 0.5 else -1.0
        vside = 1.0 if rng.random() < 0.5 else -1.0
        vrate = 0.0
        if rng.random() >= level_fraction:
            vrate = rng.uniform(-max_vrate_fpm, max_vrate_fpm)

        h1 = h0 + psi
        own_cpa = v0 * t_cpa * heading_unit(h0)
        int_start = _backconstruct(own_cpa, h0, v0, h1, v1, hmd, side, t_cpa)
        z1_start = (BASE_ALTITUDE_FT + vside * vmd
                    - vrate / 60.0 * t_cpa)
        out.append(Encounter(
            id=f"opsuit-{seed}-{i:05d}",
            weight=1.0 / n,
            ownship=AircraftInit(0.0, 0.0, BASE_ALTITUDE_FT,
                                 wrap_angle(h0).item(), v0),
            intruder=AircraftInit(float(int_start[0]), float(int_start[1]),
                                  z1_start, wrap_angle(h1).item(), v1,
                                  vertical_rate_fpm=vrate),
            duration=duration,
            cpa=CpaSpec(t_cpa, hmd, vmd, wrap_angle(psi).item()),
        ))
    return out


def gen_hovering(n: int, seed: int, duration: float = DEFAULT_DURATION_S,
                 loiter_fraction: float = 0.3) -> list[Encounter]:
    """Hovering ownship versus a cruising intruder.

    The ownship hovers heading north so that speed advisories translate it
    north. The intruder passes co-altitude with relative heading at CPA
    uniform over the full circle and horizontal miss distance U(0, 2000) ft.
    A ``loiter_fraction`` share of intruders start a gentle turn after CPA;
    the rest transit straight.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    out = []
    t_cpa = duration / 2.0
    for i, child in enumerate(np.random.SeedSequence(seed).spawn(n)):
        rng = np.random.default_rng(child)
        psi = rng.uniform(0.0, 2 * math.pi)
        v1 = rng.uniform(50.0, 237.0)
        hmd = rng.uniform(0.0, 2000.0)
        side = 1.0 if rng.random() < 0.5 else -1.0
        loiters = rng.random() < loiter_fraction
        turn_start = rng.uniform(t_cpa + 5.0, duration - 10.0)
        turn_rate = math.radians(1.0) * (1.0 if rng.random() < 0.5 else -1.0)

        int_start = _backconstruct(np.zeros(2), 0.0, 0.0, psi, v1, hmd, side,
                                   t_cpa)
        script = ()
        if loiters:
            # the turn begins after CPA so the sampled geometry is preserved
            script = (ManeuverSegment(round(turn_start, 3),
                                      turn_rate=turn_rate),)
        out.append(Encounter(
            id=f"hover-{seed}-{i:05d}",
            weight=1.0 / n,
            ownship=AircraftInit(0.0, 0.0, BASE_ALTITUDE_FT, 0.0, 0.0),
            intruder=AircraftInit(float(int_start[0]), float(int_start[1]),
                                  BASE_ALTITUDE_FT, wrap_angle(psi).item(),
                                  v1),
            duration=duration,
            intruder_script=script,
            cpa=CpaSpec(t_cpa, hmd, 0.0, wrap_angle(psi).item()),
        ))
    return out


def gen_pairwise(geometry: str, r0: float, v_own: float, v_int: float,
                 altitude_offset: float = 0.0, crossing_angle_deg: float = 90.0,
                 duration: float | None = None) -> Encounter:
    """One deterministic stress encounter on an exact collision course.

    ``head_on`` puts the intruder reciprocal; ``overtake`` co-heading with
    the ownship behind; ``crossing`` at the given relative heading angle.
    A non-closing overtake (ownship not faster) is flagged with a warning
    and generated as a non-converging co-heading pair.
    """
    if r0 <= 0:
        raise ValueError("r0 must be positive")
    if v_own < 0 or v_int < 0:
        raise ValueError("speeds must be >= 0")
    if geometry == "head_on":
        psi = math.pi
    elif geometry == "overtake":
        psi = 0.0
    elif geometry == "crossing":
        psi = math.radians(crossing_angle_deg)
    else:
        raise ValueError(f"unknown geometry {geometry!r}")

    w = v_int * heading_unit(psi) - v_own * heading_unit(0.0)
    closure = float(np.hypot(w[0], w[1]))
    closing = closure > 1e-9
    if geometry == "overtake" and v_own <= v_int:
        warnings.warn("overtake geometry is non-closing "
                      "(ownship not faster than intruder)")
        closing = False

    if closing:
        t_c = r0 / closure
        collision = v_own * t_c * heading_unit(0.0)
        int_start = collision - v_int * t_c * heading_unit(psi)
        cpa = CpaSpec(t_c, 0.0, abs(altitude_offset), wrap_angle(psi).item())
        total = duration if duration is not None else math.ceil(t_c + 60.0)
    else:
        int_start = r0 * np.array([0.0, 1.0])  # dead ahead, diverging
        cpa = CpaSpec(0.0, r0, abs(altitude_offset), wrap_angle(psi).item())
        total = duration if duration is not None else DEFAULT_DURATION_S

    return Encounter(
        id=f"pair-{geometry}-{r0:.0f}",
        weight=1.0,
        ownship=AircraftInit(0.0, 0.0, BASE_ALTITUDE_FT, 0.0, v_own),
        intruder=AircraftInit(float(int_start[0]), float(int_start[1]),
                              BASE_ALTITUDE_FT + altitude_offset,
                              wrap_angle(psi).item(), v_int),
        duration=float(total),
        cpa=cpa,
    )


# --------------------------------------------------------------------- I/O

_REQUIRED = ("id", "weight", "ownship", "intruder", "duration")
_AIRCRAFT_REQUIRED = ("x", "y", "z", "heading", "speed")


def encounter_to_dict(enc: Encounter) -> dict:
    data = {
        "id": enc.id,
        "weight": enc.weight,
        "duration": enc.duration,
        "ownship": asdict(enc.ownship),
        "intruder": asdict(enc.intruder),
        "script": [asdict(seg) for seg in enc.intruder_script],
    }
    data["cpa"] = asdict(enc.cpa) if enc.cpa else None
    return data


def encounter_from_dict(data: dict, line_no: int = 0) -> Encounter:
    for key in _REQUIRED:
        if key not in data:
            raise EncounterParseError(line_no, f"missing field {key!r}")
    for side in ("ownship", "intruder"):
        for key in _AIRCRAFT_REQUIRED:
            if key not in data[side]:
                raise EncounterParseError(line_no,
                                          f"missing field {side}.{key!r}")
    try:
        cpa = CpaSpec(**data["cpa"]) if data.get("cpa") else None
        return Encounter(
            id=data["id"],
            weight=data["weight"],
            ownship=AircraftInit(**data["ownship"]),
            intruder=AircraftInit(**data["intruder"]),
            duration=data["duration"],
            intruder_script=tuple(ManeuverSegment(**seg)
                                  for seg in data.get("script", ())),
            cpa=cpa,
        )
    except (TypeError, ValueError) as err:
        raise EncounterParseError(line_no, str(err))


def save_set(encounters: list[Encounter], path) -> None:
    """One encounter per line, JSON objects."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for enc in encounters:
            fh.write(json.dumps(encounter_to_dict(enc), sort_keys=True))
            fh.write("\n")


def load_set(path) -> list[Encounter]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as err:
                raise EncounterParseError(line_no, f"invalid JSON: {err}")
            out.append(encounter_from_dict(data, line_no))
    return out
