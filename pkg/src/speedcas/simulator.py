"""Forward Monte Carlo propagation of encounters with CAS logic in the loop.

Each equipped aircraft observes the other through configurable sensor noise,
queries its Q-tables, blends the per-dimension advisories, and applies the
commanded maneuvers subject to a sampled pilot response and a response
delay. Everything is deterministic given (encounter, config, seed).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .encounters import Encounter, heading_unit
from .grid import wrap_angle
from .logic import (
    LogicConfig,
    SpeedState,
    is_nmac,
    make_logic,
)
from .policy import CompositeAdvisory, PointLookup, _argmax_coc_first, blend
from .solver import QTable

DIMENSIONS = ("speed", "horizontal", "vertical")


@dataclass(frozen=True)
class SensorNoise:
    """1-sigma surveillance errors applied to each observation."""

    range_ft: float = 50.0
    bearing_rad: float = math.radians(1.0)
    speed_ftps: float = 5.0
    altitude_ft: float = 50.0

    @property
    def any(self) -> bool:
        return any(s > 0 for s in (self.range_ft, self.bearing_rad,
                                   self.speed_ftps, self.altitude_ft))

    @classmethod
    def quiet(cls) -> "SensorNoise":
        return cls(0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class SimConfig:
    """Simulation parameters; see README for the file schema."""

    dt: float = 1.0
    sensor: SensorNoise = SensorNoise()
    pilot_delay_s: float = 5.0
    response_hold_s: float = 10.0
    p_no_response: float = 0.0
    repetitions: int = 1
    max_speed_ftps: float = 237.0
    tau_max_s: float = 100.0
    logic: LogicConfig = LogicConfig()

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not 0.0 <= self.p_no_response <= 1.0:
            raise ValueError("p_no_response must be in [0, 1]")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")

    def to_dict(self) -> dict:
        return {
            "dt": self.dt,
            "sensor": dict(self.sensor.__dict__),
            "pilot_delay_s": self.pilot_delay_s,
            "response_hold_s": self.response_hold_s,
            "p_no_response": self.p_no_response,
            "repetitions": self.repetitions,
            "max_speed_ftps": self.max_speed_ftps,
            "tau_max_s": self.tau_max_s,
            "logic": self.logic.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        return cls(
            dt=data.get("dt", 1.0),
            sensor=SensorNoise(**data.get("sensor", {})),
            pilot_delay_s=data.get("pilot_delay_s", 5.0),
            response_hold_s=data.get("response_hold_s", 10.0),
            p_no_response=data.get("p_no_response", 0.0),
            repetitions=data.get("repetitions", 1),
            max_speed_ftps=data.get("max_speed_ftps", 237.0),
            tau_max_s=data.get("tau_max_s", 100.0),
            logic=LogicConfig.from_dict(data.get("logic", {})),
        )

    @classmethod
    def load(cls, path) -> "SimConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class SimResult:
    """Per-(encounter, repetition) outcome record."""

    encounter_id: str
    rep: int
    seed: int
    nmac: bool
    min_horizontal_sep_ft: float
    min_vertical_sep_ft: float
    alerted: bool
    min_horizontal_sep_time_s: float = 0.0
    first_alert_time_s: float | None = None
    first_alert_range_ft: float | None = None
    advisories: tuple = ()            # (time, {dimension: advisory name})
    responded_dims: tuple = ()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["advisories"] = [[t, names] for t, names in self.advisories]
        d["responded_dims"] = list(self.responded_dims)
        return d


def sample_pilot_response(p_no_response: float, dims, rng) -> tuple[str, ...]:
    """Independently sampled subset of advisory dimensions the pilot flies.

    Each dimension responds with probability 1 - p_no_response**(1/n), so
    the chance of responding to nothing is exactly ``p_no_response``.
    """
    if not 0.0 <= p_no_response <= 1.0:
        raise ValueError("p_no_response must be in [0, 1]")
    dims = tuple(dims)
    if not dims:
        return ()
    if p_no_response == 0.0:
        return dims
    p_resp = 1.0 - p_no_response ** (1.0 / len(dims))
    return tuple(d for d in dims if rng.random() < p_resp)


VERTICAL_RAMP_FPM_S = 750.0  # vertical-rate slew limit (1500 fpm in 2 s)


class _Aircraft:
    """Mutable world state of one aircraft during a run."""

    def __init__(self, init, max_speed):
        self.x, self.y, self.z = init.x, init.y, init.z
        self.heading = init.heading
        self.speed = init.speed
        self.nominal_vfpm = init.vertical_rate_fpm
        self.vfpm = init.vertical_rate_fpm
        self.target_vfpm = init.vertical_rate_fpm
        self.turn_rate = 0.0
        self.accel = 0.0
        self.max_speed = max_speed

    def integrate(self, dt):
        new_speed = min(max(self.speed + self.accel * dt, 0.0),
                        self.max_speed)
        dist = 0.5 * (self.speed + new_speed) * dt
        mid = self.heading + 0.5 * self.turn_rate * dt
        self.x += dist * -math.sin(mid)
        self.y += dist * math.cos(mid)
        self.heading = float(wrap_angle(self.heading + self.turn_rate * dt))
        self.speed = new_speed
        # vertical rate slews toward its command instead of stepping
        delta = self.target_vfpm - self.vfpm
        limit = VERTICAL_RAMP_FPM_S * dt
        self.vfpm += math.copysign(min(abs(delta), limit), delta)
        self.z += self.vfpm / 60.0 * dt


def _observe(own: _Aircraft, other: _Aircraft, noise: SensorNoise, rng):
    """Noisy relative observation: (range, bearing, rel heading, intruder
    speed, intruder altitude)."""
    dx, dy = other.x - own.x, other.y - own.y
    r = math.hypot(dx, dy)
    # body-frame bearing; headings share the ccw-from-north convention
    los = math.atan2(dy, dx) - (own.heading + math.pi / 2.0)
    theta = float(wrap_angle(los))
    psi = float(wrap_angle(other.heading - own.heading))
    v1, z1 = other.speed, other.z
    if noise.any:
        r = max(r + rng.normal(0.0, noise.range_ft), 0.0)
        theta = float(wrap_angle(theta + rng.normal(0.0, noise.bearing_rad)))
        v1 = max(v1 + rng.normal(0.0, noise.speed_ftps), 0.0)
        z1 = z1 + rng.normal(0.0, noise.altitude_ft)
    return r, theta, psi, v1, z1


def _conflict_countdown(r, theta, psi, v0, v1, dz, rel_vfpm, tau_max):
    """Time until NMAC conditions materialize, clamped to [0, tau_max].

    Outside the 100 ft vertical window: time until the window closes under
    the current relative vertical rate (never closing maps to the cap).
    Inside the window the binding deadline is horizontal: the time at which
    the relative track first pierces the 500 ft shell under the current
    relative velocity; tracks whose projected miss distance stays outside
    the shell never conflict and map to the cap.
    """
    if abs(dz) >= 100.0:
        rv = rel_vfpm / 60.0
        closing = (dz > 0 > rv) or (dz < 0 < rv)
        if not closing:
            return tau_max
        return min((abs(dz) - 100.0) / abs(rv), tau_max)
    if r < 500.0:
        return 0.0
    # relative state in the ownship body frame
    px, py = r * math.cos(theta), r * math.sin(theta)
    wx = v1 * math.cos(psi) - v0
    wy = v1 * math.sin(psi)
    a = wx * wx + wy * wy
    b = 2.0 * (px * wx + py * wy)
    c = px * px + py * py - 500.0 ** 2
    if a < 1e-12:
        return tau_max
    disc = b * b - 4.0 * a * c
    if disc <= 0.0:
        return tau_max  # projected miss stays outside the shell
    t_cross = (-b - math.sqrt(disc)) / (2.0 * a)
    if t_cross <= 0.0:
        return tau_max  # shell crossing lies in the past
    return min(t_cross, tau_max)


class _CasUnit:
    """Per-aircraft CAS execution state across a run."""

    def __init__(self, tables: list[QTable], config: SimConfig):
        self.tables = tables
        self.logics = [make_logic(t.logic_kind, config.logic) for t in tables]
        self.lookups = [PointLookup(t) for t in tables]
        self.prev = {lg.kind: 0 for lg in self.logics}
        self.first_alert: dict[str, float] = {}
        self.last_command: dict[str, tuple] = {}  # dim -> (advisory, time)
        self.responded: tuple[str, ...] | None = None
        self.dims = tuple(lg.actions[0].dimension for lg in self.logics)

    def advise(self, t, obs, own_speed, tau, config, rng) -> CompositeAdvisory:
        r, theta, psi, v1, _ = obs
        advisories = []
        for lookup, lg in zip(self.lookups, self.logics):
            vals = lookup.action_values(
                (r, theta, psi, own_speed, v1,
                 float(self.prev[lg.kind]), tau))
            adv = lg.actions[_argmax_coc_first(vals)]
            self.prev[lg.kind] = adv.ordinal
            advisories.append(adv)
        comp = blend(advisories)
        if comp.alert and self.responded is None:
            self.responded = sample_pilot_response(config.p_no_response,
                                                   self.dims, rng)
        for dim, adv in comp.active().items():
            if adv.is_alert:
                self.first_alert.setdefault(dim, t)
                self.last_command[dim] = (adv, t)
        return comp

    def engaged(self, dim: str, t: float, config: SimConfig) -> bool:
        """Whether the pilot is flying this dimension's command at time t."""
        if self.responded is None or dim not in self.responded:
            return False
        start = self.first_alert.get(dim)
        return start is not None and t >= start + config.pilot_delay_s

    def command(self, dim: str, current, t: float, config: SimConfig):
        """The maneuver actually flown in one dimension.

        An alerting advisory is flown directly; a withdrawn advisory keeps
        its last alerting command for ``response_hold_s`` (a pilot completes
        a maneuver rather than abandoning it the moment the system goes
        quiet). A changed alerting advisory always takes over at once.
        """
        if not self.engaged(dim, t, config):
            return None
        if current is not None and current.is_alert:
            return current
        held = self.last_command.get(dim)
        if held is not None and t - held[1] <= config.response_hold_s:
            return held[0]
        return None


def _apply_controls(craft: _Aircraft, comp: CompositeAdvisory | None,
                    unit: _CasUnit | None, t: float, config: SimConfig,
                    base_turn=0.0, base_accel=0.0, base_vfpm=None):
    """Resolve scripted base behavior plus any engaged advisory commands."""
    craft.turn_rate = base_turn
    craft.accel = base_accel
    craft.target_vfpm = craft.nominal_vfpm if base_vfpm is None else base_vfpm
    if comp is None or unit is None:
        return
    speed_cmd = unit.command("speed", comp.speed, t, config)
    if speed_cmd is not None:
        craft.accel = 0.0 if speed_cmd.name == "MA" else speed_cmd.accel_ftps2
    horiz_cmd = unit.command("horizontal", comp.horizontal, t, config)
    if horiz_cmd is not None:
        hl = next(lg for lg in unit.logics if lg.kind == "horizontal")
        if craft.speed < hl.min_speed_ftps:
            # below the turn floor: spool up first, turn once fast enough
            craft.accel = hl.spool_accel
            craft.turn_rate = 0.0
        else:
            craft.turn_rate = horiz_cmd.turn_rate
    vert_cmd = unit.command("vertical", comp.vertical, t, config)
    if vert_cmd is not None:
        craft.target_vfpm = vert_cmd.vertical_rate_fpm


def simulate(encounter: Encounter, ownship_logics: list[QTable],
             intruder_logics: list[QTable] | None, config: SimConfig,
             seed: int) -> SimResult:
    """Propagate one encounter with the given CAS equipage.

    At every step each equipped aircraft forms a noisy observation, builds
    its logic state (the conflict countdown comes from the observed vertical
    and horizontal geometry), queries its tables, blends the advisories, and
    applies commands for the dimensions the sampled pilot response covers,
    after the response delay. NMAC and separation minima use true states.
    """
    rng = np.random.default_rng(seed)
    own = _Aircraft(encounter.ownship, config.max_speed_ftps)
    intr = _Aircraft(encounter.intruder, config.max_speed_ftps)
    own_unit = _CasUnit(ownship_logics, config) if ownship_logics else None
    int_unit = _CasUnit(intruder_logics, config) if intruder_logics else None

    nmac = False
    min_h = math.inf
    min_h_time = 0.0
    min_v = math.inf
    alerted = False
    first_alert_time = None
    first_alert_range = None
    timeline = []
    last_names: dict[str, str] = {}

    steps = int(round(encounter.duration / config.dt))
    script = list(encounter.intruder_script)
    seg_turn, seg_accel, seg_vfpm = 0.0, 0.0, None

    for k in range(steps + 1):
        t = k * config.dt
        dx, dy = intr.x - own.x, intr.y - own.y
        hsep = math.hypot(dx, dy)
        vsep = abs(intr.z - own.z)
        if hsep < min_h:
            min_h = hsep
            min_h_time = t
        min_v = min(min_v, vsep)
        if is_nmac(hsep, vsep):
            nmac = True
        if k == steps:
            break

        while script and script[0].time <= t:
            seg = script.pop(0)
            seg_turn, seg_accel = seg.turn_rate, seg.accel
            seg_vfpm = seg.vertical_rate_fpm

        own_comp = None
        if own_unit is not None:
            obs = _observe(own, intr, config.sensor, rng)
            tau = _conflict_countdown(
                obs[0], obs[1], obs[2], own.speed, obs[3],
                obs[4] - own.z, intr.vfpm - own.vfpm, config.tau_max_s)
            own_comp = own_unit.advise(t, obs, own.speed, tau, config, rng)
            if own_comp.alert and not alerted:
                alerted = True
                first_alert_time = t
                first_alert_range = hsep
            names = own_comp.names()
            if names != last_names:
                timeline.append((t, names))
                last_names = names

        int_comp = None
        if int_unit is not None:
            obs_i = _observe(intr, own, config.sensor, rng)
            tau_i = _conflict_countdown(
                obs_i[0], obs_i[1], obs_i[2], intr.speed, obs_i[3],
                obs_i[4] - intr.z, own.vfpm - intr.vfpm, config.tau_max_s)
            int_comp = int_unit.advise(t, obs_i, intr.speed, tau_i, config,
                                       rng)

        _apply_controls(own, own_comp, own_unit, t, config)
        _apply_controls(intr, int_comp, int_unit, t, config,
                        base_turn=seg_turn, base_accel=seg_accel,
                        base_vfpm=seg_vfpm)
        own.integrate(config.dt)
        intr.integrate(config.dt)

    return SimResult(
        encounter_id=encounter.id,
        rep=0,
        seed=seed,
        nmac=nmac,
        min_horizontal_sep_ft=min_h,
        min_vertical_sep_ft=min_v,
        alerted=alerted,
        min_horizontal_sep_time_s=min_h_time,
        first_alert_time_s=first_alert_time,
        first_alert_range_ft=first_alert_range,
        advisories=tuple(timeline),
        responded_dims=(own_unit.responded or ()) if own_unit else (),
    )


def derive_seed(base_seed: int, encounter_index: int, rep: int) -> int:
    """Stable per-(encounter, repetition) seed, independent of execution
    order and worker layout."""
    ss = np.random.SeedSequence([base_seed, encounter_index, rep])
    return int(ss.generate_state(1)[0])


def _run_one(args):
    enc, idx, ownship, intruder, config, base_seed, rep = args
    seed = derive_seed(base_seed, idx, rep)
    res = simulate(enc, ownship, intruder, config, seed)
    return replace(res, rep=rep)


def run_set(encounters: list[Encounter], ownship_logics: list[QTable],
            intruder_logics: list[QTable] | None, config: SimConfig,
            base_seed: int, repetitions: int | None = None,
            workers: int = 1) -> list[SimResult]:
    """Run repetitions x encounters with derived sub-seeds.

    Results arrive ordered by (encounter position, repetition) regardless of
    the worker count.
    """
    if not encounters:
        raise ValueError("encounter set is empty")
    reps = repetitions if repetitions is not None else config.repetitions
    jobs = [(enc, i, ownship_logics, intruder_logics, config, base_seed, rep)
            for i, enc in enumerate(encounters) for rep in range(reps)]
    if workers <= 1:
        results = [_run_one(job) for job in jobs]
    else:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs, chunksize=16))
    return results


# --------------------------------------------------------------------- I/O

SUMMARY_FIELDS = ("encounter_id", "rep", "seed", "nmac",
                  "min_horizontal_sep_ft", "min_vertical_sep_ft",
                  "min_horizontal_sep_time_s", "alerted",
                  "first_alert_time_s", "first_alert_range_ft")


def save_results(results: list[SimResult], path) -> None:
    """JSON-lines stream, one result per line."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for res in results:
            fh.write(json.dumps(res.to_dict(), sort_keys=True))
            fh.write("\n")


def load_results(path) -> list[SimResult]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            data = json.loads(line)
            data["advisories"] = tuple(
                (t, names) for t, names in data.get("advisories", []))
            data["responded_dims"] = tuple(data.get("responded_dims", ()))
            out.append(SimResult(**data))
    return out


def save_summary_csv(results: list[SimResult], path) -> None:
    """Compact per-result scalar summary."""
    import csv

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_FIELDS)
        for res in results:
            writer.writerow([getattr(res, f) for f in SUMMARY_FIELDS])
