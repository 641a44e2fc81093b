"""Collision avoidance MDP ingredients.

Defines the advisory action sets, relative-state dynamics, stochastic
transition construction, reward model, and the NMAC predicate for the speed
logic and the horizontal/vertical comparison baselines. All logic objects
are immutable; transition and reward evaluation are pure functions.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .grid import DiscretizationGrid, default_speed_grid, wrap_angle

G_FTPS2 = 32.185            # standard gravity, ft/s^2
ADVISORY_ACCEL_G = 0.0625   # speed advisory acceleration magnitude
KT_TO_FTPS = 1.68781

NMAC_HORIZONTAL_FT = 500.0
NMAC_VERTICAL_FT = 100.0

# column order matches the grid axes: r, theta, psi, v0, v1, a_prev, tau
R, TH, PS, V0, V1, AP, TAU = range(7)


def is_nmac(horizontal_sep: float, vertical_sep: float) -> bool:
    """Near mid-air collision: strictly inside 500 ft x 100 ft."""
    return horizontal_sep < NMAC_HORIZONTAL_FT and vertical_sep < NMAC_VERTICAL_FT


@dataclass(frozen=True)
class Advisory:
    """A maneuver command in one advisory dimension.

    ``ordinal`` is the action's index in its logic's action set (also the
    value stored in the a_prev state variable). ``sign`` encodes the maneuver
    direction used for reversal detection.
    """

    name: str
    dimension: str              # "speed" | "horizontal" | "vertical"
    ordinal: int
    accel_ftps2: float = 0.0    # along-track command
    turn_rate: float = 0.0      # rad/s, positive = left
    vertical_rate_fpm: float = 0.0
    sign: int = 0

    @property
    def is_alert(self) -> bool:
        return self.name != "COC"


def _speed_actions(accel_g: float, include_maintain: bool) -> tuple[Advisory, ...]:
    a = accel_g * G_FTPS2
    acts = [
        Advisory("COC", "speed", 0),
        Advisory("SD", "speed", 1, accel_ftps2=-a, sign=-1),
        Advisory("SA", "speed", 2, accel_ftps2=+a, sign=+1),
    ]
    if include_maintain:
        acts.append(Advisory("MA", "speed", 3))
    return tuple(acts)


def _horizontal_actions(turn_rate: float) -> tuple[Advisory, ...]:
    return (
        Advisory("COC", "horizontal", 0),
        Advisory("TL", "horizontal", 1, turn_rate=+turn_rate, sign=+1),
        Advisory("TR", "horizontal", 2, turn_rate=-turn_rate, sign=-1),
    )


def _vertical_actions(rate_fpm: float) -> tuple[Advisory, ...]:
    return (
        Advisory("COC", "vertical", 0),
        Advisory("CL", "vertical", 1, vertical_rate_fpm=+rate_fpm, sign=+1),
        Advisory("DS", "vertical", 2, vertical_rate_fpm=-rate_fpm, sign=-1),
    )


@dataclass(frozen=True)
class NoiseModel:
    """Zero-mean Gaussian transition noise, one sigma per disturbed channel.

    All sigmas are per transition step: speeds in ft/s, headings in degrees
    (converted to radians internally).
    """

    sigma_own_speed: float = 1.64
    sigma_int_speed: float = 3.64
    sigma_own_heading_deg: float = 1.0027
    sigma_int_heading_deg: float = 1.0027

    def __post_init__(self):
        for name in ("sigma_own_speed", "sigma_int_speed",
                     "sigma_own_heading_deg", "sigma_int_heading_deg"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class RewardWeights:
    """Additive reward parameters: one large NMAC penalty, small
    operational costs, and the discount factor."""

    nmac_penalty: float = -1.0
    alert_cost: float = -0.01
    strengthen_cost: float = -0.005
    reversal_cost: float = -0.02
    maintain_cost: float = -0.002
    discount: float = 1.0

    def __post_init__(self):
        if self.nmac_penalty >= 0:
            raise ValueError("nmac_penalty must be negative")
        for name in ("alert_cost", "strengthen_cost", "reversal_cost",
                     "maintain_cost"):
            if getattr(self, name) > 0:
                raise ValueError(f"{name} must be <= 0")
        if not 0 < self.discount <= 1:
            raise ValueError("discount must be in (0, 1]")

    def canonical_hash(self) -> str:
        import hashlib

        text = json.dumps(self.__dict__, sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class SpeedState:
    """Relative encounter state seen by a logic."""

    r: float           # range, ft
    theta: float       # bearing of intruder in ownship body frame, rad
    psi: float         # intruder heading relative to ownship heading, rad
    v0: float          # ownship horizontal speed, ft/s
    v1: float          # intruder horizontal speed, ft/s
    a_prev: int = 0    # previous advisory ordinal
    tau: float = 0.0   # time to conflict, s

    def as_array(self) -> np.ndarray:
        return np.array([self.r, self.theta, self.psi, self.v0, self.v1,
                         float(self.a_prev), self.tau])

    @classmethod
    def from_array(cls, a: Sequence[float]) -> "SpeedState":
        return cls(float(a[R]), float(a[TH]), float(a[PS]), float(a[V0]),
                   float(a[V1]), int(round(a[AP])), float(a[TAU]))


def gauss_hermite_3(sigma: float) -> tuple[np.ndarray, np.ndarray]:
    """3-point quadrature for a zero-mean Gaussian: matches the first five
    moments. Degenerates to a single point mass when sigma is 0."""
    if sigma == 0.0:
        return np.array([0.0]), np.array([1.0])
    s = math.sqrt(3.0) * sigma
    return np.array([-s, 0.0, s]), np.array([1 / 6, 2 / 3, 1 / 6])


def _relative_step(states: np.ndarray, own_accel, own_turn: float,
                   dv0, dh0, dv1, dh1, dt: float,
                   own_speed_lo: float, own_speed_hi: float,
                   int_speed_hi: float, terminal: bool = False) -> np.ndarray:
    """Advance the planar relative state by dt.

    Both aircraft fly with constant commanded along-track acceleration;
    displacement uses the trapezoidal mean speed along the step's mean
    heading. Ownship speed clamps to the solved envelope, intruder speed to
    [0, int_speed_hi]. Heading disturbances apply at the end of the step.

    With ``terminal`` set (the step that expires the conflict countdown),
    a pass through the origin scores its closest approach instead of the
    endpoint range, so crossing the protected shell mid-step cannot read as
    an escape.
    """
    r, th, ps = states[:, R], states[:, TH], states[:, PS]
    v0, v1 = states[:, V0], states[:, V1]

    v0n = np.clip(v0 + own_accel * dt + dv0, own_speed_lo, own_speed_hi)
    v1n = np.clip(v1 + dv1, 0.0, int_speed_hi)

    own_turn_step = own_turn * dt
    dist0 = 0.5 * (v0 + v0n) * dt
    own_dir = 0.5 * own_turn_step  # mean heading over a commanded turn
    own_x = dist0 * np.cos(own_dir)
    own_y = dist0 * np.sin(own_dir)
    own_heading = own_turn_step + dh0

    dist1 = 0.5 * (v1 + v1n) * dt
    int_x = r * np.cos(th) + dist1 * np.cos(ps)
    int_y = r * np.sin(th) + dist1 * np.sin(ps)
    int_heading = ps + dh1

    dx, dy = int_x - own_x, int_y - own_y
    r_out = np.hypot(dx, dy)
    if terminal:
        # closest approach along the relative track within this step
        sx, sy = r * np.cos(th), r * np.sin(th)
        mx, my = dx - sx, dy - sy
        seg2 = mx * mx + my * my
        tstar = -(sx * mx + sy * my) / np.where(seg2 > 0, seg2, 1.0)
        inside = (tstar > 0.0) & (tstar < 1.0) & (seg2 > 0)
        ts = np.clip(tstar, 0.0, 1.0)
        rmin = np.hypot(sx + ts * mx, sy + ts * my)
        r_out = np.where(inside, np.minimum(rmin, r_out), r_out)
    out = states.copy()
    out[:, R] = r_out
    out[:, TH] = wrap_angle(np.arctan2(dy, dx) - own_heading)
    out[:, PS] = wrap_angle(int_heading - own_heading)
    out[:, V0] = v0n
    out[:, V1] = v1n
    return out


class LogicSpec:
    """Shared machinery for the advisory logics.

    Subclasses fix the action set and how a commanded action shapes the
    ownship part of the transition. ``step_batch`` and ``reward_batch`` work
    on (n, 7) state arrays in grid-axis column order.
    """

    kind: str = ""

    def __init__(self, actions: tuple[Advisory, ...], noise: NoiseModel,
                 own_speed_bounds=(50.0, 237.0), int_speed_hi=237.0):
        self.actions = actions
        self.noise = noise
        self.own_speed_bounds = own_speed_bounds
        self.int_speed_hi = int_speed_hi

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    def action_named(self, name: str) -> Advisory:
        for a in self.actions:
            if a.name == name:
                return a
        raise ValueError(f"unknown action {name!r} for {self.kind} logic")

    def default_grid(self, scale: float = 1.0) -> DiscretizationGrid:
        return default_speed_grid(scale, n_prev_actions=self.n_actions)

    # -- transition structure ------------------------------------------------

    def noise_sigmas(self, action: Advisory) -> tuple[float, float, float, float]:
        """(own speed, own heading rad, intruder speed, intruder heading rad)
        per-step sigmas for one action. Ownship channels are deterministic
        for every alerting action; only clear-of-conflict keeps the full
        model."""
        n = self.noise
        own_v = n.sigma_own_speed if not action.is_alert else 0.0
        own_h = math.radians(n.sigma_own_heading_deg) if not action.is_alert else 0.0
        return (own_v, own_h, n.sigma_int_speed,
                math.radians(n.sigma_int_heading_deg))

    def noise_branches(self, action: Advisory):
        """Joint 3-point expansions: yields (prob, dv0, dh0, dv1, dh1)."""
        sv0, sh0, sv1, sh1 = self.noise_sigmas(action)
        nv0, wv0 = gauss_hermite_3(sv0)
        nh0, wh0 = gauss_hermite_3(sh0)
        nv1, wv1 = gauss_hermite_3(sv1)
        nh1, wh1 = gauss_hermite_3(sh1)
        for i, a in enumerate(nv0):
            for j, b in enumerate(nh0):
                for k, c in enumerate(nv1):
                    for l, d in enumerate(nh1):
                        yield (wv0[i] * wh0[j] * wv1[k] * wh1[l],
                               a, b, c, d)

    def step_batch(self, states: np.ndarray, action: Advisory,
                   dv0, dh0, dv1, dh1, dt: float) -> np.ndarray:
        """One transition step for a batch of states under one action.

        Disturbances are per-step deltas: speeds in ft/s, headings in
        radians. tau counts down by dt."""
        terminal = bool(np.all(states[:, TAU] - dt <= 1e-9))
        out = self._ownship_step(states, action, dv0, dh0, dv1, dh1,
                                 dt, terminal)
        out[:, AP] = float(action.ordinal)
        return out

    def _ownship_step(self, states, action, dv0, dh0, dv1, dh1, dt, terminal):
        raise NotImplementedError

    # -- reward ---------------------------------------------------------------

    def _nmac_mask(self, states: np.ndarray, action: Advisory) -> np.ndarray:
        """States collecting the NMAC penalty: inside 500 ft with the
        conflict countdown expired."""
        return (states[:, R] < NMAC_HORIZONTAL_FT) & (states[:, TAU] <= 1e-9)

    def reward_batch(self, states: np.ndarray, action: Advisory,
                     weights: RewardWeights) -> np.ndarray:
        rwd = np.zeros(states.shape[0])
        rwd += weights.nmac_penalty * self._nmac_mask(states, action)
        if action.is_alert:
            rwd += weights.alert_cost
            prev = np.rint(states[:, AP]).astype(int)
            prev_sign = np.array([self.actions[p].sign for p in prev])
            rwd += weights.reversal_cost * (prev_sign * action.sign < 0)
            if action.sign != 0:
                rwd += weights.strengthen_cost * (prev == 0)
            if action.name == "MA":
                rwd += weights.maintain_cost
        return rwd


class SpeedLogic(LogicSpec):
    """Along-track acceleration advisories; no ownship turning."""

    kind = "speed"

    def __init__(self, noise: NoiseModel = NoiseModel(),
                 accel_g: float = ADVISORY_ACCEL_G,
                 include_maintain: bool = True):
        super().__init__(_speed_actions(accel_g, include_maintain), noise)

    def _ownship_step(self, states, action, dv0, dh0, dv1, dh1, dt, terminal):
        out = _relative_step(states, action.accel_ftps2, 0.0,
                             dv0, dh0, dv1, dh1, dt,
                             *self.own_speed_bounds, self.int_speed_hi,
                             terminal)
        out[:, TAU] = np.maximum(states[:, TAU] - dt, 0.0)
        return out


class HorizontalLogic(LogicSpec):
    """Fixed-rate turn advisories over the same state geometry."""

    kind = "horizontal"

    def __init__(self, noise: NoiseModel = NoiseModel(),
                 turn_rate_deg_s: float = 3.0,
                 min_speed_kt: float = 30.0,
                 accel_g: float = ADVISORY_ACCEL_G):
        super().__init__(_horizontal_actions(math.radians(turn_rate_deg_s)),
                         noise)
        # minimum-speed rule parameters, enforced during simulation only
        self.min_speed_ftps = min_speed_kt * KT_TO_FTPS
        self.spool_accel = accel_g * G_FTPS2

    def _ownship_step(self, states, action, dv0, dh0, dv1, dh1, dt, terminal):
        out = _relative_step(states, 0.0, action.turn_rate,
                             dv0, dh0, dv1, dh1, dt,
                             *self.own_speed_bounds, self.int_speed_hi,
                             terminal)
        out[:, TAU] = np.maximum(states[:, TAU] - dt, 0.0)
        return out


class VerticalLogic(LogicSpec):
    """Fixed-rate climb/descend advisories.

    The planar state always flies straight. The state carries no altitude,
    so a vertical escape is modeled through the penalty instead: a
    *sustained* climb or descend (the previous action continued by the
    current one) exempts the terminal NMAC penalty. The solved policy
    therefore starts its maneuver one countdown stage before the conflict
    and holds it through the conflict instead of dropping the advisory at
    the terminal stage.
    """

    kind = "vertical"

    def __init__(self, noise: NoiseModel = NoiseModel(),
                 rate_fpm: float = 1500.0):
        super().__init__(_vertical_actions(rate_fpm), noise)
        self.rate_fpm = rate_fpm

    def _nmac_mask(self, states, action):
        prev = np.rint(states[:, AP]).astype(int)
        sustained = (prev != 0) & (action.ordinal == prev)
        return super()._nmac_mask(states, action) & ~sustained

    def _ownship_step(self, states, action, dv0, dh0, dv1, dh1, dt, terminal):
        out = _relative_step(states, 0.0, 0.0, dv0, dh0, dv1, dh1, dt,
                             *self.own_speed_bounds, self.int_speed_hi,
                             terminal)
        out[:, TAU] = np.maximum(states[:, TAU] - dt, 0.0)
        return out


def baseline_logic(kind: str, noise: NoiseModel = NoiseModel(), **params) -> LogicSpec:
    """Comparison logics sharing the speed logic's state geometry."""
    if kind == "horizontal":
        return HorizontalLogic(noise, **params)
    if kind == "vertical":
        return VerticalLogic(noise, **params)
    raise ValueError(f"unknown baseline kind {kind!r}")


def make_logic(kind: str, config: "LogicConfig | None" = None) -> LogicSpec:
    cfg = config or LogicConfig()
    if kind == "speed":
        return SpeedLogic(cfg.noise, accel_g=cfg.speed_accel_g,
                          include_maintain=cfg.include_maintain)
    return baseline_logic(kind, cfg.noise, **cfg.baseline_params(kind))


def dynamics_step(state: SpeedState, action: Advisory,
                  intruder_accel: float = 0.0, dt: float = 1.0,
                  logic: LogicSpec | None = None) -> SpeedState:
    """Deterministic speed-logic relative-state update over dt.

    Both aircraft fly straight; the ownship applies the advisory's
    along-track acceleration and the intruder ``intruder_accel``; range,
    bearing and relative heading are recomputed from the updated planar
    positions. Ownship speed clamps to the solved envelope, tau counts down
    to its floor at 0, and a_prev becomes the commanded action.
    """
    lg = logic or _DEFAULT_SPEED
    arr = state.as_array()[None, :]
    # the intruder's along-track acceleration enters as its speed delta
    out = _relative_step(arr, action.accel_ftps2, 0.0,
                         0.0, 0.0, intruder_accel * dt, 0.0, dt,
                         *lg.own_speed_bounds, lg.int_speed_hi)
    out[0, TAU] = max(state.tau - dt, 0.0)
    out[0, AP] = float(action.ordinal)
    return SpeedState.from_array(out[0])


def reward(state: SpeedState, action: Advisory, weights: RewardWeights,
           logic: LogicSpec | None = None) -> float:
    """Additive reward: NMAC penalty plus operational costs."""
    lg = logic or _DEFAULT_SPEED
    return float(lg.reward_batch(state.as_array()[None, :], action, weights)[0])


def _require_on_lattice(grid: DiscretizationGrid, state: SpeedState) -> None:
    for coord, axis in zip(state.as_array(), grid.axes):
        cuts = axis.array()
        if not np.any(np.abs(cuts - coord) < 1e-9):
            raise ValueError(
                f"state coordinate {coord} for axis {axis.name!r} is not a "
                f"lattice vertex")


def transitions(grid: DiscretizationGrid, vertex_state: SpeedState,
                action: Advisory, noise: NoiseModel | None = None,
                dt: float | None = None,
                logic: LogicSpec | None = None) -> list[tuple[int, float]]:
    """Stochastic successor distribution of one lattice vertex.

    Each disturbed channel expands through 3-point quadrature; the joint
    branches push through the deterministic step and spread onto grid
    vertices by multilinear interpolation. Ownship channels collapse to a
    point mass for alerting actions. Probabilities sum to 1.
    """
    lg = logic or _DEFAULT_SPEED
    if noise is not None and noise != lg.noise:
        lg = replace_noise(lg, noise)
    if dt is None:
        dt = grid.stage_step
    _require_on_lattice(grid, vertex_state)

    arr = vertex_state.as_array()[None, :]
    acc: dict[int, float] = {}
    for p, dv0, dh0, dv1, dh1 in lg.noise_branches(action):
        succ = lg.step_batch(arr, action, dv0, dh0, dv1, dh1, dt)
        idx, w = grid.batch_interpolants(succ)
        for i, x in zip(idx[0], w[0]):
            if x > 1e-12:  # drop float-noise crumbs from near-vertex hits
                acc[int(i)] = acc.get(int(i), 0.0) + p * float(x)
    total = sum(acc.values())
    if abs(total - 1.0) > 1e-9:
        raise AssertionError(f"transition probabilities sum to {total}")
    return sorted(acc.items())


def replace_noise(logic: LogicSpec, noise: NoiseModel) -> LogicSpec:
    """Copy of a logic with a different noise model."""
    import copy

    out = copy.copy(logic)
    out.noise = noise
    return out


_DEFAULT_SPEED = SpeedLogic()


@dataclass(frozen=True)
class LogicConfig:
    """JSON-compatible bundle of every tunable logic parameter."""

    noise: NoiseModel = NoiseModel()
    rewards: RewardWeights = RewardWeights()
    speed_accel_g: float = ADVISORY_ACCEL_G
    include_maintain: bool = True
    horizontal_turn_rate_deg_s: float = 3.0
    horizontal_min_speed_kt: float = 30.0
    vertical_rate_fpm: float = 1500.0

    def baseline_params(self, kind: str) -> dict:
        if kind == "horizontal":
            return {"turn_rate_deg_s": self.horizontal_turn_rate_deg_s,
                    "min_speed_kt": self.horizontal_min_speed_kt,
                    "accel_g": self.speed_accel_g}
        if kind == "vertical":
            return {"rate_fpm": self.vertical_rate_fpm}
        raise ValueError(f"unknown baseline kind {kind!r}")

    def to_dict(self) -> dict:
        return {
            "noise": dict(self.noise.__dict__),
            "rewards": dict(self.rewards.__dict__),
            "speed": {"accel_g": self.speed_accel_g,
                      "include_maintain": self.include_maintain},
            "horizontal": {"turn_rate_deg_s": self.horizontal_turn_rate_deg_s,
                           "min_speed_kt": self.horizontal_min_speed_kt},
            "vertical": {"rate_fpm": self.vertical_rate_fpm},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LogicConfig":
        sp = data.get("speed", {})
        hz = data.get("horizontal", {})
        vt = data.get("vertical", {})
        return cls(
            noise=NoiseModel(**data.get("noise", {})),
            rewards=RewardWeights(**data.get("rewards", {})),
            speed_accel_g=sp.get("accel_g", ADVISORY_ACCEL_G),
            include_maintain=sp.get("include_maintain", True),
            horizontal_turn_rate_deg_s=hz.get("turn_rate_deg_s", 3.0),
            horizontal_min_speed_kt=hz.get("min_speed_kt", 30.0),
            vertical_rate_fpm=vt.get("rate_fpm", 1500.0),
        )

    @classmethod
    def load(cls, path) -> "LogicConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
