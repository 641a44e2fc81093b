"""Discretization lattices over the encounter state space and exact
multilinear interpolation between lattice vertices.

A grid is an ordered list of axes. Continuous axes interpolate linearly,
angle axes interpolate with wrap-around at +/-pi, categorical axes require
exact coordinate matches, and the single stage axis (the time-to-conflict
countdown) snaps to the nearest stage. Flat indices are stage-major: all
vertices of one stage are contiguous, with the remaining axes row-major in
listed order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import product
from typing import Iterable, Sequence

import numpy as np

CONTINUOUS = "continuous"
ANGLE = "angle"
CATEGORICAL = "categorical"
STAGE = "stage"

_AXIS_KINDS = (CONTINUOUS, ANGLE, CATEGORICAL, STAGE)

TWO_PI = 2.0 * math.pi


def wrap_angle(x):
    """Normalize an angle (scalar or array) into [-pi, pi)."""
    return (np.asarray(x, dtype=float) + math.pi) % TWO_PI - math.pi


@dataclass(frozen=True)
class Axis:
    """One dimension of the lattice: named, unit-tagged cut points."""

    name: str
    cuts: tuple[float, ...]
    unit: str = ""
    kind: str = CONTINUOUS

    def __post_init__(self):
        if self.kind not in _AXIS_KINDS:
            raise ValueError(f"unknown axis kind {self.kind!r}")
        object.__setattr__(self, "cuts", tuple(float(c) for c in self.cuts))
        min_len = 1 if self.kind == CATEGORICAL else 2 if self.kind != STAGE else 1
        if len(self.cuts) < min_len:
            raise ValueError(f"axis {self.name!r} needs >= {min_len} cuts")
        if any(b <= a for a, b in zip(self.cuts, self.cuts[1:])):
            raise ValueError(f"axis {self.name!r} cuts must be strictly ascending")

    @property
    def n(self) -> int:
        return len(self.cuts)

    @property
    def lo(self) -> float:
        return self.cuts[0]

    @property
    def hi(self) -> float:
        return self.cuts[-1]

    def array(self) -> np.ndarray:
        return np.asarray(self.cuts, dtype=float)


@dataclass(frozen=True)
class DiscretizationGrid:
    """Ordered axes defining the solved state lattice.

    Exactly one axis must have kind ``stage``; its cuts are the countdown
    values of the solver's stages. Vertex count is the product of per-axis
    counts and the flat index is bijective with the multi-index.
    """

    axes: tuple[Axis, ...]
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "axes", tuple(self.axes))
        stages = [a for a in self.axes if a.kind == STAGE]
        if len(stages) != 1:
            raise ValueError("grid requires exactly one stage axis")

    # -- structure ---------------------------------------------------------

    def axis(self, name: str) -> Axis:
        for a in self.axes:
            if a.name == name:
                return a
        raise KeyError(name)

    @property
    def stage_axis(self) -> Axis:
        return next(a for a in self.axes if a.kind == STAGE)

    @property
    def stage_axis_pos(self) -> int:
        return next(i for i, a in enumerate(self.axes) if a.kind == STAGE)

    @property
    def n_stages(self) -> int:
        return self.stage_axis.n

    @property
    def stage_step(self) -> float:
        """Spacing between consecutive stage values (0 for a 1-stage axis)."""
        cuts = self.stage_axis.cuts
        return cuts[1] - cuts[0] if len(cuts) > 1 else 0.0

    @property
    def stage_size(self) -> int:
        """Vertices per stage (product of non-stage axis counts)."""
        n = 1
        for a in self.axes:
            if a.kind != STAGE:
                n *= a.n
        return n

    @property
    def n_vertices(self) -> int:
        return self.stage_size * self.n_stages

    def _strides(self) -> tuple[int, ...]:
        """Per-axis strides for the stage-major flat ordering."""
        key = "strides"
        if key not in self._cache:
            strides = [0] * len(self.axes)
            acc = 1
            for i in range(len(self.axes) - 1, -1, -1):
                if self.axes[i].kind == STAGE:
                    continue
                strides[i] = acc
                acc *= self.axes[i].n
            strides[self.stage_axis_pos] = acc  # stage outermost
            self._cache[key] = tuple(strides)
        return self._cache[key]

    # -- index <-> vertex --------------------------------------------------

    def index_of(self, multi_index: Sequence[int]) -> int:
        if len(multi_index) != len(self.axes):
            raise ValueError("multi_index length must match axis count")
        flat = 0
        for idx, axis, stride in zip(multi_index, self.axes, self._strides()):
            idx = int(idx)
            if not 0 <= idx < axis.n:
                raise ValueError(f"index {idx} out of bounds for axis {axis.name!r}")
            flat += idx * stride
        return flat

    def multi_index_of(self, flat: int) -> tuple[int, ...]:
        if not 0 <= flat < self.n_vertices:
            raise ValueError(f"flat index {flat} out of bounds")
        out = [0] * len(self.axes)
        # Peel axes from most-significant (stage) to least-significant.
        order = [self.stage_axis_pos] + [
            i for i, a in enumerate(self.axes) if a.kind != STAGE
        ]
        rem = flat
        sizes = [self.axes[i].n for i in order]
        for pos, i in enumerate(order):
            block = 1
            for n in sizes[pos + 1 :]:
                block *= n
            out[i] = rem // block
            rem %= block
        return tuple(out)

    def vertex_of(self, flat: int) -> tuple[float, ...]:
        """Continuous state vector of a lattice vertex."""
        mi = self.multi_index_of(flat)
        return tuple(axis.cuts[i] for axis, i in zip(self.axes, mi))

    def stage_of(self, value):
        """Nearest stage index for a countdown value (ties round up)."""
        cuts = self.stage_axis.array()
        if len(cuts) == 1:
            idx = np.zeros_like(np.asarray(value, dtype=float), dtype=np.int64)
        else:
            mids = (cuts[:-1] + cuts[1:]) / 2.0
            idx = np.searchsorted(mids, np.asarray(value, dtype=float),
                                  side="right")
        return int(idx) if np.ndim(value) == 0 else idx.astype(np.int64)

    # -- interpolation -----------------------------------------------------

    def _axis_pairs(self, axis: Axis, x: np.ndarray):
        """Bracketing (lo index, hi index, hi weight) arrays for one axis."""
        cuts = axis.array()
        if axis.kind == ANGLE:
            x = wrap_angle(x)
        x = np.clip(x, cuts[0], cuts[-1])
        j = np.clip(np.searchsorted(cuts, x, side="right") - 1, 0, len(cuts) - 2)
        span = cuts[j + 1] - cuts[j]
        t = np.clip((x - cuts[j]) / span, 0.0, 1.0)
        return j, j + 1, t

    def batch_interpolants(self, points: np.ndarray):
        """Vectorized interpolation for an (n_points, n_axes) array.

        Returns (indices, weights) of shape (n_points, 2**k) with k the
        number of interpolating (continuous/angle) axes. Weights along each
        row are nonnegative and sum to 1; indices are full-grid flat indices.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[1] != len(self.axes):
            raise ValueError("point length must match axis count")
        n = points.shape[0]
        strides = self._strides()

        base = np.zeros(n, dtype=np.int64)
        interp = []  # (stride, lo_idx, hi_idx, hi_weight)
        for pos, axis in enumerate(self.axes):
            x = points[:, pos]
            if axis.kind == CATEGORICAL:
                cuts = axis.array()
                j = np.searchsorted(cuts, x)
                j = np.clip(j, 0, len(cuts) - 1)
                near = np.where(
                    (j > 0) & (np.abs(cuts[np.maximum(j - 1, 0)] - x)
                               < np.abs(cuts[j] - x)),
                    j - 1, j)
                if not np.allclose(cuts[near], x, atol=1e-9):
                    raise ValueError(
                        f"categorical coordinate for axis {axis.name!r} "
                        f"must equal an axis value")
                base += near.astype(np.int64) * strides[pos]
            elif axis.kind == STAGE:
                base += self.stage_of(x) * strides[pos]
            else:
                lo, hi, t = self._axis_pairs(axis, x)
                interp.append((strides[pos], lo, hi, t))

        k = len(interp)
        idx = np.empty((n, 1 << k), dtype=np.int64)
        w = np.empty((n, 1 << k), dtype=float)
        for corner in range(1 << k):
            ci = base.copy()
            cw = np.ones(n)
            for bit, (stride, lo, hi, t) in enumerate(interp):
                if corner >> bit & 1:
                    ci += hi.astype(np.int64) * stride
                    cw = cw * t
                else:
                    ci += lo.astype(np.int64) * stride
                    cw = cw * (1.0 - t)
            idx[:, corner] = ci
            w[:, corner] = cw
        return idx, w

    def kernel_spec(self):
        """Padded axis tables consumed by the fused interpolation kernel:
        (cuts (n_axes, max_n), cut counts, kind codes, local strides)."""
        key = "kernel_spec"
        if key not in self._cache:
            kind_code = {CONTINUOUS: 0, CATEGORICAL: 1, ANGLE: 2, STAGE: 3}
            max_n = max(a.n for a in self.axes)
            cuts = np.zeros((len(self.axes), max_n))
            n_cuts = np.zeros(len(self.axes), dtype=np.int64)
            kinds = np.zeros(len(self.axes), dtype=np.int64)
            strides = np.asarray(self._strides(), dtype=np.int64).copy()
            for i, a in enumerate(self.axes):
                cuts[i, :a.n] = a.cuts
                n_cuts[i] = a.n
                kinds[i] = kind_code[a.kind]
                if a.kind == STAGE:
                    strides[i] = 0  # callers index stage-local values
            self._cache[key] = (cuts, n_cuts, kinds, strides)
        return self._cache[key]

    def to_json(self) -> str:
        return json.dumps(
            {
                "axes": [
                    {"name": a.name, "unit": a.unit, "kind": a.kind,
                     "cuts": list(a.cuts)}
                    for a in self.axes
                ]
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "DiscretizationGrid":
        data = json.loads(text)
        return cls(tuple(
            Axis(a["name"], tuple(a["cuts"]), a.get("unit", ""),
                 a.get("kind", CONTINUOUS))
            for a in data["axes"]
        ))


def interpolants(grid: DiscretizationGrid, point: Sequence[float]):
    """Interpolation support of a continuous state: [(flat index, weight)].

    Out-of-range coordinates clamp to the nearest axis endpoint; angle axes
    wrap at +/-pi. Zero-weight corners are dropped, so a point exactly on a
    vertex yields a single entry of weight 1.
    """
    idx, w = grid.batch_interpolants(np.asarray(point, dtype=float)[None, :])
    out = [(int(i), float(x)) for i, x in zip(idx[0], w[0]) if x > 0.0]
    return out


def index_of(grid: DiscretizationGrid, multi_index: Sequence[int]) -> int:
    return grid.index_of(multi_index)


def vertex_of(grid: DiscretizationGrid, flat: int) -> tuple[float, ...]:
    return grid.vertex_of(flat)


def _scaled_count(n: int, scale: float) -> int:
    # axes that are already small carry structure a 2-cut axis cannot;
    # scaling only thins axes with headroom
    if n <= 4:
        return n
    return max(2, math.ceil(scale * n))


def _uniform(lo: float, hi: float, n: int) -> tuple[float, ...]:
    return tuple(np.linspace(lo, hi, n))


def default_speed_grid(scale: float = 1.0, n_prev_actions: int = 4) -> DiscretizationGrid:
    """Standard lattice for the speed advisory logic.

    At scale 1 the axes are: range 499..48169 ft (71 cuts), bearing and
    relative heading -pi..pi (121 cuts each), ownship speed 50..237 ft/s
    (94 cuts), intruder speed 0..237 ft/s (4 cuts), previous advisory
    (categorical, ``n_prev_actions`` values) and a 10-stage countdown over
    0..100 s. At smaller scales each interpolating axis keeps its range and
    reduces its count to max(2, ceil(scale * n)); categorical values and the
    stage count are preserved so the countdown resolution does not degrade.
    """
    if not 0.0 < scale <= 1.0:
        raise ValueError(f"scale must be in (0, 1], got {scale}")
    return DiscretizationGrid((
        # geometric spacing: resolution concentrates near the 500 ft NMAC
        # radius, where the value function actually bends
        Axis("r", tuple(np.geomspace(499.0, 48169.0, _scaled_count(71, scale))),
             "ft"),
        Axis("theta", _uniform(-math.pi, math.pi, _scaled_count(121, scale)),
             "rad", ANGLE),
        Axis("psi", _uniform(-math.pi, math.pi, _scaled_count(121, scale)),
             "rad", ANGLE),
        Axis("v0", _uniform(50.0, 237.0, _scaled_count(94, scale)), "ft/s"),
        Axis("v1", _uniform(0.0, 237.0, _scaled_count(4, scale)), "ft/s"),
        Axis("a_prev", tuple(float(i) for i in range(n_prev_actions)), "",
             CATEGORICAL),
        Axis("tau", _uniform(0.0, 100.0, 10), "s", STAGE),
    ))


def toy_grid(axis_counts: Iterable[int], n_stages: int = 2) -> DiscretizationGrid:
    """Small unit-cube grid for tests: continuous axes over [0, 1]."""
    axes = [
        Axis(f"x{i}", _uniform(0.0, 1.0, n), "") for i, n in enumerate(axis_counts)
    ]
    axes.append(Axis("tau", _uniform(0.0, float(max(n_stages - 1, 1)), n_stages),
                     "s", STAGE))
    return DiscretizationGrid(tuple(axes))
