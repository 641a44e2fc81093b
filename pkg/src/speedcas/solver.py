"""Backward-induction value iteration.

Compiles a logic spec and a grid into a Q-table: stage 0 holds the terminal
rewards, and every later countdown stage k is one exact Bellman backup
against stage k-1. Within a stage all vertex backups are independent; the
sweep below runs them as whole-stage vectorized batches, one noise branch at
a time, so the transition set is never materialized.
"""

from __future__ import annotations

import sys
import time
from dataclasses import dataclass, field

import numpy as np

from ._interp import interp_dot
from .grid import DiscretizationGrid, STAGE
from .logic import LogicSpec, RewardWeights, SpeedState, transitions

SOLVER_VERSION = 1


class SolverFailure(Exception):
    """Non-finite value produced during a sweep."""


@dataclass
class QTable:
    """Per-stage action values over the lattice; the compiled logic.

    ``values`` has shape (stage count, per-stage vertex count, action
    count), stored float32. Lookup helpers live in ``policy``.
    """

    grid: DiscretizationGrid
    logic_kind: str
    values: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        expect = (self.grid.n_stages, self.grid.stage_size)
        if self.values.ndim != 3 or self.values.shape[:2] != expect:
            raise ValueError(
                f"values shape {self.values.shape} does not match grid "
                f"{expect} x actions")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("Q-table contains non-finite values")

    @property
    def n_actions(self) -> int:
        return self.values.shape[2]

    def __eq__(self, other):
        return (isinstance(other, QTable)
                and self.grid == other.grid
                and self.logic_kind == other.logic_kind
                and self.values.shape == other.values.shape
                and bool(np.all(self.values == other.values)))


def stage_states(grid: DiscretizationGrid, stage: int) -> np.ndarray:
    """All vertices of one stage as an (stage_size, n_axes) array, in flat
    index order."""
    arrays = [a.array() for a in grid.axes if a.kind != STAGE]
    mesh = np.meshgrid(*arrays, indexing="ij")
    out = np.empty((grid.stage_size, len(grid.axes)))
    j = 0
    for i, axis in enumerate(grid.axes):
        if axis.kind == STAGE:
            out[:, i] = axis.cuts[stage]
        else:
            out[:, i] = mesh[j].reshape(-1)
            j += 1
    return out


def _sweep_stage(logic: LogicSpec, grid: DiscretizationGrid,
                 weights: RewardWeights, states: np.ndarray,
                 v_prev: np.ndarray | None, dt: float) -> np.ndarray:
    """One stage of backups: returns (stage_size, n_actions) float64."""
    size = grid.stage_size
    out = np.empty((size, logic.n_actions))
    for ai, action in enumerate(logic.actions):
        acc = logic.reward_batch(states, action, weights)
        if v_prev is not None:
            total = np.zeros(size)
            for p, dv0, dh0, dv1, dh1 in logic.noise_branches(action):
                succ = logic.step_batch(states, action, dv0, dh0, dv1, dh1, dt)
                total += p * interp_dot(grid, succ, v_prev)
            acc = acc + weights.discount * total
        out[:, ai] = acc
    return out


def solve_values(logic: LogicSpec, grid: DiscretizationGrid,
                 weights: RewardWeights = RewardWeights(),
                 progress: bool = False) -> np.ndarray:
    """The full-precision sweep: (stages, stage_size, actions) float64.

    All accumulation happens in 64-bit; ``solve`` casts the result to the
    table's 32-bit storage.
    """
    a_prev = grid.axis("a_prev")
    if a_prev.n != logic.n_actions:
        raise ValueError(
            f"grid a_prev axis has {a_prev.n} values but the {logic.kind} "
            f"logic has {logic.n_actions} actions")
    n_stages, size = grid.n_stages, grid.stage_size
    dt = grid.stage_step
    values = np.empty((n_stages, size, logic.n_actions))

    v_prev = None
    for k in range(n_stages):
        t0 = time.perf_counter()
        states = stage_states(grid, k)
        stage_q = _sweep_stage(logic, grid, weights, states, v_prev, dt)
        bad = ~np.isfinite(stage_q)
        if np.any(bad):
            vtx, act = np.argwhere(bad)[0]
            raise SolverFailure(
                f"non-finite value at stage {k}, vertex {int(vtx)} "
                f"(flat {k * size + int(vtx)}), action {int(act)}")
        values[k] = stage_q
        v_prev = stage_q.max(axis=1)
        if progress:
            rate = size / max(time.perf_counter() - t0, 1e-9)
            print(f"stage {k}/{n_stages - 1}: {size} vertices, "
                  f"{rate:,.0f} vertices/s", file=sys.stderr)
    return values


def solve(logic: LogicSpec, grid: DiscretizationGrid,
          weights: RewardWeights = RewardWeights(),
          progress: bool = False) -> QTable:
    """Compile the optimal Q-table by sweeping the countdown stages.

    Stage 0 is terminal (pure reward); stage k backs up against stage k-1
    through the logic's stochastic transitions. Deterministic: identical
    inputs produce bit-identical tables.
    """
    values = solve_values(logic, grid, weights, progress)
    return QTable(grid, logic.kind, values.astype(np.float32), metadata={
        "solver_version": SOLVER_VERSION,
        "reward_weights_hash": weights.canonical_hash(),
        "n_actions": logic.n_actions,
    })


def bellman_backup(prev_stage_values: np.ndarray, logic: LogicSpec,
                   grid: DiscretizationGrid, vertex: int,
                   weights: RewardWeights = RewardWeights()) -> np.ndarray:
    """Reference single-vertex backup: the Bellman right-hand side per action.

    ``prev_stage_values`` holds Q(s', a') for the successor stage with shape
    (stage_size, n_actions). ``vertex`` is the full-grid flat index of the
    vertex being backed up. Pure function of its inputs; used as the
    cross-check for the vectorized sweep.
    """
    prev = np.asarray(prev_stage_values, dtype=float)
    if prev.shape != (grid.stage_size, logic.n_actions):
        raise ValueError("prev_stage_values shape mismatch")
    state = SpeedState.from_array(grid.vertex_of(vertex))
    v_prev = prev.max(axis=1)
    out = np.empty(logic.n_actions)
    for ai, action in enumerate(logic.actions):
        ev = 0.0
        for flat, p in transitions(grid, state, action, logic=logic):
            ev += p * v_prev[flat % grid.stage_size]
        r = logic.reward_batch(state.as_array()[None, :], action, weights)[0]
        out[ai] = r + weights.discount * ev
    return out
