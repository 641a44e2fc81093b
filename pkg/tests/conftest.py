"""Shared fixtures: solved desk-scale Q-tables, cached on disk.

Solving even a 0.1-scale table takes ~30 s, so tables are solved once and
cached under the system temp dir, keyed by the package source content so
any solver/logic change invalidates the cache.
"""

import hashlib
import tempfile
from pathlib import Path

import pytest

from speedcas import policy
from speedcas.grid import default_speed_grid
from speedcas.logic import RewardWeights, make_logic
from speedcas.solver import solve

_SRC = Path(__file__).resolve().parents[1] / "src" / "speedcas"


def _source_digest() -> str:
    h = hashlib.sha256()
    for name in ("grid.py", "logic.py", "solver.py", "_interp.py"):
        h.update((_SRC / name).read_bytes())
    return h.hexdigest()[:16]


def solved_table(kind: str, scale: float,
                 weights: RewardWeights = RewardWeights()):
    cache = Path(tempfile.gettempdir()) / "speedcas-test-tables"
    cache.mkdir(exist_ok=True)
    key = f"{kind}-{scale}-{weights.canonical_hash()}-{_source_digest()}"
    path = cache / f"{key}.qtbl"
    if path.exists():
        return policy.load(path)
    logic = make_logic(kind)
    table = solve(logic, logic.default_grid(scale), weights)
    policy.save(table, path)
    return table


@pytest.fixture(scope="session")
def speed_table():
    return solved_table("speed", 0.1)


@pytest.fixture(scope="session")
def horizontal_table():
    return solved_table("horizontal", 0.1)


@pytest.fixture(scope="session")
def vertical_table():
    return solved_table("vertical", 0.1)
