import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from speedcas.grid import (
    ANGLE,
    Axis,
    DiscretizationGrid,
    default_speed_grid,
    index_of,
    interpolants,
    toy_grid,
    vertex_of,
    wrap_angle,
)


def test_default_grid_matches_standard_lattice():
    g = default_speed_grid(1.0)
    r = g.axis("r")
    assert r.n == 71 and r.lo == 499.0 and r.hi == 48169.0
    tau = g.axis("tau")
    assert tau.n == 10 and tau.lo == 0.0 and tau.hi == 100.0
    assert g.axis("theta").n == 121 and g.axis("psi").n == 121
    assert g.axis("v0").n == 94 and g.axis("v1").n == 4
    assert g.axis("a_prev").n == 4
    # range cuts are geometric: constant ratio, densest at the NMAC shell
    ratios = np.diff(np.log(np.asarray(r.cuts)))
    assert np.allclose(ratios, ratios[0])
    assert r.cuts[1] - r.cuts[0] < r.cuts[-1] - r.cuts[-2]


def test_scaled_grid_counts():
    g = default_speed_grid(0.1)
    th = g.axis("theta")
    assert th.n == max(2, math.ceil(0.1 * 121)) == 13
    assert th.lo == pytest.approx(-math.pi) and th.hi == pytest.approx(math.pi)
    # categorical and stage axes keep their values
    assert g.axis("a_prev").n == 4
    assert g.axis("tau").n == 10
    assert g.axis("v1").n == 4  # small axes keep their structure


@pytest.mark.parametrize("scale", [0.0, -1.0, 1.5])
def test_invalid_scale_rejected(scale):
    with pytest.raises(ValueError):
        default_speed_grid(scale)


def test_axis_validation():
    with pytest.raises(ValueError):
        Axis("bad", (1.0, 1.0))
    with pytest.raises(ValueError):
        Axis("bad", (2.0, 1.0))
    with pytest.raises(ValueError):
        Axis("bad", (0.0,), kind="continuous")


def test_index_roundtrip_corners():
    g = toy_grid([3, 4, 2], n_stages=3)
    assert g.index_of((0, 0, 0, 0)) == 0
    last = tuple(a.n - 1 for a in g.axes)
    assert g.index_of(last) == g.n_vertices - 1
    with pytest.raises(ValueError):
        g.index_of((3, 0, 0, 0))


def test_index_roundtrip_exhaustive():
    g = toy_grid([3, 4, 2], n_stages=3)
    seen = set()
    for flat in range(g.n_vertices):
        mi = g.multi_index_of(flat)
        assert index_of(g, mi) == flat
        seen.add(mi)
    assert len(seen) == g.n_vertices == 3 * 4 * 2 * 3


def test_stage_major_ordering():
    g = toy_grid([3, 4], n_stages=3)
    # all vertices of stage s occupy flats [s*size, (s+1)*size)
    size = g.stage_size
    for flat in range(g.n_vertices):
        mi = g.multi_index_of(flat)
        stage = mi[g.stage_axis_pos]
        assert flat // size == stage


def test_vertex_identity_single_entry():
    g = toy_grid([3, 3], n_stages=2)
    flat = 7
    point = vertex_of(g, flat)
    entries = interpolants(g, point)
    assert entries == [(flat, 1.0)]


def test_midpoint_two_entries():
    g = toy_grid([3, 3], n_stages=2)
    # midpoint along x0, on-vertex along x1, stage 0
    point = (0.25, 0.5, 0.0)
    entries = dict(interpolants(g, point))
    assert len(entries) == 2
    assert all(w == pytest.approx(0.5) for w in entries.values())


def test_clamping_out_of_range():
    g = toy_grid([3, 3], n_stages=2)
    entries = interpolants(g, (-5.0, 2.0, 0.0))
    assert entries == [(g.index_of((0, 2, 0)), 1.0)]


def _periodic_interp_oracle(cuts, values, x):
    """Brute-force periodic linear interpolation on [-pi, pi]."""
    x = float(wrap_angle(x))
    for a, b, va, vb in zip(cuts, cuts[1:], values, values[1:]):
        if a <= x <= b:
            t = (x - a) / (b - a)
            return va * (1 - t) + vb * t
    raise AssertionError("wrapped angle outside cut span")


def test_wrap_boundary_against_periodic_oracle():
    g = DiscretizationGrid((
        Axis("psi", tuple(np.linspace(-math.pi, math.pi, 9)), "rad", ANGLE),
        Axis("tau", (0.0,), "s", kind="stage"),
    ))
    cuts = g.axis("psi").array()
    values = np.sin(3 * cuts) + 2.0  # periodic: value at -pi equals value at pi
    for eps in [0.3, 0.05, 1e-3, 1e-9]:
        x = math.pi - eps
        got = sum(w * values[g.multi_index_of(i)[0]]
                  for i, w in interpolants(g, (x, 0.0)))
        assert got == pytest.approx(_periodic_interp_oracle(cuts, values, x),
                                    abs=1e-12)
    # as eps -> 0 the +/-pi-side vertex takes all the weight
    entries = interpolants(g, (math.pi - 1e-12, 0.0))
    top = max(entries, key=lambda e: e[1])
    assert abs(abs(g.vertex_of(top[0])[0]) - math.pi) < 1e-9
    assert top[1] > 1.0 - 1e-9


def test_wrap_consistency_full_turn():
    g = default_speed_grid(0.05)
    state = (5000.0, 1.1, -2.3, 120.0, 100.0, 0.0, 50.0)
    shifted = (5000.0, 1.1 + 2 * math.pi, -2.3 - 2 * math.pi, 120.0, 100.0,
               0.0, 50.0)
    a, b = dict(interpolants(g, state)), dict(interpolants(g, shifted))
    assert a.keys() == b.keys()
    for k in a:
        assert a[k] == pytest.approx(b[k], abs=1e-12)


def test_categorical_requires_exact_value():
    g = default_speed_grid(0.05)
    state = (5000.0, 0.0, 0.0, 120.0, 100.0, 1.5, 50.0)
    with pytest.raises(ValueError, match="a_prev"):
        interpolants(g, state)


def test_stage_rounds_half_up():
    g = default_speed_grid(0.05)
    step = g.stage_step
    assert g.stage_of(0.0) == 0
    assert g.stage_of(step / 2) == 1  # tie goes to the higher stage
    assert g.stage_of(step / 2 - 1e-9) == 0
    assert g.stage_of(1e6) == g.n_stages - 1


@settings(max_examples=200, deadline=None)
@given(
    r=st.floats(-1000, 60000),
    th=st.floats(-10, 10),
    ps=st.floats(-10, 10),
    v0=st.floats(0, 300),
    v1=st.floats(-50, 300),
    ap=st.sampled_from([0.0, 1.0, 2.0, 3.0]),
    tau=st.floats(-5, 120),
)
def test_partition_of_unity(r, th, ps, v0, v1, ap, tau):
    g = default_speed_grid(0.05)
    entries = interpolants(g, (r, th, ps, v0, v1, ap, tau))
    assert all(w >= 0 for _, w in entries)
    assert sum(w for _, w in entries) == pytest.approx(1.0, abs=1e-12)
    assert len(entries) <= 2 ** 5


@settings(max_examples=100, deadline=None)
@given(
    x=st.floats(0, 1),
    y=st.floats(0, 1),
    coeffs=st.tuples(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5)),
)
def test_multilinear_exactness_for_affine(x, y, coeffs):
    a, b, c = coeffs
    g = toy_grid([5, 7], n_stages=1)

    def f(px, py):
        return a * px + b * py + c

    got = 0.0
    for flat, w in interpolants(g, (x, y, 0.0)):
        vx, vy, _ = g.vertex_of(flat)
        got += w * f(vx, vy)
    scale = max(1.0, abs(f(x, y)))
    assert abs(got - f(x, y)) / scale < 1e-12


def test_grid_json_roundtrip():
    g = default_speed_grid(0.1)
    assert DiscretizationGrid.from_json(g.to_json()) == g
