import math

import numpy as np
import pytest

from speedcas.encounters import AircraftInit, gen_opsuit_like, gen_pairwise
from speedcas.simulator import (
    SensorNoise,
    SimConfig,
    _Aircraft,
    _conflict_countdown,
    load_results,
    run_set,
    sample_pilot_response,
    save_results,
    save_summary_csv,
    simulate,
)

QUIET = SimConfig(sensor=SensorNoise.quiet())
RESPONSIVE = SimConfig(sensor=SensorNoise.quiet(), pilot_delay_s=5.0,
                       p_no_response=0.0)


def head_on(r0=20000.0, v=150.0, offset=0.0):
    return gen_pairwise("head_on", r0=r0, v_own=v, v_int=v,
                        altitude_offset=offset)


# ------------------------------------------------------------ basic physics


def test_unmitigated_head_on_is_nmac():
    res = simulate(head_on(), [], None, QUIET, seed=0)
    assert res.nmac
    assert res.min_horizontal_sep_ft <= 150.0
    assert not res.alerted and res.first_alert_time_s is None


def test_vertical_rate_integration():
    craft = _Aircraft(AircraftInit(0, 0, 5000.0, 0.0, 100.0), 237.0)
    craft.target_vfpm = 500.0  # within one step of the slew limit
    for _ in range(10):
        craft.integrate(1.0)
    assert craft.z - 5000.0 == pytest.approx(500.0 / 60.0 * 10)  # ~83.3 ft


def test_speed_clamps_in_simulation():
    craft = _Aircraft(AircraftInit(0, 0, 5000.0, 0.0, 1.0), 237.0)
    craft.accel = -2.0
    craft.integrate(1.0)
    assert craft.speed == 0.0  # hover floor, not the solved-grid floor
    craft.accel = 500.0
    craft.integrate(1.0)
    assert craft.speed == 237.0


# ------------------------------------------------------- conflict countdown


def test_countdown_bounds_and_window():
    # inside the vertical window, inside 500 ft: conflict is now
    assert _conflict_countdown(400.0, 0.0, math.pi, 100.0, 100.0,
                               dz=0.0, rel_vfpm=0.0, tau_max=100.0) == 0.0
    # head-on closing at 300 ft/s from 3500 ft: (3500-500)/300 = 10 s
    tau = _conflict_countdown(3500.0, 0.0, -math.pi, 150.0, 150.0,
                              0.0, 0.0, 100.0)
    assert tau == pytest.approx(10.0)
    # zero relative motion inside the window: capped
    assert _conflict_countdown(3500.0, -math.pi, 0.0, 150.0, 150.0,
                               0.0, 0.0, 100.0) == 100.0


def test_countdown_uses_projected_miss_not_range_rate():
    # crossing track with an 800 ft projected miss: closing in range now,
    # but the 500 ft shell is never pierced
    import numpy as np

    p = np.array([3000.0, 0.0])
    w = np.array([-200.0, 54.0])
    miss = abs(p[0] * w[1] - p[1] * w[0]) / np.hypot(*w)
    assert miss > 500.0
    tau = _conflict_countdown(3000.0, 0.0, math.pi / 2, 200.0, 54.0,
                              0.0, 0.0, 100.0)
    assert tau == 100.0
    # shrink the miss inside the shell: finite first-crossing time
    tau = _conflict_countdown(3000.0, 0.0, math.pi / 2, 200.0, 26.8,
                              0.0, 0.0, 100.0)
    assert tau == pytest.approx(13.24, abs=0.01)
    # crossing already behind: capped
    tau = _conflict_countdown(3000.0, -math.pi, 0.0, 250.0, 50.0,
                              0.0, 0.0, 100.0)
    assert tau == 100.0


def test_countdown_vertical_branch():
    # 600 ft above, closing at 600 fpm (10 ft/s): (600-100)/10 = 50 s
    tau = _conflict_countdown(3000.0, 0.0, 0.0, 100.0, 100.0,
                              dz=600.0, rel_vfpm=-600.0, tau_max=100.0)
    assert tau == pytest.approx(50.0)
    # vertical separation opening: capped
    assert _conflict_countdown(3000.0, 0.0, 0.0, 100.0, 100.0,
                               600.0, 600.0, 100.0) == 100.0
    assert _conflict_countdown(3000.0, 0.0, 0.0, 100.0, 100.0,
                               600.0, 0.0, 100.0) == 100.0


def test_countdown_always_in_range(speed_table):
    rng = np.random.default_rng(0)
    for _ in range(500):
        tau = _conflict_countdown(
            rng.uniform(0, 50000), rng.uniform(-math.pi, math.pi),
            rng.uniform(-math.pi, math.pi), rng.uniform(0, 237),
            rng.uniform(0, 237), rng.uniform(-3000, 3000),
            rng.uniform(-2000, 2000), 100.0)
        assert 0.0 <= tau <= 100.0


# ------------------------------------------------------------ pilot model


def test_pilot_response_extremes():
    rng = np.random.default_rng(0)
    dims = ("speed", "horizontal", "vertical")
    assert sample_pilot_response(0.0, dims, rng) == dims
    assert sample_pilot_response(1.0, dims, rng) == ()


def test_pilot_response_none_frequency_matches_model():
    rng = np.random.default_rng(7)
    dims = ("speed", "horizontal", "vertical")
    n = 100_000
    empty = sum(1 for _ in range(n)
                if not sample_pilot_response(0.10, dims, rng))
    # P(no dimension responds) = 0.10; binomial 3-sigma band
    assert empty / n == pytest.approx(0.10, abs=0.003)


def test_pilot_response_validation():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        sample_pilot_response(1.5, ("speed",), rng)


# --------------------------------------------------------- logic in the loop


def test_vertical_logic_resolves_co_altitude_head_on(vertical_table):
    res = simulate(head_on(), [vertical_table], None, RESPONSIVE, seed=1)
    assert res.alerted
    assert not res.nmac
    assert res.min_vertical_sep_ft == 0.0  # started co-altitude
    # the climb must be established before the horizontal crossing
    assert res.responded_dims == ("vertical",)


def test_speed_logic_delays_but_cannot_resolve_head_on(speed_table):
    enc = head_on(r0=30000.0, v=180.0)
    base = simulate(enc, [], None, QUIET, seed=2)
    res = simulate(enc, [speed_table], None, RESPONSIVE, seed=2)
    assert res.alerted
    assert res.nmac, "a speed-only logic cannot resolve a head-on"
    assert res.min_horizontal_sep_time_s > base.min_horizontal_sep_time_s


def test_horizontal_logic_resolves_head_on(horizontal_table):
    res = simulate(head_on(), [horizontal_table], None, RESPONSIVE, seed=3)
    assert res.alerted
    assert not res.nmac


def test_unresponsive_pilot_matches_no_cas(speed_table):
    enc = head_on()
    cfg = SimConfig(sensor=SensorNoise.quiet(), p_no_response=1.0)
    with_cas = simulate(enc, [speed_table], None, cfg, seed=4)
    without = simulate(enc, [], None, cfg, seed=4)
    assert with_cas.alerted and not without.alerted
    assert with_cas.nmac == without.nmac
    assert with_cas.min_horizontal_sep_ft == without.min_horizontal_sep_ft
    assert with_cas.min_vertical_sep_ft == without.min_vertical_sep_ft
    assert with_cas.responded_dims == ()


def test_pilot_delay_gates_response(speed_table):
    enc = head_on(r0=30000.0, v=180.0)
    slow = SimConfig(sensor=SensorNoise.quiet(), pilot_delay_s=200.0)
    fast = RESPONSIVE
    res_slow = simulate(enc, [speed_table], None, slow, seed=5)
    res_fast = simulate(enc, [speed_table], None, fast, seed=5)
    assert res_fast.min_horizontal_sep_time_s >= res_slow.min_horizontal_sep_time_s


def test_advisory_timeline_records_changes(speed_table):
    res = simulate(head_on(), [speed_table], None, RESPONSIVE, seed=6)
    assert res.advisories, "expected advisory activity"
    alerting = [(t, names) for t, names in res.advisories
                if any(v != "COC" for v in names.values())]
    assert alerting and alerting[0][0] == res.first_alert_time_s
    # entries only appear when the composite changes
    assert all(a[1] != b[1] for a, b in zip(res.advisories,
                                            res.advisories[1:]))


def test_uncoordinated_identical_logics_mirror_on_symmetric_head_on(
        vertical_table):
    # both aircraft climb identically, so the vertical conflict persists;
    # the same logic resolves the encounter when only one side carries it
    enc = head_on()
    both = simulate(enc, [vertical_table], [vertical_table], RESPONSIVE,
                    seed=7)
    one = simulate(enc, [vertical_table], None, RESPONSIVE, seed=7)
    assert both.nmac
    assert not one.nmac


def test_min_seps_never_exceed_initial_for_collision_course():
    enc = head_on(r0=15000.0)
    res = simulate(enc, [], None, QUIET, seed=8)
    assert res.min_horizontal_sep_ft <= 15000.0
    assert res.min_vertical_sep_ft <= 0.0 + 1e-9


# ------------------------------------------------------------------ run_set


def test_run_set_shapes_and_determinism(speed_table):
    encs = gen_opsuit_like(2, seed=30, duration=60.0)
    cfg = SimConfig(sensor=SensorNoise(10.0, 0.001, 1.0, 10.0))
    a = run_set(encs, [speed_table], None, cfg, base_seed=9, repetitions=3)
    assert len(a) == 6
    assert len({(r.encounter_id, r.rep) for r in a}) == 6
    assert len({r.seed for r in a}) == 6
    b = run_set(encs, [speed_table], None, cfg, base_seed=9, repetitions=3)
    assert a == b
    c = run_set(encs, [speed_table], None, cfg, base_seed=10, repetitions=3)
    assert a != c


def test_run_set_worker_count_invariance(speed_table, tmp_path):
    encs = gen_opsuit_like(4, seed=31, duration=60.0)
    cfg = SimConfig(sensor=SensorNoise(10.0, 0.001, 1.0, 10.0))
    serial = run_set(encs, [speed_table], None, cfg, base_seed=11,
                     repetitions=2, workers=1)
    parallel = run_set(encs, [speed_table], None, cfg, base_seed=11,
                       repetitions=2, workers=2)
    p1, p2 = tmp_path / "serial.jsonl", tmp_path / "parallel.jsonl"
    save_results(serial, p1)
    save_results(parallel, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_run_set_rejects_empty():
    with pytest.raises(ValueError):
        run_set([], [], None, QUIET, base_seed=0)


# --------------------------------------------------------------------- I/O


def test_results_roundtrip(tmp_path, speed_table):
    encs = gen_opsuit_like(3, seed=32, duration=60.0)
    results = run_set(encs, [speed_table], None, QUIET, base_seed=12)
    path = tmp_path / "results.jsonl"
    save_results(results, path)
    assert load_results(path) == results


def test_summary_csv_layout(tmp_path):
    res = simulate(head_on(), [], None, QUIET, seed=13)
    path = tmp_path / "summary.csv"
    save_summary_csv([res], path)
    lines = path.read_text().strip().splitlines()
    assert lines[0].startswith("encounter_id,rep,seed,nmac")
    assert len(lines) == 2


# ------------------------------------------------------------ 30 kt floor


def test_horizontal_turn_waits_for_spool_up():
    from speedcas.logic import HorizontalLogic
    from speedcas.policy import CompositeAdvisory
    from speedcas.simulator import _apply_controls

    hl = HorizontalLogic()
    comp = CompositeAdvisory(horizontal=hl.actions[1])  # turn left

    class Engaged:
        logics = [hl]

        def engaged(self, dim, t, config):
            return True

        def command(self, dim, current, t, config):
            return current if current is not None and current.is_alert \
                else None

    # from a hover the advisory first spools the aircraft up at 0.0625 g
    craft = _Aircraft(AircraftInit(0, 0, 5000.0, 0.0, 0.0), 237.0)
    _apply_controls(craft, comp, Engaged(), 0.0, QUIET)
    assert craft.turn_rate == 0.0
    assert craft.accel == pytest.approx(0.0625 * 32.185)
    # the floor is 30 kt (~50.6 ft/s), reached after ~25.2 s
    assert hl.min_speed_ftps / hl.spool_accel == pytest.approx(25.17,
                                                               abs=0.05)
    craft.speed = hl.min_speed_ftps + 0.1
    _apply_controls(craft, comp, Engaged(), 30.0, QUIET)
    assert craft.turn_rate == pytest.approx(hl.actions[1].turn_rate)
    assert craft.accel == 0.0
