import json
import math

import numpy as np
import pytest

from speedcas.encounters import (
    AircraftInit,
    Encounter,
    EncounterParseError,
    ManeuverSegment,
    encounter_to_dict,
    gen_hovering,
    gen_opsuit_like,
    gen_pairwise,
    heading_unit,
    load_set,
    save_set,
)
from speedcas.simulator import SimConfig, SensorNoise, simulate

QUIET = SimConfig(sensor=SensorNoise.quiet())


def unmitigated(enc):
    return simulate(enc, [], None, QUIET, seed=0)


# ------------------------------------------------------------------ opsuit


def test_opsuit_miss_distance_statistics():
    encs = gen_opsuit_like(1000, seed=42)
    hmds = np.array([e.cpa.hmd_ft for e in encs])
    vmds = np.array([e.cpa.vmd_ft for e in encs])
    assert hmds.min() >= 0.0 and hmds.max() <= 10000.0
    assert vmds.min() >= 0.0 and vmds.max() <= 2000.0
    # mean of U(0, 10000) over 1000 draws: 5000 +/- 3 sigma
    assert abs(hmds.mean() - 5000.0) < 300.0
    assert abs(vmds.mean() - 1000.0) < 60.0


def test_opsuit_speeds_within_envelopes():
    encs = gen_opsuit_like(200, seed=7)
    for e in encs:
        assert 50.0 <= e.ownship.speed <= 237.0
        assert 0.0 <= e.intruder.speed <= 237.0


def test_opsuit_weights_normalized():
    encs = gen_opsuit_like(333, seed=1)
    assert sum(e.weight for e in encs) == pytest.approx(1.0, abs=1e-9)


def test_opsuit_seeded_determinism(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    save_set(gen_opsuit_like(50, seed=9), a)
    save_set(gen_opsuit_like(50, seed=9), b)
    assert a.read_bytes() == b.read_bytes()
    save_set(gen_opsuit_like(50, seed=10), b)
    assert a.read_bytes() != b.read_bytes()


def test_opsuit_backconstruction_reaches_sampled_cpa():
    for enc in gen_opsuit_like(20, seed=3):
        res = unmitigated(enc)
        assert res.min_horizontal_sep_ft == pytest.approx(enc.cpa.hmd_ft,
                                                          abs=1.0)
        # vertical separation at the constructed CPA instant is the sample
        vz = enc.intruder.vertical_rate_fpm / 60.0
        dz = (enc.intruder.z + vz * enc.cpa.time) - enc.ownship.z
        assert abs(dz) == pytest.approx(enc.cpa.vmd_ft, abs=1.0)
        # crossing climbs may pass closer vertically away from CPA
        assert res.min_vertical_sep_ft <= enc.cpa.vmd_ft + 1.0


def test_opsuit_vertical_rate_mix():
    encs = gen_opsuit_like(400, seed=8)
    rates = [e.intruder.vertical_rate_fpm for e in encs]
    level = sum(1 for v in rates if v == 0.0)
    assert 0.4 < level / len(encs) < 0.6
    assert all(abs(v) <= 1000.0 for v in rates)
    assert all(e.ownship.vertical_rate_fpm == 0.0 for e in encs)


# ---------------------------------------------------------------- hovering


def test_hovering_ownship_is_north_facing_hover():
    for enc in gen_hovering(50, seed=5):
        assert enc.ownship.heading == 0.0
        assert enc.ownship.speed == 0.0
        assert enc.intruder.z == enc.ownship.z  # co-altitude by default


def test_hovering_relative_heading_uniform():
    n = 10_000
    encs = gen_hovering(n, seed=11)
    degs = np.array([math.degrees(e.cpa.rel_heading_rad) % 360.0
                     for e in encs])
    counts, _ = np.histogram(degs, bins=10, range=(0.0, 360.0))
    bound = 4 * math.sqrt(n * 0.1 * 0.9)
    assert np.all(np.abs(counts - n / 10) <= bound)


def test_hovering_backconstruction_and_scripts():
    encs = gen_hovering(40, seed=2)
    loiters = [e for e in encs if e.intruder_script]
    assert loiters, "expected some loitering intruders"
    for enc in encs[:15]:
        res = unmitigated(enc)
        assert res.min_horizontal_sep_ft <= enc.cpa.hmd_ft + 1.0
        # separation at the constructed CPA instant matches the sample
        own = np.array([enc.ownship.x, enc.ownship.y])
        pos = (np.array([enc.intruder.x, enc.intruder.y])
               + enc.intruder.speed * enc.cpa.time
               * heading_unit(enc.intruder.heading))
        assert np.hypot(*(pos - own)) == pytest.approx(enc.cpa.hmd_ft,
                                                       abs=1.0)
    for enc in loiters:
        assert enc.intruder_script[0].time > enc.cpa.time


def test_hovering_seeded_determinism():
    a = gen_hovering(30, seed=4)
    b = gen_hovering(30, seed=4)
    assert a == b


# ---------------------------------------------------------------- pairwise


def test_head_on_collision_course_timing():
    enc = gen_pairwise("head_on", r0=20000.0, v_own=150.0, v_int=150.0)
    assert enc.cpa.time == pytest.approx(20000.0 / 300.0)  # ~66.7 s
    res = unmitigated(enc)
    # CPA may fall between 1 Hz samples: bound is closure * dt / 2
    assert res.min_horizontal_sep_ft <= 150.0
    assert res.nmac


def test_overtake_nmac_time():
    enc = gen_pairwise("overtake", r0=10000.0, v_own=200.0, v_int=100.0)
    cfg = QUIET
    res = simulate(enc, [], None, cfg, seed=0)
    assert res.nmac
    # range hits 500 ft at t = (10000 - 500) / 100 = 95 s
    own = np.array([0.0, 0.0])
    for t in (94.0, 96.0):
        pos_own = own + 200.0 * t * heading_unit(0.0)
        pos_int = (np.array([enc.intruder.x, enc.intruder.y])
                   + 100.0 * t * heading_unit(enc.intruder.heading))
        sep = float(np.hypot(*(pos_int - pos_own)))
        assert (sep > 500.0) == (t < 95.0)


def test_overtake_non_closing_warns():
    with pytest.warns(UserWarning, match="non-closing"):
        enc = gen_pairwise("overtake", r0=5000.0, v_own=100.0, v_int=150.0)
    assert not unmitigated(enc).nmac


def test_crossing_symmetric_cpa():
    enc = gen_pairwise("crossing", r0=10000.0, v_own=150.0, v_int=150.0,
                       crossing_angle_deg=90.0)
    res = unmitigated(enc)
    assert res.min_horizontal_sep_ft <= 150.0 * math.sqrt(2.0) / 2.0 + 1.0
    # collision point is equidistant from both starts (symmetric speeds)
    c = 150.0 * enc.cpa.time * heading_unit(0.0)
    d_own = np.hypot(*c)
    d_int = np.hypot(*(c - np.array([enc.intruder.x, enc.intruder.y])))
    assert d_own == pytest.approx(d_int)


def test_pairwise_altitude_offset():
    enc = gen_pairwise("head_on", r0=20000.0, v_own=150.0, v_int=150.0,
                       altitude_offset=150.0)
    res = unmitigated(enc)
    assert not res.nmac  # 150 ft vertical offset keeps it outside 100 ft
    assert res.min_vertical_sep_ft == pytest.approx(150.0)


def test_pairwise_validation():
    with pytest.raises(ValueError):
        gen_pairwise("head_on", r0=0.0, v_own=100.0, v_int=100.0)
    with pytest.raises(ValueError):
        gen_pairwise("sideways", r0=100.0, v_own=100.0, v_int=100.0)


# --------------------------------------------------------------------- I/O


def test_save_load_roundtrip(tmp_path):
    encs = gen_opsuit_like(100, seed=13)
    path = tmp_path / "set.jsonl"
    save_set(encs, path)
    assert load_set(path) == encs


def test_missing_weight_named_in_error(tmp_path):
    enc = gen_opsuit_like(1, seed=0)[0]
    data = encounter_to_dict(enc)
    del data["weight"]
    path = tmp_path / "bad.jsonl"
    path.write_text(json.dumps(data) + "\n", encoding="utf-8")
    with pytest.raises(EncounterParseError, match="weight") as err:
        load_set(path)
    assert err.value.line_no == 1


def test_malformed_line_reports_line_number(tmp_path):
    enc = gen_opsuit_like(1, seed=0)[0]
    good = json.dumps(encounter_to_dict(enc))
    path = tmp_path / "bad.jsonl"
    path.write_text(good + "\n{not json\n", encoding="utf-8")
    with pytest.raises(EncounterParseError, match="line 2"):
        load_set(path)


def test_crlf_file_parses_identically(tmp_path):
    encs = gen_opsuit_like(5, seed=21)
    lf, crlf = tmp_path / "lf.jsonl", tmp_path / "crlf.jsonl"
    save_set(encs, lf)
    crlf.write_bytes(lf.read_bytes().replace(b"\n", b"\r\n"))
    assert load_set(crlf) == load_set(lf) == encs


def test_script_validation():
    own = AircraftInit(0, 0, 5000, 0.0, 100.0)
    with pytest.raises(ValueError, match="ascend"):
        Encounter("x", 1.0, own, own, duration=100.0,
                  intruder_script=(ManeuverSegment(50.0),
                                   ManeuverSegment(20.0)))
    with pytest.raises(ValueError, match="within"):
        Encounter("x", 1.0, own, own, duration=100.0,
                  intruder_script=(ManeuverSegment(150.0),))
    with pytest.raises(ValueError, match="positive"):
        Encounter("x", 0.0, own, own, duration=100.0)
