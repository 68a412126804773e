import io
import math
from collections import Counter

import numpy as np
import pytest

from lidartmc.counting import count_session, estimate_tmc
from lidartmc.errors import ScriptValidationError
from lidartmc.ingest import frames_to_ned, merge_streams, write_detection_log
from lidartmc.intersection import Approach, Movement, point_in_zone
from lidartmc.geo import NedPoint
from lidartmc.reference import build_long_range_config
from lidartmc.simgen import (
    ScriptedVehicle,
    SensorSpec,
    SimConfig,
    default_sensors,
    load_script,
    random_script,
    scenario_by_name,
    scenario_suite,
    script_from_obj,
    script_to_obj,
    simulate,
    tally_script,
)

NB, EB = Approach.NB, Approach.EB
T = Movement.THRU


def run_counting(session, cfg, params=None):
    merged = merge_streams(list(session.frames_by_sensor.values()))
    ned = frames_to_ned(merged, session.registry)
    events, meta = count_session(ned, cfg, params)
    sim_bin = session.ground_truth.bin_seconds
    est = estimate_tmc(
        events, sim_bin, session.ground_truth.session, cfg.class_table.n_classes
    )
    return est, events, meta


def single_sensor_sim(**kwargs):
    sensors = (SensorSpec("L1", -12.0, 12.0, yaw=0.7),)
    defaults = dict(seed=1, sensors=sensors)
    defaults.update(kwargs)
    return SimConfig(**defaults)


class TestSimulateBasics:
    def test_empty_script(self, reference_config):
        session = simulate([], reference_config, SimConfig(seed=5))
        assert all(len(f) == 0 for f in session.frames_by_sensor.values())
        assert session.ground_truth.counts.sum() == 0

    def test_one_thru_vehicle_trigger_count(self, reference_config):
        # 10 m/s through an 8 m zone at 4 Hz: the center is inside for
        # 0.8 s, so a single sensor sees 3 or 4 in-zone detections.
        sim = single_sensor_sim()
        script = [ScriptedVehicle(3, NB, T, 20.03, 10.0, 4.5, "NB_T1")]
        session = simulate(script, reference_config, sim)
        merged = merge_streams(list(session.frames_by_sensor.values()))
        ned = frames_to_ned(merged, session.registry)
        from lidartmc.counting import extract_triggers

        triggers = extract_triggers(ned, reference_config)
        assert len(triggers["NB_T1"]) in (3, 4)
        assert session.ground_truth.counts.sum() == 1
        est, _, _ = run_counting(session, reference_config)
        assert est == session.ground_truth

    def test_two_vehicles_tallied(self, reference_config):
        script = [
            ScriptedVehicle(3, NB, T, 20.03, 10.0, 4.5, "NB_T1"),
            ScriptedVehicle(3, NB, T, 24.07, 10.0, 4.5, "NB_T1"),
        ]
        session = simulate(script, reference_config, SimConfig(seed=6))
        gt = session.ground_truth
        assert gt.counts.sum() == 2
        assert gt.counts[0, 0, 1, 2] == 2  # bin 0, NB, Thru, class 3

    def test_determinism_byte_identical(self, reference_config):
        sc = scenario_by_name("ideal")
        logs = []
        for _ in range(2):
            session = simulate(sc.script, reference_config, sc.sim)
            buf = io.StringIO()
            for fid in sorted(session.frames_by_sensor):
                write_detection_log(session.frames_by_sensor[fid], buf)
            logs.append(buf.getvalue())
        assert logs[0] == logs[1]

    def test_different_seed_changes_logs(self, reference_config):
        sc = scenario_by_name("ideal")
        outs = []
        for seed in (1, 2):
            sim = SimConfig(**{**sc.sim.__dict__, "seed": seed})
            session = simulate(sc.script, reference_config, sim)
            buf = io.StringIO()
            for fid in sorted(session.frames_by_sensor):
                write_detection_log(session.frames_by_sensor[fid], buf)
            outs.append(buf.getvalue())
        assert outs[0] != outs[1]  # scores differ even in the ideal setup

    def test_noise_free_geometry_on_path(self, reference_config):
        # With zero noise every detection lies exactly on the scripted
        # segment (up to the double round trip through ECEF).
        sim = single_sensor_sim()
        script = [ScriptedVehicle(3, NB, T, 20.03, 10.0, 4.5, "NB_T1")]
        session = simulate(script, reference_config, sim)
        merged = merge_streams(list(session.frames_by_sensor.values()))
        ned = frames_to_ned(merged, session.registry)
        zone = reference_config.zone_by_id("NB_T1")
        for frame in ned:
            for d in frame.detections:
                # path: east fixed at the zone center, north varies
                assert d.y == pytest.approx(zone.center.east, abs=1e-6)
                u = d.x - zone.center.north
                expected_u = -zone.half_length + 10.0 * (frame.t - 20.03)
                assert u == pytest.approx(expected_u, abs=1e-6)

    def test_ground_truth_consistency_dual_path(self, reference_config):
        # Independent tally: count script rows per cell with a Counter.
        rng = np.random.default_rng(71)
        sim = SimConfig(seed=8)
        script = random_script(reference_config, rng, 30, sim)
        session = simulate(script, reference_config, sim)
        expected = Counter(
            (v.approach, v.movement, v.vehicle_class) for v in script
        )
        gt = session.ground_truth
        approaches = list(Approach)
        movements = list(Movement)
        for (a, m, c), n in expected.items():
            total = gt.counts[:, approaches.index(a), movements.index(m), c - 1].sum()
            assert total == n
        assert gt.counts.sum() == len(script)

    def test_dropout_thins_detections(self, reference_config):
        script = [ScriptedVehicle(3, NB, T, 20.03, 10.0, 4.5, "NB_T1")]
        n_full = sum(
            len(f.detections)
            for f in simulate(script, reference_config, SimConfig(seed=9)).frames_by_sensor["L1"]
        )
        thinned = simulate(
            script, reference_config, SimConfig(seed=9, dropout=0.7)
        )
        n_thin = sum(len(f.detections) for f in thinned.frames_by_sensor["L1"])
        assert n_thin < n_full

    def test_visibility_radius_limits(self, reference_config):
        # A sensor 100 m away sees nothing within a 40 m radius.
        sim = SimConfig(
            seed=10, sensors=(SensorSpec("L1", 100.0, 100.0),)
        )
        script = [ScriptedVehicle(3, NB, T, 20.03, 10.0, 4.5, "NB_T1")]
        session = simulate(script, reference_config, sim)
        assert session.frames_by_sensor["L1"] == ()


class TestScriptValidation:
    def test_speed_bounds(self, reference_config):
        with pytest.raises(ScriptValidationError):
            simulate(
                [ScriptedVehicle(3, NB, T, 20.0, 25.0, 4.5)],
                reference_config,
                SimConfig(seed=1),
            )

    def test_entry_outside_session(self, reference_config):
        with pytest.raises(ScriptValidationError):
            simulate(
                [ScriptedVehicle(3, NB, T, 299.9, 10.0, 4.5)],
                reference_config,
                SimConfig(seed=1),
            )

    def test_uncountable_movement_rejected(self, reference_config):
        # NB UTurn shares the left zone: it cannot be counted as itself.
        with pytest.raises(ScriptValidationError):
            simulate(
                [ScriptedVehicle(3, NB, Movement.UTURN, 5.0, 8.0, 4.5)],
                reference_config,
                SimConfig(seed=1),
            )

    def test_zone_binding_mismatch_rejected(self, reference_config):
        with pytest.raises(ScriptValidationError):
            simulate(
                [ScriptedVehicle(3, NB, T, 20.0, 10.0, 4.5, "EB_T")],
                reference_config,
                SimConfig(seed=1),
            )

    def test_length_class_mismatch_rejected(self, reference_config):
        with pytest.raises(ScriptValidationError):
            simulate(
                [ScriptedVehicle(3, NB, T, 20.0, 10.0, 9.5)],
                reference_config,
                SimConfig(seed=1),
            )

    def test_frame_rate_bounds(self):
        with pytest.raises(ScriptValidationError):
            SimConfig(seed=1, frame_rate_hz=2.0)
        with pytest.raises(ScriptValidationError):
            SimConfig(seed=1, frame_rate_hz=6.0)


class TestPathGeometry:
    def test_paths_touch_only_their_governing_zone(self, reference_config):
        """No scripted path may clip a second counted zone; that would
        silently break the ground-truth oracle."""
        for cfg in (reference_config, build_long_range_config()):
            counted = {z.id for z in cfg.ingress_zones}
            counted |= {z.id for z in cfg.right_surrogate_zones}
            for zone, _binding in cfg.countable_targets():
                d = np.array([math.cos(zone.yaw), math.sin(zone.yaw)])
                center = np.array([zone.center.north, zone.center.east])
                for u in np.linspace(-zone.half_length - 10.0, zone.half_length + 10.0, 400):
                    p = center + u * d
                    point = NedPoint(float(p[0]), float(p[1]), 0.0)
                    for other in cfg.zones:
                        if other.id == zone.id or other.id not in counted:
                            continue
                        assert not point_in_zone(point, other), (
                            f"path of {zone.id} clips {other.id} at u={u:.2f}"
                        )

    def test_zone_kinematics_guarantee(self, reference_config):
        # At most 20 m/s and at least 3 Hz, every crossing leaves at
        # least one trigger in an 8 m zone.
        from lidartmc.counting import extract_triggers

        for entry in (20.037, 21.41, 22.883):
            sim = single_sensor_sim(frame_rate_hz=3.0)
            script = [ScriptedVehicle(3, NB, T, entry, 20.0, 4.5, "NB_T1")]
            session = simulate(script, reference_config, sim)
            merged = merge_streams(list(session.frames_by_sensor.values()))
            ned = frames_to_ned(merged, session.registry)
            triggers = extract_triggers(ned, reference_config)
            assert len(triggers["NB_T1"]) >= 1

    def test_default_sensor_coverage(self, reference_config):
        # Every counted zone is fully visible to at least one default
        # sensor, corners included; otherwise ideal scenarios undercount.
        sensors = default_sensors()
        for zone, _ in reference_config.countable_targets():
            d = np.array([math.cos(zone.yaw), math.sin(zone.yaw)])
            w = np.array([-d[1], d[0]])
            center = np.array([zone.center.north, zone.center.east])
            corners = [
                center + su * zone.half_length * d + sv * zone.half_width * w
                for su in (-1, 1)
                for sv in (-1, 1)
            ]
            covered = any(
                all(
                    math.dist((c[0], c[1], -0.75), (s.north, s.east, -s.height))
                    <= s.visibility_radius
                    for c in corners
                )
                for s in sensors
            )
            assert covered, f"zone {zone.id} is not fully covered by any sensor"


class TestScenarioSuite:
    def test_suite_names(self):
        names = [sc.name for sc in scenario_suite()]
        assert names == [
            "ideal",
            "slow_heavy",
            "eb_wb_long_range",
            "burst",
            "dual_overlap",
        ]

    def test_exact_scenarios_recover_ground_truth(self):
        for sc in scenario_suite():
            if not sc.expects_exact:
                continue
            session = simulate(sc.script, sc.cfg, sc.sim)
            est, _, _ = run_counting(session, sc.cfg)
            assert est == session.ground_truth, sc.name

    def test_long_range_undercounts(self):
        sc = scenario_by_name("eb_wb_long_range")
        session = simulate(sc.script, sc.cfg, sc.sim)
        est, _, _ = run_counting(session, sc.cfg)
        assert int(est.counts.sum()) < int(session.ground_truth.counts.sum())

    def test_unknown_scenario(self):
        with pytest.raises(ScriptValidationError):
            scenario_by_name("nope")


class TestRandomScript:
    def test_constraints_hold(self, reference_config):
        rng = np.random.default_rng(81)
        sim = SimConfig(seed=11)
        script = random_script(reference_config, rng, 40, sim)
        assert 5 <= len(script) <= 40
        per_zone = {}
        for v in script:
            assert 3.0 <= v.speed <= 20.0
            per_zone.setdefault(v.zone_id, []).append(v)
        for zone_id, vs in per_zone.items():
            zone = reference_config.zone_by_id(zone_id)
            vs.sort(key=lambda v: v.entry_time)
            for a, b in zip(vs, vs[1:]):
                exit_a = a.entry_time + 2 * zone.half_length / a.speed
                assert b.entry_time - exit_a >= 2.0

    def test_script_json_round_trip(self, reference_config):
        rng = np.random.default_rng(82)
        script = random_script(reference_config, rng, 10, SimConfig(seed=12))
        assert script_from_obj(script_to_obj(script)) == tuple(script)


def test_tally_script_respects_bins(reference_config):
    sim = SimConfig(seed=13, session=(0.0, 300.0), bin_seconds=100.0)
    script = [
        ScriptedVehicle(3, NB, T, 20.0, 10.0, 4.5, "NB_T1"),
        ScriptedVehicle(3, NB, T, 120.0, 10.0, 4.5, "NB_T1"),
        ScriptedVehicle(4, EB, T, 220.0, 10.0, 6.0, "EB_T"),
    ]
    gt = tally_script(script, sim)
    assert gt.counts.shape[0] == 3
    assert gt.counts[0].sum() == 1
    assert gt.counts[1].sum() == 1
    assert gt.counts[2].sum() == 1


def test_load_script_file(tmp_path, reference_config):
    rng = np.random.default_rng(83)
    script = random_script(reference_config, rng, 8, SimConfig(seed=14))
    path = tmp_path / "script.json"
    import json

    path.write_text(json.dumps(script_to_obj(script)))
    assert load_script(path) == tuple(script)
