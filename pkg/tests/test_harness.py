import json
import math
from dataclasses import replace

import numpy as np
import pytest

from aeris.errors import ConfigInvalid, NoFeasiblePath
from aeris.harness import (METHODS, FlowRequest, MetricsReport, ScenarioConfig,
                           baseline_aggregate, baseline_spacetime, build_world, draw_flows,
                           gen_default_scenario, plot_data, replay_metrics, run, sweep,
                           sweep_from_csv, sweep_to_csv)
from aeris.operational import LinkBudget
from aeris.units import db_to_lin


@pytest.fixture(scope="module")
def mini_config():
    cfg = gen_default_scenario(seed=1, n_aircraft=8, n_buildings=8, horizon_s=40.0)
    return replace(cfg, sampling_period_s=2.0, load_per_min=12.0)


@pytest.fixture(scope="module")
def mini_world(mini_config):
    return build_world(mini_config, 0)


class TestConfigValidation:
    def test_horizon_ordering_flagged(self, mini_config):
        bad = replace(mini_config, central_horizon_s=10.0)
        with pytest.raises(ConfigInvalid) as e:
            bad.validate()
        assert e.value.field == "central_horizon_s"

    def test_fraction_out_of_range(self, mini_config):
        with pytest.raises(ConfigInvalid) as e:
            replace(mini_config, frac_short_deadline=1.5).validate()
        assert e.value.field == "frac_short_deadline"

    def test_deadline_beyond_horizon(self, mini_config):
        with pytest.raises(ConfigInvalid):
            replace(mini_config, deadline_long_s=1e6).validate()

    def test_json_roundtrip(self, mini_config):
        doc = mini_config.to_json()
        again = ScenarioConfig.from_json(doc)
        assert again.to_json() == doc

    def test_malformed_document(self):
        with pytest.raises(ConfigInvalid):
            ScenarioConfig.from_json("{\"scene\": {}}")


class TestDrawFlows:
    def test_zero_load(self, mini_config):
        assert draw_flows(mini_config, 0, 0.0) == []

    def test_deterministic(self, mini_config):
        assert draw_flows(mini_config, 3) == draw_flows(mini_config, 3)

    def test_deadline_classes(self, mini_config):
        flows = draw_flows(mini_config, 1, 30.0)
        assert flows
        assert {f.deadline_s for f in flows} <= {2.0, 20.0}
        horizon = mini_config.grid.dt * mini_config.grid.n_slots
        for f in flows:
            assert f.injection_slot * mini_config.grid.dt + f.deadline_s <= horizon

    def test_validation(self):
        with pytest.raises(ValueError):
            FlowRequest("a", "b", 0, 0.0)


class TestRun:
    def test_zero_load_empty_stats(self, mini_config, mini_world):
        rep = run(mini_config, "predictive", 0, world=mini_world, load_per_min=0.0)
        assert rep.n_flows == 0
        assert rep.interference_mw_s == 0.0
        assert rep.delivery_rate == 1.0
        assert math.isnan(rep.mean_delay_s)

    def test_unknown_method(self, mini_config):
        with pytest.raises(ConfigInvalid):
            run(mini_config, "psychic", 0)

    @pytest.mark.parametrize("method", METHODS)
    def test_bit_identical_reports(self, mini_config, mini_world, method):
        a = run(mini_config, method, 0, world=mini_world)
        b = run(mini_config, method, 0, world=mini_world)
        assert a.to_json() == b.to_json()

    def test_flow_arrivals_paired_across_methods(self, mini_config, mini_world):
        logs = {}
        for method in METHODS:
            events = []
            run(mini_config, method, 0, events=events, world=mini_world)
            logs[method] = [e for e in events if e["type"] == "flow"]
        assert logs["predictive"] == logs["baseline_aggregate"] == logs["baseline_spacetime"]

    def test_replay_reproduces_report(self, mini_config, mini_world):
        for method in METHODS:
            events = []
            rep = run(mini_config, method, 0, events=events, world=mini_world)
            again = replay_metrics(events)
            assert again.to_json() == rep.to_json()

    def test_interference_accounted_from_truth_at_realized(self, mini_config, mini_world):
        events = []
        run(mini_config, "predictive", 0, events=events, world=mini_world)
        trans = [e for e in events if e["type"] == "transmission"]
        assert trans
        sens = np.array([n.pos.as_array() for n in mini_config.scene.sensitive_nodes])
        for t in trans[:10]:
            tx = (mini_world.realized[t["tx"]][t["slot"]] if t["tx"] in mini_world.realized
                  else mini_world.ground_positions[t["tx"]].as_array())
            gains = mini_world.truth.gain_db_many(np.broadcast_to(tx, sens.shape), sens)
            want = float((db_to_lin(t["power_dbm"]) * np.sum(db_to_lin(gains)))
                         * mini_config.grid.dt)
            assert t["interference_mw_s"] == want

    def test_caps_respected_on_every_predictive_transmission(self, mini_config, mini_world):
        events = []
        run(mini_config, "predictive", 0, events=events, world=mini_world)
        for t in (e for e in events if e["type"] == "transmission"):
            tx = (mini_world.realized[t["tx"]][t["slot"]] if t["tx"] in mini_world.realized
                  else mini_world.ground_positions[t["tx"]].as_array())
            for node in mini_config.scene.sensitive_nodes:
                g = float(mini_world.radio_map.query_many(tx[None],
                                                          node.pos.as_array()[None])[0])
                assert t["power_dbm"] + g <= mini_config.sensitive_cap_dbm + 1e-9

    def test_delivery_within_deadline(self, mini_config, mini_world):
        for method in METHODS:
            events = []
            run(mini_config, method, 0, events=events, world=mini_world)
            flows = {e["flow"]: e for e in events if e["type"] == "flow"}
            for out in (e for e in events if e["type"] == "outcome" and e["delivered"]):
                f = flows[out["flow"]]
                slots = int(np.floor(f["deadline_s"] / mini_config.grid.dt + 1e-9))
                assert out["delivery_slot"] - f["injection_slot"] <= slots


class TestBaselines:
    def test_aggregate_prefers_direct_hop(self, mini_config, mini_world):
        generous = replace(mini_config, budget=LinkBudget(p_max_dbm=80.0))
        flows = draw_flows(mini_config, 0, 12.0)
        route, powers = baseline_aggregate(mini_world, flows[0], generous)
        assert route == [flows[0].source, flows[0].dest]
        assert len(powers) == 1

    def test_aggregate_disconnected_raises(self, mini_config, mini_world):
        starved = replace(mini_config, budget=LinkBudget(p_max_dbm=-120.0))
        flows = draw_flows(mini_config, 0, 12.0)
        with pytest.raises(NoFeasiblePath):
            baseline_aggregate(mini_world, flows[0], starved)

    def test_spacetime_delay_no_worse_than_predictive(self, mini_config, mini_world):
        flows = draw_flows(mini_config, 0, 12.0)
        from aeris.strategic import reserve_path

        for f in flows[:6]:
            st = baseline_spacetime(mini_world, f)
            pred = reserve_path(mini_world.graph, mini_world.radio_map, f.source, f.dest,
                                f.deadline_s, mini_config.scene.sensitive_nodes,
                                mini_config.budget, injection_slot=f.injection_slot,
                                tables=mini_world.tables)
            assert st.delivery_slot <= pred.delivery_slot

    def test_no_sensitive_nodes_all_methods_silent(self, mini_config):
        bare = replace(mini_config, scene=replace(mini_config.scene, sensitive_nodes=()))
        world = build_world(bare, 0)
        vals = [run(bare, m, 0, world=world).interference_mw_s for m in METHODS]
        assert vals == [0.0, 0.0, 0.0]


class TestSweep:
    def test_row_counting_and_cell_equality(self, mini_config):
        rows = sweep(mini_config, [6.0, 12.0], ["predictive", "baseline_aggregate"], 2)
        assert len(rows) == 2 * 2 * 2
        world = build_world(mini_config, 1)
        rep = run(mini_config, "predictive", 1, world=world, load_per_min=6.0)
        cell = [r for r in rows if r["load"] == 6.0 and r["seed"] == 1
                and r["method"] == "predictive"][0]
        assert cell["interference_mw_s"] == rep.interference_mw_s
        assert cell["delivery_rate"] == rep.delivery_rate

    def test_concurrency_independence(self, mini_config, monkeypatch, tmp_path):
        monkeypatch.setenv("AERIS_THREADS", "1")
        a = sweep(mini_config, [6.0], ["baseline_aggregate"], 2)
        monkeypatch.setenv("AERIS_THREADS", "2")
        b = sweep(mini_config, [6.0], ["baseline_aggregate"], 2)
        pa, pb = tmp_path / "a.csv", tmp_path / "b.csv"
        sweep_to_csv(a, pa)
        sweep_to_csv(b, pb)
        assert pa.read_bytes() == pb.read_bytes()

    def test_csv_roundtrip(self, mini_config, tmp_path):
        rows = sweep(mini_config, [6.0], ["baseline_spacetime"], 1)
        path = tmp_path / "sweep.csv"
        sweep_to_csv(rows, path)
        again = sweep_from_csv(path)
        assert len(again) == len(rows)
        assert again[0]["interference_mw_s"] == rows[0]["interference_mw_s"]

    def test_empty_inputs_rejected(self, mini_config):
        with pytest.raises(ConfigInvalid):
            sweep(mini_config, [], ["predictive"], 1)


class TestPlotData:
    def test_median_iqr(self):
        rows = [{"load": 1.0, "method": "predictive", "seed": s,
                 "interference_mw_s": float(v), "interference_db": 0.0,
                 "delivery_rate": 1.0, "mean_delay_s": 1.0, "energy_mj": 1.0}
                for s, v in enumerate([1.0, 2.0, 3.0, 4.0])]
        out = plot_data(rows)
        assert len(out) == 1
        assert out[0]["interference_mw_s_median"] == 2.5
        assert out[0]["interference_mw_s_q25"] == 1.75
        assert out[0]["interference_mw_s_q75"] == 3.25


class TestMetricsReport:
    def test_json_fields(self):
        rep = MetricsReport("predictive", 4, 3, 1e-6, 0.75, 2.5, 10.0)
        d = json.loads(rep.to_json())
        assert d["interference_db"] == pytest.approx(-60.0)
        assert d["delivery_rate"] == 0.75

    def test_zero_interference_db(self):
        rep = MetricsReport("predictive", 0, 0, 0.0, 1.0, float("nan"), float("nan"))
        assert rep.interference_db == float("-inf")
