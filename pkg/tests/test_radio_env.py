import math

import numpy as np
import pytest

from aeris.errors import DegenerateLink, EmptySampleSet
from aeris.radio_env import (ChannelSample, GroundTruthChannel, PathLossParams, RadioMap,
                             ShadowField, build_map, sample_along, sample_between,
                             sample_ground_pairs, samples_from_csv, samples_to_csv,
                             true_gain_db)
from aeris.scene import ObstacleBox, Position3, Scene
from aeris.trajectory import Trajectory4D, Waypoint

EMPTY = Scene(ObstacleBox(Position3(-500, -500, 0), Position3(1500, 1500, 300)))
NOSHADOW = PathLossParams(sigma_sh_los_db=0.0, sigma_sh_nlos_db=0.0)


def P(x, y, z):
    return Position3(x, y, z)


class TestTrueGain:
    def test_reference_distance(self):
        g = true_gain_db(EMPTY, NOSHADOW, 0, P(0, 0, 10), P(1, 0, 10))
        assert g == pytest.approx(-NOSHADOW.pl0_db, abs=1e-12)

    def test_doubling_distance_los(self):
        ch = GroundTruthChannel(EMPTY, NOSHADOW, 0)
        g1 = ch.gain_db(P(0, 0, 10), P(50, 0, 10))
        g2 = ch.gain_db(P(0, 0, 10), P(100, 0, 10))
        assert g1 - g2 == pytest.approx(6.0205999132796, abs=1e-9)

    def test_reciprocity(self):
        params = PathLossParams()
        ch = GroundTruthChannel(EMPTY, params, 77)
        rng = np.random.default_rng(3)
        for _ in range(50):
            a = P(*rng.uniform([0, 0, 0], [900, 900, 150]))
            b = P(*rng.uniform([0, 0, 0], [900, 900, 150]))
            assert ch.gain_db(a, b) == ch.gain_db(b, a)

    def test_monotone_distance_decay(self):
        ch = GroundTruthChannel(EMPTY, NOSHADOW, 0)
        ds = np.linspace(2.0, 800.0, 60)
        gains = [ch.gain_db(P(0, 0, 10), P(d, 0, 10)) for d in ds]
        assert np.all(np.diff(gains) < 0)

    def test_degenerate_link(self):
        ch = GroundTruthChannel(EMPTY, NOSHADOW, 0)
        with pytest.raises(DegenerateLink):
            ch.gain_db(P(5, 5, 5), P(5, 5, 5))

    def test_los_flip_switches_exponent(self):
        wall = ObstacleBox(P(40, -10, 0), P(60, 10, 40))
        sc = Scene(ObstacleBox(P(-100, -100, 0), P(500, 500, 300)), (wall,))
        ch = GroundTruthChannel(sc, NOSHADOW, 0)
        d = 100.0
        blocked = ch.gain_db(P(0, 0, 10), P(d, 0, 10))
        clear = ch.gain_db(P(0, 0, 100), P(d, 0, 100))
        want_los = -(NOSHADOW.pl0_db + 10 * NOSHADOW.n_los * math.log10(d))
        want_nlos = -(NOSHADOW.pl0_db + 10 * NOSHADOW.n_nlos * math.log10(d))
        assert clear == pytest.approx(want_los, abs=1e-9)
        assert blocked == pytest.approx(want_nlos, abs=1e-9)


class TestShadowField:
    def test_correlation_at_decorrelation_distance(self):
        # ensemble over field draws: corr at distance d_c is e^-1
        decorr = 50.0
        a = np.array([[100.0, 100.0, 20.0]])
        b = a + np.array([[decorr, 0.0, 0.0]])
        va, vb = [], []
        for seed in range(10_000):
            f = ShadowField(decorr, seed, n_terms=16)
            va.append(f.unit(a)[0])
            vb.append(f.unit(b)[0])
        va, vb = np.array(va), np.array(vb)
        corr = np.corrcoef(va, vb)[0, 1]
        assert abs(corr - math.exp(-1)) < 0.05

    def test_unit_marginal_variance(self):
        vals = np.array([ShadowField(50.0, s, n_terms=16).unit(np.array([[5, 7, 9.0]]))[0]
                         for s in range(8000)])
        assert abs(vals.var() - 1.0) < 0.07

    def test_deterministic(self):
        pts = np.random.default_rng(0).uniform(0, 100, (5, 3))
        a = ShadowField(50.0, 42).unit(pts)
        b = ShadowField(50.0, 42).unit(pts)
        assert np.array_equal(a, b)


def straight(aircraft_id, p0, p1, t1=100.0):
    return Trajectory4D(aircraft_id, (Waypoint(0.0, P(*p0)), Waypoint(t1, P(*p1))))


class TestSampleAlong:
    def test_period_longer_than_span_gives_at_most_one(self):
        trajs = [straight("a", (0, 0, 50), (500, 0, 50), t1=10.0)]
        got = sample_along(trajs, EMPTY, NOSHADOW, 0, 60.0, [P(100, 100, 0)])
        assert len(got) <= 1

    def test_static_aircraft_shares_tx(self):
        trajs = [Trajectory4D("a", (Waypoint(0.0, P(5, 5, 50)), Waypoint(50.0, P(5, 5, 50))))]
        got = sample_along(trajs, EMPTY, NOSHADOW, 0, 10.0, [P(100, 100, 0)])
        assert len(got) > 1
        assert len({(s.tx.x, s.tx.y, s.tx.z) for s in got}) == 1

    def test_count_matches_floor_oracle(self):
        horizon, period = 100.0, 7.0
        trajs = [straight("a", (0, 0, 50), (700, 0, 50), t1=horizon),
                 straight("b", (0, 300, 60), (700, 300, 60), t1=horizon)]
        peers = [P(0, 100, 0), P(350, 100, 0), P(700, 100, 0)]
        got = sample_along(trajs, EMPTY, NOSHADOW, 0, period, peers)
        assert len(got) == math.floor(horizon / period) * len(trajs) * len(peers)

    def test_air_air_pairs(self):
        trajs = [straight("a", (0, 0, 50), (500, 0, 50)),
                 straight("b", (0, 100, 60), (500, 100, 60))]
        got = sample_between(trajs, EMPTY, NOSHADOW, 0, 10.0)
        assert len(got) == 10

    def test_ground_pairs(self):
        pts = [P(0, 0, 0), P(100, 0, 0), P(0, 100, 0)]
        got = sample_ground_pairs(EMPTY, NOSHADOW, 0, pts)
        assert len(got) == 3


def toy_samples():
    rng = np.random.default_rng(8)
    out = []
    for _ in range(60):
        tx = P(*rng.uniform([0, 0, 0], [500, 500, 120]))
        rx = P(*rng.uniform([0, 0, 0], [500, 500, 120]))
        out.append(ChannelSample(tx, rx, float(rng.uniform(-120, -60))))
    return out


class TestRadioMap:
    def test_empty_samples_rejected(self):
        with pytest.raises(EmptySampleSet):
            build_map([])

    def test_single_sample_everywhere(self):
        m = build_map([ChannelSample(P(0, 0, 10), P(50, 0, 0), -80.0)])
        assert m.query(P(400, 400, 90), P(1, 2, 0)).mean_gain_db == -80.0

    def test_exact_at_sample_points_both_orientations(self):
        samples = toy_samples()
        m = build_map(samples)
        for s in samples[:20]:
            assert m.query(s.tx, s.rx).mean_gain_db == s.gain_db
            assert m.query(s.rx, s.tx).mean_gain_db == s.gain_db

    def test_duplicates_with_equal_gain_no_effect(self):
        samples = toy_samples()
        m1 = build_map(samples)
        m2 = build_map(samples + samples[:10])
        rng = np.random.default_rng(1)
        tx = rng.uniform([0, 0, 0], [500, 500, 120], (40, 3))
        rx = rng.uniform([0, 0, 0], [500, 500, 120], (40, 3))
        assert np.array_equal(m1.query_many(tx, rx), m2.query_many(tx, rx))

    def test_permutation_invariance(self):
        samples = toy_samples()
        rng = np.random.default_rng(2)
        shuffled = list(samples)
        rng.shuffle(shuffled)
        m1, m2 = build_map(samples), build_map(shuffled)
        tx = rng.uniform([0, 0, 0], [500, 500, 120], (50, 3))
        rx = rng.uniform([0, 0, 0], [500, 500, 120], (50, 3))
        assert np.array_equal(m1.query_many(tx, rx), m2.query_many(tx, rx))

    def test_reciprocity_bitwise(self):
        m = build_map(toy_samples())
        rng = np.random.default_rng(3)
        for _ in range(40):
            a = P(*rng.uniform([0, 0, 0], [500, 500, 120]))
            b = P(*rng.uniform([0, 0, 0], [500, 500, 120]))
            assert m.query(a, b).mean_gain_db == m.query(b, a).mean_gain_db

    def test_stats_fields(self):
        m = build_map(toy_samples(), residual_std_db=3.5)
        stats = m.query(P(10, 10, 10), P(20, 20, 20))
        assert stats.shadow_std_db == 3.5
        assert 0.0 <= stats.los_prob <= 1.0

    def test_held_out_rmse_within_shadowing_std(self):
        # synthetic field sampled along a flight; 500 train / 100 test split
        params = PathLossParams()
        traj = Trajectory4D("a", (
            Waypoint(0.0, P(0, 0, 80)), Waypoint(60.0, P(600, 0, 80)),
            Waypoint(120.0, P(600, 500, 80)), Waypoint(180.0, P(0, 500, 80)),
            Waypoint(240.0, P(0, 20, 80)),
        ))
        peers = [P(150, 150, 0), P(450, 350, 0)]
        samples = sample_along([traj], EMPTY, params, 99, 0.4, peers)
        rng = np.random.default_rng(12)
        idx = rng.permutation(len(samples))[:600]
        train = [samples[i] for i in idx[:500]]
        test = [samples[i] for i in idx[500:]]
        m = build_map(train, residual_std_db=params.sigma_sh_los_db)
        tx = np.array([s.tx.as_array() for s in test])
        rx = np.array([s.rx.as_array() for s in test])
        pred = m.query_many(tx, rx)
        want = np.array([s.gain_db for s in test])
        rmse = float(np.sqrt(np.mean((pred - want) ** 2)))
        assert rmse <= params.sigma_sh_los_db


class TestSampleCsv:
    def test_roundtrip(self, tmp_path):
        samples = toy_samples()[:15]
        path = tmp_path / "samples.csv"
        samples_to_csv(samples, path)
        again = samples_from_csv(path)
        assert again == samples
