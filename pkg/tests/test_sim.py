import math
from types import SimpleNamespace

import numpy as np
import pytest

from cfswitch.errors import ConfigError
from cfswitch.idm import IdmParams, IdmPosterior, PriorBox, simulate_follower
from cfswitch.ingest import GROUND_TRUTH, TrajectoryPair, synth_corpus
from cfswitch.sim import (POLICIES, Episode, SimConfig, evaluate, format_table, read_episode,
                          read_results, realize, rmse_dx, rmse_safe, run_episode, simulate,
                          write_episode, write_results)
from cfswitch.switching import SwitchConfig, calibrate_threshold


def episode(dx, collided=False):
    dx = np.asarray(dx, float)
    nan = np.full(len(dx), np.nan)
    return Episode(nan, nan, nan, dx, nan, nan, collided)


def human(dx):
    return SimpleNamespace(dx=np.asarray(dx, float))


def point_posteriors(p=GROUND_TRUTH):
    return {k: IdmPosterior.point(p, k) for k in ("int", "non", "rand")}


# ---------------------------------------------------------------- metrics

def test_rmse_identical():
    assert rmse_dx(episode([5, 6, 7]), human([5, 6, 7])) == 0.0
    assert rmse_safe(episode([5, 6, 7]), human([5, 6, 7])) == 0.0


def test_rmse_constant_offset():
    assert rmse_dx(episode([7, 8, 9, 10]), human([5, 6, 7, 8])) == pytest.approx(2.0)


def test_rmse_three_step_fixture():
    assert rmse_dx(episode([13, 14, 10]), human([10, 10, 10])) == pytest.approx(math.sqrt(25 / 3))
    assert math.sqrt(25 / 3) == pytest.approx(2.8868, abs=1e-4)


def test_safe_farther_is_zero():
    assert rmse_safe(episode([12, 13, 11]), human([10, 10, 10])) == 0.0


def test_safe_uniformly_closer():
    assert rmse_safe(episode([9, 9, 9]), human([10, 10, 10])) == pytest.approx(1.0)


def test_safe_mixed_fixture():
    assert rmse_safe(episode([8, 8, 13, 13]), human([10, 10, 10, 10])) == pytest.approx(math.sqrt(2))


def test_collision_prefix_scoring():
    ep = episode([4, 2, -0.5], collided=True)
    assert rmse_dx(ep, human([4, 4, 4, 4])) == pytest.approx(math.sqrt(2))


def test_empty_overlap():
    with pytest.raises(ValueError):
        rmse_dx(episode([-1.0], collided=True), human([3.0]))


# ---------------------------------------------------------------- episodes

@pytest.fixture(scope="module")
def single_regime():
    return synth_corpus(5, seed=8, event_rate=0.05, alert=None, jitter=0.0)


def test_ground_truth_replay(single_regime):
    cfg = SimConfig("non", n_runs=1)
    for pair in single_regime:
        res = simulate(pair, point_posteriors(), cfg)
        assert res.rmse_dx[0] < 0.5


def test_infinite_threshold_equals_non(brake_rich_policies, trained_model):
    pairs, _, pol = brake_rich_policies
    posts = pol.as_dict()
    sw = SwitchConfig(math.inf, 1.0, "soft")
    a = simulate(pairs[0], posts, SimConfig("switch_soft", 3, seed=4, mc_samples=200, switch=sw),
                 trained_model)
    b = simulate(pairs[0], posts, SimConfig("non", 3, seed=4))
    for ea, eb in zip(a.episodes, b.episodes):
        assert np.array_equal(ea.x, eb.x) and np.array_equal(ea.v, eb.v)
        assert np.all(ea.w_int == 0)
    assert np.array_equal(a.rmse_dx, b.rmse_dx)


def _stationary_leader_pair(v0, gap0, n=300):
    t = np.arange(n) * 0.2
    x_lead = np.full(n, gap0 + 4.5)
    x_f, v_f, a_f, _ = simulate_follower(GROUND_TRUTH, x_lead, np.zeros(n), 0.0, v0, 0.2, 4.5)
    return TrajectoryPair("stop", 0.2, t, x_lead, np.zeros(n), np.zeros(n), x_f, v_f, a_f, 4.5)


@pytest.mark.parametrize("v0, gap0", [(10.0, 40.0), (20.0, 80.0), (30.0, 120.0)])
def test_stationary_leader_no_collision(v0, gap0):
    pair = _stationary_leader_pair(v0, gap0)
    draws = PriorBox().sample(np.random.default_rng(int(v0)), 200)
    cfg = SimConfig("non", n_runs=1)
    for th in draws:
        ep = run_episode(pair, {"non": IdmParams.from_array(th)}, cfg)
        assert not ep.collided and np.all(ep.dx > 0)


def test_collision_flagged():
    # the human reference stops in time; the simulated follower cannot
    n = 100
    t = np.arange(n) * 0.2
    x_lead = np.full(n, 14.5)
    v_f = np.r_[30.0, np.zeros(n - 1)]
    pair = TrajectoryPair("stop", 0.2, t, x_lead, np.zeros(n), np.zeros(n), np.zeros(n), v_f,
                          np.zeros(n), 4.5)
    ep = run_episode(pair, {"non": IdmParams(45, 0.5, 0.5, 3, 4)}, SimConfig("non", 1))
    assert ep.collided
    assert ep.dx[-1] <= 0 and np.all(ep.dx[:-1] > 0)
    assert len(ep) < len(pair)


def test_reproducible(brake_rich_policies, trained_model):
    pairs, series, pol = brake_rich_policies
    sw = SwitchConfig(0.2, 0.02, "soft")
    cfg = SimConfig("switch_soft", 2, seed=1, mc_samples=200, switch=sw)
    a = simulate(pairs[1], pol.as_dict(), cfg, trained_model)
    b = simulate(pairs[1], pol.as_dict(), cfg, trained_model)
    for ea, eb in zip(a.episodes, b.episodes):
        for name in ("x", "v", "a", "intensity", "w_int"):
            assert np.array_equal(getattr(ea, name), getattr(eb, name), equal_nan=True)


def test_soft_weight_continuity(brake_rich_policies, trained_model):
    pairs, series, pol = brake_rich_policies
    i0 = calibrate_threshold(np.concatenate([s.values for s in series]))
    sw = SwitchConfig(i0, 0.1 * i0, "soft")
    res = simulate(pairs[2], pol.as_dict(), SimConfig("switch_soft", 2, mc_samples=500, switch=sw),
                   trained_model)
    for ep in res.episodes:
        bound = np.max(np.abs(np.diff(ep.intensity))) / (4 * sw.beta)
        assert np.max(np.abs(np.diff(ep.w_int))) <= bound + 1e-12
        assert np.all((ep.w_int >= 0) & (ep.w_int <= 1))


def test_calm_corpus_stays_below_threshold(brake_rich_policies, trained_model):
    _, series, pol = brake_rich_policies
    i0 = calibrate_threshold(np.concatenate([s.values for s in series]))
    calm = synth_corpus(20, seed=40, event_rate=0.0)
    below = []
    for pair in calm:
        res = simulate(pair, pol.as_dict(), SimConfig("non", 1, mc_samples=500,
                                                     record_intensity=True), trained_model)
        below.append(res.episodes[0].intensity <= i0)
    share = np.mean(np.concatenate(below))
    assert share >= 0.9, share


def test_window_uses_simulated_history(brake_rich_policies, trained_model):
    """The online intensity reads the simulated follower, not the human one."""
    pairs, _, pol = brake_rich_policies
    pair = pairs[0]
    cfg = SimConfig("non", 1, mc_samples=300, record_intensity=True)
    ep = run_episode(pair, {"non": pol.non.mean()}, cfg, trained_model)
    from cfswitch.sim import _window
    t = 40
    row = trained_model.observed_row(*_window(ep.a, ep.v, pair.v_lead - ep.v, ep.dx,
                                              pair.a_foll[0], t, 5))
    assert np.allclose(row[5:10], ep.v[t - 5:t])
    assert not np.allclose(row[5:10], pair.v_foll[t - 5:t])


def test_no_gap_without_flag(brake_rich_policies):
    pairs, _, pol = brake_rich_policies
    for pol_name in ("int", "non", "rand"):
        res = simulate(pairs[3], pol.as_dict(), SimConfig(pol_name, 5))
        for ep in res.episodes:
            assert ep.collided or np.all(ep.dx > 0)


def test_realize_shares_draws():
    rng = np.random.default_rng(0)
    posts = {k: IdmPosterior(PriorBox().sample(rng, 40), np.zeros(40), k)
             for k in ("int", "non", "rand")}
    sw = realize("switch_soft", posts, 3, "p7", 2)
    assert sw["int"] == realize("int", posts, 3, "p7", 2)["int"]
    assert sw["non"] == realize("non", posts, 3, "p7", 2)["non"]
    picks = {realize("non", posts, 3, "p7", r)["non"] for r in range(10)}
    assert len(picks) > 1


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig("greedy")
    with pytest.raises(ValueError):
        SimConfig("non", n_runs=0)
    with pytest.raises(ValueError):
        SimConfig("switch_hard")


def test_switching_needs_model(single_regime):
    cfg = SimConfig("switch_hard", 1, switch=SwitchConfig(0.1, mode="hard"))
    with pytest.raises(ValueError):
        simulate(single_regime[0], point_posteriors(), cfg)


# ---------------------------------------------------------------- evaluate

def test_point_posterior_zero_std(single_regime):
    res = evaluate(single_regime[:2], point_posteriors(), ("int", "non"), n_runs=1)
    for r in res:
        s = r.summary()
        assert s["rmse_dx_std"] == 0.0 and s["rmse_safe_std"] == 0.0


def test_missing_posterior(single_regime):
    posts = point_posteriors()
    del posts["rand"]
    with pytest.raises(ConfigError):
        evaluate(single_regime[:1], posts, ("rand",), n_runs=1)


def test_results_round_trip(tmp_path, single_regime):
    res = evaluate(single_regime[:2], point_posteriors(), ("int", "non"), n_runs=2)
    write_results(res, tmp_path / "results.csv")
    head = (tmp_path / "results.csv").read_text().splitlines()[0]
    assert head == "pair_id,policy,rmse_dx_mean,rmse_dx_std,rmse_safe_mean,rmse_safe_std,collisions"
    rows = read_results(tmp_path / "results.csv")
    assert [r["policy"] for r in rows] == ["int", "non", "int", "non"]
    assert rows[1]["rmse_dx_mean"] == res[1].summary()["rmse_dx_mean"]


def test_table_marks_minimum(single_regime):
    posts = point_posteriors()
    posts["int"] = IdmPosterior.point(IdmParams(33, 2.5, 5.0, 1.2, 2.0), "int")
    res = evaluate(single_regime[:1], posts, ("int", "non"), n_runs=1)
    lines = format_table(res).splitlines()
    assert "*" not in lines[1].split()[2] and lines[2].split()[2].endswith("*")


def test_episode_trace_round_trip(tmp_path, single_regime):
    pair = single_regime[0]
    ep = run_episode(pair, {"non": GROUND_TRUTH}, SimConfig("non", 1))
    write_episode(ep, pair, tmp_path / "trace.csv")
    back = read_episode(tmp_path / "trace.csv")
    assert np.array_equal(back["x_sim"], ep.x)
    assert np.all(np.isnan(back["w_int"]))


def test_policy_names():
    assert POLICIES == ("int", "non", "rand", "switch_hard", "switch_soft")
