import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cfswitch.errors import CollisionError, ConfigError
from cfswitch.idm import (ACCEL_MAX, ACCEL_MIN, IdmParams, IdmPosterior, PriorBox, idm_accel,
                          idm_accel_array, integrate, simulate_follower, step)
from cfswitch.ingest import draw_events, leader_profile

params_st = st.builds(
    IdmParams,
    v0=st.floats(20, 45), T=st.floats(0.5, 3), s0=st.floats(0.5, 6),
    a_max=st.floats(0.3, 3), b=st.floats(0.5, 4),
)


def test_standstill_at_jam_gap():
    p = IdmParams(30, 1.5, 2.0, 1.0, 1.5)
    assert idm_accel(p, 0.0, 0.0, p.s0) == 0.0


def test_free_road_value():
    p = IdmParams(v0=30, T=1.5, s0=2, a_max=1, b=1.5)
    ref = 1 - (1 / 3) ** 4 - ((2 + 15) / 1e6) ** 2
    assert idm_accel(p, 10.0, 0.0, 1e6) == pytest.approx(ref, abs=1e-15)
    assert idm_accel(p, 10.0, 0.0, 1e6) == pytest.approx(0.98765, abs=1e-5)


@given(p=params_st, s=st.floats(0.1, 1e4))
def test_desired_speed_decelerates(p, s):
    assert idm_accel(p, p.v0, 0.0, s) < 0


@pytest.mark.parametrize("s", [0.0, -1.0])
def test_collision_state_rejected(s):
    with pytest.raises(CollisionError):
        idm_accel(IdmParams(), 10.0, 0.0, s)


def test_desired_gap_floor():
    p = IdmParams(30, 1.5, 2.0, 1.0, 1.5)
    # fast-opening gap would give s* < s0 without the floor
    assert p.desired_gap(10.0, -50.0) == p.s0


@pytest.mark.parametrize("bad", [dict(v0=0), dict(T=-1), dict(b=0), dict(delta=2)])
def test_params_validated(bad):
    with pytest.raises(ValueError):
        IdmParams(**bad)


@settings(max_examples=50)
@given(p=params_st, v=st.floats(0, 40), dv=st.floats(-10, 10), s=st.floats(0.5, 200))
def test_vectorised_matches_scalar(p, v, dv, s):
    vec = idm_accel_array(p.as_array(), v, dv, s)
    assert float(vec) == pytest.approx(idm_accel(p, v, dv, s), rel=1e-12, abs=1e-12)


# ---------------------------------------------------------------- integration

def test_uniform_motion():
    assert integrate(10.0, 20.0, 0.0, 0.2) == (14.0, 20.0)


def test_no_reversing():
    x, v = integrate(5.0, 0.0, -3.0, 0.2)
    assert v == 0.0 and x == 5.0


def test_accel_clamp():
    assert integrate(0.0, 10.0, -50.0, 0.1)[1] == pytest.approx(10.0 + ACCEL_MIN * 0.1)
    assert integrate(0.0, 10.0, 50.0, 0.1)[1] == pytest.approx(10.0 + ACCEL_MAX * 0.1)


@pytest.mark.parametrize("a", [-1.5, 0.7, 2.0])
def test_constant_accel_closed_form(a):
    x, v, dt = 3.0, 15.0, 0.2
    for _ in range(10):
        x, v = integrate(x, v, a, dt)
    t = 10 * dt
    assert abs(x - (3.0 + 15.0 * t + 0.5 * a * t * t)) < 1e-9
    assert abs(v - (15.0 + a * t)) < 1e-9


def test_step_collision():
    with pytest.raises(CollisionError):
        step(IdmParams(), (10.0, 5.0), (14.0, 5.0), 0.2, leader_length=4.5)


def test_step_bad_dt():
    with pytest.raises(ValueError):
        step(IdmParams(), (0.0, 5.0), (50.0, 5.0), 0.0)


def test_step_matches_manual():
    p = IdmParams(30, 1.5, 2.0, 1.0, 1.5)
    x, v = step(p, (0.0, 20.0), (40.0, 18.0), 0.2, leader_length=4.0)
    a = idm_accel(p, 20.0, 2.0, 36.0)
    assert (x, v) == integrate(0.0, 20.0, a, 0.2)


@pytest.mark.parametrize("v_e", [10.0, 20.0, 28.0])
def test_equilibrium_gap(v_e):
    p = IdmParams(33, 1.2, 2.0, 1.2, 2.0)
    dt = 0.2
    n = int(120 / dt) + 1
    x_lead = 60.0 + v_e * dt * np.arange(n)
    v_lead = np.full(n, v_e)
    x, v, _, collided = simulate_follower(p, x_lead, v_lead, 0.0, v_e * 0.8, dt)
    assert not collided
    target = (p.s0 + v_e * p.T) / math.sqrt(1 - (v_e / p.v0) ** 4)
    assert target == pytest.approx(p.equilibrium_gap(v_e))
    assert abs((x_lead[-1] - x[-1]) / target - 1) < 0.02


def _profiles(n, seed):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        v = rng.uniform(15, 30)
        out.append((v, leader_profile(60.0, 0.2, v, draw_events(rng, 0.1, 60.0), wander=0.3,
                                      rng=rng)))
    return out


def collision_count(n_draws, n_profiles, seed=0):
    rng = np.random.default_rng(seed)
    draws = PriorBox().sample(rng, n_draws)
    hits = 0
    for v, (t, x, vl, _) in _profiles(n_profiles, seed + 1):
        for th in draws:
            p = IdmParams.from_array(th)
            gap0 = p.s0 + v * p.T
            *_, col = simulate_follower(p, x + gap0 + 4.5, vl, 0.0, v, 0.2, 4.5)
            hits += col
    return hits


def test_collision_free_sample():
    assert collision_count(20, 5) == 0


def test_simulate_reports_collision():
    n = 50
    x_lead = np.full(n, 10.0)  # stopped leader, follower fast and close
    *_, collided = simulate_follower(IdmParams(), x_lead, np.zeros(n), 0.0, 30.0, 0.2)
    assert collided


# ---------------------------------------------------------------- prior / posterior

def test_prior_defaults():
    box = PriorBox()
    assert np.array_equal(box.lower, [20, 0.5, 0.5, 0.3, 0.5])
    assert np.array_equal(box.upper, [45, 3, 6, 3, 4])


def test_prior_from_json(tmp_path):
    path = tmp_path / "prior.json"
    path.write_text(json.dumps({"v0": [25, 35]}))
    box = PriorBox.from_json(path)
    assert box.v0 == (25, 35) and box.T == (0.5, 3.0)


@pytest.mark.parametrize("raw", [{"vmax": [1, 2]}, {"T": [3, 1]}, {"s0": [0, 1]}])
def test_prior_rejects(tmp_path, raw):
    path = tmp_path / "prior.json"
    path.write_text(json.dumps(raw))
    with pytest.raises(ConfigError):
        PriorBox.from_json(path)


def test_prior_samples_inside():
    box = PriorBox()
    S = box.sample(np.random.default_rng(0), 500)
    assert all(box.contains(s) for s in S)


def test_posterior_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    post = IdmPosterior(PriorBox().sample(rng, 7), rng.random(7), "interactive",
                        {"acceptance_rate": 0.3})
    post.to_json(tmp_path / "p.json")
    back = IdmPosterior.from_json(tmp_path / "p.json")
    assert np.array_equal(back.draws, post.draws)
    assert back.provenance == "interactive" and back.metadata == post.metadata


def test_posterior_plain_array_format(tmp_path):
    path = tmp_path / "p.json"
    path.write_text(json.dumps([{"v0": 30, "T": 1, "s0": 2, "a_max": 1, "b": 2}]))
    assert IdmPosterior.from_json(path).mean() == IdmParams(30, 1, 2, 1, 2)


def test_posterior_rejects_empty():
    with pytest.raises(ValueError):
        IdmPosterior(np.zeros((0, 5)), np.zeros(0))


def test_posterior_pick_deterministic():
    post = IdmPosterior(PriorBox().sample(np.random.default_rng(1), 50), np.zeros(50))
    a = post.pick(np.random.default_rng(3))
    b = post.pick(np.random.default_rng(3))
    assert a == b
