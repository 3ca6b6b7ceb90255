"""Acceptance criteria 1-9. Each test prints one PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v -s`` (the lines are also
printed without ``-s``). Criterion 8 runs the full synthetic benchmark and
takes several minutes on one core.
"""
import json
import math
import time

import numpy as np
import pytest
from scipy import integrate

from cfswitch.calibration import calibrate
from cfswitch.cli import main as cli_main
from cfswitch.gmm import fit_em
from cfswitch.idm import IdmParams, idm_accel, integrate as idm_integrate, simulate_follower
from cfswitch.ingest import GROUND_TRUTH
from cfswitch.interaction import js_divergence, kl_mc, mixture_w2_params
from cfswitch.pipeline import BenchmarkConfig, population_skew, run_benchmark
from cfswitch.switching import SwitchConfig, hard_switch, soft_switch

from test_calibration import EVENTS_A, noisy_transitions, stop_and_go_pair
from test_gmm import _commute_case, random_model
from test_idm import collision_count
from test_interaction import brute_w2, gauss1, random_mixture

LN2 = math.log(2)


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} {detail}")
        assert ok, detail
    return emit


def timed(fn, *a, **kw):
    t0 = time.perf_counter()
    out = fn(*a, **kw)
    return out, time.perf_counter() - t0


def test_criterion_1_divergences(report):
    kl, t_kl = timed(kl_mc, gauss1(0, 1), gauss1(1, 1), 100_000, seed=0)
    f, g = gauss1(0, 1), gauss1(100, 1)

    def part(p, x):
        lp, lf, lg = p.logpdf([[x]])[0], f.logpdf([[x]])[0], g.logpdf([[x]])[0]
        return math.exp(lp) * (lp - (np.logaddexp(lf, lg) - LN2))
    # each density lives within +-12 sd of its own mean
    oracle = 0.5 * integrate.quad(lambda x: part(f, x), -12, 12, limit=400)[0] \
        + 0.5 * integrate.quad(lambda x: part(g, x), 88, 112, limit=400)[0]
    js, t_js = timed(js_divergence, f, g, 20_000, seed=0)
    ok = abs(kl - 0.5) <= 0.02 and abs(js - oracle) <= 1e-3 and abs(oracle - LN2) <= 1e-6 \
        and max(t_kl, t_js) < 1.0
    report(1, ok, f"kl={kl:.4f} (0.5+-0.02) js={js:.6f} oracle={oracle:.6f} (ln2+-1e-3) "
                  f"t_kl={t_kl:.3f}s t_js={t_js:.3f}s (<1s)")


def test_criterion_2_mixture_w2(report):
    t0 = time.perf_counter()
    err = sym = tri = 0.0
    for seed in range(100):
        rng = np.random.default_rng(1000 + seed)
        D = int(rng.integers(1, 4))
        f, g, h = (random_mixture(rng, int(rng.integers(1, 4)), D) for _ in range(3))
        fg = mixture_w2_params(*f, *g)
        err = max(err, abs(fg - brute_w2(f, g)))
        sym = max(sym, abs(fg - mixture_w2_params(*g, *f)))
        tri = max(tri, fg - mixture_w2_params(*f, *h) - mixture_w2_params(*h, *g))
    wall = time.perf_counter() - t0
    ok = err <= 1e-8 and sym <= 1e-8 and tri <= 1e-8 and wall < 10
    report(2, ok, f"max|w2-brute|={err:.1e} max asym={sym:.1e} max triangle excess={tri:.1e} "
                  f"(<=1e-8) wall={wall:.2f}s (<10s; includes brute force)")


def test_criterion_3_gmr(report):
    commute = 0.0
    for seed in range(50):
        a, b = _commute_case(seed)
        commute = max(commute, np.max(np.abs(a.weights - b.weights)),
                      np.max(np.abs(a.means_x - b.means_x)))
    drop = 0.0
    for seed in range(10):
        X = random_model(np.random.default_rng(seed), K=3).sample(600, seed=seed)
        hist = np.array(fit_em(X, 4, seed=seed, tol=1e-10, max_iter=200).info["loglik_history"])
        drop = max(drop, float(-np.min(np.diff(hist))))
    rng = np.random.default_rng(0)
    X = rng.multivariate_normal([1.0, -2.0], [[2.0, 0.6], [0.6, 1.0]], 5000)
    m = fit_em(X, 1, seed=0)
    S = np.cov(X, rowvar=False, bias=True)
    rel_mu = np.max(np.abs(m.means_x[0] - X.mean(0)) / np.abs(X.mean(0)))
    rel_cov = np.max(np.abs(m.covs_x[0] - S) / np.abs(S))
    ok = commute <= 1e-8 and drop <= 1e-9 and rel_mu <= 0.05 and rel_cov <= 0.05
    report(3, ok, f"commute err={commute:.1e} (<=1e-8, 50 models) max loglik drop={drop:.1e} "
                  f"(<=1e-9) K=1 rel err mean={rel_mu:.1e} cov={rel_cov:.1e} (<=5%)")


def test_criterion_4_idm(report):
    p = IdmParams(30, 1.5, 2.0, 1.0, 1.5)
    fixed = idm_accel(p, 0.0, 0.0, p.s0)
    eq_err = 0.0
    q = IdmParams(33, 1.2, 2.0, 1.2, 2.0)
    for v_e in (10.0, 20.0, 28.0):
        n = int(120 / 0.2) + 1
        x_lead = 60.0 + v_e * 0.2 * np.arange(n)
        x, *_ = simulate_follower(q, x_lead, np.full(n, v_e), 0.0, 0.8 * v_e, 0.2)
        target = (q.s0 + v_e * q.T) / math.sqrt(1 - (v_e / q.v0) ** 4)
        eq_err = max(eq_err, abs((x_lead[-1] - x[-1]) / target - 1))
    int_err = 0.0
    for a in (-1.5, 0.7, 2.0):
        x, v = 3.0, 15.0
        for _ in range(10):
            x, v = idm_integrate(x, v, a, 0.2)
        int_err = max(int_err, abs(x - (3.0 + 15.0 * 2.0 + 0.5 * a * 4.0)))
    hits, wall = timed(collision_count, 200, 20)
    ok = fixed == 0.0 and eq_err < 0.02 and int_err < 1e-9 and hits == 0
    report(4, ok, f"a(0,0,s0)={fixed} equilibrium err={eq_err:.2%} (<2%) "
                  f"integration err={int_err:.1e} (<1e-9) collisions={hits}/4000 ({wall:.0f}s)")


def test_criterion_5_calibration(report):
    tr = noisy_transitions(stop_and_go_pair(EVENTS_A))
    post, wall = timed(calibrate, tr, seed=1)
    again = calibrate(tr, seed=1)
    err = np.abs(post.draws.mean(0)[:3] / GROUND_TRUTH.as_array()[:3] - 1)
    same = np.array_equal(post.draws, again.draws)
    n_iter = post.metadata["n_iter"]
    ok = np.all(err < 0.15) and same and wall < 120 and n_iter == 20000
    report(5, ok, f"rel err v0={err[0]:.1%} T={err[1]:.1%} s0={err[2]:.1%} (<15%) "
                  f"deterministic={same} iterations={n_iter} chain={wall:.1f}s (<120s)")


def test_criterion_6_switching(report):
    i0 = 0.3
    bounds = (soft_switch(i0, SwitchConfig(i0, 0.05)).w_int == 0.5
              and hard_switch(i0, SwitchConfig(i0, mode="hard")).w_int == 0.0
              and hard_switch(np.nextafter(i0, 1), SwitchConfig(i0, mode="hard")).w_int == 1.0)
    grid = np.r_[np.linspace(0, 0.29, 30), np.linspace(0.31, 1.0, 70)]
    devs = []
    for beta in (1e-1, 1e-2, 1e-3):
        devs.append(max(abs(soft_switch(I, SwitchConfig(i0, beta)).w_int
                            - hard_switch(I, SwitchConfig(i0, mode="hard")).w_int) for I in grid))
    shrink = devs[0] > devs[1] > devs[2]
    report(6, bounds and shrink, f"boundaries exact={bounds} max deviation at beta 1e-1/1e-2/1e-3 = "
                                 f"{devs[0]:.2e}/{devs[1]:.2e}/{devs[2]:.2e} (strictly shrinking)")


def test_criterion_7_population_skew(report):
    res, wall = timed(population_skew, 50, 0.02, seed=0)
    ok = res.share_below >= 0.70
    report(7, ok, f"share below 0.25*max = {res.share_below:.3f} (>=0.70) over "
                  f"{len(res.values)} timesteps, max={res.max_value:.3g} ({wall:.0f}s)")


def test_criterion_8_benchmark(report, tmp_path):
    res, wall = timed(run_benchmark, BenchmarkConfig())
    res.write(tmp_path)
    n = len(res.by_pair())
    sw, widest = res.switch_beats_rand(), res.int_widest()
    ok = n == 7 and sw >= 5 and widest == n and wall < 900
    report(8, ok, f"switch_soft<=rand on {sw}/{n} (>=5) int widest on {widest}/{n} (all) "
                  f"wall={wall:.0f}s (<900s)")


def test_criterion_9_replay(report, pipeline):
    _, manifests = pipeline
    diffs, svgs = [], 0
    for m in manifests:
        before = json.loads(m.read_text())["outputs"]
        svgs += sum(p.endswith(".svg") for p in before)
        code = cli_main(["--replay", str(m)])
        after = json.loads(m.read_text())["outputs"]
        if code != 0 or before != after:
            diffs.append(m.name)
    ok = not diffs and svgs >= 5
    report(9, ok, f"{len(manifests)} manifests replayed, {svgs} SVGs, mismatches={diffs or 'none'}")
