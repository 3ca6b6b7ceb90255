import csv

import numpy as np
import pytest

from cfswitch.cli import main as cli_main
from cfswitch.gmm import FeatureLayout, build_dataset, fit_em
from cfswitch.ingest import synth_corpus
from cfswitch.interaction import IntensityModel

HIGHD_HEADER = ["id", "frame", "x", "xVelocity", "xAcceleration", "laneId", "precedingId", "width"]


def write_highd(path, rows):
    """rows: iterables of (id, frame, x, v, a, lane, preceding, length)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(HIGHD_HEADER)
        for r in rows:
            w.writerow(r)
    return path


def vehicle_rows(vid, frames, x0, v, lane, preceding, length=4.5, dt=0.04):
    """Constant-speed vehicle; ``preceding`` may be a scalar or per-frame array."""
    frames = np.asarray(frames)
    prec = np.broadcast_to(np.asarray(preceding), frames.shape)
    lanes = np.broadcast_to(np.asarray(lane), frames.shape)
    out = []
    for k, f in enumerate(frames):
        x = x0 + v * (f - frames[0]) * dt
        out.append((vid, int(f), x, v, 0.0, int(lanes[k]), int(prec[k]), length))
    return out


@pytest.fixture(scope="session")
def layout():
    return FeatureLayout.standard()


@pytest.fixture(scope="session")
def small_corpus():
    return synth_corpus(6, seed=3, event_rate=0.05)


@pytest.fixture(scope="session")
def small_model(small_corpus, layout):
    """K=3 joint model on a small synthetic corpus (shared across modules)."""
    return fit_em(build_dataset(small_corpus, layout), 3, seed=0, layout=layout)


@pytest.fixture(scope="session")
def intensity_model(small_model):
    return IntensityModel(small_model)


@pytest.fixture(scope="session")
def trained_model(layout):
    """K=6 joint model on 40 synthetic pairs; the default working model."""
    X = build_dataset(synth_corpus(40, seed=1, event_rate=0.05), layout)
    return IntensityModel(fit_em(X, 6, seed=0, layout=layout))


@pytest.fixture(scope="session")
def brake_rich_policies(trained_model):
    """Policies from a small brake-rich corpus with a shortened chain.

    Returns (pairs, training intensity series, PolicySet).
    """
    from cfswitch.calibration import McmcConfig, make_policies
    from cfswitch.interaction import intensity_series

    pairs = synth_corpus(10, seed=21, event_rate=0.1)
    series = [intensity_series(trained_model, p, "js", 2000, 0) for p in pairs]
    cfg = McmcConfig.for_draws(300, burn_in=3000, thin=5)
    return pairs, series, make_policies(pairs, trained_model, seed=0, config=cfg, series=series)


@pytest.fixture(scope="session")
def pipeline(tmp_path_factory):
    """Small end-to-end run; each step writes into its own directory."""
    root = tmp_path_factory.mktemp("cli")
    d = {k: root / k for k in ("data", "model", "int", "split", "post", "sim", "eval", "plots")}
    steps = [
        ("synth", "--seed", 42, "--pairs", 4, "--duration", 30, "--event-rate", 0.1,
         "--out-dir", d["data"]),
        ("fit", "--data", d["data"], "--k", 2, "--out-dir", d["model"]),
        ("quantify", "--model", d["model"] / "model.gmm.json", "--pair", d["data"],
         "--mc-samples", 300, "--out-dir", d["int"]),
        ("sample", "--data", d["data"], "--intensity", d["int"], "--fractions", 0.05, 0.05, 0.1,
         "--out-dir", d["split"]),
    ]
    for split in ("int", "non", "rand"):
        steps.append(("calibrate", "--data", d["data"], "--splits", d["split"] / "splits.json",
                      "--split", split, "--draws", 50, "--burn-in", 300, "--thin", 2,
                      "--out-dir", d["post"] / split, "--out", d["post"] / f"posterior_{split}.json"))
    steps += [
        ("simulate", "--pair", d["data"] / "pair_0.csv", "--policy", "switch_soft", "--runs", 2,
         "--posteriors", d["post"], "--model", d["model"] / "model.gmm.json",
         "--intensity", d["int"], "--mc-samples", 200, "--out-dir", d["sim"]),
        ("evaluate", "--data", d["data"], "--posteriors", d["post"], "--policies", "int", "non",
         "rand", "switch_soft", "--model", d["model"] / "model.gmm.json", "--intensity", d["int"],
         "--runs", 2, "--mc-samples", 200, "--out-dir", d["eval"]),
        ("plot", "--kind", "hist", "--input", d["int"], "--bins", 20, "--out-dir", d["plots"] / "hist"),
        ("plot", "--kind", "profile", "--input", d["int"] / "intensity_0.csv",
         "--out-dir", d["plots"] / "profile"),
        ("plot", "--kind", "samples", "--pair", d["data"] / "pair_0.csv", "--splits",
         d["split"] / "splits.json", "--out-dir", d["plots"] / "samples"),
        ("plot", "--kind", "sim", "--input", d["sim"] / "trace_0_switch_soft_run000.csv",
         "--pair", d["data"] / "pair_0.csv", "--out-dir", d["plots"] / "sim"),
    ]
    manifests = []
    for step in steps:
        assert cli_main([str(a) for a in step]) == 0, step
        out_dir = step[step.index("--out-dir") + 1]
        manifests.append(out_dir / f"manifest.{step[0]}.json")
    return d, manifests
