"""End-to-end synthetic benchmark: fit, quantify, split, calibrate, switch, evaluate."""
from __future__ import annotations

import json
import logging
import time
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .calibration import McmcConfig, make_policies
from .gmm import FeatureLayout, build_dataset, fit_em
from .ingest import AlertRegime, synth_corpus
from .interaction import IntensityModel, intensity_series
from .sim import evaluate, format_table, write_results
from .switching import SwitchConfig, calibrate_threshold

log = logging.getLogger(__name__)


@dataclass
class BenchmarkConfig:
    n_pairs: int = 7
    seed: int = 12
    event_rate: float = 0.05
    n_train: int = 30  # extra calibration pairs besides the benchmark pairs
    fit_pairs: int = 40
    fit_seed: int = 1
    k: int = 6
    mc_samples: int = 2000
    runs: int = 20
    quantile: float = 0.85
    beta_ratio: float = 0.1
    mcmc: McmcConfig = field(default_factory=McmcConfig)
    # extra synth_corpus keywords; highway-speed leaders by default
    generator: dict = field(default_factory=lambda: {"speed_range": [20.0, 30.0]})

    def corpus(self, n: int, seed: int):
        kw = dict(self.generator)
        if isinstance(kw.get("alert"), dict):
            kw["alert"] = AlertRegime(**kw["alert"])
        if "speed_range" in kw:
            kw["speed_range"] = tuple(kw["speed_range"])
        return synth_corpus(n, seed, self.event_rate, **kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mcmc"]["accept_band"] = list(self.mcmc.accept_band)
        return d


@dataclass
class BenchmarkResult:
    config: BenchmarkConfig
    results: list
    switch: SwitchConfig
    timings: dict

    def by_pair(self) -> dict:
        out = defaultdict(dict)
        for r in self.results:
            out[r.pair_id][r.policy] = r
        return dict(out)

    def switch_beats_rand(self) -> int:
        """Pairs where soft switching has RMSE(dx) no larger than the random policy."""
        return sum(pol["switch_soft"].summary()["rmse_dx_mean"] <= pol["rand"].summary()["rmse_dx_mean"]
                   for pol in self.by_pair().values())

    def int_widest(self) -> int:
        """Pairs where the interactive policy keeps the largest mean spacing."""
        return sum(max(pol, key=lambda k: pol[k].mean_gap()) == "int"
                   for pol in self.by_pair().values())

    def summary(self) -> dict:
        gaps = {pid: {k: r.mean_gap() for k, r in pol.items()} for pid, pol in self.by_pair().items()}
        return {"n_pairs": len(self.by_pair()), "switch_le_rand": self.switch_beats_rand(),
                "int_largest_gap": self.int_widest(), "mean_gap": gaps,
                "switch": self.switch.to_dict(), "timings": self.timings,
                "config": self.config.to_dict()}

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_results(self.results, out / "results.csv")
        (out / "results.txt").write_text(format_table(self.results))
        (out / "summary.json").write_text(json.dumps(self.summary(), indent=1, sort_keys=True))


def run_benchmark(cfg: BenchmarkConfig = BenchmarkConfig()) -> BenchmarkResult:
    t0 = time.perf_counter()
    timings = {}
    layout = FeatureLayout.standard()
    X = build_dataset(cfg.corpus(cfg.fit_pairs, cfg.fit_seed), layout)
    model = IntensityModel(fit_em(X, cfg.k, seed=0, layout=layout))
    timings["fit"] = time.perf_counter() - t0

    bench = cfg.corpus(cfg.n_pairs, cfg.seed)
    train = bench + cfg.corpus(cfg.n_train, cfg.seed + 1000)
    series = [intensity_series(model, p, "js", cfg.mc_samples, 0) for p in train]
    timings["quantify"] = time.perf_counter() - t0

    pol = make_policies(train, model, seed=0, config=cfg.mcmc, series=series)
    timings["calibrate"] = time.perf_counter() - t0
    i0 = calibrate_threshold(np.concatenate([s.values for s in series]), cfg.quantile)
    sw = SwitchConfig(i0, cfg.beta_ratio * i0 if i0 > 0 else 1.0)
    log.info("threshold %.4g, beta %.4g", sw.i0, sw.beta)

    results = evaluate(bench, pol.as_dict(), n_runs=cfg.runs, switch=sw, model=model)
    timings["evaluate"] = time.perf_counter() - t0
    return BenchmarkResult(cfg, results, sw, {k: round(v, 2) for k, v in timings.items()})


@dataclass
class SkewResult:
    values: np.ndarray
    max_value: float
    share_below: float
    ratio: float


def population_skew(n_pairs: int = 50, event_rate: float = 0.02, seed: int = 0, k: int = 6,
                    mc_samples: int = 2000, ratio: float = 0.25, **generator) -> SkewResult:
    """Fit on a synthetic corpus, quantify every pair and measure how many
    timesteps sit below ``ratio`` times the corpus maximum."""
    pairs = synth_corpus(n_pairs, seed, event_rate, **generator)
    layout = FeatureLayout.standard()
    model = IntensityModel(fit_em(build_dataset(pairs, layout), k, seed=0, layout=layout))
    values = np.concatenate([intensity_series(model, p, "js", mc_samples, 0).values for p in pairs])
    top = float(values.max())
    return SkewResult(values, top, float(np.mean(values < ratio * top)), ratio)
