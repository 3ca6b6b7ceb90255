"""Run the synthetic brake-rich benchmark and print the per-pair RMSE table.

    python3 scripts/benchmark.py --out-dir runs/bench
    python3 scripts/benchmark.py --config bench.json --runs 20
"""
import argparse
import json
import logging
import time

from cfswitch.calibration import McmcConfig
from cfswitch.pipeline import BenchmarkConfig, run_benchmark
from cfswitch.sim import format_table


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="JSON with BenchmarkConfig fields")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--runs", type=int)
    ap.add_argument("--draws", type=int, help="posterior draws per policy")
    ap.add_argument("--out-dir", default="runs/benchmark")
    ap.add_argument("--verbose", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)

    raw = json.load(open(args.config)) if args.config else {}
    if "mcmc" in raw:
        raw["mcmc"] = McmcConfig(**raw["mcmc"])
    cfg = BenchmarkConfig(**raw)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.runs is not None:
        cfg.runs = args.runs
    if args.draws is not None:
        cfg.mcmc = McmcConfig.for_draws(args.draws)

    t0 = time.perf_counter()
    res = run_benchmark(cfg)
    res.write(args.out_dir)
    print(format_table(res.results))
    n = len(res.by_pair())
    print(f"switch_soft <= rand on {res.switch_beats_rand()}/{n} pairs")
    print(f"int has the largest mean spacing on {res.int_widest()}/{n} pairs")
    print(f"I0 = {res.switch.i0:.4g}, beta = {res.switch.beta:.4g}")
    print(f"wall time {time.perf_counter() - t0:.0f} s, outputs in {args.out_dir}")


if __name__ == "__main__":
    main()
