"""Command-line entry point: ingest, synth, fit, quantify, sample, calibrate,
simulate, evaluate and plot.

Every run writes ``manifest.json`` (and ``manifest.<subcommand>.json``) to its
output directory. The manifest's ``argv`` spells out every effective option,
so ``cfswitch --replay manifest.json`` repeats the run exactly.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import CfSwitchError, ConfigError, DataError, NumericError

log = logging.getLogger("cfswitch")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
SPLITS = ("int", "non", "rand")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# Option tables: (flag, dest, type, default, help). Defaults live here rather
# than in argparse so that config-file values can sit between the two.
GLOBAL_OPTS = [
    ("--config", "config", str, None, "JSON config file (flat keys or per-subcommand sections)"),
    ("--seed", "seed", int, 0, "master seed"),
    ("--out-dir", "out_dir", str, ".", "output directory"),
]

OPTS = {
    "ingest": [
        ("--tracks", "tracks", str, None, "HighD-style tracks CSV"),
        ("--schema", "schema", str, None, "JSON mapping of internal names to column names"),
        ("--min-duration", "min_duration", float, 15.0, "minimum pair duration [s]"),
        ("--max-gap", "max_gap", float, 120.0, "maximum spacing [m]"),
        ("--factor", "factor", int, 5, "downsampling factor"),
    ],
    "synth": [
        ("--pairs", "pairs", int, 50, "number of pairs"),
        ("--event-rate", "event_rate", float, 0.02, "leader braking events per second"),
        ("--duration", "duration", float, 60.0, "pair duration [s]"),
        ("--dt", "dt", float, 0.2, "sampling interval [s]"),
        ("--meas-noise", "meas_noise", float, 0.02, "measurement noise std"),
    ],
    "fit": [
        ("--data", "data", str, None, "corpus directory"),
        ("--k", "k", str, "auto", "number of components or 'auto' (BIC)"),
        ("--k-min", "k_min", int, 2, "smallest K tried by BIC"),
        ("--k-max", "k_max", int, 10, "largest K tried by BIC"),
        ("--history", "history", int, 5, "history samples H"),
        ("--future", "future", int, 3, "future samples F"),
        ("--max-iter", "max_iter", int, 500, "EM iteration cap"),
        ("--out", "out", str, None, "model file (default OUT_DIR/model.gmm.json)"),
    ],
    "quantify": [
        ("--model", "model", str, None, "fitted model file"),
        ("--pair", "pair", str, None, "pair CSV or corpus directory"),
        ("--metric", "metric", str, "js", "js | w2"),
        ("--mc-samples", "mc_samples", int, 20000, "Monte-Carlo samples per timestep"),
        ("--out", "out", str, None, "CSV for a single pair (default OUT_DIR/intensity_<id>.csv)"),
    ],
    "sample": [
        ("--data", "data", str, None, "corpus directory"),
        ("--intensity", "intensity", str, None, "directory of intensity_<id>.csv files"),
        ("--fractions", "fractions", "floats", [0.03, 0.03, 0.06], "int non rand fractions"),
        ("--history", "history", int, 5, "history samples H of the model"),
        ("--plot-pair", "plot_pair", str, None, "pair id for the scatter plot (default first)"),
        ("--out", "out", str, None, "split file (default OUT_DIR/splits.json)"),
    ],
    "calibrate": [
        ("--data", "data", str, None, "corpus directory"),
        ("--splits", "splits", str, None, "split file from 'sample'"),
        ("--split", "split", str, "rand", "int | non | rand"),
        ("--prior", "prior", str, None, "prior box JSON"),
        ("--draws", "draws", int, 1500, "posterior draws kept"),
        ("--burn-in", "burn_in", int, 5000, "burn-in iterations"),
        ("--thin", "thin", int, 10, "thinning interval"),
        ("--out", "out", str, None, "posterior file (default OUT_DIR/posterior_<split>.json)"),
    ],
    "simulate": [
        ("--pair", "pair", str, None, "pair CSV"),
        ("--policy", "policy", str, "switch_soft", "int | non | rand | switch_hard | switch_soft"),
        ("--runs", "runs", int, 20, "simulation runs"),
        ("--posteriors", "posteriors", str, None, "directory with posterior_<name>.json"),
        ("--model", "model", str, None, "fitted model (switching policies)"),
        ("--switch-config", "switch_config", str, None, "switch config JSON"),
        ("--intensity", "intensity", str, None, "corpus intensity directory (automatic threshold)"),
        ("--mc-samples", "mc_samples", int, 1000, "Monte-Carlo samples per online evaluation"),
    ],
    "evaluate": [
        ("--data", "data", str, None, "corpus directory"),
        ("--posteriors", "posteriors", str, None, "directory with posterior_<name>.json"),
        ("--model", "model", str, None, "fitted model"),
        ("--switch-config", "switch_config", str, None, "switch config JSON"),
        ("--intensity", "intensity", str, None, "corpus intensity directory (automatic threshold)"),
        ("--policies", "policies", "strs", ["int", "non", "rand", "switch_hard", "switch_soft"],
         "policies to evaluate"),
        ("--runs", "runs", int, 20, "simulation runs per pair and policy"),
        ("--mc-samples", "mc_samples", int, 1000, "Monte-Carlo samples per online evaluation"),
    ],
    "plot": [
        ("--kind", "kind", str, "hist", "hist | profile | samples | sim"),
        ("--input", "input", "strs", None, "input CSV files or directories"),
        ("--pair", "pair", str, None, "pair CSV (samples, sim)"),
        ("--splits", "splits", str, None, "split file (samples)"),
        ("--bins", "bins", int, 40, "histogram bins"),
        ("--out", "out", str, None, "SVG file (default OUT_DIR/<kind>.svg)"),
    ],
}


def _add(parser, flag, dest, typ, help_, metavar=None):
    kw = dict(dest=dest, default=None, help=help_, metavar=metavar)
    if typ == "floats":
        parser.add_argument(flag, type=float, nargs="+", **kw)
    elif typ == "strs":
        parser.add_argument(flag, nargs="+", **kw)
    else:
        parser.add_argument(flag, type=typ, **kw)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cfswitch", description="Interaction-aware car-following toolkit")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--replay", metavar="MANIFEST", help="re-run the command recorded in a manifest")
    # global flags may also precede the subcommand; the subcommand's copy wins
    for flag, dest, typ, _, help_ in GLOBAL_OPTS:
        _add(p, flag, "top_" + dest, typ, help_, dest.upper())
    p.add_argument("--verbose", "-v", dest="top_verbose", action="store_true", default=None)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    for name, opts in OPTS.items():
        sp = sub.add_parser(name, help=f"{name} step")
        for flag, dest, typ, _, help_ in GLOBAL_OPTS + opts:
            _add(sp, flag, dest, typ, help_)
        sp.add_argument("--verbose", "-v", action="store_true", default=None)
    return p


def _load_config(path):
    if path is None:
        return {}
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    return raw


def resolve(command: str, ns: argparse.Namespace) -> dict:
    """Effective options: flag > config file (section, then top level) > default."""
    for dest in ("config", "seed", "out_dir", "verbose"):
        if getattr(ns, dest, None) is None:
            setattr(ns, dest, getattr(ns, "top_" + dest, None))
    cfg = _load_config(ns.config)
    section = cfg.get(command, {})
    if not isinstance(section, dict):
        raise ConfigError(f"config section {command!r} must be an object")
    out = {}
    for _, dest, _, default, _ in GLOBAL_OPTS + OPTS[command]:
        val = getattr(ns, dest)
        if val is None:
            val = section.get(dest, cfg.get(dest, default))
        out[dest] = val
    out["verbose"] = bool(ns.verbose or section.get("verbose", cfg.get("verbose", False)))
    return out


def to_argv(command: str, opts: dict) -> list[str]:
    argv = [command]
    for flag, dest, typ, _, _ in GLOBAL_OPTS + OPTS[command]:
        val = opts.get(dest)
        if val is None or dest == "config":
            continue
        if isinstance(val, (list, tuple)):
            argv += [flag, *map(str, val)]
        else:
            argv += [flag, repr(val) if isinstance(val, float) else str(val)]
    if opts.get("verbose"):
        argv.append("--verbose")
    return argv


def _require(opts, *names):
    for n in names:
        if opts.get(n) in (None, ""):
            raise UsageError(f"missing required option --{n.replace('_', '-')}")


def _exists(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"{what} not found: {p}")
    return p


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# ------------------------------------------------------------ subcommands

def cmd_ingest(o):
    from .ingest import HIGHD_SCHEMA, downsample, extract_pairs, parse_tracks, write_corpus
    _require(o, "tracks")
    tracks_path = _exists(o["tracks"], "tracks file")
    schema = dict(HIGHD_SCHEMA)
    inputs = [tracks_path]
    if o["schema"]:
        schema.update(_load_config(_exists(o["schema"], "schema file")))
        inputs.append(Path(o["schema"]))
    tracks = parse_tracks(tracks_path, schema)
    pairs = extract_pairs(tracks, o["min_duration"], o["max_gap"])
    pairs = [downsample(p, o["factor"]) for p in pairs]
    out = Path(o["out_dir"])
    man = write_corpus(pairs, out, f"tracks:{tracks_path.name}")
    log.info("extracted %d pairs", len(pairs))
    return inputs, [man] + [out / f"pair_{p.pair_id}.csv" for p in pairs]


def cmd_synth(o):
    from .ingest import synth_corpus, write_corpus
    pairs = synth_corpus(o["pairs"], o["seed"], o["event_rate"], duration=o["duration"],
                         dt=o["dt"], meas_noise=o["meas_noise"])
    out = Path(o["out_dir"])
    man = write_corpus(pairs, out, f"synthetic:seed={o['seed']}")
    return [], [man] + [out / f"pair_{p.pair_id}.csv" for p in pairs]


def cmd_fit(o):
    from .gmm import FeatureLayout, bic, build_dataset, fit_em, select_k
    from .ingest import load_corpus
    _require(o, "data")
    pairs = load_corpus(_exists(o["data"], "corpus directory"))
    layout = FeatureLayout.standard(o["history"], o["future"])
    X = build_dataset(pairs, layout)
    if len(X) == 0:
        raise DataError("corpus has no complete feature windows")
    if str(o["k"]) == "auto":
        _, model = select_k(X, (o["k_min"], o["k_max"]), seed=o["seed"], layout=layout,
                            max_iter=o["max_iter"])
    else:
        try:
            K = int(o["k"])
        except ValueError:
            raise UsageError(f"--k must be an integer or 'auto', got {o['k']!r}") from None
        model = fit_em(X, K, seed=o["seed"], max_iter=o["max_iter"], layout=layout)
        model.info["bic"] = bic(model, X)
    out = Path(o["out"] or Path(o["out_dir"]) / "model.gmm.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    model.save(out)
    log.info("fitted K=%d on %d rows", model.K, len(X))
    return [Path(o["data"]) / "corpus.json"], [out]


def _pair_files(path) -> list[Path]:
    p = _exists(path, "pair input")
    if p.is_dir():
        files = sorted(p.glob("pair_*.csv"))
        if not files:
            raise DataError(f"no pair files in {p}")
        return files
    return [p]


def cmd_quantify(o):
    from .gmm import Gmm
    from .ingest import load_corpus, read_pair
    from .interaction import IntensityModel, intensity_series
    _require(o, "model", "pair")
    if o["metric"] not in ("js", "w2"):
        raise UsageError("--metric must be js or w2")
    im = IntensityModel(Gmm.load(_exists(o["model"], "model file")))
    src = _exists(o["pair"], "pair input")
    pairs = load_corpus(src) if src.is_dir() else [read_pair(src)]
    outs = []
    for pair in pairs:
        series = intensity_series(im, pair, o["metric"], o["mc_samples"], o["seed"])
        if o["out"] and len(pairs) == 1:
            out = Path(o["out"])
        else:
            out = Path(o["out_dir"]) / f"intensity_{pair.pair_id}.csv"
        out.parent.mkdir(parents=True, exist_ok=True)
        series.to_csv(out)
        outs.append(out)
    return [Path(o["model"])] + _pair_files(src), outs


def _load_series(directory, pairs):
    from .interaction import IntensitySeries
    d = _exists(directory, "intensity directory")
    out = []
    for p in pairs:
        f = d / f"intensity_{p.pair_id}.csv"
        if not f.exists():
            raise ConfigError(f"intensity file not found: {f}")
        out.append(IntensitySeries.from_csv(f, p.pair_id))
    return out


def cmd_sample(o):
    from .calibration import split_corpus, splits_to_json
    from .ingest import load_corpus
    from .svg import sample_scatter
    _require(o, "data", "intensity")
    pairs = load_corpus(_exists(o["data"], "corpus directory"))
    series = _load_series(o["intensity"], pairs)
    fr = o["fractions"]
    if len(fr) != 3:
        raise UsageError("--fractions takes three numbers: int non rand")
    splits = split_corpus(pairs, series, tuple(fr), o["seed"])
    payload = splits_to_json(splits, o["history"], fr, o["seed"])
    out = Path(o["out"] or Path(o["out_dir"]) / "splits.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(payload, indent=1, sort_keys=True))
    pid = o["plot_pair"] or pairs[0].pair_id
    by_id = {p.pair_id: (p, s) for p, s in zip(pairs, series)}
    if pid not in by_id:
        raise ConfigError(f"unknown pair id {pid}")
    pair, s = by_id[pid]
    H = o["history"]
    sp = payload["pairs"][pid]
    idx = {k: np.asarray(sp[k], dtype=int) + H - 1 for k in ("interactive", "non_interactive", "random")}
    fig = sample_scatter(pair.t, pair.dx, idx, title=f"pair {pid}")
    svg = out.parent / f"samples_{pid}.svg"
    fig.save(svg)
    return [Path(o["data"]) / "corpus.json"] + [Path(o["intensity"]) / f"intensity_{p.pair_id}.csv" for p in pairs], [out, svg]


def cmd_calibrate(o):
    from .calibration import McmcConfig, calibrate, subset_from_splits
    from .idm import PriorBox
    from .ingest import load_corpus
    _require(o, "data", "splits")
    if o["split"] not in SPLITS:
        raise UsageError(f"--split must be one of {SPLITS}")
    pairs = load_corpus(_exists(o["data"], "corpus directory"))
    splits = _load_config(_exists(o["splits"], "split file"))
    prior = PriorBox.from_json(_exists(o["prior"], "prior file")) if o["prior"] else PriorBox()
    try:
        cfg = McmcConfig.for_draws(o["draws"], o["burn_in"], o["thin"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    prov = {"int": "interactive", "non": "non_interactive", "rand": "random"}[o["split"]]
    post = calibrate(subset_from_splits(pairs, splits, o["split"]), prior, seed=o["seed"],
                     provenance=prov, config=cfg)
    out = Path(o["out"] or Path(o["out_dir"]) / f"posterior_{o['split']}.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    post.to_json(out)
    if "warning" in post.metadata:
        log.warning(post.metadata["warning"])
    ins = [Path(o["data"]) / "corpus.json", Path(o["splits"])] + ([Path(o["prior"])] if o["prior"] else [])
    return ins, [out]


def _posteriors(directory, names):
    from .idm import IdmPosterior
    d = Path(directory) if directory else None
    out = {}
    for n in names:
        f = (d / f"posterior_{n}.json") if d else Path(f"posterior_{n}.json")
        if not f.exists():
            raise ConfigError(f"posterior file not found: {f}")
        out[n] = IdmPosterior.from_json(f)
    return out


def _needed(policies):
    names = set()
    for p in policies:
        names.update(("int", "non") if p.startswith("switch") else (p,))
    return sorted(names)


def _switch(o, pairs):
    from .switching import load_switch_config, switch_config_from_dict
    values = None
    if o["intensity"]:
        values = np.concatenate([s.values for s in _load_series(o["intensity"], pairs)])
    if o["switch_config"]:
        return load_switch_config(_exists(o["switch_config"], "switch config"), values)
    return switch_config_from_dict({}, values)


def cmd_simulate(o):
    from .gmm import Gmm
    from .ingest import read_pair
    from .interaction import IntensityModel
    from .sim import POLICIES, SimConfig, simulate, write_episode
    _require(o, "pair")
    if o["policy"] not in POLICIES:
        raise UsageError(f"--policy must be one of {POLICIES}")
    pair = read_pair(_exists(o["pair"], "pair file"))
    posts = _posteriors(o["posteriors"], _needed([o["policy"]]))
    model, sw = None, None
    if o["policy"].startswith("switch"):
        _require(o, "model")
        model = IntensityModel(Gmm.load(_exists(o["model"], "model file")))
        sw = _switch(o, [pair])
        from .switching import SwitchConfig
        sw = SwitchConfig(sw.i0, sw.beta, o["policy"].split("_")[1])
    cfg = SimConfig(o["policy"], o["runs"], o["seed"], o["mc_samples"], "js", sw)
    res = simulate(pair, posts, cfg, model)
    out = Path(o["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    outs = []
    for k, ep in enumerate(res.episodes):
        f = out / f"trace_{pair.pair_id}_{o['policy']}_run{k:03d}.csv"
        write_episode(ep, pair, f)
        outs.append(f)
    summary = out / f"summary_{pair.pair_id}_{o['policy']}.json"
    summary.write_text(json.dumps({**res.summary(), "switch": sw.to_dict() if sw else None,
                                   "rmse_dx": res.rmse_dx.tolist(),
                                   "rmse_safe": res.rmse_safe.tolist()}, indent=1, sort_keys=True))
    ins = [Path(o["pair"])] + [Path(o["posteriors"] or ".") / f"posterior_{n}.json" for n in posts]
    return ins, outs + [summary]


def cmd_evaluate(o):
    from .gmm import Gmm
    from .ingest import load_corpus
    from .interaction import IntensityModel
    from .sim import POLICIES, evaluate, format_table, write_results
    _require(o, "data")
    bad = [p for p in o["policies"] if p not in POLICIES]
    if bad:
        raise UsageError(f"unknown policies {bad}")
    posts = _posteriors(o["posteriors"], _needed(o["policies"]))
    pairs = load_corpus(_exists(o["data"], "corpus directory"))
    model, sw = None, None
    if any(p.startswith("switch") for p in o["policies"]):
        _require(o, "model")
        model = IntensityModel(Gmm.load(_exists(o["model"], "model file")))
        sw = _switch(o, pairs)
    results = evaluate(pairs, posts, o["policies"], o["runs"], o["seed"], sw, model,
                       o["mc_samples"])
    out = Path(o["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "results.csv"
    write_results(results, csv_path)
    txt = out / "results.txt"
    txt.write_text(format_table(results))
    sys.stdout.write(txt.read_text())
    ins = [Path(o["data"]) / "corpus.json"] + [Path(o["posteriors"] or ".") / f"posterior_{n}.json" for n in posts]
    return ins, [csv_path, txt]


def cmd_plot(o):
    from .ingest import read_pair
    from .interaction import IntensitySeries
    from .sim import read_episode
    from .svg import histogram, intensity_profile, sample_scatter, sim_panels
    _require(o, "input") if o["kind"] != "samples" else _require(o, "pair", "splits")
    out = Path(o["out"] or Path(o["out_dir"]) / f"{o['kind']}.svg")
    out.parent.mkdir(parents=True, exist_ok=True)
    ins = []
    if o["kind"] == "hist":
        files = []
        for item in o["input"]:
            p = _exists(item, "input")
            files += sorted(p.glob("intensity_*.csv")) if p.is_dir() else [p]
        if not files:
            raise DataError("no intensity files to plot")
        values = np.concatenate([IntensitySeries.from_csv(f).values for f in files])
        fig, _, _ = histogram(values, o["bins"], title=f"{len(values)} timesteps")
        ins = files
    elif o["kind"] == "profile":
        series = [IntensitySeries.from_csv(_exists(f, "input")) for f in o["input"]]
        first = series[0]
        others = {Path(f).stem: s.values for f, s in zip(o["input"][1:], series[1:])}
        fig = intensity_profile(first.t, first.values, title=Path(o["input"][0]).stem,
                                others=others or None)
        ins = [Path(f) for f in o["input"]]
    elif o["kind"] == "samples":
        pair = read_pair(_exists(o["pair"], "pair file"))
        splits = _load_config(_exists(o["splits"], "split file"))
        if pair.pair_id not in splits.get("pairs", {}):
            raise DataError(f"split file has no entry for pair {pair.pair_id}")
        H = int(splits["history"])
        sp = splits["pairs"][pair.pair_id]
        idx = {k: np.asarray(sp[k], dtype=int) + H - 1 for k in ("interactive", "non_interactive", "random")}
        fig = sample_scatter(pair.t, pair.dx, idx, title=f"pair {pair.pair_id}")
        ins = [Path(o["pair"]), Path(o["splits"])]
    elif o["kind"] == "sim":
        traces = [read_episode(_exists(f, "trace")) for f in o["input"]]
        first = traces[0]
        sims = {"simulated": [tr["x_sim"] for tr in traces]}
        x_h = None
        if o["pair"]:
            pair = read_pair(_exists(o["pair"], "pair file"))
            x_h = pair.x_foll[: len(first["t"])]
        fig = sim_panels(first["t"], first["x_lead"], sims, x_human=x_h,
                         intensity=first["intensity"], w_int=first["w_int"])
        ins = [Path(f) for f in o["input"]]
    else:
        raise UsageError("--kind must be hist, profile, samples or sim")
    fig.save(out)
    return ins, [out]


COMMANDS = {"ingest": cmd_ingest, "synth": cmd_synth, "fit": cmd_fit, "quantify": cmd_quantify,
            "sample": cmd_sample, "calibrate": cmd_calibrate, "simulate": cmd_simulate,
            "evaluate": cmd_evaluate, "plot": cmd_plot}


def _write_manifest(command, opts, inputs, outputs, wall):
    out_dir = Path(opts["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    import scipy
    manifest = {
        "subcommand": command,
        "argv": to_argv(command, opts),
        "config": {k: v for k, v in opts.items()},
        "seed": opts["seed"],
        "inputs": {str(p): _sha256(p) for p in inputs if Path(p).is_file()},
        "outputs": {str(p): _sha256(p) for p in outputs if Path(p).is_file()},
        "versions": {"cfswitch": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "wall_time_s": wall,
    }
    text = json.dumps(manifest, indent=1, sort_keys=True)
    (out_dir / "manifest.json").write_text(text)
    (out_dir / f"manifest.{command}.json").write_text(text)


def run(argv) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    if ns.replay:
        try:
            recorded = json.loads(Path(ns.replay).read_text())["argv"]
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            raise ConfigError(f"cannot replay {ns.replay}: {exc}") from exc
        return run(recorded)
    if not ns.command:
        parser.print_usage(sys.stderr)
        raise UsageError("a subcommand is required")
    opts = resolve(ns.command, ns)
    logging.basicConfig(level=logging.DEBUG if opts["verbose"] else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    t0 = time.perf_counter()
    inputs, outputs = COMMANDS[ns.command](opts)
    _write_manifest(ns.command, opts, inputs, outputs, round(time.perf_counter() - t0, 3))
    return EXIT_OK


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        return run(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except (DataError, ConfigError, FileNotFoundError, ValueError, KeyError) as exc:
        print(f"cfswitch: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"cfswitch: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except CfSwitchError as exc:
        print(f"cfswitch: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
