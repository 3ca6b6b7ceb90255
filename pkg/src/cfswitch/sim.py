"""Closed-loop simulation of a controlled follower behind a replayed leader."""
from __future__ import annotations

import csv
import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError
from .idm import ACCEL_MAX, ACCEL_MIN, idm_accel, integrate
from .switching import SwitchConfig, blended_accel, hard_switch, soft_switch

POLICIES = ("int", "non", "rand", "switch_hard", "switch_soft")
_DRAW_STREAM = {"int": 0, "non": 1, "rand": 2}
RESULT_COLUMNS = ("pair_id", "policy", "rmse_dx_mean", "rmse_dx_std", "rmse_safe_mean",
                  "rmse_safe_std", "collisions")


@dataclass(frozen=True)
class SimConfig:
    policy: str = "switch_soft"
    n_runs: int = 20
    seed: int = 0
    mc_samples: int = 1000  # Monte-Carlo draws per online intensity evaluation
    metric: str = "js"
    switch: SwitchConfig | None = None
    record_intensity: bool = False  # also track intensity for non-switching policies

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ValueError(f"policy must be one of {POLICIES}, got {self.policy!r}")
        if self.n_runs < 1:
            raise ValueError("n_runs must be >= 1")
        if self.policy.startswith("switch") and self.switch is None:
            raise ValueError(f"policy {self.policy} needs a switch config")

    @property
    def switching(self) -> bool:
        return self.policy.startswith("switch")


@dataclass
class Episode:
    x: np.ndarray
    v: np.ndarray
    a: np.ndarray
    dx: np.ndarray  # simulated bumper gap
    intensity: np.ndarray  # NaN where not evaluated
    w_int: np.ndarray  # NaN for non-switching policies
    collided: bool
    params: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.x)


def pair_key(pair_id: str) -> int:
    return zlib.crc32(str(pair_id).encode())


def run_seed(seed: int, pair_id: str, run: int) -> list[int]:
    return [int(seed), pair_key(pair_id), int(run)]


def realize(policy: str, posteriors: dict, seed: int, pair_id: str, run: int) -> dict:
    """Pick one posterior draw per sub-policy for a run.

    The draw for a sub-policy depends only on (seed, pair, run, sub-policy),
    so a switching run shares its draws with the plain int/non runs.
    """
    names = ("int", "non") if policy.startswith("switch") else (policy,)
    out = {}
    for name in names:
        if name not in posteriors:
            raise ConfigError(f"policy {policy} needs the {name} posterior")
        rng = np.random.default_rng(run_seed(seed, pair_id, run) + [_DRAW_STREAM[name]])
        out[name] = posteriors[name].pick(rng)
    return out


def _window(a, v, dv, dx, a_pad: float, t: int, H: int):
    """Blocks (a_hist, v_foll, dv, dx) over samples t-H .. t-1.

    Samples before 0 repeat the initial state with acceleration ``a_pad``.
    """
    idx = np.arange(t - H, t)
    pre = idx < 0
    idx = np.clip(idx, 0, None)
    a_w = np.where(pre, a_pad, a[idx])
    return a_w, v[idx], dv[idx], dx[idx]


def run_episode(pair, policy: dict, cfg: SimConfig, model=None, run: int = 0) -> Episode:
    """Simulate one run.

    ``policy`` maps sub-policy names to IdmParams (see ``realize``). ``model``
    is an IntensityModel, required for switching or when recording intensity.
    At step t the intensity uses the simulated follower's window t-H .. t-1;
    before t = H the window is padded with the initial state, whose
    acceleration is the human follower's at t = 0.
    """
    n = len(pair)
    L = pair.leader_length
    need_intensity = cfg.switching or cfg.record_intensity
    if need_intensity and model is None:
        raise ValueError("an intensity model is required for this policy")
    H = model.layout.history if model is not None else 0
    if need_intensity and n < H + model.layout.future:
        raise ValueError(f"pair {pair.pair_id} is shorter than one feature window")
    x = np.full(n, np.nan)
    v = np.full(n, np.nan)
    a = np.full(n, np.nan)
    dxs = np.full(n, np.nan)
    dvs = np.full(n, np.nan)
    inten = np.full(n, np.nan)
    w = np.full(n, np.nan)
    x[0], v[0] = pair.x_foll[0], pair.v_foll[0]
    a_pad = float(pair.a_foll[0])
    mc_seed = run_seed(cfg.seed, pair.pair_id, run) + [99]
    base = int(np.random.SeedSequence(mc_seed).generate_state(1)[0])
    collided = False
    last = n - 1
    p_main = policy.get("non") if cfg.switching else policy[cfg.policy]
    p_int = policy.get("int")
    for t in range(n):
        gap = pair.x_lead[t] - x[t] - L
        dxs[t] = gap
        dvs[t] = pair.v_lead[t] - v[t]
        if not gap > 0:
            collided = True
            last = t
            break
        if need_intensity:
            row = model.observed_row(*_window(a, v, dvs, dxs, a_pad, t, H))
            inten[t] = model.evaluate(row[None, :], cfg.metric, cfg.mc_samples, base,
                                      index_offset=t)[0]
        dv_app = v[t] - pair.v_lead[t]
        if cfg.switching:
            switch = hard_switch if cfg.policy == "switch_hard" else soft_switch
            blend = switch(inten[t], cfg.switch)
            w[t] = blend.w_int
            a_non = idm_accel(p_main, v[t], dv_app, gap) if blend.w_int < 1 else 0.0
            a_int = idm_accel(p_int, v[t], dv_app, gap) if blend.w_int > 0 else 0.0
            acc = blended_accel(blend, a_int, a_non)
        else:
            acc = idm_accel(p_main, v[t], dv_app, gap)
        a[t] = min(max(acc, ACCEL_MIN), ACCEL_MAX)
        if t + 1 < n:
            x[t + 1], v[t + 1] = integrate(x[t], v[t], a[t], pair.dt)
    keep = slice(0, last + 1)
    params = {k: p.as_array().tolist() for k, p in policy.items()}
    return Episode(x[keep], v[keep], a[keep], dxs[keep], inten[keep], w[keep], collided, params)


def _overlap(ep: Episode, pair):
    m = len(ep)
    if ep.collided:
        m -= 1  # the colliding sample carries a non-positive gap
    if m <= 0:
        raise ValueError("no overlapping samples to score")
    return ep.dx[:m], pair.dx[:m]


def rmse_dx(ep: Episode, pair) -> float:
    sim, hum = _overlap(ep, pair)
    return float(np.sqrt(np.mean((sim - hum) ** 2)))


def rmse_safe(ep: Episode, pair) -> float:
    sim, hum = _overlap(ep, pair)
    return float(np.sqrt(np.mean(np.maximum(0.0, hum - sim) ** 2)))


@dataclass
class SimResult:
    pair_id: str
    policy: str
    episodes: list
    rmse_dx: np.ndarray
    rmse_safe: np.ndarray

    @property
    def collisions(self) -> int:
        return int(sum(ep.collided for ep in self.episodes))

    def summary(self) -> dict:
        return {"pair_id": self.pair_id, "policy": self.policy,
                "rmse_dx_mean": float(np.mean(self.rmse_dx)),
                "rmse_dx_std": float(np.std(self.rmse_dx)),
                "rmse_safe_mean": float(np.mean(self.rmse_safe)),
                "rmse_safe_std": float(np.std(self.rmse_safe)),
                "collisions": self.collisions}

    def mean_gap(self) -> float:
        return float(np.mean([np.mean(ep.dx[ep.dx > 0]) for ep in self.episodes]))


def simulate(pair, posteriors: dict, cfg: SimConfig, model=None) -> SimResult:
    eps = []
    for run in range(cfg.n_runs):
        pol = realize(cfg.policy, posteriors, cfg.seed, pair.pair_id, run)
        eps.append(run_episode(pair, pol, cfg, model, run))
    return SimResult(pair.pair_id, cfg.policy, eps,
                     np.array([rmse_dx(e, pair) for e in eps]),
                     np.array([rmse_safe(e, pair) for e in eps]))


def evaluate(pairs: Sequence, posteriors: dict, policies: Sequence[str] = POLICIES,
             n_runs: int = 20, seed: int = 0, switch: SwitchConfig | None = None,
             model=None, mc_samples: int = 1000, metric: str = "js") -> list[SimResult]:
    """Every policy on every pair; ``switch.mode`` is overridden per policy."""
    for name in ("int", "non", "rand"):
        needed = any(p == name or (p.startswith("switch") and name != "rand") for p in policies)
        if needed and name not in posteriors:
            raise ConfigError(f"missing posterior for policy {name}")
    results = []
    for pair in pairs:
        for pol in policies:
            sw = None
            if pol.startswith("switch"):
                if switch is None:
                    raise ConfigError("switching policies need a switch config")
                sw = SwitchConfig(switch.i0, switch.beta, pol.split("_")[1])
            cfg = SimConfig(pol, n_runs, seed, mc_samples, metric, sw)
            results.append(simulate(pair, posteriors, cfg, model))
    return results


def write_results(results: Sequence[SimResult], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in results:
            row = r.summary()
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def read_results(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for k in RESULT_COLUMNS[2:6]:
            r[k] = float(r[k])
        r["collisions"] = int(r["collisions"])
    return rows


def format_table(results: Sequence[SimResult]) -> str:
    """Text table of mean +- std; '*' marks the per-pair minimum mean of each metric."""
    rows = [r.summary() for r in results]
    best = {}
    for r in rows:
        for m in ("rmse_dx_mean", "rmse_safe_mean"):
            key = (r["pair_id"], m)
            best[key] = min(best.get(key, math.inf), r[m])
    lines = [f"{'pair':>10} {'policy':>12} {'RMSE(dx)':>16} {'RMSE(safe)':>16} {'coll':>5}"]
    for r in rows:
        cells = []
        for m, s in (("rmse_dx_mean", "rmse_dx_std"), ("rmse_safe_mean", "rmse_safe_std")):
            mark = "*" if r[m] == best[(r["pair_id"], m)] else " "
            cells.append(f"{r[m]:7.3f}+-{r[s]:5.3f}{mark}")
        lines.append(f"{r['pair_id']:>10} {r['policy']:>12} {cells[0]:>16} {cells[1]:>16} "
                     f"{r['collisions']:>5d}")
    return "\n".join(lines) + "\n"


def write_episode(ep: Episode, pair, path) -> None:
    """Per-step trace of one run (leader replay alongside the simulated follower)."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "x_lead", "v_lead", "x_sim", "v_sim", "a_sim", "dx_sim", "dx_human",
                    "intensity", "w_int"])
        for k in range(len(ep)):
            w.writerow([repr(float(val)) for val in (
                pair.t[k], pair.x_lead[k], pair.v_lead[k], ep.x[k], ep.v[k], ep.a[k], ep.dx[k],
                pair.dx[k], ep.intensity[k], ep.w_int[k])])


def read_episode(path) -> dict:
    data = np.genfromtxt(path, delimiter=",", names=True)
    if data.size == 0:
        raise ValueError(f"{path} has no rows")
    return {name: np.atleast_1d(data[name]) for name in data.dtype.names}
