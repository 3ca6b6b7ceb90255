"""Trajectory ingestion: HighD-style CSV parsing, car-following pair
extraction, decimation, and a synthetic corpus generator.

Positions are re-based so that x grows along the direction of travel and
refers to the vehicle's front bumper; the bumper gap is then
``dx = x_lead - x_foll - leader_length``.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyCorpusError, ParseError, SchemaError
from .idm import ACCEL_MAX, ACCEL_MIN, IdmParams, idm_accel, integrate

log = logging.getLogger(__name__)

PAIR_COLUMNS = ("t", "x_lead", "v_lead", "a_lead", "x_foll", "v_foll", "a_foll", "dx", "dv")

# internal name -> HighD column name
HIGHD_SCHEMA = {
    "id": "id",
    "frame": "frame",
    "x": "x",
    "v": "xVelocity",
    "a": "xAcceleration",
    "lane": "laneId",
    "preceding": "precedingId",
    "length": "width",  # highD "width" is the bounding-box extent along x
}
MANDATORY = ("id", "frame", "x", "v", "a", "lane", "preceding")


@dataclass
class Track:
    """Contiguous per-vehicle samples, re-based to the travel direction."""
    vehicle_id: int
    frame: np.ndarray
    x: np.ndarray  # front bumper position along travel direction
    v: np.ndarray
    a: np.ndarray
    lane: np.ndarray
    preceding: np.ndarray
    length: float

    def __len__(self) -> int:
        return len(self.frame)


@dataclass
class TrajectoryPair:
    pair_id: str
    dt: float
    t: np.ndarray
    x_lead: np.ndarray
    v_lead: np.ndarray
    a_lead: np.ndarray
    x_foll: np.ndarray
    v_foll: np.ndarray
    a_foll: np.ndarray
    leader_length: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.t)
        for name in PAIR_COLUMNS[1:7]:
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise ValueError(f"pair {self.pair_id}: {name} has shape {arr.shape}, expected ({n},)")
            setattr(self, name, arr)
        self.t = np.asarray(self.t, dtype=float)

    def __len__(self) -> int:
        return len(self.t)

    @property
    def dx(self) -> np.ndarray:
        return self.x_lead - self.x_foll - self.leader_length

    @property
    def dv(self) -> np.ndarray:
        return self.v_lead - self.v_foll

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0]) if len(self) else 0.0

    def slice(self, start: int, stop: int, step: int = 1) -> "TrajectoryPair":
        sl = slice(start, stop, step)
        return TrajectoryPair(
            self.pair_id, self.dt * step, self.t[sl],
            self.x_lead[sl], self.v_lead[sl], self.a_lead[sl],
            self.x_foll[sl], self.v_foll[sl], self.a_foll[sl],
            self.leader_length, dict(self.meta),
        )


# ---------------------------------------------------------------- parsing

def parse_tracks(csv_path, schema: dict | None = None) -> list[Track]:
    """Read a per-frame track table into contiguous per-vehicle tracks.

    A vehicle whose frame sequence has a gap (including gaps left by rows with
    empty mandatory fields) is split into several tracks at the gap.
    """
    schema = {**HIGHD_SCHEMA, **(schema or {})}
    path = Path(csv_path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyCorpusError(f"{path} is empty") from None
        col = {name: i for i, name in enumerate(h.strip() for h in header)}
        for key in MANDATORY:
            if schema[key] not in col:
                raise SchemaError(schema[key])
        length_idx = col.get(schema["length"])

        rows: dict[int, list[tuple]] = {}
        for row in reader:
            lineno = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", lineno)
            raw = [row[col[schema[k]]].strip() for k in MANDATORY]
            try:
                vid = int(float(raw[0]))
            except ValueError:
                raise ParseError(f"bad vehicle id {raw[0]!r}", lineno) from None
            if any(r == "" for r in raw[1:]):
                log.warning("line %d: vehicle %d has empty mandatory fields, row dropped", lineno, vid)
                continue
            try:
                frame = int(float(raw[1]))
                x, v, a = float(raw[2]), float(raw[3]), float(raw[4])
                lane, prec = int(float(raw[5])), int(float(raw[6]))
                length = float(row[length_idx]) if length_idx is not None and row[length_idx].strip() else 0.0
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from None
            rows.setdefault(vid, []).append((frame, x, v, a, lane, prec, length))

    if not rows:
        raise EmptyCorpusError(f"{path} contains no data rows")

    tracks = []
    for vid in sorted(rows):
        arr = np.array(sorted(rows[vid]), dtype=float)
        frames = arr[:, 0].astype(int)
        length = float(np.median(arr[:, 6]))
        # re-base: travel direction positive, x at the front bumper
        if np.mean(arr[:, 2]) < 0:
            x = -arr[:, 1]
            v, a = -arr[:, 2], -arr[:, 3]
        else:
            x = arr[:, 1] + length
            v, a = arr[:, 2], arr[:, 3]
        breaks = np.flatnonzero(np.diff(frames) != 1) + 1
        for seg in np.split(np.arange(len(frames)), breaks):
            tracks.append(Track(vid, frames[seg], x[seg], v[seg], a[seg],
                                arr[seg, 4].astype(int), arr[seg, 5].astype(int), length))
    return tracks


def extract_pairs(tracks: list[Track], min_duration: float = 15.0, max_gap: float = 120.0,
                  dt: float = 1 / 25) -> list[TrajectoryPair]:
    """Cut maximal single-leader, same-lane, 0 < dx <= max_gap episodes."""
    by_frame: dict[tuple[int, int], tuple[Track, int]] = {}
    for tr in tracks:
        for i, f in enumerate(tr.frame):
            by_frame[(tr.vehicle_id, int(f))] = (tr, i)

    pairs = []
    for foll in tracks:
        run: list[tuple[int, Track, int]] = []  # (follower idx, leader track, leader idx)

        def flush():
            if len(run) >= 2 and (len(run) - 1) * dt >= min_duration - 1e-9:
                pairs.append(_make_pair(foll, run, dt))
            run.clear()

        for i, f in enumerate(foll.frame):
            lid = int(foll.preceding[i])
            hit = by_frame.get((lid, int(f))) if lid > 0 else None
            ok = False
            if hit is not None:
                lead, j = hit
                gap = lead.x[j] - foll.x[i] - lead.length
                ok = lead.lane[j] == foll.lane[i] and 0 < gap <= max_gap
            if ok and run:
                prev_i, prev_lead, _ = run[-1]
                if prev_lead is not lead or foll.lane[prev_i] != foll.lane[i]:
                    flush()
            if ok:
                run.append((i, lead, j))
            else:
                flush()
        flush()
    return pairs


def _make_pair(foll: Track, run, dt: float) -> TrajectoryPair:
    fi = np.array([r[0] for r in run])
    lead = run[0][1]
    lj = np.array([r[2] for r in run])
    t = (foll.frame[fi] - foll.frame[fi[0]]) * dt
    pid = f"{foll.vehicle_id}_{lead.vehicle_id}_{int(foll.frame[fi[0]])}"
    return TrajectoryPair(pid, dt, t, lead.x[lj], lead.v[lj], lead.a[lj],
                          foll.x[fi], foll.v[fi], foll.a[fi], lead.length,
                          {"follower": foll.vehicle_id, "leader": lead.vehicle_id})


def downsample(pair: TrajectoryPair, factor: int) -> TrajectoryPair:
    """Decimate: keep every ``factor``-th sample starting at index 0, no filtering."""
    if not isinstance(factor, (int, np.integer)) or factor < 1:
        raise ValueError(f"downsample factor must be a positive integer, got {factor!r}")
    return pair.slice(0, len(pair), int(factor))


# ------------------------------------------------------------- pair files

def write_pair(pair: TrajectoryPair, path) -> None:
    cols = np.column_stack([pair.t, pair.x_lead, pair.v_lead, pair.a_lead,
                            pair.x_foll, pair.v_foll, pair.a_foll, pair.dx, pair.dv])
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PAIR_COLUMNS)
        for row in cols:
            w.writerow([repr(float(c)) for c in row])


def read_pair(path, pair_id: str | None = None) -> TrajectoryPair:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyCorpusError(f"{path} is empty") from None
        missing = [c for c in PAIR_COLUMNS if c not in header]
        if missing:
            raise SchemaError(missing[0])
        idx = [header.index(c) for c in PAIR_COLUMNS]
        data = []
        for row in reader:
            if not row:
                continue
            try:
                data.append([float(row[i]) for i in idx])
            except (ValueError, IndexError) as exc:
                raise ParseError(str(exc), reader.line_num) from None
    if not data:
        raise EmptyCorpusError(f"{path} has no samples")
    d = np.array(data)
    t = d[:, 0]
    dt = float(np.median(np.diff(t))) if len(t) > 1 else 0.0
    length = float(np.median(d[:, 1] - d[:, 4] - d[:, 7]))
    if pair_id is None:
        pair_id = path.stem[5:] if path.stem.startswith("pair_") else path.stem
    return TrajectoryPair(pair_id, round(dt, 12), t, d[:, 1], d[:, 2], d[:, 3],
                          d[:, 4], d[:, 5], d[:, 6], length)


def write_corpus(pairs: list[TrajectoryPair], out_dir, source: str) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ids = [p.pair_id for p in pairs]
    if len(set(ids)) != len(ids):
        raise ValueError("pair ids must be unique")
    for p in pairs:
        write_pair(p, out / f"pair_{p.pair_id}.csv")
    manifest = {
        "source": source,
        "dt": pairs[0].dt if pairs else None,
        "pairs": [{"pair_id": p.pair_id, "length": len(p), "file": f"pair_{p.pair_id}.csv",
                   "meta": p.meta} for p in pairs],
    }
    path = out / "corpus.json"
    path.write_text(json.dumps(manifest, indent=1))
    return path


def load_corpus(data_dir) -> list[TrajectoryPair]:
    d = Path(data_dir)
    man = d / "corpus.json"
    if man.exists():
        try:
            entries = json.loads(man.read_text())["pairs"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ParseError(f"bad corpus manifest {man}: {exc}") from exc
        pairs = []
        for e in entries:
            pair = read_pair(d / e["file"], e["pair_id"])
            pair.meta = dict(e.get("meta", {}))
            pairs.append(pair)
    else:
        pairs = [read_pair(p) for p in sorted(d.glob("pair_*.csv"))]
    if not pairs:
        raise EmptyCorpusError(f"no pair files in {d}")
    return pairs


# ------------------------------------------------------------ synthetic data

@dataclass(frozen=True)
class BrakeEvent:
    onset: float  # s
    decel: float  # m/s^2, positive
    duration: float  # s of braking
    hold: float = 0.0  # s at the reduced speed
    accel: float = 1.0  # m/s^2 recovery towards cruise speed


def leader_profile(duration: float, dt: float, v_cruise: float, events=(), x0: float = 0.0,
                   wander: float = 0.0, rng: np.random.Generator | None = None,
                   wander_tau: float = 4.0):
    """Replayable leader: cruise, then brake/hold/recover for each event.

    A later event interrupts whatever phase the previous one was in. While
    cruising, ``wander`` > 0 adds a mean-reverting acceleration (stationary
    std ``wander`` m/s^2, correlation time ``wander_tau``) pulled back towards
    ``v_cruise``. Returns (t, x, v, a) sampled at ``dt``; ``a[k]`` drives the
    step k -> k+1.
    """
    if wander > 0 and rng is None:
        raise ValueError("speed wander needs an rng")
    rho = math.exp(-dt / wander_tau)
    ou = 0.0
    n = int(round(duration / dt)) + 1
    t = np.arange(n) * dt
    x = np.empty(n)
    v = np.empty(n)
    a = np.zeros(n)
    x[0], v[0] = x0, v_cruise
    events = sorted(events, key=lambda e: e.onset)
    k = -1
    cruising = True
    for i in range(n):
        while k + 1 < len(events) and events[k + 1].onset <= t[i] + 1e-9:
            k += 1
            cruising = False
        if not cruising:
            e = events[k]
            tau = t[i] - e.onset
            if tau < e.duration and v[i] > 0:
                a[i] = -e.decel
            elif tau < e.duration + e.hold:
                a[i] = 0.0
            elif v[i] < v_cruise - 1e-9:
                a[i] = min(e.accel, (v_cruise - v[i]) / dt)
            else:
                cruising = True
        if wander > 0:
            ou = rho * ou + math.sqrt(1.0 - rho * rho) * wander * rng.standard_normal()
        if cruising:
            a[i] = ou + 0.1 * (v_cruise - v[i]) if wander > 0 else 0.0
        a[i] = max(a[i], -v[i] / dt)  # stop exactly at zero speed
        if i + 1 < n:
            x[i + 1], v[i + 1] = integrate(x[i], v[i], a[i], dt)
    return t, x, v, a


@dataclass(frozen=True)
class AlertRegime:
    """Second follower regime used while the leader brakes hard.

    Humans in the synthetic corpus follow with ``base`` IDM parameters and
    switch to a more cautious parameter set for ``hold`` seconds after the
    leader's deceleration exceeds ``trigger``.
    """
    trigger: float = 1.5  # m/s^2 leader deceleration
    hold: float = 4.0  # s
    T_factor: float = 1.8
    s0_extra: float = 2.0
    b_factor: float = 0.6


def follow(params: IdmParams, t, x_lead, v_lead, a_lead, x0: float, v0: float, dt: float,
           leader_length: float, alert: AlertRegime | None = None, accel_noise: float = 0.0,
           rng: np.random.Generator | None = None):
    """Generate a ground-truth follower response (optionally two-regime)."""
    n = len(t)
    x = np.empty(n)
    v = np.empty(n)
    a = np.zeros(n)
    mode = np.zeros(n, dtype=bool)
    x[0], v[0] = x0, v0
    cautious = None
    if alert is not None:
        cautious = IdmParams(params.v0, params.T * alert.T_factor, params.s0 + alert.s0_extra,
                             params.a_max, params.b * alert.b_factor)
    alert_until = -np.inf
    noise = 0.0
    for i in range(n):
        if alert is not None and a_lead[i] <= -alert.trigger:
            alert_until = t[i] + alert.hold
        mode[i] = t[i] < alert_until
        p = cautious if mode[i] else params
        gap = x_lead[i] - x[i] - leader_length
        acc = idm_accel(p, v[i], v[i] - v_lead[i], gap)
        if accel_noise > 0:
            noise = 0.9 * noise + math.sqrt(1 - 0.81) * accel_noise * rng.standard_normal()
            acc += noise
        a[i] = min(max(acc, ACCEL_MIN), ACCEL_MAX)
        if i + 1 < n:
            x[i + 1], v[i + 1] = integrate(x[i], v[i], a[i], dt)
    return x, v, a, mode


GROUND_TRUTH = IdmParams(v0=33.0, T=1.2, s0=2.0, a_max=1.2, b=2.0)


def synth_corpus(n_pairs: int, seed: int, event_rate: float, duration: float = 60.0,
                 dt: float = 0.2, base: IdmParams = GROUND_TRUTH, jitter: float = 0.1,
                 alert: AlertRegime | None = AlertRegime(), meas_noise: float = 0.02,
                 accel_noise: float = 0.0, leader_wander: float = 0.3,
                 speed_range: tuple[float, float] = (15.0, 25.0)) -> list[TrajectoryPair]:
    """Synthetic car-following corpus.

    Leaders cruise at a speed drawn from ``speed_range``, wandering in speed (``leader_wander`` m/s^2), and brake at
    Poisson-spaced events (``event_rate`` per second); followers are ground-truth IDM drivers with per-pair
    multiplicative parameter jitter. ``meas_noise`` adds Gaussian noise of
    that standard deviation (m, m/s, m/s^2) to the recorded signals only.
    Deterministic given ``seed``; pair ``i`` depends only on (seed, i).
    """
    pairs = []
    for i in range(n_pairs):
        rng = np.random.default_rng([seed, i])
        pairs.append(_synth_pair(str(i), rng, event_rate, duration, dt, base, jitter, alert,
                                 meas_noise, accel_noise, leader_wander, speed_range))
    return pairs


def draw_events(rng: np.random.Generator, event_rate: float, duration: float) -> list[BrakeEvent]:
    events = []
    if event_rate <= 0:
        return events
    t = rng.exponential(1.0 / event_rate)
    while t < duration:
        events.append(BrakeEvent(onset=round(t, 6), decel=rng.uniform(2.0, 6.0),
                                 duration=rng.uniform(1.0, 3.0), hold=rng.uniform(0.0, 3.0),
                                 accel=rng.uniform(0.8, 2.0)))
        t += rng.exponential(1.0 / event_rate)
    return events


def _synth_pair(pid, rng, event_rate, duration, dt, base, jitter, alert, meas_noise, accel_noise,
                leader_wander, speed_range):
    v_cruise = rng.uniform(*speed_range)
    events = draw_events(rng, event_rate, duration)
    scale = np.exp(jitter * rng.standard_normal(5)) if jitter > 0 else np.ones(5)
    params = IdmParams.from_array(base.as_array() * scale)
    leader_length = rng.uniform(4.0, 5.0)
    v_f0 = v_cruise * rng.uniform(0.95, 1.05)
    gap0 = params.equilibrium_gap(min(v_f0, 0.95 * params.v0)) * rng.uniform(0.9, 1.2)
    t, x_l, v_l, a_l = leader_profile(duration, dt, v_cruise, events, x0=gap0 + leader_length,
                                      wander=leader_wander, rng=rng)
    x_f, v_f, a_f, mode = follow(params, t, x_l, v_l, a_l, 0.0, v_f0, dt, leader_length,
                                 alert, accel_noise, rng)
    if meas_noise > 0:
        sig = meas_noise
        x_l = x_l + sig * rng.standard_normal(len(t))
        x_f = x_f + sig * rng.standard_normal(len(t))
        v_l = np.maximum(0.0, v_l + sig * rng.standard_normal(len(t)))
        v_f = np.maximum(0.0, v_f + sig * rng.standard_normal(len(t)))
        a_l = a_l + sig * rng.standard_normal(len(t))
        a_f = a_f + sig * rng.standard_normal(len(t))
    meta = {"params": params.as_array().tolist(), "events": [e.onset for e in events],
            "alert_fraction": float(mode.mean()), "v_cruise": v_cruise}
    return TrajectoryPair(pid, dt, t, x_l, v_l, a_l, x_f, v_f, a_f, leader_length, meta)
