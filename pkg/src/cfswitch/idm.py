"""Intelligent Driver Model (Treiber, Hennecke & Helbing 2000) and its integrator.

Sign convention: the IDM uses the approach rate ``dv_app = v_foll - v_lead``,
the opposite of the ``dv = v_lead - v_foll`` stored in trajectory pairs.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CollisionError, ConfigError

DELTA = 4.0
ACCEL_MIN = -9.0
ACCEL_MAX = 5.0
PARAM_NAMES = ("v0", "T", "s0", "a_max", "b")


@dataclass(frozen=True)
class IdmParams:
    v0: float = 30.0  # desired speed [m/s]
    T: float = 1.5  # desired time headway [s]
    s0: float = 2.0  # jam spacing [m]
    a_max: float = 1.0  # maximum acceleration [m/s^2]
    b: float = 1.5  # comfortable deceleration [m/s^2]
    delta: float = DELTA

    def __post_init__(self):
        for name in PARAM_NAMES:
            if not getattr(self, name) > 0:
                raise ValueError(f"IDM parameter {name} must be > 0, got {getattr(self, name)}")
        if self.delta != DELTA:
            raise ValueError("IDM exponent is fixed at 4")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in PARAM_NAMES])

    @classmethod
    def from_array(cls, values) -> "IdmParams":
        return cls(*(float(v) for v in values))

    def desired_gap(self, v: float, dv_app: float) -> float:
        return self.s0 + max(0.0, v * self.T + v * dv_app / (2.0 * math.sqrt(self.a_max * self.b)))

    def equilibrium_gap(self, v: float) -> float:
        """Gap at which a follower at constant speed ``v < v0`` has zero acceleration."""
        return (self.s0 + v * self.T) / math.sqrt(1.0 - (v / self.v0) ** DELTA)


def idm_accel(p: IdmParams, v: float, dv_app: float, s: float) -> float:
    """IDM acceleration for speed ``v``, approach rate ``dv_app`` and bumper gap ``s``."""
    if not s > 0:
        raise CollisionError(f"non-positive gap s={s}")
    s_star = p.desired_gap(v, dv_app)
    return p.a_max * (1.0 - (v / p.v0) ** DELTA - (s_star / s) ** 2)


def idm_accel_array(theta: np.ndarray, v, dv_app, s) -> np.ndarray:
    """Vectorised IDM acceleration.

    ``theta`` holds (v0, T, s0, a_max, b) along its last axis and broadcasts
    against the state arrays. No collision checking; callers guarantee s > 0.
    """
    theta = np.asarray(theta, dtype=float)
    v0, T, s0, a_max, b = (theta[..., i] for i in range(5))
    s_star = s0 + np.maximum(0.0, v * T + v * dv_app / (2.0 * np.sqrt(a_max * b)))
    return a_max * (1.0 - (v / v0) ** DELTA - (s_star / s) ** 2)


def integrate(x, v, a, dt):
    """One semi-implicit Euler step with the no-reversing rule.

    Works elementwise on arrays.
    """
    a = np.clip(a, ACCEL_MIN, ACCEL_MAX)
    v_next = np.maximum(0.0, v + a * dt)
    x_next = x + 0.5 * (v + v_next) * dt
    if np.ndim(x_next) == 0:
        return float(x_next), float(v_next)
    return x_next, v_next


def step(p: IdmParams, state, leader, dt: float, leader_length: float = 0.0):
    """Advance the follower one step behind a leader.

    ``state`` is (x_foll, v_foll), ``leader`` is (x_lead, v_lead) with x_lead the
    leader's front position; the bumper gap subtracts ``leader_length``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    x, v = state
    x_lead, v_lead = leader
    gap = x_lead - x - leader_length
    if not gap > 0:
        raise CollisionError(f"gap {gap:.3f} m before stepping")
    a = idm_accel(p, v, v - v_lead, gap)
    return integrate(x, v, a, dt)


def simulate_follower(p: IdmParams, x_lead, v_lead, x0: float, v0: float, dt: float,
                      leader_length: float = 0.0):
    """Roll an IDM follower behind a replayed leader.

    Returns (x, v, a, collided); arrays stop at the collision step if one occurs.
    """
    n = len(x_lead)
    x = np.empty(n)
    v = np.empty(n)
    a = np.zeros(n)
    x[0], v[0] = x0, v0
    for t in range(n - 1):
        gap = x_lead[t] - x[t] - leader_length
        if gap <= 0:
            return x[: t + 1], v[: t + 1], a[: t + 1], True
        a[t] = float(np.clip(idm_accel(p, v[t], v[t] - v_lead[t], gap), ACCEL_MIN, ACCEL_MAX))
        x[t + 1], v[t + 1] = integrate(x[t], v[t], a[t], dt)
    gap = x_lead[-1] - x[-1] - leader_length
    if gap <= 0:
        return x, v, a, True
    a[-1] = float(np.clip(idm_accel(p, v[-1], v[-1] - v_lead[-1], gap), ACCEL_MIN, ACCEL_MAX))
    return x, v, a, False


@dataclass(frozen=True)
class PriorBox:
    """Independent uniform prior bounds for the five IDM parameters (SI units)."""
    v0: tuple[float, float] = (20.0, 45.0)
    T: tuple[float, float] = (0.5, 3.0)
    s0: tuple[float, float] = (0.5, 6.0)
    a_max: tuple[float, float] = (0.3, 3.0)
    b: tuple[float, float] = (0.5, 4.0)

    def __post_init__(self):
        for name in PARAM_NAMES:
            lo, hi = getattr(self, name)
            if not (0 < lo <= hi):
                raise ConfigError(f"prior box for {name} must satisfy 0 < lo <= hi, got {(lo, hi)}")

    @property
    def lower(self) -> np.ndarray:
        return np.array([getattr(self, n)[0] for n in PARAM_NAMES], dtype=float)

    @property
    def upper(self) -> np.ndarray:
        return np.array([getattr(self, n)[1] for n in PARAM_NAMES], dtype=float)

    def contains(self, theta) -> bool:
        theta = np.asarray(theta)
        return bool(np.all(theta >= self.lower) and np.all(theta <= self.upper))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.lower + rng.random((n, 5)) * (self.upper - self.lower)

    @classmethod
    def point(cls, p: IdmParams) -> "PriorBox":
        return cls(**{n: (getattr(p, n), getattr(p, n)) for n in PARAM_NAMES})

    @classmethod
    def from_json(cls, path) -> "PriorBox":
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read prior config {path}: {exc}") from exc
        unknown = set(raw) - set(PARAM_NAMES)
        if unknown:
            raise ConfigError(f"unknown prior keys {sorted(unknown)}")
        return cls(**{k: tuple(v) for k, v in raw.items()})


@dataclass
class IdmPosterior:
    """A bag of posterior IDM draws; sampling a policy means picking one draw."""
    draws: np.ndarray  # (n_draws, 5) in PARAM_NAMES order
    sigma_obs: np.ndarray  # (n_draws,) spacing noise [m]
    provenance: str = "random"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.draws = np.atleast_2d(np.asarray(self.draws, dtype=float))
        self.sigma_obs = np.asarray(self.sigma_obs, dtype=float).reshape(-1)
        if self.draws.shape[0] == 0 or self.draws.shape[1] != 5:
            raise ValueError("posterior needs a nonempty (n, 5) draw array")
        if np.any(self.draws <= 0):
            raise ValueError("posterior draws must be strictly positive")

    def __len__(self) -> int:
        return self.draws.shape[0]

    def params(self, i: int) -> IdmParams:
        return IdmParams.from_array(self.draws[i])

    def mean(self) -> IdmParams:
        return IdmParams.from_array(self.draws.mean(axis=0))

    def pick(self, rng: np.random.Generator) -> IdmParams:
        return self.params(int(rng.integers(len(self))))

    @classmethod
    def point(cls, p: IdmParams, provenance: str = "random") -> "IdmPosterior":
        return cls(p.as_array()[None, :], np.zeros(1), provenance)

    def to_json(self, path) -> None:
        records = [dict(zip(PARAM_NAMES, map(float, row)), sigma_obs=float(s))
                   for row, s in zip(self.draws, self.sigma_obs)]
        payload = {"provenance": self.provenance, "metadata": self.metadata, "draws": records}
        Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True))

    @classmethod
    def from_json(cls, path) -> "IdmPosterior":
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read posterior file {path}: {exc}") from exc
        records = raw["draws"] if isinstance(raw, dict) else raw
        draws = np.array([[r[n] for n in PARAM_NAMES] for r in records])
        sigma = np.array([r.get("sigma_obs", 0.0) for r in records])
        meta = raw.get("metadata", {}) if isinstance(raw, dict) else {}
        prov = raw.get("provenance", "random") if isinstance(raw, dict) else "random"
        return cls(draws, sigma, prov, meta)

