"""Hard and soft switching between the interactive and non-interactive policies."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError

MODES = ("hard", "soft")
DEFAULT_QUANTILE = 0.85
BETA_FRACTION = 0.1  # default beta = BETA_FRACTION * I0


@dataclass(frozen=True)
class SwitchConfig:
    i0: float
    beta: float = 1.0
    mode: str = "soft"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.beta > 0:
            raise ValueError(f"beta must be > 0, got {self.beta}")
        if not self.i0 >= 0:
            raise ValueError(f"i0 must be >= 0, got {self.i0}")

    def weight(self, intensity: float) -> float:
        blend = hard_switch(intensity, self) if self.mode == "hard" else soft_switch(intensity, self)
        return blend.w_int

    def to_dict(self) -> dict:
        return {"mode": self.mode, "i0": self.i0, "beta": self.beta}


@dataclass(frozen=True)
class PolicyBlend:
    w_int: float

    def __post_init__(self):
        if not 0.0 <= self.w_int <= 1.0:
            raise ValueError(f"w_int must lie in [0, 1], got {self.w_int}")

    @property
    def w_non(self) -> float:
        return 1.0 - self.w_int


def hard_switch(intensity: float, cfg: SwitchConfig) -> PolicyBlend:
    # ties go to the non-interactive policy
    return PolicyBlend(1.0 if intensity > cfg.i0 else 0.0)


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def soft_switch(intensity: float, cfg: SwitchConfig) -> PolicyBlend:
    if math.isinf(cfg.i0):
        return PolicyBlend(0.0)
    return PolicyBlend(_sigmoid((intensity - cfg.i0) / cfg.beta))


def blended_accel(blend: PolicyBlend, a_int: float, a_non: float) -> float:
    w = blend.w_int
    if w == 1.0:
        return float(a_int)
    if w == 0.0:
        return float(a_non)
    return w * a_int + (1.0 - w) * a_non


def calibrate_threshold(values, q: float = DEFAULT_QUANTILE) -> float:
    """Nearest-rank q-quantile: the ceil(q*N)-th smallest value."""
    if not 0 < q < 1:
        raise ValueError(f"q must be in (0, 1), got {q}")
    v = np.sort(np.asarray(values, dtype=float).ravel())
    if v.size == 0:
        raise ValueError("no intensity values to set a threshold from")
    rank = max(1, math.ceil(q * v.size - 1e-9))
    return float(v[rank - 1])


def _parse_i0(raw, values):
    if isinstance(raw, (int, float)) and not isinstance(raw, bool):
        return float(raw)
    if isinstance(raw, str) and raw.startswith("auto"):
        q = DEFAULT_QUANTILE
        if raw.startswith("auto:q"):
            try:
                q = float(raw[len("auto:q"):])
            except ValueError as exc:
                raise ConfigError(f"bad threshold spec {raw!r}") from exc
        elif raw != "auto":
            raise ConfigError(f"bad threshold spec {raw!r}")
        if values is None:
            raise ConfigError("automatic threshold needs corpus intensity values")
        return calibrate_threshold(values, q)
    raise ConfigError(f"i0 must be a number or 'auto:q<quantile>', got {raw!r}")


def switch_config_from_dict(raw: dict, values=None, mode: str | None = None) -> SwitchConfig:
    """Build a config from its JSON form; ``values`` feed an automatic threshold."""
    unknown = set(raw) - {"mode", "i0", "beta"}
    if unknown:
        raise ConfigError(f"unknown switch config keys {sorted(unknown)}")
    i0 = _parse_i0(raw.get("i0", f"auto:q{DEFAULT_QUANTILE}"), values)
    beta = raw.get("beta")
    if beta is None:
        beta = BETA_FRACTION * i0 if i0 > 0 else 1e-6
    try:
        return SwitchConfig(i0=i0, beta=float(beta), mode=mode or raw.get("mode", "soft"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_switch_config(path, values=None, mode: str | None = None) -> SwitchConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read switch config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"switch config {path} must be a JSON object")
    return switch_config_from_dict(raw, values, mode)
