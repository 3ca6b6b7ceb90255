"""Bayesian IDM calibration by adaptive random-walk Metropolis-Hastings.

The likelihood is Gaussian on the one-step-ahead bumper gap: from the observed
state at sample ``j`` the IDM predicts the gap at ``j + 1`` and the residual
against the recorded gap is scored with noise ``sigma_obs``. ``sigma_obs`` is
sampled jointly (half-normal prior, random walk on its logarithm).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, asdict
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares

from .idm import ACCEL_MAX, ACCEL_MIN, PARAM_NAMES, IdmPosterior, PriorBox, idm_accel_array

log = logging.getLogger(__name__)

PROVENANCES = ("interactive", "non_interactive", "random")


@dataclass(frozen=True)
class McmcConfig:
    n_iter: int = 20000
    burn_in: int = 5000
    thin: int = 10
    sigma_scale: float = 1.0  # half-normal prior scale for sigma_obs [m]
    adapt_every: int = 250
    target_accept: float = 0.234
    accept_band: tuple[float, float] = (0.05, 0.7)

    def __post_init__(self):
        if self.n_iter <= self.burn_in:
            raise ValueError("n_iter must exceed burn_in")
        if self.thin < 1 or self.burn_in < 0:
            raise ValueError("thin must be >= 1 and burn_in >= 0")
        if not self.sigma_scale > 0:
            raise ValueError("sigma_scale must be positive")

    @property
    def n_draws(self) -> int:
        return len(range(self.burn_in, self.n_iter, self.thin))

    @classmethod
    def for_draws(cls, n_draws: int, burn_in: int = 5000, thin: int = 10) -> "McmcConfig":
        return cls(n_iter=burn_in + n_draws * thin, burn_in=burn_in, thin=thin)


@dataclass
class Transitions:
    """Observed one-step transitions ``j -> j+1`` pooled over pairs."""
    v: np.ndarray  # follower speed at j
    dv_app: np.ndarray  # v_foll - v_lead at j
    gap: np.ndarray  # bumper gap at j
    gap_next: np.ndarray  # recorded bumper gap at j + 1
    lead_step: np.ndarray  # leader displacement j -> j+1
    dt: float

    def __len__(self) -> int:
        return len(self.v)

    @classmethod
    def from_pairs(cls, subset: Sequence) -> "Transitions":
        """``subset`` holds (pair, sample_indices) tuples."""
        parts = []
        dts = set()
        for pair, idx in subset:
            idx = np.asarray(idx, dtype=int)
            if idx.size == 0:
                continue
            if idx.min() < 0 or idx.max() + 1 >= len(pair):
                raise ValueError(f"transition index out of range for pair {pair.pair_id}")
            dx = pair.dx
            parts.append((pair.v_foll[idx], pair.v_foll[idx] - pair.v_lead[idx], dx[idx],
                          dx[idx + 1], pair.x_lead[idx + 1] - pair.x_lead[idx]))
            dts.add(round(float(pair.dt), 12))
        if not parts:
            raise ValueError("calibration subset is empty")
        if len(dts) != 1:
            raise ValueError(f"pairs mix sampling intervals {sorted(dts)}")
        cols = [np.concatenate(c) for c in zip(*parts)]
        if np.any(cols[2] <= 0):
            raise ValueError("calibration data contains non-positive gaps")
        return cls(*cols, dt=dts.pop())

    def predict_gap(self, theta: np.ndarray) -> np.ndarray:
        """Predicted next gap; ``theta`` is (5,) or (m, 5) for m parameter sets."""
        theta = np.asarray(theta, dtype=float)
        batched = theta.ndim == 2
        th = theta[:, None, :] if batched else theta
        a = np.clip(idm_accel_array(th, self.v, self.dv_app, self.gap), ACCEL_MIN, ACCEL_MAX)
        v_next = np.maximum(0.0, self.v + a * self.dt)
        foll_step = 0.5 * (self.v + v_next) * self.dt
        return self.gap + self.lead_step - foll_step

    def residuals(self, theta) -> np.ndarray:
        return self.gap_next - self.predict_gap(theta)


def _log_post(trans: Transitions, theta, log_sigma, prior: PriorBox, cfg: McmcConfig) -> float:
    if not prior.contains(theta):
        return -np.inf
    sigma = math.exp(log_sigma)
    r = trans.residuals(theta)
    n = len(r)
    ll = -0.5 * float(r @ r) / sigma**2 - n * log_sigma
    # half-normal prior on sigma plus the Jacobian of the log transform
    return ll - 0.5 * (sigma / cfg.sigma_scale) ** 2 + log_sigma


def _start_point(trans: Transitions, prior: PriorBox):
    lo, hi = prior.lower, prior.upper
    mid = 0.5 * (lo + hi)
    free = hi > lo
    if not free.any():
        theta = lo.copy()
    else:
        def resid(z):
            th = mid.copy()
            th[free] = z
            return trans.residuals(th)
        fit = least_squares(resid, mid[free], bounds=(lo[free], hi[free]), method="trf",
                            x_scale=(hi - lo)[free], max_nfev=200)
        theta = mid.copy()
        theta[free] = np.clip(fit.x, lo[free], hi[free])
    rms = float(np.sqrt(np.mean(trans.residuals(theta) ** 2)))
    return theta, math.log(max(rms, 1e-4))


def calibrate(subset, prior: PriorBox | None = None, n_draws: int | None = None,
              burn_in: int | None = None, seed: int = 0, provenance: str = "random",
              config: McmcConfig | None = None) -> IdmPosterior:
    """Posterior IDM draws from one-step spacing data.

    ``subset`` is a list of (pair, sample_indices) or a ready ``Transitions``.
    ``n_draws``/``burn_in`` override the config (thinning is kept).
    """
    prior = prior or PriorBox()
    cfg = config or McmcConfig()
    if n_draws is not None or burn_in is not None:
        b = cfg.burn_in if burn_in is None else burn_in
        nd = cfg.n_draws if n_draws is None else n_draws
        cfg = McmcConfig(b + nd * cfg.thin, b, cfg.thin, cfg.sigma_scale, cfg.adapt_every,
                         cfg.target_accept, cfg.accept_band)
    trans = subset if isinstance(subset, Transitions) else Transitions.from_pairs(subset)
    rng = np.random.default_rng(seed)

    lo, hi = prior.lower, prior.upper
    free = np.append(hi > lo, True)  # last coordinate is log sigma
    theta, log_sigma = _start_point(trans, prior)
    state = np.append(theta, log_sigma)
    lp = _log_post(trans, theta, log_sigma, prior, cfg)
    d = int(free.sum())
    width = np.append(hi - lo, 1.0)[free]
    prop_chol = np.diag(0.05 * width)
    scale = 1.0

    samples = np.empty((cfg.n_iter, 6))
    accepted = 0
    accepted_at = 0
    shaped = False
    accepted_post = 0
    for it in range(cfg.n_iter):
        z = rng.standard_normal(d)
        u = math.log(rng.random())
        cand = state.copy()
        cand[free] += scale * (prop_chol @ z)
        lp_c = _log_post(trans, cand[:5], cand[5], prior, cfg)
        if u < lp_c - lp:
            state, lp = cand, lp_c
            accepted += 1
            if it >= cfg.burn_in:
                accepted_post += 1
        samples[it] = state
        if it < cfg.burn_in and (it + 1) % cfg.adapt_every == 0:
            rate = (accepted - accepted_at) / cfg.adapt_every
            accepted_at = accepted
            # Robbins-Monro step on the log scale, then refresh the proposal
            # shape from the second half of the chain so far
            scale *= math.exp(2.0 * (rate - cfg.target_accept))
            hist = samples[(it + 1) // 2: it + 1][:, free]
            if it + 1 >= cfg.burn_in // 2 and np.unique(hist, axis=0).shape[0] > 2 * d:
                cov = np.atleast_2d(np.cov(hist, rowvar=False))
                cov = (2.38**2 / d) * cov + np.diag((1e-4 * width) ** 2)
                try:
                    prop_chol = np.linalg.cholesky(cov)
                    if not shaped:
                        scale, shaped = 1.0, True  # the empirical shape is already scaled
                except np.linalg.LinAlgError:
                    pass
            scale = min(max(scale, 1e-3), 10.0)
    kept = samples[cfg.burn_in::cfg.thin]
    n_post = cfg.n_iter - cfg.burn_in
    rate = accepted_post / n_post
    meta = {"acceptance_rate": rate, "n_iter": cfg.n_iter, "burn_in": cfg.burn_in,
            "thin": cfg.thin, "seed": seed, "n_transitions": len(trans),
            "prior": {n: list(getattr(prior, n)) for n in PARAM_NAMES}}
    lo_band, hi_band = cfg.accept_band
    if d > 1 and not lo_band <= rate <= hi_band:
        meta["warning"] = f"acceptance rate {rate:.3f} outside [{lo_band}, {hi_band}]"
        log.warning("calibration (%s): %s", provenance, meta["warning"])
    draws = np.clip(kept[:, :5], lo, hi)
    return IdmPosterior(draws, np.exp(kept[:, 5]), provenance, meta)


def credible_box(post: IdmPosterior, level: float = 0.9) -> tuple[np.ndarray, np.ndarray]:
    """Joint box with Bonferroni-corrected marginal intervals (5 parameters)."""
    alpha = (1.0 - level) / 5
    lo = np.quantile(post.draws, alpha / 2, axis=0)
    hi = np.quantile(post.draws, 1 - alpha / 2, axis=0)
    return lo, hi


def _batch_var(x: np.ndarray, n_batches: int = 20) -> float:
    """Variance of the mean of ``x`` from non-overlapping batch means."""
    m = len(x) // n_batches
    if m < 1:
        return float(np.var(x, ddof=1) / len(x))
    means = x[: m * n_batches].reshape(n_batches, m).mean(axis=1)
    return float(np.var(means, ddof=1) / n_batches)


def geweke_z(chain, first: float = 0.1, last: float = 0.5) -> np.ndarray:
    """Geweke z-scores comparing the early and late parts of each column."""
    chain = np.atleast_2d(np.asarray(chain, dtype=float).T).T
    n = chain.shape[0]
    a = chain[: int(first * n)]
    b = chain[n - int(last * n):]
    out = []
    for j in range(chain.shape[1]):
        var = _batch_var(a[:, j]) + _batch_var(b[:, j])
        diff = a[:, j].mean() - b[:, j].mean()
        out.append(0.0 if var == 0 else diff / math.sqrt(var))
    return np.array(out)


# ------------------------------------------------------------------ policies

SPLIT_KEYS = {"int": "interactive", "non": "non_interactive", "rand": "random"}


def split_transitions(series, split_idx: np.ndarray, history: int) -> np.ndarray:
    """Map window positions of an intensity series to transition sample indices.

    Window i ends its history at sample i + H - 1; the transition scored is
    the step from that sample to the next.
    """
    return np.asarray(series.index, dtype=int)[np.asarray(split_idx, dtype=int)] + history - 1


def split_corpus(pairs, series, fractions=(0.03, 0.03, 0.06), seed: int = 0) -> dict:
    """Per-pair intensity splits; the random pick of a pair depends on (seed, pair id)."""
    from .interaction import split_by_intensity
    from .sim import pair_key

    out = {}
    for pair, s in zip(pairs, series):
        if len(s) == 0:
            raise ValueError(f"pair {pair.pair_id} has no intensity values")
        pseed = int(np.random.SeedSequence([seed, pair_key(pair.pair_id)]).generate_state(1)[0])
        out[pair.pair_id] = split_by_intensity(s, *fractions, seed=pseed)
    return out


def splits_to_json(splits: dict, history: int, fractions, seed: int) -> dict:
    return {"history": history, "fractions": list(fractions), "seed": seed,
            "pairs": {pid: sp.to_dict() for pid, sp in sorted(splits.items())}}


def subset_from_splits(pairs, splits_json: dict, name: str) -> list:
    """(pair, transition indices) for one split name (int | non | rand)."""
    key = SPLIT_KEYS[name]
    H = int(splits_json["history"])
    by_id = {p.pair_id: p for p in pairs}
    out = []
    for pid, sp in sorted(splits_json["pairs"].items()):
        if pid not in by_id:
            raise KeyError(f"split refers to unknown pair {pid}")
        out.append((by_id[pid], np.asarray(sp[key], dtype=int) + H - 1))
    return out


@dataclass
class PolicySet:
    int: IdmPosterior
    non: IdmPosterior
    rand: IdmPosterior
    splits: dict = field(default_factory=dict)

    def by_name(self, name: str) -> IdmPosterior:
        if name not in SPLIT_KEYS:
            raise KeyError(name)
        return getattr(self, name)

    def as_dict(self) -> dict:
        return {"int": self.int, "non": self.non, "rand": self.rand}


def make_policies(pairs, model, fractions=(0.03, 0.03, 0.06), seed: int = 0,
                  prior: PriorBox | None = None, config: McmcConfig | None = None,
                  metric: str = "js", mc_samples: int = 20000, series=None) -> PolicySet:
    """Calibrate the interactive, non-interactive and random policies.

    Each pair is split by its own intensity ranking and the selected
    transitions are pooled across pairs. All three chains share the prior,
    settings and seed. ``series`` may carry precomputed intensity series.
    """
    from .interaction import IntensityModel, intensity_series

    if not pairs:
        raise ValueError("no pairs to calibrate on")
    im = model if isinstance(model, IntensityModel) else IntensityModel(model)
    if series is None:
        series = [intensity_series(im, p, metric, mc_samples, seed) for p in pairs]
    splits = splits_to_json(split_corpus(pairs, series, fractions, seed), im.layout.history,
                            fractions, seed)
    out = {}
    for name, prov in zip(SPLIT_KEYS, PROVENANCES):
        post = calibrate(subset_from_splits(pairs, splits, name), prior, seed=seed,
                         provenance=prov, config=config)
        post.metadata["fractions"] = list(fractions)
        out[name] = post
    return PolicySet(out["int"], out["non"], out["rand"], splits)


def config_dict(cfg: McmcConfig) -> dict:
    d = asdict(cfg)
    d["accept_band"] = list(cfg.accept_band)
    return d
