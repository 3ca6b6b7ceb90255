"""Interaction intensity: how far the leader's state moves the follower's
predicted future actions.

For each window the joint mixture is conditioned twice: on everything the
follower observed (f), and on the follower's own history only after
marginalizing the leader blocks (g). The intensity is a divergence between f
and g, either Monte-Carlo Jensen-Shannon or the mixture 2-Wasserstein distance.
"""
from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import NumericError
from .gmm import Conditioner, Gmm, history_features, marginalize
from .transport import solve_transport

log = logging.getLogger(__name__)

LN2 = math.log(2.0)
LEADER_BLOCKS = ("dv", "dx")
FOLLOWER_BLOCKS = ("a_hist", "v_foll")
METRICS = ("js", "w2")


# ------------------------------------------------------------- Wasserstein

def _sqrtm_psd(S: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(S)
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def _check_spd(S: np.ndarray, name: str) -> None:
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise NumericError(f"{name} is not a square matrix")
    if np.max(np.abs(S - S.T), initial=0.0) > 1e-9 * max(1.0, np.abs(S).max()):
        raise NumericError(f"{name} is not symmetric")
    try:
        np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise NumericError(f"{name} is not positive definite") from None


def bures_sq(S1: np.ndarray, S2: np.ndarray) -> float:
    """tr(S1 + S2 - 2 (S2^1/2 S1 S2^1/2)^1/2), by eigendecomposition."""
    r2 = _sqrtm_psd(S2)
    M = r2 @ S1 @ r2
    ev = np.linalg.eigvalsh(0.5 * (M + M.T))
    cross = np.sqrt(np.clip(ev, 0.0, None)).sum()
    B = float(np.trace(S1) + np.trace(S2) - 2.0 * cross)
    if B < 0:
        if B < -1e-8 * max(1.0, np.trace(S1) + np.trace(S2)):
            raise NumericError(f"negative Bures term {B:.3e}")
        B = 0.0
    return B


def gaussian_w2(mu1, S1, mu2, S2) -> float:
    """2-Wasserstein distance between two Gaussians."""
    mu1, mu2 = np.atleast_1d(np.asarray(mu1, float)), np.atleast_1d(np.asarray(mu2, float))
    S1, S2 = np.atleast_2d(np.asarray(S1, float)), np.atleast_2d(np.asarray(S2, float))
    if mu1.shape != mu2.shape or S1.shape != S2.shape or S1.shape[0] != mu1.shape[0]:
        raise ValueError("dimension mismatch")
    _check_spd(S1, "first covariance")
    _check_spd(S2, "second covariance")
    return math.sqrt(float(np.sum((mu1 - mu2) ** 2)) + bures_sq(S1, S2))


def w2_cost_matrix(means_f, covs_f, means_g, covs_g) -> np.ndarray:
    """Squared Gaussian W2 between every component pair."""
    Kf, Kg = len(means_f), len(means_g)
    roots_g = [_sqrtm_psd(S) for S in covs_g]
    tr_f = np.trace(covs_f, axis1=1, axis2=2)
    tr_g = np.trace(covs_g, axis1=1, axis2=2)
    C = np.empty((Kf, Kg))
    for j in range(Kg):
        M = roots_g[j] @ covs_f @ roots_g[j]  # (Kf, D, D)
        ev = np.linalg.eigvalsh(0.5 * (M + np.swapaxes(M, 1, 2)))
        cross = np.sqrt(np.clip(ev, 0.0, None)).sum(axis=1)
        B = tr_f + tr_g[j] - 2.0 * cross
        C[:, j] = np.sum((means_f - means_g[j]) ** 2, axis=1) + np.maximum(B, 0.0)
    return C


def transport_cost(C: np.ndarray, a: np.ndarray, b: np.ndarray) -> tuple[float, np.ndarray]:
    """Exact discrete optimal transport between weight vectors a and b."""
    return solve_transport(C, a, b)


def _check_simplex(w: np.ndarray, name: str) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise ValueError(f"{name} weights are not on the probability simplex")
    return w


def mixture_w2_params(wf, means_f, covs_f, wg, means_g, covs_g) -> float:
    wf = _check_simplex(wf, "first")
    wg = _check_simplex(wg, "second")
    means_f, means_g = np.atleast_2d(means_f), np.atleast_2d(means_g)
    if means_f.shape[1] != means_g.shape[1]:
        raise ValueError("mixtures have different dimensions")
    C = w2_cost_matrix(means_f, np.asarray(covs_f), means_g, np.asarray(covs_g))
    cost, _ = transport_cost(C, wf, wg)
    return math.sqrt(max(cost, 0.0))


def mixture_w2(f: Gmm, g: Gmm) -> float:
    """Mixture 2-Wasserstein distance: optimal coupling of component weights
    under squared Gaussian W2 costs, in original units."""
    return mixture_w2_params(f.weights, f.means_x, f.covs_x, g.weights, g.means_x, g.covs_x)


# --------------------------------------------------------------- Monte Carlo

def _base_draws(n: int, dim: int, seed):
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return rng.random(n), rng.standard_normal((n, dim))


def transform_draws(model: Gmm, u: np.ndarray, eps: np.ndarray) -> np.ndarray:
    """Map uniform/normal base draws to mixture samples (inverse-CDF component pick)."""
    cdf = np.cumsum(model.weights)
    comp = np.minimum(np.searchsorted(cdf, u * cdf[-1], side="right"), model.K - 1)
    Z = model.means[comp] + np.einsum("nij,nj->ni", model.chols[comp], eps)
    return model.shift + model.scale * Z


def kl_mc(f: Gmm, g: Gmm, n: int = 20000, seed=0, clamp: bool = True) -> float:
    """Monte-Carlo KL(f || g) from n draws of f, clamped at zero unless ``clamp`` is off."""
    if n < 1:
        raise ValueError("n must be >= 1")
    u, eps = _base_draws(n, f.dim, seed)
    X = transform_draws(f, u, eps)
    est = float(np.mean(f.logpdf(X) - g.logpdf(X)))
    return max(0.0, est) if clamp else est


def js_divergence(f: Gmm, g: Gmm, n: int = 20000, seed=0, clamp: bool = True) -> float:
    """Monte-Carlo Jensen-Shannon divergence, clamped to [0, ln 2].

    Both mixtures are sampled from the same base draws, so the estimate is
    exactly symmetric in (f, g) for a given seed.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if f.dim != g.dim:
        raise ValueError("mixtures have different dimensions")
    u, eps = _base_draws(n, f.dim, seed)
    return _js_from_base(f, g, u, eps, clamp)


def _js_from_base(f: Gmm, g: Gmm, u, eps, clamp: bool = True) -> float:
    Xf = transform_draws(f, u, eps)
    Xg = transform_draws(g, u, eps)
    lf_f, lg_f = f.logpdf(Xf), g.logpdf(Xf)
    lf_g, lg_g = f.logpdf(Xg), g.logpdf(Xg)
    kl_fh = np.mean(lf_f - (np.logaddexp(lf_f, lg_f) - LN2))
    kl_gh = np.mean(lg_g - (np.logaddexp(lf_g, lg_g) - LN2))
    est = float(0.5 * kl_fh + 0.5 * kl_gh)
    return min(max(est, 0.0), LN2) if clamp else est


# --------------------------------------------------------------- intensity

def step_seed(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


class IntensityModel:
    """Conditional (f) and marginal (g) behaviour models derived from one
    joint mixture, ready to be evaluated on many observed windows."""

    def __init__(self, joint: Gmm):
        lay = joint.layout
        missing = {"a_fut", *FOLLOWER_BLOCKS, *LEADER_BLOCKS} - set(lay.names)
        if missing:
            raise ValueError(f"model layout lacks blocks {sorted(missing)}")
        self.joint = joint
        self.layout = lay
        self.observed = lay.complement(["a_fut"])
        self.cond_f = Conditioner(joint, self.observed)
        marginal = marginalize(joint, LEADER_BLOCKS)
        g_obs = marginal.layout.complement(["a_fut"])
        self.cond_g = Conditioner(marginal, g_obs)
        # columns of an observed row (layout order, a_fut removed) that g keeps
        obs_layout = lay.subset(self.observed)
        self.g_cols = obs_layout.indices(g_obs)
        self._fast_f = _ComponentCache(self.cond_f.cond_covs)
        self._fast_g = _ComponentCache(self.cond_g.cond_covs)

    @property
    def history(self) -> int:
        return self.layout.history

    def models(self, rows: np.ndarray):
        """Yield (f, g) mixtures for each observed row."""
        rows = np.atleast_2d(rows)
        wf, mf = self.cond_f.batch(rows)
        wg, mg = self.cond_g.batch(rows[:, self.g_cols])
        for i in range(rows.shape[0]):
            yield self.cond_f.make(wf[i], mf[i]), self.cond_g.make(wg[i], mg[i])

    def evaluate(self, rows: np.ndarray, metric: str = "js", n: int = 20000, seed: int = 0,
                 index_offset: int = 0) -> np.ndarray:
        """Intensity for each observed row; row i draws its Monte-Carlo
        samples from the stream seeded by (seed, index_offset + i)."""
        if metric not in METRICS:
            raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")
        rows = np.atleast_2d(rows)
        if metric == "w2":
            out = []
            for i, (f, g) in enumerate(self.models(rows)):
                try:
                    out.append(mixture_w2(f, g))
                except NumericError as exc:
                    raise NumericError(f"timestep {index_offset + i}: {exc}") from exc
            return np.array(out)
        wf, mf = self.cond_f.batch(rows)
        wg, mg = self.cond_g.batch(rows[:, self.g_cols])
        dim = mf.shape[2]
        out = np.empty(rows.shape[0])
        for i in range(rows.shape[0]):
            u, eps = _base_draws(n, dim, step_seed(seed, index_offset + i))
            out[i] = self._js(wf[i], mf[i], wg[i], mg[i], u, eps)
        return out

    def _js(self, wf, mf, wg, mg, u, eps) -> float:
        # both mixtures share the output scaler, so JS is evaluated in standardized units
        cf, cg = self._fast_f, self._fast_g
        X = np.vstack([cf.draw(wf, mf, u, eps), cg.draw(wg, mg, u, eps)])
        lf = cf.logpdf(wf, mf, X)
        lg = cg.logpdf(wg, mg, X)
        lh = np.logaddexp(lf, lg) - LN2
        n = len(u)
        kl_fh = np.mean(lf[:n] - lh[:n])
        kl_gh = np.mean(lg[n:] - lh[n:])
        return float(min(max(0.5 * kl_fh + 0.5 * kl_gh, 0.0), LN2))

    def observed_row(self, a_hist, v_foll, dv, dx) -> np.ndarray:
        blocks = {"a_hist": a_hist, "v_foll": v_foll, "dv": dv, "dx": dx}
        return np.concatenate([np.asarray(blocks[name], dtype=float) for name in self.observed])


class _ComponentCache:
    """Factorizations of a fixed set of component covariances."""

    def __init__(self, covs: np.ndarray):
        self.chol = np.linalg.cholesky(covs)
        eye = np.eye(covs.shape[1])
        self.inv_chol = np.stack([np.linalg.solve(L, eye) for L in self.chol])
        self.const = -np.log(np.diagonal(self.chol, axis1=1, axis2=2)).sum(axis=1) \
            - 0.5 * covs.shape[1] * math.log(2.0 * math.pi)

    def draw(self, w, mu, u, eps):
        cdf = np.cumsum(w)
        comp = np.minimum(np.searchsorted(cdf, u * cdf[-1], side="right"), len(w) - 1)
        out = np.empty_like(eps)
        for k in range(len(w)):
            sel = comp == k
            if sel.any():
                out[sel] = mu[k] + eps[sel] @ self.chol[k].T
        return out

    def logpdf(self, w, mu, X):
        with np.errstate(divide="ignore"):
            logw = np.log(w) + self.const
        terms = np.empty((X.shape[0], len(w)))
        for k in range(len(w)):
            sol = (X - mu[k]) @ self.inv_chol[k].T
            terms[:, k] = logw[k] - 0.5 * np.einsum("ni,ni->n", sol, sol)
        top = terms.max(axis=1, keepdims=True)
        return top[:, 0] + np.log(np.exp(terms - top).sum(axis=1))


@dataclass
class IntensitySeries:
    pair_id: str
    metric: str
    values: np.ndarray
    index: np.ndarray  # window positions
    t: np.ndarray  # time of the last history sample of each window

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if np.any(self.values < 0):
            raise ValueError("intensity values must be nonnegative")

    def __len__(self) -> int:
        return len(self.values)

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "intensity"])
            for t, v in zip(self.t, self.values):
                w.writerow([repr(float(t)), repr(float(v))])

    @classmethod
    def from_csv(cls, path, pair_id: str | None = None, metric: str = "js") -> "IntensitySeries":
        from .errors import EmptyCorpusError
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)  # empty file is handled below
            data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if data.size == 0:
            raise EmptyCorpusError(f"{path} has no intensity rows")
        return cls(pair_id or Path(path).stem, metric, data[:, 1], np.arange(len(data)), data[:, 0])


def intensity_series(model: Gmm | IntensityModel, pair, metric: str = "js", n: int = 20000,
                     seed: int = 0) -> IntensitySeries:
    im = model if isinstance(model, IntensityModel) else IntensityModel(model)
    H, F = im.layout.history, im.layout.future
    if len(pair) < H + F:
        raise ValueError(f"pair {pair.pair_id} has {len(pair)} samples, needs >= {H + F}")
    rows = history_features(pair, im.layout)
    values = im.evaluate(rows, metric, n, seed)
    idx = np.arange(len(values))
    return IntensitySeries(pair.pair_id, metric, values, idx, pair.t[idx + H - 1])


# ----------------------------------------------------------------- sampling

@dataclass
class SampleSplit:
    interactive: np.ndarray
    non_interactive: np.ndarray
    random: np.ndarray
    fractions: tuple[float, float, float]
    n_total: int = 0
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "interactive": self.interactive.tolist(),
            "non_interactive": self.non_interactive.tolist(),
            "random": self.random.tolist(),
            "fractions": list(self.fractions),
            "n_total": self.n_total,
            **self.meta,
        }


def _count(frac: float, N: int) -> int:
    return min(N, int(math.ceil(frac * N - 1e-9)))


def split_by_intensity(series: IntensitySeries | Sequence[float], frac_int: float = 0.03,
                       frac_non: float = 0.03, frac_rand: float = 0.06, seed: int = 0) -> SampleSplit:
    """Top / bottom / uniform-random timesteps by intensity.

    Ties are broken by the earlier timestep; the non-interactive set is drawn
    from what the interactive set leaves, so the two never overlap (and it
    shrinks, possibly to empty, when frac_int + frac_non > 1).
    """
    for name, fr in (("frac_int", frac_int), ("frac_non", frac_non), ("frac_rand", frac_rand)):
        if not 0 < fr <= 1:
            raise ValueError(f"{name} must be in (0, 1], got {fr}")
    if frac_int + frac_non > 1 + 1e-12:
        log.warning("frac_int + frac_non > 1; the non-interactive set gets what is left")
    values = np.asarray(series.values if isinstance(series, IntensitySeries) else series, float)
    N = len(values)
    idx = np.arange(N)
    by_desc = np.lexsort((idx, -values))
    interactive = np.sort(by_desc[: _count(frac_int, N)])
    taken = np.zeros(N, dtype=bool)
    taken[interactive] = True
    by_asc = np.lexsort((idx, values))
    by_asc = by_asc[~taken[by_asc]]
    non_interactive = np.sort(by_asc[: _count(frac_non, N)])
    rng = np.random.default_rng(seed)
    rand = np.sort(rng.choice(N, size=_count(frac_rand, N), replace=False)) if N else idx
    return SampleSplit(interactive, non_interactive, rand, (frac_int, frac_non, frac_rand), N)
