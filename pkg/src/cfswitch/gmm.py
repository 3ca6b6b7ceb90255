"""Gaussian mixtures over named feature blocks, fitted by EM, with Gaussian
mixture regression (conditioning) and marginalization.

Parameters are stored for standardized coordinates ``z = (x - shift) / scale``;
densities, samples and observed values are always exchanged in original units.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from .errors import ConfigError, NumericError

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class FeatureLayout:
    """Ordered named blocks of a joint feature vector."""
    blocks: tuple[tuple[str, int], ...]

    def __post_init__(self):
        names = [b[0] for b in self.blocks]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate block names in {names}")
        if any(d < 1 for _, d in self.blocks):
            raise ValueError("block dimensions must be positive")

    @classmethod
    def standard(cls, history: int = 5, future: int = 3) -> "FeatureLayout":
        """Car-following layout: a_hist, a_fut, v_foll, dv, dx."""
        return cls((("a_hist", history), ("a_fut", future), ("v_foll", history),
                    ("dv", history), ("dx", history)))

    @classmethod
    def from_horizons(cls, history_s: float = 1.0, future_s: float = 0.6, dt: float = 0.2):
        return cls.standard(int(round(history_s / dt)), int(round(future_s / dt)))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(b[0] for b in self.blocks)

    @property
    def dim(self) -> int:
        return sum(d for _, d in self.blocks)

    def size(self, name: str) -> int:
        return dict(self.blocks)[name]

    @property
    def history(self) -> int:
        return self.size("a_hist")

    @property
    def future(self) -> int:
        return self.size("a_fut")

    def slice(self, name: str) -> slice:
        start = 0
        for n, d in self.blocks:
            if n == name:
                return slice(start, start + d)
            start += d
        raise KeyError(f"unknown block {name!r}; layout has {self.names}")

    def indices(self, names: Iterable[str]) -> np.ndarray:
        names = set(names)
        for n in names:
            self.slice(n)  # raises on unknown names
        idx = [np.arange(self.slice(n).start, self.slice(n).stop) for n in self.names if n in names]
        return np.concatenate(idx) if idx else np.zeros(0, dtype=int)

    def subset(self, names: Iterable[str]) -> "FeatureLayout":
        names = set(names)
        return FeatureLayout(tuple(b for b in self.blocks if b[0] in names))

    def complement(self, names: Iterable[str]) -> tuple[str, ...]:
        names = set(names)
        return tuple(n for n in self.names if n not in names)

    def header(self) -> str:
        return ",".join(f"{n}:{d}" for n, d in self.blocks)

    @classmethod
    def parse(cls, text: str) -> "FeatureLayout":
        blocks = []
        for item in text.split(","):
            n, d = item.strip().split(":")
            blocks.append((n, int(d)))
        return cls(tuple(blocks))


# ------------------------------------------------------------------ dataset

def window_features(pair, layout: FeatureLayout) -> np.ndarray:
    """Joint feature rows for every window position of one pair (stride 1).

    Window ``i`` covers samples ``i .. i+H+F-1``; the history blocks use the
    first H samples, ``a_fut`` the following F.
    """
    H, F = layout.history, layout.future
    L = len(pair)
    n = L - (H + F) + 1
    if n <= 0:
        return np.zeros((0, layout.dim))
    idx = np.arange(n)[:, None]
    hist = idx + np.arange(H)[None, :]
    fut = idx + H + np.arange(F)[None, :]
    source = {
        "a_hist": pair.a_foll[hist],
        "a_fut": pair.a_foll[fut],
        "v_foll": pair.v_foll[hist],
        "dv": pair.dv[hist],
        "dx": pair.dx[hist],
    }
    return np.hstack([source[name] for name in layout.names])


def history_features(pair, layout: FeatureLayout) -> np.ndarray:
    """Observed (history-only) rows, one per window position."""
    X = window_features(pair, layout)
    return X[:, layout.indices(layout.complement(["a_fut"]))]


def build_dataset(pairs: Sequence, layout: FeatureLayout) -> np.ndarray:
    rows = [window_features(p, layout) for p in pairs]
    rows = [r for r in rows if len(r)]
    if not rows:
        return np.zeros((0, layout.dim))
    return np.vstack(rows)


def write_dataset(X: np.ndarray, layout: FeatureLayout, path) -> None:
    with Path(path).open("w") as fh:
        fh.write(f"# layout: {layout.header()}\n")
        np.savetxt(fh, X, delimiter=",", fmt="%.17g")


def read_dataset(path) -> tuple[np.ndarray, FeatureLayout]:
    with Path(path).open() as fh:
        first = fh.readline()
    if not first.startswith("# layout:"):
        raise ConfigError(f"{path}: missing layout header comment")
    layout = FeatureLayout.parse(first.split(":", 1)[1])
    X = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    return X, layout


# --------------------------------------------------------------------- model

def _chol(cov: np.ndarray, what: str) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise NumericError(f"covariance of {what} is not positive definite") from None


def gaussian_logpdf(X: np.ndarray, mean: np.ndarray, chol: np.ndarray) -> np.ndarray:
    """log N(x | mean, L L^T) for each row of X."""
    diff = np.atleast_2d(X) - mean
    sol = solve_triangular(chol, diff.T, lower=True, check_finite=False)
    maha = np.einsum("ij,ij->j", sol, sol)
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    return -0.5 * (maha + logdet + mean.shape[-1] * LOG_2PI)


@dataclass
class Gmm:
    weights: np.ndarray  # (K,)
    means: np.ndarray  # (K, D), standardized coordinates
    covs: np.ndarray  # (K, D, D), standardized coordinates
    layout: FeatureLayout | None = None
    shift: np.ndarray | None = None  # (D,)
    scale: np.ndarray | None = None  # (D,)
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        self.means = np.atleast_2d(np.asarray(self.means, dtype=float))
        K, D = self.means.shape
        self.covs = np.asarray(self.covs, dtype=float).reshape(K, D, D)
        if self.weights.shape != (K,):
            raise ValueError("weights and means disagree on K")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError("weights must lie on the probability simplex")
        self.weights = self.weights / self.weights.sum()
        self.shift = np.zeros(D) if self.shift is None else np.asarray(self.shift, dtype=float)
        self.scale = np.ones(D) if self.scale is None else np.asarray(self.scale, dtype=float)
        if self.layout is None:
            self.layout = FeatureLayout((("x", D),))
        if self.layout.dim != D:
            raise ValueError(f"layout dimension {self.layout.dim} != model dimension {D}")
        self._chols = None

    @property
    def K(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def chols(self) -> np.ndarray:
        if self._chols is None:
            self._chols = np.stack([_chol(c, f"component {k}") for k, c in enumerate(self.covs)])
        return self._chols

    @property
    def means_x(self) -> np.ndarray:
        """Component means in original units."""
        return self.shift + self.scale * self.means

    @property
    def covs_x(self) -> np.ndarray:
        """Component covariances in original units."""
        return self.covs * np.outer(self.scale, self.scale)

    @classmethod
    def from_moments(cls, weights, means_x, covs_x, layout=None) -> "Gmm":
        """Build a model from original-unit parameters (identity scaler)."""
        return cls(weights, means_x, covs_x, layout)

    def _to_z(self, X, idx=None):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if idx is None:
            return (X - self.shift) / self.scale
        return (X - self.shift[idx]) / self.scale[idx]

    def component_logpdf(self, X) -> np.ndarray:
        """(N, K) matrix of log pi_k + log N_k(x) in original units."""
        Z = self._to_z(X)
        jac = np.log(self.scale).sum()
        out = np.empty((Z.shape[0], self.K))
        with np.errstate(divide="ignore"):
            logw = np.log(self.weights)
        for k in range(self.K):
            out[:, k] = logw[k] + gaussian_logpdf(Z, self.means[k], self.chols[k])
        return out - jac

    def logpdf(self, X) -> np.ndarray:
        return logsumexp(self.component_logpdf(X), axis=1)

    def pdf(self, x) -> float | np.ndarray:
        x = np.asarray(x, dtype=float)
        vals = np.exp(self.logpdf(x.reshape(-1, self.dim)))
        if x.ndim <= 1 and (x.ndim == 0 or x.shape[0] == self.dim):
            return float(vals[0])
        return vals

    def sample(self, n: int, seed=None) -> np.ndarray:
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        comp = rng.choice(self.K, size=n, p=self.weights)
        eps = rng.standard_normal((n, self.dim))
        Z = self.means[comp] + np.einsum("nij,nj->ni", self.chols[comp], eps)
        return self.shift + self.scale * Z

    # -- serialization
    def to_dict(self) -> dict:
        return {
            "version": FORMAT_VERSION,
            "layout": [[n, d] for n, d in self.layout.blocks],
            "scaler": {"shift": self.shift.tolist(), "scale": self.scale.tolist()},
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covariances": [c.reshape(-1).tolist() for c in self.covs],
            "info": {k: v for k, v in self.info.items() if k != "loglik_history"},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Gmm":
        if d.get("version") != FORMAT_VERSION:
            raise ConfigError(f"unsupported model version {d.get('version')!r}")
        layout = FeatureLayout(tuple((n, int(k)) for n, k in d["layout"]))
        return cls(d["weights"], d["means"], d["covariances"], layout,
                   d["scaler"]["shift"], d["scaler"]["scale"], d.get("info", {}))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "Gmm":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            raise ConfigError(f"cannot read model {path}: {exc}") from exc


# ------------------------------------------------------------- GMR algebra

def marginalize(model: Gmm, dropped_blocks: Iterable[str]) -> Gmm:
    dropped = tuple(dropped_blocks)
    if not dropped:
        return model
    keep_names = model.layout.complement(dropped)
    model.layout.indices(dropped)  # validate names
    if not keep_names:
        raise ValueError("cannot marginalize out every block")
    keep = model.layout.indices(keep_names)
    return Gmm(model.weights, model.means[:, keep], model.covs[:, keep][:, :, keep],
               model.layout.subset(keep_names), model.shift[keep], model.scale[keep])


class Conditioner:
    """Precomputed Gaussian-mixture regression of the complement blocks on a
    fixed set of observed blocks; reusable across many observed values."""

    def __init__(self, model: Gmm, observed_blocks: Iterable[str]):
        obs_names = tuple(observed_blocks)
        lay = model.layout
        out_names = lay.complement(obs_names)
        if not out_names:
            raise ValueError("conditioning on every block leaves nothing to predict")
        self.model = model
        self.x_idx = lay.indices(obs_names)
        self.y_idx = lay.indices(out_names)
        self.layout_y = lay.subset(out_names)
        xi, yi = self.x_idx, self.y_idx
        K = model.K
        self.gain = np.empty((K, len(yi), len(xi)))
        self.cond_covs = np.empty((K, len(yi), len(yi)))
        self.chol_xx = np.empty((K, len(xi), len(xi)))
        for k in range(K):
            S = model.covs[k]
            Sxx = S[np.ix_(xi, xi)]
            Syx = S[np.ix_(yi, xi)]
            try:
                L = np.linalg.cholesky(Sxx)
            except np.linalg.LinAlgError:
                raise NumericError(f"observed-block covariance of component {k} is singular") from None
            self.chol_xx[k] = L
            # gain = Syx Sxx^{-1} via two triangular solves
            G = np.linalg.solve(L.T, np.linalg.solve(L, Syx.T)).T
            self.gain[k] = G
            C = S[np.ix_(yi, yi)] - G @ Syx.T
            self.cond_covs[k] = 0.5 * (C + C.T)
        with np.errstate(divide="ignore"):
            self.log_w = np.log(model.weights)

    def batch(self, X: np.ndarray):
        """Conditional weights (B, K) and means (B, K, Dy) in standardized
        y coordinates for each observed row of X (original units)."""
        m = self.model
        Zx = m._to_z(X, self.x_idx)
        B = Zx.shape[0]
        logits = np.empty((B, m.K))
        means = np.empty((B, m.K, len(self.y_idx)))
        for k in range(m.K):
            mu_x = m.means[k, self.x_idx]
            mu_y = m.means[k, self.y_idx]
            logits[:, k] = self.log_w[k] + gaussian_logpdf(Zx, mu_x, self.chol_xx[k])
            means[:, k] = mu_y + (Zx - mu_x) @ self.gain[k].T
        logits -= logsumexp(logits, axis=1, keepdims=True)
        return np.exp(logits), means

    def make(self, weights: np.ndarray, means: np.ndarray) -> Gmm:
        w = np.maximum(weights, 0.0)
        w = w / w.sum()
        m = self.model
        return Gmm(w, means, self.cond_covs, self.layout_y, m.shift[self.y_idx], m.scale[self.y_idx])

    def __call__(self, x) -> Gmm:
        w, mu = self.batch(np.atleast_2d(x))
        return self.make(w[0], mu[0])


def condition(model: Gmm, observed_blocks: Iterable[str], observed_value) -> Gmm:
    """Condition the joint mixture on observed blocks; returns a mixture over
    the remaining blocks (in layout order)."""
    observed_blocks = tuple(observed_blocks)
    if not observed_blocks:
        return model
    value = np.asarray(observed_value, dtype=float).reshape(-1)
    n_obs = len(model.layout.indices(observed_blocks))
    if value.shape[0] != n_obs:
        raise ValueError(f"observed value has {value.shape[0]} entries, blocks need {n_obs}")
    return Conditioner(model, observed_blocks)(value)


# ------------------------------------------------------------------------ EM

def _kmeans_pp(Z: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    N = Z.shape[0]
    centers = [Z[rng.integers(N)]]
    d2 = np.sum((Z - centers[0]) ** 2, axis=1)
    for _ in range(1, K):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(N)
        else:
            idx = rng.choice(N, p=d2 / total)
        centers.append(Z[idx])
        d2 = np.minimum(d2, np.sum((Z - Z[idx]) ** 2, axis=1))
    return np.array(centers)


def _e_step(Z, weights, means, covs):
    N, K = Z.shape[0], len(weights)
    logp = np.empty((N, K))
    for k in range(K):
        L = _chol(covs[k], f"component {k}")
        logp[:, k] = math.log(max(weights[k], 1e-300)) + gaussian_logpdf(Z, means[k], L)
    norm = logsumexp(logp, axis=1)
    return np.exp(logp - norm[:, None]), float(norm.mean())


def fit_em(data: np.ndarray, K: int, seed: int = 0, max_iter: int = 500, tol: float = 1e-6,
           layout: FeatureLayout | None = None, standardize: bool = True) -> Gmm:
    """Maximum-likelihood mixture fit by EM.

    Features are z-scored first; every M-step adds ``eps * I`` in standardized
    coordinates with ``eps = 1e-6 *`` mean per-dimension variance. The mean
    log-likelihood per iteration is stored in ``info["loglik_history"]``.
    """
    X = np.atleast_2d(np.asarray(data, dtype=float))
    N, D = X.shape
    if K < 1:
        raise ValueError("K must be >= 1")
    if N < K:
        raise ValueError(f"need at least K={K} rows, got {N}")
    if not np.all(np.isfinite(X)):
        raise NumericError("data contains non-finite values")
    if standardize:
        shift = X.mean(axis=0)
        scale = X.std(axis=0)
        scale[scale <= 0] = 1.0
    else:
        shift, scale = np.zeros(D), np.ones(D)
    Z = (X - shift) / scale
    var = Z.var(axis=0).mean()
    eps = 1e-6 * var if var > 0 else 1e-6
    reg = eps * np.eye(D)

    rng = np.random.default_rng(seed)
    means = _kmeans_pp(Z, K, rng)
    base_cov = np.atleast_2d(np.cov(Z, rowvar=False, bias=True)) + reg
    covs = np.repeat(base_cov[None], K, axis=0)
    weights = np.full(K, 1.0 / K)

    history = []
    converged = False
    for it in range(max_iter):
        resp, ll = _e_step(Z, weights, means, covs)
        if history and abs(ll - history[-1]) <= tol * abs(history[-1]):
            history.append(ll)
            converged = True
            break
        history.append(ll)
        Nk = resp.sum(axis=0)
        for k in range(K):
            if Nk[k] < 1e-10 * N:
                continue  # dead component keeps its parameters
            r = resp[:, k]
            mu = r @ Z / Nk[k]
            diff = Z - mu
            C = (diff * r[:, None]).T @ diff / Nk[k]
            means[k] = mu
            covs[k] = 0.5 * (C + C.T) + reg
        weights = Nk / N
        weights = weights / weights.sum()
    info = {"loglik_history": history, "n_iter": len(history), "converged": converged,
            "n_samples": N, "seed": seed, "reg_eps": eps}
    # total log-likelihood in original units
    info["loglik"] = history[-1] * N - N * float(np.log(scale).sum())
    return Gmm(weights, means, covs, layout or FeatureLayout((("x", D),)), shift, scale, info)


def n_parameters(K: int, D: int) -> int:
    return K * (1 + D + D * (D + 1) // 2) - 1


def bic(model: Gmm, data: np.ndarray) -> float:
    X = np.atleast_2d(data)
    logL = float(model.logpdf(X).sum())
    return -2.0 * logL + n_parameters(model.K, model.dim) * math.log(X.shape[0])


FALLBACK_K = 5


def select_k(data: np.ndarray, k_range=(2, 10), seed: int = 0, layout: FeatureLayout | None = None,
             **fit_kw) -> tuple[int, Gmm]:
    """Fit every K in the inclusive range and keep the minimum-BIC model.

    Candidate K uses the seed derived from (seed, K), so results do not depend
    on the order or subset of candidates evaluated. Candidates whose fit fails
    numerically are skipped; if every candidate fails, K = FALLBACK_K is fitted.
    """
    lo, hi = k_range
    if lo > hi or lo < 1:
        raise ValueError(f"bad k_range {k_range}")
    best = None
    scores = {}
    for K in range(lo, hi + 1):
        sub_seed = int(np.random.SeedSequence([seed, K]).generate_state(1)[0])
        try:
            model = fit_em(data, K, seed=sub_seed, layout=layout, **fit_kw)
        except NumericError as exc:
            log.warning("K=%d skipped: %s", K, exc)
            continue
        score = bic(model, data)
        scores[K] = score
        if best is None or score < best[0]:
            best = (score, K, model)
    if best is None:
        sub_seed = int(np.random.SeedSequence([seed, FALLBACK_K]).generate_state(1)[0])
        model = fit_em(data, FALLBACK_K, seed=sub_seed, layout=layout, **fit_kw)
        best = (bic(model, data), FALLBACK_K, model)
        scores[FALLBACK_K] = best[0]
    _, K, model = best
    model.info["bic"] = {str(k): v for k, v in scores.items()}
    return K, model
