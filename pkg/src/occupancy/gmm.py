"""Diagonal-covariance Gaussian mixtures trained by EM."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .seeds import rng as seeded_rng

MAX_ITER = 200
TOL_PER_SAMPLE = 1e-5
VAR_FLOOR_RATIO = 1e-4
_LOG_2PI = np.log(2 * np.pi)


class GmmError(ValueError):
    pass


class TooFewSamplesError(GmmError):
    pass


@dataclass(eq=False)
class GmmModel:
    weights: np.ndarray  # (k,)
    means: np.ndarray  # (k, d)
    variances: np.ndarray  # (k, d)
    variance_floor: np.ndarray = None  # (d,)
    log_likelihoods: list[float] = field(default_factory=list)
    n_iter: int = 0

    @property
    def k(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def component_log_densities(self, x: np.ndarray) -> np.ndarray:
        """log(w_j N(x | mu_j, diag var_j)), shape (n, k)."""
        x = np.atleast_2d(x)
        inv = 1.0 / self.variances
        # expand the quadratic to keep memory at O(n k)
        quad = (x * x) @ inv.T - 2.0 * x @ (self.means * inv).T + np.sum(self.means**2 * inv, axis=1)
        log_det = np.sum(np.log(self.variances), axis=1)
        with np.errstate(divide="ignore"):
            log_w = np.log(self.weights)
        return log_w - 0.5 * (self.dim * _LOG_2PI + log_det + quad)

    def log_likelihood(self, x: np.ndarray) -> np.ndarray:
        """Per-sample log density."""
        return logsumexp(self.component_log_densities(x), axis=1)

    def score(self, x: np.ndarray) -> float:
        return float(np.sum(self.log_likelihood(x)))

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
            "variance_floor": None if self.variance_floor is None else self.variance_floor.tolist(),
            "n_iter": self.n_iter,
        }

    @classmethod
    def from_dict(cls, d: dict) -> GmmModel:
        floor = d.get("variance_floor")
        return cls(
            np.asarray(d["weights"], float),
            np.asarray(d["means"], float),
            np.asarray(d["variances"], float),
            None if floor is None else np.asarray(floor, float),
            n_iter=int(d.get("n_iter", 0)),
        )


def kmeans_pp(x: np.ndarray, k: int, g: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: each new centre drawn with probability proportional
    to squared distance from the nearest existing centre."""
    n = x.shape[0]
    centres = [x[g.integers(n)]]
    d2 = np.sum((x - centres[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        idx = g.integers(n) if total <= 0 else g.choice(n, p=d2 / total)
        centres.append(x[idx])
        d2 = np.minimum(d2, np.sum((x - x[idx]) ** 2, axis=1))
    return np.array(centres)


def _moments(x, resp, floor):
    nk = resp.sum(axis=0)
    safe = np.maximum(nk, 1e-300)
    means = (resp.T @ x) / safe[:, None]
    var = (resp.T @ (x * x)) / safe[:, None] - means**2
    return nk, means, np.maximum(var, floor)


def train_gmm(vectors: np.ndarray, k: int, seed: int, max_iter: int = MAX_ITER,
              tol: float = TOL_PER_SAMPLE) -> GmmModel:
    x = np.asarray(vectors, dtype=np.float64)
    n, d = x.shape
    if k < 1:
        raise GmmError(f"k must be >= 1, got {k}")
    if n < 10 * k:
        raise TooFewSamplesError(f"{n} samples are too few for {k} components (need {10 * k})")
    floor = VAR_FLOOR_RATIO * x.var(axis=0)
    floor = np.where(floor > 0, floor, 1e-12)

    if k == 1:
        mean = x.mean(axis=0, keepdims=True)
        var = np.maximum(x.var(axis=0, keepdims=True), floor)
        model = GmmModel(np.ones(1), mean, var, floor)
        model.log_likelihoods = [model.score(x)]
        return model

    g = seeded_rng(seed, "kmeans++")
    centres = kmeans_pp(x, k, g)
    nearest = np.argmin(
        np.sum(x * x, axis=1)[:, None] - 2 * x @ centres.T + np.sum(centres**2, axis=1), axis=1
    )
    resp = np.zeros((n, k))
    resp[np.arange(n), nearest] = 1.0
    nk, means, var = _moments(x, resp, floor)
    model = GmmModel(nk / n, means, var, floor)

    history = []
    for it in range(max_iter):
        logp = model.component_log_densities(x)
        ll_each = logsumexp(logp, axis=1)
        ll = float(ll_each.sum())
        history.append(ll)
        if it > 0 and (ll - history[-2]) < tol * n:
            break
        resp = np.exp(logp - ll_each[:, None])
        nk, means, var = _moments(x, resp, floor)
        live = nk > 1e-10
        # starved components keep their parameters and get zero weight
        model = GmmModel(
            nk / n,
            np.where(live[:, None], means, model.means),
            np.where(live[:, None], var, model.variances),
            floor,
        )
    else:
        history.append(model.score(x))
    model.log_likelihoods = history
    model.n_iter = len(history)
    return model
