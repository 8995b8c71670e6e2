"""Full-covariance Gaussian mixture fitted by EM.

Written out rather than taken from scikit-learn so that the per-iteration
log-likelihood trace is available for the monotonicity checks and the
restart-on-degeneracy policy is explicit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.cluster.vq import kmeans2
from scipy.special import logsumexp

__all__ = ["GaussianMixture", "DegenerateComponent", "fit_gmm"]


class DegenerateComponent(ArithmeticError):
    """A mixture component collapsed (empty or singular covariance)."""


@dataclass
class GaussianMixture:
    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    ll_trace: list = field(default_factory=list)
    n_iter: int = 0
    converged: bool = False

    def component_log_density(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        out = np.empty((x.shape[0], len(self.weights)))
        d = x.shape[1]
        for k, (mu, cov) in enumerate(zip(self.means, self.covs)):
            chol = np.linalg.cholesky(cov)
            w = sla.solve_triangular(chol, (x - mu).T, lower=True)
            out[:, k] = -0.5 * (np.sum(w * w, axis=0) + d * np.log(2 * np.pi)) - np.sum(np.log(np.diag(chol)))
        return out + np.log(self.weights)

    def responsibilities(self, x: np.ndarray) -> np.ndarray:
        lp = self.component_log_density(x)
        return np.exp(lp - logsumexp(lp, axis=1, keepdims=True))

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.component_log_density(x), axis=1)

    def log_likelihood(self, x: np.ndarray) -> float:
        return float(np.sum(logsumexp(self.component_log_density(x), axis=1)))


def _em(x, k, max_iter, tol, reg, rng):
    n, d = x.shape
    scale = float(np.trace(np.cov(x, rowvar=False))) / d if n > 1 else 1.0
    ridge = reg * max(scale, 1e-300) * np.eye(d)
    seed = int(rng.integers(0, 2**31 - 1))
    try:
        _, assign = kmeans2(x, k, minit="++", seed=seed)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise DegenerateComponent(f"k-means initialization failed: {exc}") from exc
    resp = np.zeros((n, k))
    resp[np.arange(n), assign] = 1.0
    gm = None
    trace = []
    for it in range(max_iter):
        nk = resp.sum(axis=0)
        if np.any(nk < 1e-8 * n + 1e-12):
            raise DegenerateComponent("empty mixture component")
        means = (resp.T @ x) / nk[:, None]
        covs = np.empty((k, d, d))
        for j in range(k):
            xc = x - means[j]
            covs[j] = (resp[:, j, None] * xc).T @ xc / nk[j] + ridge
        gm = GaussianMixture(nk / n, means, covs)
        try:
            lp = gm.component_log_density(x)
        except np.linalg.LinAlgError as exc:
            raise DegenerateComponent("singular component covariance") from exc
        norm = logsumexp(lp, axis=1)
        ll = float(np.sum(norm))
        if not np.isfinite(ll):
            raise DegenerateComponent("non-finite likelihood")
        trace.append(ll)
        resp = np.exp(lp - norm[:, None])
        if it and abs(trace[-1] - trace[-2]) <= tol * abs(trace[-2]):
            gm.converged = True
            break
    gm.ll_trace = trace
    gm.n_iter = len(trace)
    return gm


def fit_gmm(
    x: np.ndarray,
    k: int = 2,
    max_iter: int = 100,
    tol: float = 1e-6,
    reg: float = 0.0,
    rng: np.random.Generator | None = None,
    max_restarts: int = 5,
) -> GaussianMixture:
    """EM with k-means++ initialization; restarts with a new seed on degeneracy.

    ``reg`` adds ``reg * (mean per-dimension variance)`` to every covariance
    diagonal; it is off by default because it breaks exact EM monotonicity.
    ``ll_trace[i]`` is the data log-likelihood of the parameters produced by
    the i-th M-step.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[0] < k:
        raise ValueError("fewer rows than components")
    rng = rng or np.random.default_rng(0)
    last = None
    for _ in range(max_restarts + 1):
        try:
            return _em(x, k, max_iter, tol, reg, rng)
        except DegenerateComponent as exc:
            last = exc
    raise DegenerateComponent(f"EM failed after {max_restarts} restarts: {last}")
