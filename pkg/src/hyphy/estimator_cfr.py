"""Approximate maximum-likelihood estimation of CFR model parameters.

Three sub-problems are solved in alternation:

1. specular paths (angles, phase slopes, complex gains) by Gauss-Newton on
   the Gaussian log-likelihood with the diffuse covariance held fixed;
2. diffuse power, coherence bandwidth and noise variance by Gauss-Newton on
   the zero-mean likelihood of the specular-removed residuals, after picking
   the number of taps with an eigenvalue-energy rule;
3. the AR-1 similarity coefficient from consecutive-CFR differences.

All Gauss-Newton loops share the same contract: a step is accepted only if
the objective strictly increases, with step halving otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla

from .channel_cfr import (
    CfrDims,
    CfrSample,
    DiffuseNoiseParams,
    SimilarityParam,
    SpecularParams,
    ToeplitzCov,
    diffuse_noise_cov,
    kappa,
    specular_mean,
    _khatri_rao,
)
from .errors import DimensionError, NumericalFailure, SingularModelError

__all__ = [
    "GaussNewtonOptions",
    "GNInfo",
    "EstimationReport",
    "exp_basis",
    "exp_basis_deriv",
    "specular_jacobian",
    "CovInverse",
    "specular_log_likelihood",
    "specular_score",
    "specular_fim",
    "gauss_newton_specular",
    "initialize_specular",
    "estimate_num_taps",
    "vn_cov_derivs",
    "zero_mean_log_likelihood",
    "vn_gradient",
    "gauss_newton_vn",
    "similarity_nu",
    "similarity_log_likelihood",
    "estimate_similarity",
    "alternating_estimate",
]


@dataclass(frozen=True)
class GaussNewtonOptions:
    max_iters: int = 50
    rel_tol: float = 1e-4
    step_init: float = 1.0
    backtrack_factor: float = 0.5
    max_backtracks: int = 20

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if not 0 < self.backtrack_factor < 1:
            raise ValueError("backtrack_factor must lie in (0, 1)")


@dataclass
class GNInfo:
    """Bookkeeping returned alongside a Gauss-Newton estimate."""

    ll_trace: list = field(default_factory=list)
    n_iters: int = 0
    converged: bool = False
    damped: bool = False


@dataclass
class EstimationReport:
    theta_sp_hat: SpecularParams
    theta_vn_hat: DiffuseNoiseParams
    a_hat: SimilarityParam
    log_likelihood_trace: list
    converged: bool
    slot_specular: dict = field(default_factory=dict)
    rounds_run: int = 0


# ---------------------------------------------------------------------------
# specular paths


def exp_basis(v, n: int) -> np.ndarray:
    """n x K matrix with entries exp(-i (j - (n-1)/2) v_k)."""
    if n < 1:
        raise DimensionError("n must be >= 1")
    j = np.arange(n) - (n - 1) / 2
    return np.exp(-1j * np.outer(j, np.atleast_1d(np.asarray(v, dtype=float))))


def exp_basis_deriv(v, n: int) -> np.ndarray:
    """Column-wise derivative of ``exp_basis`` with respect to v_k."""
    j = np.arange(n) - (n - 1) / 2
    return -1j * j[:, None] * exp_basis(v, n)


def _spec_factors(sp: SpecularParams, dims: CfrDims):
    u_t = exp_basis(sp.psi_t, dims.n_tx)
    u_r = exp_basis(-sp.psi_r, dims.n_rx)
    u_f = exp_basis(sp.tau, dims.n_f)
    return u_t, u_r, u_f


def specular_jacobian(sp: SpecularParams, dims: CfrDims) -> np.ndarray:
    """Complex Jacobian of the specular mean, columns [psi_t | psi_r | tau | Re rho | Im rho]."""
    u_t, u_r, u_f = _spec_factors(sp, dims)
    s = 1.0 / np.sqrt(dims.n_tx * dims.n_rx)
    d_t = exp_basis_deriv(sp.psi_t, dims.n_tx)
    d_r = -exp_basis_deriv(-sp.psi_r, dims.n_rx)
    d_f = exp_basis_deriv(sp.tau, dims.n_f)
    base = _khatri_rao(u_t, u_r, u_f) * s
    j_t = _khatri_rao(d_t, u_r, u_f) * (s * sp.rho)
    j_r = _khatri_rao(u_t, d_r, u_f) * (s * sp.rho)
    j_f = _khatri_rao(u_t, u_r, d_f) * (s * sp.rho)
    return np.hstack([j_t, j_r, j_f, base, 1j * base])


class CovInverse:
    """Cached Cholesky factorization used to apply R^{-1} and evaluate log det R.

    Accepts either a full matrix or a ``ToeplitzCov`` block together with
    ``dims``; the latter exploits the block-diagonal structure.
    """

    def __init__(self, cov, dims: CfrDims | None = None, scale: float = 1.0):
        if isinstance(cov, ToeplitzCov):
            if dims is None:
                raise ValueError("dims required with a Toeplitz block")
            block = cov.matrix() * scale
            self.n_blocks = dims.n_blocks
        else:
            block = np.asarray(cov) * scale
            self.n_blocks = 1
        self.block_size = block.shape[0]
        try:
            self._cho = sla.cho_factor(block, lower=True)
        except np.linalg.LinAlgError:
            eps = 1e-8 * float(np.mean(np.abs(np.diag(block)))) or 1e-8
            try:
                self._cho = sla.cho_factor(block + eps * np.eye(block.shape[0]), lower=True)
            except np.linalg.LinAlgError as exc:
                raise SingularModelError("covariance is not positive definite") from exc
        self.logdet = self.n_blocks * 2.0 * float(np.sum(np.log(np.diag(self._cho[0]).real)))

    @property
    def size(self) -> int:
        return self.block_size * self.n_blocks

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        if x.shape[0] != self.size:
            raise DimensionError("vector length does not match covariance")
        if self.n_blocks == 1:
            return sla.cho_solve(self._cho, x)
        tail = x.shape[1:]
        xb = x.reshape((self.n_blocks, self.block_size) + tail)
        xb = np.moveaxis(xb, 1, 0).reshape(self.block_size, -1)
        yb = sla.cho_solve(self._cho, xb).reshape((self.block_size, self.n_blocks) + tail)
        return np.moveaxis(yb, 0, 1).reshape(x.shape)


def _as_inverse(cov_inv_apply, dims=None) -> Callable:
    if callable(cov_inv_apply):
        return cov_inv_apply
    return CovInverse(cov_inv_apply, dims)


def specular_log_likelihood(h: np.ndarray, sp: SpecularParams, cinv: CovInverse, dims: CfrDims) -> float:
    r = h - specular_mean(sp, dims)
    return float(-dims.m * np.log(np.pi) - cinv.logdet - np.vdot(r, cinv(r)).real)


def specular_score(h: np.ndarray, sp: SpecularParams, cov_inv_apply, dims: CfrDims) -> np.ndarray:
    """Gradient of the Gaussian log-likelihood in the 5K real specular parameters."""
    apply = _as_inverse(cov_inv_apply, dims)
    jac = specular_jacobian(sp, dims)
    r = np.asarray(h) - specular_mean(sp, dims)
    return 2.0 * np.real(jac.conj().T @ apply(r))


def specular_fim(sp: SpecularParams, cov_inv_apply, dims: CfrDims) -> np.ndarray:
    apply = _as_inverse(cov_inv_apply, dims)
    jac = specular_jacobian(sp, dims)
    f = 2.0 * np.real(jac.conj().T @ apply(jac))
    return 0.5 * (f + f.T)


def _solve_fim(fim: np.ndarray, score: np.ndarray):
    """Solve F d = q, falling back to Levenberg damping when F is ill-conditioned."""
    n = fim.shape[0]
    scale = max(float(np.trace(fim)) / n, 1e-300)
    try:
        cond = np.linalg.cond(fim)
    except np.linalg.LinAlgError:
        cond = np.inf
    if np.isfinite(cond) and cond < 1e12:
        return np.linalg.solve(fim, score), False
    lam = 1e-8 * scale
    for _ in range(12):
        damped = fim + lam * np.diag(np.maximum(np.diag(fim), scale * 1e-12))
        try:
            step = np.linalg.solve(damped, score)
            if np.all(np.isfinite(step)):
                return step, True
        except np.linalg.LinAlgError:
            pass
        lam *= 10
    raise SingularModelError("Fisher information could not be regularized")


def _gn_loop(theta0, objective, direction, opts: GaussNewtonOptions, info: GNInfo):
    """Generic ascent loop: ``direction(theta) -> (step, damped)``."""
    theta = np.asarray(theta0, dtype=float).copy()
    f = objective(theta)
    if not np.isfinite(f):
        raise NumericalFailure("objective is not finite at the initial point")
    info.ll_trace.append(f)
    for it in range(opts.max_iters):
        step_dir, damped = direction(theta)
        info.damped |= damped
        if not np.all(np.isfinite(step_dir)):
            raise NumericalFailure(f"non-finite Gauss-Newton direction at iteration {it}")
        zeta = opts.step_init
        accepted = False
        for _ in range(opts.max_backtracks + 1):
            cand = theta + zeta * step_dir
            fc = objective(cand)
            if np.isfinite(fc) and fc > f:
                accepted = True
                break
            zeta *= opts.backtrack_factor
        info.n_iters = it + 1
        if not accepted:
            info.converged = True
            break
        change = np.linalg.norm(cand - theta) / max(np.linalg.norm(theta), 1e-12)
        theta, f = cand, fc
        info.ll_trace.append(f)
        if change < opts.rel_tol:
            info.converged = True
            break
    return theta, info


def gauss_newton_specular(
    h: np.ndarray,
    sp_init: SpecularParams,
    cov,
    opts: GaussNewtonOptions | None = None,
    dims: CfrDims | None = None,
    return_info: bool = False,
):
    """Refine specular parameters by Fisher-scoring Gauss-Newton with backtracking.

    ``cov`` may be a full covariance, a ``ToeplitzCov`` block (requires
    ``dims``) or a prepared ``CovInverse``.
    """
    opts = opts or GaussNewtonOptions()
    if dims is None:
        raise ValueError("dims is required")
    cinv = cov if isinstance(cov, CovInverse) else CovInverse(cov, dims)
    h = np.asarray(h)

    def objective(theta):
        return specular_log_likelihood(h, SpecularParams.from_vector(theta), cinv, dims)

    def direction(theta):
        sp = SpecularParams.from_vector(theta)
        return _solve_fim(specular_fim(sp, cinv, dims), specular_score(h, sp, cinv, dims))

    info = GNInfo()
    theta, info = _gn_loop(sp_init.to_vector(), objective, direction, opts, info)
    est = SpecularParams.from_vector(theta)
    return (est, info) if return_info else est


def initialize_specular(
    h: np.ndarray,
    dims: CfrDims,
    k_paths: int,
    cov=None,
    n_starts: int = 8,
    grid: tuple = (16, 16, 64),
    rng: np.random.Generator | None = None,
    opts: GaussNewtonOptions | None = None,
) -> SpecularParams:
    """Greedy grid matching pursuit followed by multi-start Gauss-Newton.

    The first start uses the grid atoms as found; the others jitter every
    coordinate by up to half a grid cell. The start with the highest
    likelihood after refinement wins.
    """
    rng = rng or np.random.default_rng(0)
    h = np.asarray(h)
    g_t = np.linspace(-np.pi, np.pi, grid[0], endpoint=False)
    g_r = np.linspace(-np.pi, np.pi, grid[1], endpoint=False)
    g_f = np.linspace(-np.pi, np.pi, grid[2], endpoint=False)
    b_t = exp_basis(g_t, dims.n_tx)
    b_r = exp_basis(-g_r, dims.n_rx)
    b_f = exp_basis(g_f, dims.n_f)
    s = 1.0 / np.sqrt(dims.n_tx * dims.n_rx)
    chosen = []
    resid = h.copy()
    for _ in range(k_paths):
        tensor = resid.reshape(dims.n_tx, dims.n_rx, dims.n_f)
        corr = np.einsum("trn,ta,rb,nc->abc", tensor, b_t.conj(), b_r.conj(), b_f.conj(), optimize=True)
        for (a, b, c) in chosen:
            corr[a, b, c] = 0.0
        a, b, c = np.unravel_index(np.argmax(np.abs(corr)), corr.shape)
        chosen.append((a, b, c))
        atoms = np.stack(
            [_khatri_rao(b_t[:, [i]], b_r[:, [j]], b_f[:, [l]])[:, 0] * s for (i, j, l) in chosen], axis=1
        )
        gains, *_ = np.linalg.lstsq(atoms, h, rcond=None)
        resid = h - atoms @ gains
    base = np.array([[g_t[i], g_r[j], g_f[l]] for (i, j, l) in chosen])
    cell = 2 * np.pi / np.array(grid)
    if cov is None:
        cov = ToeplitzCov(np.r_[max(np.vdot(resid, resid).real / dims.m, 1e-12), np.zeros(dims.n_f - 1)])
    cinv = cov if isinstance(cov, CovInverse) else CovInverse(cov, dims)
    best, best_ll = None, -np.inf
    for start in range(max(1, n_starts)):
        angles = base if start == 0 else base + rng.uniform(-0.5, 0.5, base.shape) * cell
        atoms = SpecularParams(angles[:, 0], angles[:, 1], angles[:, 2], np.ones(k_paths))
        u_t, u_r, u_f = _spec_factors(atoms, dims)
        kr = _khatri_rao(u_t, u_r, u_f) * s
        gains, *_ = np.linalg.lstsq(kr, h, rcond=None)
        sp0 = SpecularParams(angles[:, 0], angles[:, 1], angles[:, 2], gains)
        try:
            sp_hat = gauss_newton_specular(h, sp0, cinv, opts, dims)
        except (SingularModelError, NumericalFailure):
            continue
        ll = specular_log_likelihood(h, sp_hat, cinv, dims)
        if ll > best_ll:
            best, best_ll = sp_hat, ll
    if best is None:
        raise NumericalFailure("all specular initializations failed")
    return best


# ---------------------------------------------------------------------------
# diffuse power and noise


def _blocks(residual_matrix: np.ndarray, n_f: int | None) -> np.ndarray:
    """Rearrange an m x N residual matrix into n_f x (N * n_blocks) samples."""
    x = np.asarray(residual_matrix)
    if x.ndim != 2:
        raise DimensionError("residual matrix must be 2-D (m x N)")
    if n_f is None or n_f == x.shape[0]:
        return x
    m, n = x.shape
    if m % n_f:
        raise DimensionError("m is not a multiple of n_f")
    return x.reshape(m // n_f, n_f, n).transpose(1, 0, 2).reshape(n_f, -1)


def estimate_num_taps(residual_matrix: np.ndarray, eta: float = 0.95, n_f: int | None = None) -> int:
    """Smallest order whose leading sample-covariance eigenvalues hold a fraction ``eta`` of the energy."""
    if not 0 < eta < 1:
        raise ValueError("eta must lie in (0, 1)")
    x = _blocks(residual_matrix, n_f)
    if x.shape[1] < 2:
        raise ValueError("need at least two columns")
    cov = x @ x.conj().T / x.shape[1]
    ev = np.sort(np.linalg.eigvalsh(cov))[::-1].clip(min=0.0)
    total = ev.sum()
    if not total > 0:
        raise ValueError("residual matrix has rank 0")
    frac = np.cumsum(ev) / total
    # guard against round-off just below eta
    return int(np.searchsorted(frac, eta - 1e-12) + 1)


def _kappa_dbeta(dn: DiffuseNoiseParams, m: np.ndarray) -> np.ndarray:
    b = dn.beta
    l = np.arange(dn.l_taps)
    g = -np.expm1(-2 * np.pi * b)
    f = np.exp(-2 * np.pi * (b - 1j * m))
    powers = f[:, None] ** l
    s = powers.sum(axis=1)
    ds_db = -2 * np.pi * (powers * l).sum(axis=1)
    return dn.alpha2 * (2 * np.pi * np.exp(-2 * np.pi * b) * s + g * ds_db)


def vn_cov_derivs(dn: DiffuseNoiseParams, n_f: int) -> list:
    """Derivatives of the diffuse-plus-noise Toeplitz column in (sigma2, alpha2, beta)."""
    m = np.arange(n_f) / n_f
    d_sigma = np.zeros(n_f, dtype=complex)
    d_sigma[0] = 1.0
    unit = replace(dn, alpha2=1.0)
    d_alpha = np.asarray(kappa(unit, m), dtype=complex).reshape(n_f)
    d_beta = _kappa_dbeta(dn, m)
    return [ToeplitzCov(d_sigma), ToeplitzCov(d_alpha), ToeplitzCov(d_beta)]


def _sample_cov(x: np.ndarray) -> np.ndarray:
    return x @ x.conj().T / x.shape[1]


def zero_mean_log_likelihood(rhat: np.ndarray, n_eff: int, nu: np.ndarray) -> float:
    """Log-likelihood of ``n_eff`` zero-mean samples with sample covariance ``rhat`` under toep(nu).

    Returns ``-inf`` if the model covariance is not positive definite.
    """
    r = sla.toeplitz(nu)
    try:
        cho = sla.cho_factor(r, lower=True)
    except np.linalg.LinAlgError:
        return -np.inf
    n = r.shape[0]
    logdet = 2.0 * np.sum(np.log(np.diag(cho[0]).real))
    tr = np.trace(sla.cho_solve(cho, rhat)).real
    return float(n_eff * (-n * np.log(np.pi) - logdet - tr))


def _toeplitz_score_fim(rhat, n_eff, nu, dnus):
    r = sla.toeplitz(nu)
    cho = sla.cho_factor(r, lower=True)
    rinv_d = [sla.cho_solve(cho, sla.toeplitz(d)) for d in dnus]
    rinv_rhat = sla.cho_solve(cho, rhat)
    k = len(dnus)
    g = np.empty(k)
    fim = np.empty((k, k))
    for i in range(k):
        # tr(R^-1 D R^-1 (Rhat - R)) = tr(R^-1 D R^-1 Rhat) - tr(R^-1 D)
        g[i] = n_eff * (np.sum(rinv_d[i] * rinv_rhat.T).real - np.trace(rinv_d[i]).real)
        for j in range(i, k):
            fim[i, j] = fim[j, i] = n_eff * np.sum(rinv_d[i] * rinv_d[j].T).real
    return g, fim


def vn_gradient(rhat: np.ndarray, n_eff: int, dn: DiffuseNoiseParams) -> np.ndarray:
    """Gradient of the zero-mean log-likelihood in (sigma2, alpha2, beta)."""
    nu = diffuse_noise_cov(dn, rhat.shape[0]).nu
    g, _ = _toeplitz_score_fim(rhat, n_eff, nu, [d.nu for d in vn_cov_derivs(dn, rhat.shape[0])])
    return g


def gauss_newton_vn(
    residual_matrix: np.ndarray,
    dn_init: DiffuseNoiseParams,
    opts: GaussNewtonOptions | None = None,
    n_f: int | None = None,
    return_info: bool = False,
):
    """Fit (alpha2, beta, sigma2) with L fixed at ``dn_init.l_taps``.

    The search runs over the logarithms of the three parameters so that
    iterates stay positive.
    """
    opts = opts or GaussNewtonOptions()
    x = _blocks(residual_matrix, n_f)
    nf = x.shape[0]
    rhat = _sample_cov(x)
    n_eff = x.shape[1]
    floor = 1e-9 * max(float(np.real(np.trace(rhat))) / nf, 1e-300)
    p0 = np.array([max(dn_init.sigma2, floor), max(dn_init.alpha2, floor), dn_init.beta])

    def to_dn(logp):
        p = np.exp(logp)
        return DiffuseNoiseParams(alpha2=p[1], beta=p[2], l_taps=dn_init.l_taps, sigma2=p[0])

    def objective(logp):
        if not np.all(np.isfinite(logp)) or np.any(np.abs(logp) > 700):
            return -np.inf
        return zero_mean_log_likelihood(rhat, n_eff, diffuse_noise_cov(to_dn(logp), nf).nu)

    def direction(logp):
        dn = to_dn(logp)
        p = np.exp(logp)
        nu = diffuse_noise_cov(dn, nf).nu
        try:
            g, fim = _toeplitz_score_fim(rhat, n_eff, nu, [d.nu for d in vn_cov_derivs(dn, nf)])
        except np.linalg.LinAlgError as exc:
            raise SingularModelError("diffuse covariance lost positive definiteness") from exc
        g = g * p
        fim = fim * np.outer(p, p)
        return _solve_fim(fim, g)

    info = GNInfo()
    logp, info = _gn_loop(np.log(p0), objective, direction, opts, info)
    est = to_dn(logp)
    return (est, info) if return_info else est


# ---------------------------------------------------------------------------
# similarity


def similarity_nu(a: float, dn_a: DiffuseNoiseParams, n_f: int, hypothesis: str = "H0",
                  dn_e: DiffuseNoiseParams | None = None) -> np.ndarray:
    """Toeplitz column of the difference covariance, noise included."""
    m = np.arange(n_f) / n_f
    ka = np.asarray(kappa(dn_a, m), dtype=complex).reshape(n_f)
    if hypothesis == "H0":
        nu = 2 * (1 - a) * ka
        nu[0] += 2 * dn_a.sigma2
    elif hypothesis == "H1":
        if dn_e is None:
            raise ValueError("H1 needs the second transmitter's parameters")
        ke = np.asarray(kappa(dn_e, m), dtype=complex).reshape(n_f)
        nu = ke - 2 * a * ka + ka
        nu[0] += dn_a.sigma2 + dn_e.sigma2
    else:
        raise ValueError("hypothesis must be 'H0' or 'H1'")
    return nu


def similarity_log_likelihood(diff_samples, a, dn_fixed, hypothesis="H0", dn_e_fixed=None, n_f=None):
    x = _blocks(diff_samples, n_f)
    nu = similarity_nu(a, dn_fixed, x.shape[0], hypothesis, dn_e_fixed)
    return zero_mean_log_likelihood(_sample_cov(x), x.shape[1], nu)


def estimate_similarity(
    diff_samples: np.ndarray,
    dn_fixed: DiffuseNoiseParams,
    a_init: SimilarityParam | float,
    hypothesis: str = "H0",
    dn_e_fixed: DiffuseNoiseParams | None = None,
    opts: GaussNewtonOptions | None = None,
    n_f: int | None = None,
    return_info: bool = False,
):
    """Gauss-Newton fit of the AR-1 similarity from mean-removed differences.

    Under both hypotheses the covariance column depends on ``a`` through
    ``-2 a kappa_A``. The search is over ``logit(a)``.
    """
    opts = opts or GaussNewtonOptions()
    x = _blocks(diff_samples, n_f)
    nf, n_eff = x.shape
    rhat = _sample_cov(x)
    if not np.real(np.trace(rhat)) > 0:
        raise SingularModelError("difference samples are degenerate")
    a0 = a_init.a if isinstance(a_init, SimilarityParam) else float(a_init)
    a0 = float(np.clip(a0, 1e-6, 1 - 1e-6))
    dnu = -2 * np.asarray(kappa(dn_fixed, np.arange(nf) / nf), dtype=complex).reshape(nf)

    def to_a(z):
        return float(1.0 / (1.0 + np.exp(-z[0])))

    def objective(z):
        if not np.all(np.isfinite(z)) or abs(z[0]) > 700:
            return -np.inf
        return zero_mean_log_likelihood(rhat, n_eff, similarity_nu(to_a(z), dn_fixed, nf, hypothesis, dn_e_fixed))

    def direction(z):
        a = to_a(z)
        nu = similarity_nu(a, dn_fixed, nf, hypothesis, dn_e_fixed)
        try:
            g, fim = _toeplitz_score_fim(rhat, n_eff, nu, [dnu])
        except np.linalg.LinAlgError as exc:
            raise SingularModelError("difference covariance is not positive definite") from exc
        jac = a * (1 - a)
        return _solve_fim(fim * jac * jac, g * jac)

    info = GNInfo()
    z0 = np.array([np.log(a0 / (1 - a0))])
    if not np.isfinite(objective(z0)):
        raise SingularModelError("initial similarity gives an indefinite covariance")
    z, info = _gn_loop(z0, objective, direction, opts, info)
    est = SimilarityParam(float(np.clip(to_a(z), 0.0, 1.0)))
    return (est, info) if return_info else est


# ---------------------------------------------------------------------------
# alternation


def _circular_mean(x: np.ndarray, axis=0) -> np.ndarray:
    return np.angle(np.mean(np.exp(1j * x), axis=axis))


def _average_specular(fits: Sequence[SpecularParams]) -> SpecularParams:
    return SpecularParams(
        psi_t=_circular_mean(np.stack([f.psi_t for f in fits])),
        psi_r=_circular_mean(np.stack([f.psi_r for f in fits])),
        tau=_circular_mean(np.stack([f.tau for f in fits])),
        rho=np.mean(np.stack([f.rho for f in fits]), axis=0),
    )


def _rel_change(new: np.ndarray, old: np.ndarray) -> float:
    return float(np.linalg.norm(new - old) / max(np.linalg.norm(old), 1e-12))


def _fit_vn_with_taps(resid, dn, l_hat, tap_search, n_f, opts):
    if tap_search <= 0:
        return gauss_newton_vn(resid, replace(dn, l_taps=l_hat), opts, n_f=n_f)
    x = _blocks(resid, n_f)
    rhat = _sample_cov(x)
    best, best_ll = None, -np.inf
    for l_taps in range(max(1, l_hat - tap_search), min(n_f, l_hat + tap_search) + 1):
        cand = gauss_newton_vn(resid, replace(dn, l_taps=l_taps), opts, n_f=n_f)
        ll = zero_mean_log_likelihood(rhat, x.shape[1], diffuse_noise_cov(cand, n_f).nu)
        if ll > best_ll:
            best, best_ll = cand, ll
    return best


def _joint_objective(groups, slot_sp, dn, dims, diffs, a, hypothesis, dn_ref):
    cinv = CovInverse(diffuse_noise_cov(dn, dims.n_f), dims)
    total = 0.0
    for slot, hs in groups.items():
        r = hs - specular_mean(slot_sp[slot], dims)[:, None]
        quad = np.sum((r.conj() * cinv(r)).real)
        total += -hs.shape[1] * (dims.m * np.log(np.pi) + cinv.logdet) - quad
    if diffs is not None:
        if hypothesis == "H0":
            total += similarity_log_likelihood(diffs, a, dn, "H0", None, dims.n_f)
        else:
            total += similarity_log_likelihood(diffs, a, dn_ref, "H1", dn, dims.n_f)
    return float(total)


def alternating_estimate(
    snapshots: Sequence[CfrSample],
    dims: CfrDims,
    opts: GaussNewtonOptions | None = None,
    n_rounds: int = 3,
    *,
    k_paths: int = 1,
    eta: float = 0.95,
    diff_samples: np.ndarray | None = None,
    diff_mean_fn: Callable[[dict], np.ndarray] | None = None,
    hypothesis: str = "H0",
    dn_ref: DiffuseNoiseParams | None = None,
    sp_init: SpecularParams | None = None,
    dn_init: DiffuseNoiseParams | None = None,
    a_init: float = 0.5,
    per_snapshot: bool = True,
    n_starts: int = 8,
    tap_search: int = 0,
    rng: np.random.Generator | None = None,
) -> EstimationReport:
    """Alternate the three sub-problems over a set of snapshots.

    Snapshots are grouped by ``snapshot_index`` (one group per coherence
    interval). Specular parameters are fitted per group: the group-mean CFR
    is fitted first, then, if ``per_snapshot``, every snapshot is refined
    from that fit and the per-path estimates are averaged. The residuals
    feed the tap-count rule and the diffuse/noise fit. If ``diff_samples``
    (m x N) are supplied, the similarity is fitted last; ``diff_mean_fn``
    can supply per-column means computed from the current specular fits,
    which are subtracted before that fit. Under ``"H1"`` the similarity links
    to the reference transmitter ``dn_ref``.

    With ``tap_search > 0`` the tap count is re-chosen by maximum
    likelihood among ``L_hat - tap_search .. L_hat + tap_search`` (clipped
    to ``[1, n_f]``) after the eigenvalue rule.

    A round is kept only if the joint log-likelihood does not decrease.
    """
    opts = opts or GaussNewtonOptions()
    rng = rng or np.random.default_rng(0)
    if not snapshots:
        raise ValueError("no snapshots")
    if hypothesis == "H1" and diff_samples is not None and dn_ref is None:
        raise ValueError("H1 similarity needs dn_ref")
    groups: dict = {}
    for s in snapshots:
        s.check(dims)
        groups.setdefault(int(s.snapshot_index), []).append(s.h)
    groups = {k: np.stack(v, axis=1) for k, v in sorted(groups.items())}

    if dn_init is None:
        centered = np.concatenate([g - g.mean(axis=1, keepdims=True) for g in groups.values()], axis=1)
        power = float(np.mean(np.abs(centered) ** 2)) or 1.0
        l0 = dims.n_f
        beta0 = 0.05
        dn_init = DiffuseNoiseParams(alpha2=0.8 * power / (1 - np.exp(-2 * np.pi * beta0 * l0)),
                                     beta=beta0, l_taps=l0, sigma2=0.2 * power)
    dn = dn_init
    a = SimilarityParam(float(np.clip(a_init, 0.0, 1.0)))
    slot_sp: dict = {}
    for slot, hs in groups.items():
        slot_sp[slot] = sp_init if sp_init is not None else None

    if n_rounds <= 0:
        first = next(iter(slot_sp.values()))
        return EstimationReport(
            theta_sp_hat=first if first is not None else sp_init,
            theta_vn_hat=dn, a_hat=a, log_likelihood_trace=[], converged=False,
            slot_specular=dict(slot_sp), rounds_run=0,
        )

    trace: list = []
    converged = False
    rounds = 0
    prev = None
    for rnd in range(n_rounds):
        try:
            cov_block = diffuse_noise_cov(dn, dims.n_f)
            cinv = CovInverse(cov_block, dims)
            new_sp = {}
            for slot, hs in groups.items():
                n_s = hs.shape[1]
                cinv_mean = CovInverse(cov_block, dims, scale=1.0 / n_s)
                hbar = hs.mean(axis=1)
                start = slot_sp[slot]
                if start is None:
                    fit = initialize_specular(hbar, dims, k_paths, cinv_mean, n_starts=n_starts, rng=rng, opts=opts)
                else:
                    fit = gauss_newton_specular(hbar, start, cinv_mean, opts, dims)
                if per_snapshot and n_s > 1:
                    fits = [gauss_newton_specular(hs[:, u], fit, cinv, opts, dims) for u in range(n_s)]
                    fit = _average_specular(fits)
                new_sp[slot] = fit
            resid = np.concatenate(
                [hs - specular_mean(new_sp[slot], dims)[:, None] for slot, hs in groups.items()], axis=1
            )
        except (SingularModelError, NumericalFailure) as exc:
            raise type(exc)(f"round {rnd}, specular sub-problem: {exc}") from exc
        try:
            l_hat = estimate_num_taps(resid, eta, dims.n_f)
            new_dn = _fit_vn_with_taps(resid, dn, l_hat, tap_search, dims.n_f, opts)
        except (SingularModelError, NumericalFailure) as exc:
            raise type(exc)(f"round {rnd}, diffuse sub-problem: {exc}") from exc
        new_a = a
        diffs = None
        if diff_samples is not None:
            diffs = np.asarray(diff_samples)
            if diff_mean_fn is not None:
                diffs = diffs - diff_mean_fn(new_sp)
            try:
                if hypothesis == "H0":
                    new_a = estimate_similarity(diffs, new_dn, a, "H0", None, opts, dims.n_f)
                else:
                    new_a = estimate_similarity(diffs, dn_ref, a, "H1", new_dn, opts, dims.n_f)
            except (SingularModelError, NumericalFailure) as exc:
                raise type(exc)(f"round {rnd}, similarity sub-problem: {exc}") from exc
        obj = _joint_objective(groups, new_sp, new_dn, dims, diffs, new_a.a, hypothesis, dn_ref)
        if trace and obj < trace[-1]:
            converged = True
            break
        vec_new = np.concatenate([np.concatenate([s.to_vector() for s in new_sp.values()]),
                                  [new_dn.alpha2, new_dn.beta, new_dn.sigma2, new_a.a]])
        trace.append(obj)
        slot_sp, dn, a = new_sp, new_dn, new_a
        rounds = rnd + 1
        if prev is not None and prev.shape == vec_new.shape and _rel_change(vec_new, prev) < opts.rel_tol:
            converged = True
            break
        prev = vec_new
    first = slot_sp[next(iter(slot_sp))]
    return EstimationReport(
        theta_sp_hat=first, theta_vn_hat=dn, a_hat=a, log_likelihood_trace=trace,
        converged=converged, slot_specular=dict(slot_sp), rounds_run=rounds,
    )
