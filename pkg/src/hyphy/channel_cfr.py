"""Generative model of MIMO-OFDM channel frequency responses (CFRs).

A measured CFR is the sum of a deterministic specular part, a zero-mean
diffuse part with Toeplitz frequency covariance, and white measurement
noise. Diffuse tap gains evolve in time with a first-order autoregression.

Index convention for a CFR vector of length ``m = n_tx * n_rx * n_f``: entry
``(t * n_rx + r) * n_f + n`` holds antenna pair (tx ``t``, rx ``r``) at
subcarrier ``n``. Subcarriers run fastest, so the covariance is block
diagonal with one Toeplitz block per antenna pair.

Tap-to-frequency convention: ``q[n] = sum_l A_l exp(+2j*pi*n*l/n_f)``, which
makes ``E[q[k] q[0]^*] = nu[k]`` and the covariance ``toeplitz(nu)`` with
first column ``nu``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import DimensionError, SingularModelError

__all__ = [
    "CfrDims",
    "SpecularParams",
    "DiffuseNoiseParams",
    "SimilarityParam",
    "ToeplitzCov",
    "CfrSample",
    "steering_vector",
    "specular_mean",
    "kappa",
    "tap_variances",
    "diffuse_noise_cov",
    "kron_expand",
    "taps_to_cfr",
    "sample_taps",
    "evolve_taps",
    "cross_taps",
    "sample_diffuse",
    "sample_cfr_sequence",
    "diff_cov_h0",
    "diff_cov_h1",
    "cross_diff_cov",
    "gaussian_log_likelihood",
    "JITTER_REL",
]

# Relative jitter added to the diagonal when a Cholesky factorization fails.
JITTER_REL = 1e-8


@dataclass(frozen=True)
class CfrDims:
    n_tx: int
    n_rx: int
    n_f: int

    def __post_init__(self):
        for name in ("n_tx", "n_rx", "n_f"):
            if int(getattr(self, name)) < 1:
                raise DimensionError(f"{name} must be positive")

    @property
    def m(self) -> int:
        return self.n_tx * self.n_rx * self.n_f

    @property
    def n_blocks(self) -> int:
        """Number of antenna pairs, i.e. Toeplitz blocks."""
        return self.n_tx * self.n_rx


@dataclass(frozen=True)
class SpecularParams:
    """Angles of departure/arrival, per-subcarrier phase slopes and complex gains of K paths."""

    psi_t: np.ndarray
    psi_r: np.ndarray
    tau: np.ndarray
    rho: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "psi_t", np.atleast_1d(np.asarray(self.psi_t, dtype=float)))
        object.__setattr__(self, "psi_r", np.atleast_1d(np.asarray(self.psi_r, dtype=float)))
        object.__setattr__(self, "tau", np.atleast_1d(np.asarray(self.tau, dtype=float)))
        object.__setattr__(self, "rho", np.atleast_1d(np.asarray(self.rho, dtype=complex)))
        k = self.psi_t.shape[0]
        if k < 1 or any(a.shape != (k,) for a in (self.psi_r, self.tau, self.rho)):
            raise DimensionError("psi_t, psi_r, tau and rho must share length K >= 1")
        if not all(np.all(np.isfinite(a)) for a in (self.psi_t, self.psi_r, self.tau, self.rho)):
            raise ValueError("specular parameters must be finite")

    @property
    def k(self) -> int:
        return self.psi_t.shape[0]

    def to_vector(self) -> np.ndarray:
        """Real parameter vector ordered [psi_t, psi_r, tau, Re rho, Im rho]."""
        return np.concatenate([self.psi_t, self.psi_r, self.tau, self.rho.real, self.rho.imag])

    @classmethod
    def from_vector(cls, theta: np.ndarray) -> "SpecularParams":
        theta = np.asarray(theta, dtype=float)
        if theta.ndim != 1 or theta.size % 5:
            raise DimensionError("parameter vector length must be a multiple of 5")
        k = theta.size // 5
        p = theta.reshape(5, k)
        return cls(p[0], p[1], p[2], p[3] + 1j * p[4])


@dataclass(frozen=True)
class DiffuseNoiseParams:
    alpha2: float
    beta: float
    l_taps: int
    sigma2: float = 0.0

    def __post_init__(self):
        if not self.alpha2 >= 0:
            raise ValueError("alpha2 must be nonnegative")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if int(self.l_taps) < 1 or int(self.l_taps) != self.l_taps:
            raise ValueError("l_taps must be an integer >= 1")
        if not self.sigma2 >= 0:
            raise ValueError("sigma2 must be nonnegative")
        object.__setattr__(self, "l_taps", int(self.l_taps))


@dataclass(frozen=True)
class SimilarityParam:
    a: float

    def __post_init__(self):
        if not 0.0 <= self.a <= 1.0:
            raise ValueError("similarity parameter must lie in [0, 1]")


@dataclass(frozen=True)
class ToeplitzCov:
    """Hermitian Toeplitz covariance given by its first column."""

    nu: np.ndarray

    def __post_init__(self):
        nu = np.atleast_1d(np.asarray(self.nu, dtype=complex)).copy()
        nu[0] = nu[0].real
        object.__setattr__(self, "nu", nu)

    @property
    def size(self) -> int:
        return self.nu.shape[0]

    def matrix(self) -> np.ndarray:
        # scipy takes the first row as conj(c) when r is omitted
        return sla.toeplitz(self.nu)

    def cholesky(self) -> np.ndarray:
        return safe_cholesky(self.matrix())


@dataclass
class CfrSample:
    h: np.ndarray
    snapshot_index: int = 0
    label: int | None = None

    def check(self, dims: CfrDims) -> None:
        if self.h.shape != (dims.m,):
            raise DimensionError(f"CFR length {self.h.shape} does not match m={dims.m}")


def safe_cholesky(cov: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor; retries with jitter 1e-8 and 1e-7 times the mean diagonal."""
    cov = np.asarray(cov)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    scale = float(np.mean(np.abs(np.diag(cov)))) or 1.0
    eye = np.eye(cov.shape[0])
    for eps in (JITTER_REL * scale, 10 * JITTER_REL * scale):
        try:
            return np.linalg.cholesky(cov + eps * eye)
        except np.linalg.LinAlgError:
            continue
    raise SingularModelError("covariance is not positive definite after jitter")


def steering_vector(psi: float, n_ant: int) -> np.ndarray:
    """Uniform linear array response with symmetric element indexing."""
    if n_ant < 1:
        raise DimensionError("n_ant must be >= 1")
    j = np.arange(n_ant) - (n_ant - 1) / 2
    return np.exp(1j * j * psi) / n_ant


def _basis(v: np.ndarray, n: int) -> np.ndarray:
    j = np.arange(n) - (n - 1) / 2
    return np.exp(-1j * np.outer(j, v))


def _khatri_rao(*mats: np.ndarray) -> np.ndarray:
    out = mats[0]
    for b in mats[1:]:
        out = (out[:, None, :] * b[None, :, :]).reshape(-1, out.shape[1])
    return out


def specular_mean(sp: SpecularParams, dims: CfrDims) -> np.ndarray:
    """Deterministic part of the CFR for K specular paths.

    Equals ``sum_k rho_k a_R(psi_r_k) a_T(psi_t_k)^H`` scaled by
    ``sqrt(n_rx * n_tx)`` and the subcarrier phase ``exp(-i (n - (n_f-1)/2) tau_k)``,
    arranged with the module's index convention.
    """
    u_t = _basis(sp.psi_t, dims.n_tx)
    u_r = _basis(-sp.psi_r, dims.n_rx)
    u_f = _basis(sp.tau, dims.n_f)
    return _khatri_rao(u_t, u_r, u_f) @ sp.rho / np.sqrt(dims.n_tx * dims.n_rx)


def kappa(dn: DiffuseNoiseParams, m_frac) -> np.ndarray | complex:
    """Frequency correlation of the diffuse component at normalized lag ``m_frac``."""
    m_frac = np.asarray(m_frac, dtype=float)
    z = np.exp(-2 * np.pi * (dn.beta - 1j * m_frac))
    # the geometric sum (1 - z^L) / (1 - z), summed term by term: stable as beta -> 0
    powers = z[..., None] ** np.arange(dn.l_taps)
    val = dn.alpha2 * -np.expm1(-2 * np.pi * dn.beta) * powers.sum(axis=-1)
    return val if val.ndim else complex(val)


def tap_variances(dn: DiffuseNoiseParams) -> np.ndarray:
    """Exponential power-delay profile of the L diffuse taps."""
    l = np.arange(dn.l_taps)
    return dn.alpha2 * (1 - np.exp(-2 * np.pi * dn.beta)) * np.exp(-2 * np.pi * dn.beta * l)


def diffuse_noise_cov(dn: DiffuseNoiseParams, n_f: int) -> ToeplitzCov:
    if n_f < 1:
        raise DimensionError("n_f must be >= 1")
    nu = np.asarray(kappa(dn, np.arange(n_f) / n_f), dtype=complex).reshape(n_f)
    nu[0] += dn.sigma2
    return ToeplitzCov(nu)


def kron_expand(cov: ToeplitzCov, dims: CfrDims) -> np.ndarray:
    """Full m x m covariance: one Toeplitz block per antenna pair."""
    if cov.size != dims.n_f:
        raise DimensionError("Toeplitz block size must equal n_f")
    return np.kron(np.eye(dims.n_blocks), cov.matrix())


def taps_to_cfr(taps: np.ndarray, n_f: int) -> np.ndarray:
    """Map tap gains (..., L) to subcarriers (..., n_f) via the exponential sum."""
    l_taps = taps.shape[-1]
    f = np.exp(2j * np.pi * np.outer(np.arange(n_f), np.arange(l_taps)) / n_f)
    return taps @ f.T


def _cn(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def sample_taps(dn: DiffuseNoiseParams, shape, rng: np.random.Generator) -> np.ndarray:
    """Stationary tap draws with trailing axis of length L."""
    shape = tuple(np.atleast_1d(shape)) + (dn.l_taps,)
    return np.sqrt(tap_variances(dn)) * _cn(rng, shape)


def evolve_taps(taps: np.ndarray, dn: DiffuseNoiseParams, a: float, rng) -> np.ndarray:
    """One AR-1 step that keeps the tap variances stationary."""
    var = tap_variances(dn)
    return a * taps + np.sqrt((1 - a * a) * var) * _cn(rng, taps.shape)


def cross_taps(
    taps_a: np.ndarray,
    dn_a: DiffuseNoiseParams,
    dn_e: DiffuseNoiseParams,
    a_e: float,
    rng,
) -> np.ndarray:
    """Draw a second transmitter's taps correlated with ``taps_a``.

    Targets per-tap cross-covariance ``a_e * Var_A[l]``. That target is only
    realizable when ``a_e**2 * Var_A[l] <= Var_E[l]``; otherwise it is clipped
    to the Cauchy-Schwarz limit ``sqrt(Var_A[l] * Var_E[l])``. Taps beyond
    either profile's length are uncorrelated.
    """
    va = tap_variances(dn_a)
    ve = tap_variances(dn_e)
    l_common = min(dn_a.l_taps, dn_e.l_taps)
    coef = np.zeros(dn_e.l_taps)
    resid = ve.copy()
    c = np.minimum(a_e * va[:l_common], np.sqrt(va[:l_common] * ve[:l_common]))
    coef[:l_common] = c / va[:l_common]
    resid[:l_common] = np.maximum(ve[:l_common] - c * c / va[:l_common], 0.0)
    lead = taps_a.shape[:-1]
    out = np.sqrt(resid) * _cn(rng, lead + (dn_e.l_taps,))
    out[..., :l_common] += coef[:l_common] * taps_a[..., :l_common]
    return out


def sample_diffuse(dn: DiffuseNoiseParams, dims: CfrDims, n: int, rng) -> np.ndarray:
    """n independent diffuse-plus-noise draws, shape (n, m)."""
    taps = sample_taps(dn, (n, dims.n_blocks), rng)
    q = taps_to_cfr(taps, dims.n_f).reshape(n, dims.m)
    return q + np.sqrt(dn.sigma2) * _cn(rng, q.shape)


def sample_cfr_sequence(
    sp: SpecularParams,
    dn: DiffuseNoiseParams,
    sim: SimilarityParam,
    dims: CfrDims,
    n_steps: int,
    rng: np.random.Generator,
    snapshot_index: int = 0,
) -> list[CfrSample]:
    """Time sequence of CFRs sharing one specular mean, diffuse taps following AR-1."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    mean = specular_mean(sp, dims)
    taps = sample_taps(dn, (dims.n_blocks,), rng)
    out = []
    for u in range(n_steps):
        if u:
            taps = evolve_taps(taps, dn, sim.a, rng)
        q = taps_to_cfr(taps, dims.n_f).reshape(dims.m)
        noise = np.sqrt(dn.sigma2) * _cn(rng, dims.m)
        out.append(CfrSample(mean + q + noise, snapshot_index=snapshot_index))
    return out


def diff_cov_h0(dn_a: DiffuseNoiseParams, a: SimilarityParam, n_f: int) -> ToeplitzCov:
    """Diffuse covariance of consecutive same-transmitter differences (noise excluded)."""
    nu = 2 * (1 - a.a) * np.asarray(kappa(dn_a, np.arange(n_f) / n_f), dtype=complex).reshape(n_f)
    return ToeplitzCov(nu)


def diff_cov_h1(
    dn_a: DiffuseNoiseParams,
    dn_e: DiffuseNoiseParams,
    a_e: SimilarityParam,
    n_f: int,
) -> ToeplitzCov:
    """Closed-form diffuse covariance of cross-transmitter differences (noise excluded).

    The closed form can be indefinite when the implied cross-covariance
    violates Cauchy-Schwarz; no jitter is applied here.
    """
    m = np.arange(n_f) / n_f
    ka = np.asarray(kappa(dn_a, m), dtype=complex).reshape(n_f)
    ke = np.asarray(kappa(dn_e, m), dtype=complex).reshape(n_f)
    return ToeplitzCov(ke - 2 * a_e.a * ka + ka)


def cross_diff_cov(
    dn_a: DiffuseNoiseParams,
    dn_e: DiffuseNoiseParams,
    a_e: SimilarityParam,
    n_f: int,
) -> ToeplitzCov:
    """Exact diffuse covariance of differences produced by ``cross_taps``.

    Coincides with ``diff_cov_h1`` whenever the closed form is realizable.
    """
    va = tap_variances(dn_a)
    ve = tap_variances(dn_e)
    l_max = max(dn_a.l_taps, dn_e.l_taps)
    l_common = min(dn_a.l_taps, dn_e.l_taps)
    var = np.zeros(l_max)
    var[: dn_a.l_taps] += va
    var[: dn_e.l_taps] += ve
    c = np.minimum(a_e.a * va[:l_common], np.sqrt(va[:l_common] * ve[:l_common]))
    var[:l_common] -= 2 * c
    nu = np.exp(2j * np.pi * np.outer(np.arange(n_f), np.arange(l_max)) / n_f) @ var
    return ToeplitzCov(nu)


def gaussian_log_likelihood(h: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> float:
    """Circularly-symmetric complex Gaussian log density."""
    h = np.asarray(h)
    cov = np.atleast_2d(np.asarray(cov))
    if h.shape[0] != cov.shape[0]:
        raise DimensionError("vector and covariance sizes differ")
    chol = safe_cholesky(cov)
    w = sla.solve_triangular(chol, h - mean, lower=True)
    logdet = 2 * np.sum(np.log(np.diag(chol).real))
    return float(-h.shape[0] * np.log(np.pi) - logdet - np.vdot(w, w).real)
