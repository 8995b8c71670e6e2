"""Asynchronous DS-CDMA uplink with multipath.

Sampling conventions (``M`` samples per chip, ``N`` chips per bit):

* Frame ``p`` holds the received samples at times ``p*T_b + s*T_c/M`` for
  ``s = 1..M*N``.
* The effective chip pulse ``g_k`` (amplitude x raised cosine x multipath)
  is sampled at ``j*T_c/M`` for ``j = 1..M*N + 8*M - 1``; it vanishes at
  every other grid point.
* The code matrix for lag ``i`` places chip ``n`` of bit ``p - i`` so that
  row ``s`` picks ``g_k`` at index ``j = i*M*N + s - M*n``. Then
  ``C_{k,p-i}(p) @ g_k`` is exactly the bit-``p-i`` waveform of user ``k``
  sampled over frame ``p``.

Bits before the first frame are zero. The detection window for bit ``p``
spans frames ``p`` and ``p+1``.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DimensionError, SingularModelError

__all__ = [
    "CdmaConfig",
    "UserChannel",
    "SpreadingCodes",
    "CdmaScene",
    "rc_pulse",
    "srrc_pulse",
    "effective_chip_pulse",
    "random_codes",
    "random_channels",
    "random_bits",
    "code_matrix",
    "frame_operator",
    "noise_variance",
    "synthesize_scene",
    "ls_channel_estimate",
    "extract_single_path",
    "extract_multipath",
    "channel_from_paths",
    "window_signatures",
    "mmse_filters",
    "mmse_detect",
    "mmse_detect_all",
    "map_detect_exhaustive",
    "map_detect_window",
    "corrupt_codes",
    "bits_to_class",
    "class_to_bits",
    "save_scene",
    "load_scene",
]

MAX_MAP_USERS = 12


@dataclass(frozen=True)
class CdmaConfig:
    k_users: int = 3
    n_gain: int = 32
    m_oversample: int = 2
    n_packets: int = 200
    l_paths: int = 3
    snr_db: float = 8.0
    nfr_db: float = 5.0
    rho_mismatch: float = 0.0
    t_c: float = 1e-3
    rolloff: float = 0.22
    amplitude: float = 2.0

    def __post_init__(self):
        if min(self.k_users, self.n_gain, self.n_packets, self.l_paths) < 1:
            raise ValueError("counts must be positive")
        if self.m_oversample != 2:
            raise ValueError("the sampling model is defined for two samples per chip")
        if not 0 <= self.rho_mismatch <= 1:
            raise ValueError("rho_mismatch must lie in [0, 1]")
        if not 0 < self.rolloff <= 1:
            raise ValueError("rolloff must lie in (0, 1]")

    @property
    def t_b(self) -> float:
        return self.n_gain * self.t_c

    @property
    def frame_len(self) -> int:
        return self.m_oversample * self.n_gain

    @property
    def g_len(self) -> int:
        return self.m_oversample * self.n_gain + 8 * self.m_oversample - 1

    def g_times(self) -> np.ndarray:
        return np.arange(1, self.g_len + 1) * self.t_c / self.m_oversample


@dataclass(frozen=True)
class UserChannel:
    amplitude: complex
    offset: float
    path_gains: np.ndarray
    path_delays: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "path_gains", np.atleast_1d(np.asarray(self.path_gains, dtype=complex)))
        object.__setattr__(self, "path_delays", np.atleast_1d(np.asarray(self.path_delays, dtype=float)))
        if self.path_gains.shape != self.path_delays.shape:
            raise DimensionError("path gains and delays must have equal length")
        if self.offset < 0 or np.any(self.path_delays < 0):
            raise ValueError("delays must be nonnegative")

    def total_delays(self) -> np.ndarray:
        return self.offset + self.path_delays


@dataclass
class SpreadingCodes:
    """Antipodal chips indexed (user, bit, chip)."""

    chips: np.ndarray

    def __post_init__(self):
        self.chips = np.asarray(self.chips, dtype=float)
        if self.chips.ndim != 3:
            raise DimensionError("chips must be (K, P, N)")
        if not np.all(np.isin(self.chips, (-1.0, 0.0, 1.0))):
            raise ValueError("chips must be -1, +1 (or 0 for a silenced code)")

    @property
    def k_users(self) -> int:
        return self.chips.shape[0]

    def chip_row(self, k: int, p: int) -> np.ndarray:
        return self.chips[k, min(max(p, 0), self.chips.shape[1] - 1)]


@dataclass
class CdmaScene:
    cfg: CdmaConfig
    frames: np.ndarray
    true_bits: np.ndarray
    g_true: np.ndarray
    codes: SpreadingCodes
    channels: list
    noise_var: float

    def code_matrices(self, p: int) -> list:
        """[[C_{k,p}(p), C_{k,p-1}(p), C_{k,p-2}(p)] for each user k]."""
        return [[code_matrix(self.codes, k, p, lag, self.cfg) for lag in range(3)] for k in range(self.cfg.k_users)]


# ---------------------------------------------------------------------------
# pulses and channels


def _rc_centered(t: np.ndarray, t_c: float, beta: float) -> np.ndarray:
    x = t / t_c
    den = 1.0 - (2.0 * beta * x) ** 2
    sing = np.abs(den) < 1e-10
    safe = np.where(sing, 1.0, den)
    val = np.sinc(x) * np.cos(np.pi * beta * x) / safe
    return np.where(sing, np.pi / 4 * np.sinc(1.0 / (2.0 * beta)), val)


def rc_pulse(t, t_c: float, rolloff: float = 0.22):
    """Raised-cosine chip pulse delayed by 4 chips and truncated to [0, 8*T_c)."""
    t = np.asarray(t, dtype=float)
    out = np.where((t >= 0) & (t < 8 * t_c), _rc_centered(t - 4 * t_c, t_c, rolloff), 0.0)
    return out if out.ndim else float(out)


def srrc_pulse(t, t_c: float, rolloff: float = 0.22):
    """Square-root raised cosine delayed by 2 chips and truncated to [0, 4*T_c].

    Scaled so that its autocorrelation approximates ``rc_pulse`` (up to a
    factor ``T_c`` for the continuous-time convolution).
    """
    t = np.asarray(t, dtype=float)
    b = rolloff
    x = (t - 2 * t_c) / t_c
    num = np.sin(np.pi * x * (1 - b)) + 4 * b * x * np.cos(np.pi * x * (1 + b))
    den = np.pi * x * (1 - (4 * b * x) ** 2)
    at0 = np.abs(x) < 1e-10
    at_sing = np.abs(np.abs(x) - 1 / (4 * b)) < 1e-10
    safe = np.where(at0 | at_sing, 1.0, den)
    val = num / safe
    val = np.where(at0, 1 - b + 4 * b / np.pi, val)
    edge = b / np.sqrt(2) * ((1 + 2 / np.pi) * np.sin(np.pi / (4 * b)) + (1 - 2 / np.pi) * np.cos(np.pi / (4 * b)))
    val = np.where(at_sing, edge, val)
    out = np.where((t >= 0) & (t <= 4 * t_c), val, 0.0)
    return out if out.ndim else float(out)


def effective_chip_pulse(uc: UserChannel, cfg: CdmaConfig) -> np.ndarray:
    """Samples of ``A_k * sum_l alpha_l * h_RC(t - tau_k - tau'_l)`` on the g grid."""
    if np.max(uc.total_delays()) >= cfg.t_b:
        raise ValueError("offset plus delay spread must stay below the bit duration")
    t = cfg.g_times()
    g = np.zeros(cfg.g_len, dtype=complex)
    for a, d in zip(uc.path_gains, uc.total_delays()):
        g += a * rc_pulse(t - d, cfg.t_c, cfg.rolloff)
    return uc.amplitude * g


def channel_from_paths(delays: np.ndarray, gains: np.ndarray) -> UserChannel:
    """Channel with unit amplitude, zero offset and the given absolute path delays."""
    return UserChannel(1.0, 0.0, np.asarray(gains, dtype=complex), np.asarray(delays, dtype=float))


def random_codes(cfg: CdmaConfig, rng: np.random.Generator, short: bool = True) -> SpreadingCodes:
    """Random antipodal codes; short codes repeat the same chips every bit."""
    k, p, n = cfg.k_users, cfg.n_packets, cfg.n_gain
    if short:
        base = rng.choice([-1.0, 1.0], size=(k, 1, n))
        return SpreadingCodes(np.repeat(base, p, axis=1))
    return SpreadingCodes(rng.choice([-1.0, 1.0], size=(k, p, n)))


def random_channels(cfg: CdmaConfig, rng: np.random.Generator, path_spread_db: float = 10.0) -> list:
    """Per-user channels: near-far amplitudes, random offsets, separated decaying paths.

    Amplitude ``amplitude * 10**(u/20)`` with ``u ~ U(-nfr_db, nfr_db)``.
    Consecutive paths are 2.5 to 4 chips apart with magnitudes falling
    linearly in dB over ``path_spread_db``; phases are uniform.
    """
    out = []
    L = cfg.l_paths
    mags = 10 ** (-np.linspace(0, path_spread_db, L) / 20) if L > 1 else np.ones(1)
    for _ in range(cfg.k_users):
        u = rng.uniform(-cfg.nfr_db, cfg.nfr_db)
        spacing = rng.uniform(2.5, 4.0, L - 1) * cfg.t_c
        delays = np.r_[0.0, np.cumsum(spacing)]
        span = cfg.t_b - delays[-1] - cfg.t_c
        offset = rng.uniform(0.0, max(span, 0.0))
        gains = mags * np.exp(1j * rng.uniform(-np.pi, np.pi, L))
        out.append(UserChannel(cfg.amplitude * 10 ** (u / 20), offset, gains, delays))
    return out


def random_bits(cfg: CdmaConfig, rng: np.random.Generator) -> np.ndarray:
    return rng.choice([-1, 1], size=(cfg.k_users, cfg.n_packets)).astype(int)


def corrupt_codes(codes: SpreadingCodes, rho: float, rng: np.random.Generator) -> SpreadingCodes:
    """Flip each chip independently with probability ``rho``.

    Short codes (identical rows across bits) are corrupted once and stay short.
    """
    if not 0 <= rho <= 1:
        raise ValueError("rho must lie in [0, 1]")
    chips = codes.chips
    short = chips.shape[1] > 1 and np.all(chips == chips[:, :1, :])
    if short:
        flip = rng.random((chips.shape[0], 1, chips.shape[2])) < rho
        flip = np.repeat(flip, chips.shape[1], axis=1)
    else:
        flip = rng.random(chips.shape) < rho
    return SpreadingCodes(np.where(flip, -chips, chips))


# ---------------------------------------------------------------------------
# linear model


def code_matrix(codes: SpreadingCodes, k: int, p: int, lag: int, cfg: CdmaConfig) -> np.ndarray:
    """MN x (MN + 8M - 1) matrix mapping g_k to bit ``p - lag``'s samples in frame ``p``."""
    if lag not in (0, 1, 2):
        raise ValueError("lag must be 0, 1 or 2")
    M, N = cfg.m_oversample, cfg.n_gain
    chips = codes.chip_row(k, p - lag)
    out = np.zeros((cfg.frame_len, cfg.g_len))
    s = np.arange(1, cfg.frame_len + 1)
    for n in range(N):
        j = lag * M * N + s - M * n
        ok = (j >= 1) & (j <= cfg.g_len)
        out[s[ok] - 1, j[ok] - 1] = chips[n]
    return out


def _bit(bits: np.ndarray, k: int, p: int) -> float:
    return float(bits[k, p]) if 0 <= p < bits.shape[1] else 0.0


def frame_operator(codes: SpreadingCodes, bits: np.ndarray, p: int, cfg: CdmaConfig) -> np.ndarray:
    """A(p) = [A_1(p) ... A_K(p)], with A_k(p) = sum_i b_k(p-i) C_{k,p-i}(p)."""
    blocks = []
    for k in range(cfg.k_users):
        a = np.zeros((cfg.frame_len, cfg.g_len))
        for lag in range(3):
            b = _bit(bits, k, p - lag)
            if b:
                a += b * code_matrix(codes, k, p, lag, cfg)
        blocks.append(a)
    return np.hstack(blocks)


def noise_variance(g: np.ndarray, cfg: CdmaConfig, snr_db: float | None = None) -> float:
    """Per-sample complex noise variance for a bit-energy SNR.

    The bit energy of user ``k`` is taken as ``N * ||g_k||^2 / M`` and the
    SNR refers to its average over users.
    """
    snr_db = cfg.snr_db if snr_db is None else snr_db
    eb = np.mean(cfg.n_gain * np.sum(np.abs(np.atleast_2d(g)) ** 2, axis=1) / cfg.m_oversample)
    return float(eb / 10 ** (snr_db / 10))


def synthesize_scene(
    cfg: CdmaConfig,
    codes: SpreadingCodes,
    channels: Sequence[UserChannel],
    bits: np.ndarray,
    rng: np.random.Generator,
    noise_var: float | None = None,
) -> CdmaScene:
    """Frames ``y(p) = A(p) g + n(p)`` for p = 0..P-1."""
    bits = np.asarray(bits)
    if bits.shape != (cfg.k_users, cfg.n_packets):
        raise DimensionError("bits must be (K, P)")
    if not np.all(np.isin(bits, (-1, 1))):
        raise ValueError("bits must be antipodal")
    g = np.stack([effective_chip_pulse(uc, cfg) for uc in channels])
    sig = noise_variance(g, cfg) if noise_var is None else float(noise_var)
    gvec = g.ravel()
    frames = np.empty((cfg.n_packets, cfg.frame_len), dtype=complex)
    for p in range(cfg.n_packets):
        frames[p] = frame_operator(codes, bits, p, cfg) @ gvec
    noise = (rng.standard_normal(frames.shape) + 1j * rng.standard_normal(frames.shape)) * np.sqrt(sig / 2)
    return CdmaScene(cfg, frames + noise, bits, g, codes, list(channels), sig)


def ls_channel_estimate(
    frames: np.ndarray,
    codes: SpreadingCodes,
    bits: np.ndarray,
    cfg: CdmaConfig,
    n_t: int,
    return_residual: bool = False,
):
    """Least-squares g for all users from the first ``n_t`` frames with known bits.

    Returns a (K, MN + 8M - 1) array; optionally also the mean squared
    residual per complex sample.
    """
    n_t = min(n_t, frames.shape[0])
    dim = cfg.k_users * cfg.g_len
    gram = np.zeros((dim, dim))
    rhs = np.zeros(dim, dtype=complex)
    ops = []
    for p in range(n_t):
        a = frame_operator(codes, bits, p, cfg)
        ops.append(a)
        gram += a.T @ a
        rhs += a.T @ frames[p]
    rank = np.linalg.matrix_rank(gram)
    if rank < dim:
        raise SingularModelError(f"normal matrix is rank deficient: rank {rank} < {dim}")
    g = np.linalg.solve(gram, rhs)
    if not return_residual:
        return g.reshape(cfg.k_users, cfg.g_len)
    res = sum(np.sum(np.abs(frames[p] - ops[p] @ g) ** 2) for p in range(n_t))
    dof = max(n_t * cfg.frame_len - dim, 1)
    return g.reshape(cfg.k_users, cfg.g_len), float(res / dof)


# ---------------------------------------------------------------------------
# parameter extraction


def _pulse_matrix(delays: np.ndarray, cfg: CdmaConfig) -> np.ndarray:
    t = cfg.g_times()
    return rc_pulse(t[:, None] - np.atleast_1d(delays)[None, :], cfg.t_c, cfg.rolloff)


def extract_single_path(g_hat_k: np.ndarray, cfg: CdmaConfig):
    """Delay, amplitude and phase of the dominant path in a sampled chip pulse.

    A coarse delay comes from sliding the squared pulse template over
    ``|g|^2``. The delay is then refined on a grid of step ``T_c/(10M)``
    covering +-19 steps around it, picking the candidate whose squared
    pulse has the largest normalized correlation with ``|g|^2``, keeping
    only candidates in ``[0, T_b)``. Amplitude and phase follow from the
    least-squares projection of ``g`` on the pulse at that delay.
    """
    g = np.asarray(g_hat_k, dtype=complex)
    if g.shape != (cfg.g_len,):
        raise DimensionError(f"expected length {cfg.g_len}")
    if not np.any(g):
        raise ValueError("all-zero pulse")
    M = cfg.m_oversample
    step = cfg.t_c / M
    m = np.abs(g) ** 2
    tmpl = rc_pulse(np.arange(8 * M) * step, cfg.t_c, cfg.rolloff) ** 2
    q = np.correlate(m, tmpl, mode="valid")
    i_k = int(np.argmax(q))
    coarse = (i_k + 1) * step
    cands = coarse + np.arange(-19, 20) * cfg.t_c / (10 * M)
    # physical delays lie in [0, T_b)
    cands = cands[(cands >= 0) & (cands < cfg.t_b)]
    gam = _pulse_matrix(cands, cfg) ** 2
    norms = np.linalg.norm(gam, axis=0)
    score = (m @ gam) / np.where(norms > 0, norms, np.inf)
    tau = float(cands[int(np.argmax(score))])
    psi = _pulse_matrix(np.array([tau]), cfg)[:, 0]
    c = np.dot(psi, g) / np.dot(psi, psi)
    return tau, float(np.abs(c)), float(np.angle(c))


def extract_multipath(g_hat_k: np.ndarray, l_paths: int, cfg: CdmaConfig, refine_passes: int = 2) -> UserChannel:
    """Repeated single-path extraction with subtraction of each found path.

    ``refine_passes`` optionally re-estimates every path against the
    residual of the others after the greedy pass. Paths are returned
    sorted by decreasing amplitude, as a unit-amplitude zero-offset channel.
    """
    if l_paths < 1:
        raise ValueError("l_paths must be >= 1")
    g = np.asarray(g_hat_k, dtype=complex)
    resid = g.copy()
    paths = []
    for _ in range(l_paths):
        tau, a, phi = extract_single_path(resid, cfg)
        contrib = a * np.exp(1j * phi) * _pulse_matrix(np.array([tau]), cfg)[:, 0]
        resid = resid - contrib
        paths.append([tau, a, phi])
        if not np.any(np.abs(resid) > 1e-14 * np.abs(g).max()):
            break
    for _ in range(refine_passes):
        for i in range(len(paths)):
            others = g.copy()
            for j, (t, a, ph) in enumerate(paths):
                if j != i:
                    others -= a * np.exp(1j * ph) * _pulse_matrix(np.array([t]), cfg)[:, 0]
            paths[i] = list(extract_single_path(others, cfg))
    paths.sort(key=lambda x: -x[1])
    delays = np.array([p[0] for p in paths])
    gains = np.array([p[1] * np.exp(1j * p[2]) for p in paths])
    return channel_from_paths(delays, gains)


# ---------------------------------------------------------------------------
# detection


def window_signatures(codes: SpreadingCodes, g: np.ndarray, p: int, cfg: CdmaConfig) -> dict:
    """Signatures over frames ``p, p+1`` of bits ``p-2 .. p+1`` of every user.

    Returns ``{(k, bit_index): vector of length 2MN}``.
    """
    out = {}
    L = cfg.frame_len
    for k in range(cfg.k_users):
        for bi in range(p - 2, p + 2):
            s = np.zeros(2 * L, dtype=complex)
            for f in (0, 1):
                lag = p + f - bi
                if 0 <= lag <= 2:
                    s[f * L:(f + 1) * L] = code_matrix(codes, k, p + f, lag, cfg) @ g[k]
            out[(k, bi)] = s
    return out


def mmse_filters(codes: SpreadingCodes, g: np.ndarray, noise_var: float, p: int, cfg: CdmaConfig) -> np.ndarray:
    """Linear MMSE filters (K x 2MN) for bits ``b_k(p)`` over the two-frame window.

    The window covariance is built from the assumed model with unit-power
    independent bits: ``sum s s^H + noise_var I``.
    """
    sig = window_signatures(codes, g, p, cfg)
    S = np.stack(list(sig.values()), axis=1)
    R = S @ S.conj().T + noise_var * np.eye(S.shape[0])
    targets = np.stack([sig[(k, p)] for k in range(cfg.k_users)], axis=1)
    try:
        W = np.linalg.solve(R, targets)
    except np.linalg.LinAlgError:
        eps = 1e-10 * np.real(np.trace(R)) / R.shape[0]
        W = np.linalg.solve(R + eps * np.eye(R.shape[0]), targets)
    return W.T


def _window(frames: np.ndarray, p: int) -> np.ndarray:
    nxt = frames[p + 1] if p + 1 < frames.shape[0] else np.zeros_like(frames[p])
    return np.concatenate([frames[p], nxt])


def mmse_detect(scene: CdmaScene, p: int, g_assumed: np.ndarray, noise_var: float,
                codes_assumed: SpreadingCodes) -> np.ndarray:
    W = mmse_filters(codes_assumed, g_assumed, noise_var, p, scene.cfg)
    stat = np.real(W.conj() @ _window(scene.frames, p))
    return np.where(stat >= 0, 1, -1)


def _is_short(codes: SpreadingCodes) -> bool:
    c = codes.chips
    return bool(np.all(c == c[:, :1, :]))


def mmse_detect_all(scene: CdmaScene, g_assumed: np.ndarray, noise_var: float,
                    codes_assumed: SpreadingCodes) -> np.ndarray:
    """Bits (K, P) for every frame; one filter bank suffices for short codes."""
    cfg = scene.cfg
    P = scene.frames.shape[0]
    out = np.empty((cfg.k_users, P), dtype=int)
    W = mmse_filters(codes_assumed, g_assumed, noise_var, 2, cfg) if _is_short(codes_assumed) else None
    for p in range(P):
        Wp = W if W is not None else mmse_filters(codes_assumed, g_assumed, noise_var, p, cfg)
        stat = np.real(Wp.conj() @ _window(scene.frames, p))
        out[:, p] = np.where(stat >= 0, 1, -1)
    return out


def _min_distance(y: np.ndarray, base: np.ndarray, sigs: np.ndarray):
    """Lexicographic search (-1 before +1) for the sign vector minimizing ||y - base - sigs^T b||."""
    n = sigs.shape[0]
    best, best_d = None, np.inf
    r0 = y - base
    for combo in itertools.product((-1, 1), repeat=n):
        b = np.asarray(combo, dtype=float)
        d = float(np.sum(np.abs(r0 - b @ sigs) ** 2))
        if d < best_d:
            best, best_d = b, d
    return best.astype(int), best_d


def map_detect_exhaustive(y_frame: np.ndarray, mats: Sequence[Sequence[np.ndarray]], g: np.ndarray,
                          past_bits: np.ndarray | None = None) -> np.ndarray:
    """Minimum-distance decision on b(p) for a single frame.

    ``mats[k] = [C_{k,p}(p), C_{k,p-1}(p), C_{k,p-2}(p)]``; ``past_bits`` is
    (K, 2) holding ``b(p-1), b(p-2)`` (zeros if unknown or before the start).
    """
    K = len(mats)
    if K > MAX_MAP_USERS:
        raise ValueError(f"exhaustive search limited to {MAX_MAP_USERS} users")
    past = np.zeros((K, 2)) if past_bits is None else np.asarray(past_bits, dtype=float)
    base = np.zeros_like(y_frame, dtype=complex)
    sigs = np.empty((K, len(y_frame)), dtype=complex)
    for k in range(K):
        sigs[k] = mats[k][0] @ g[k]
        base += past[k, 0] * (mats[k][1] @ g[k]) + past[k, 1] * (mats[k][2] @ g[k])
    bits, _ = _min_distance(np.asarray(y_frame), base, sigs)
    return bits


def map_detect_window(scene: CdmaScene, p: int, g: np.ndarray, codes: SpreadingCodes,
                      past_bits: np.ndarray) -> np.ndarray:
    """Joint minimum-distance search over b(p), b(p+1) on the two-frame window.

    ``past_bits`` is (K, 2) with ``b(p-1), b(p-2)``. Returns b(p).
    """
    cfg = scene.cfg
    K = cfg.k_users
    if 2 * K > MAX_MAP_USERS:
        raise ValueError("window search too large")
    sig = window_signatures(codes, g, p, cfg)
    y = _window(scene.frames, p)
    base = np.zeros_like(y)
    for k in range(K):
        base += past_bits[k, 0] * sig[(k, p - 1)] + past_bits[k, 1] * sig[(k, p - 2)]
    has_next = p + 1 < scene.frames.shape[0]
    keys = [(k, p) for k in range(K)] + ([(k, p + 1) for k in range(K)] if has_next else [])
    sigs = np.stack([sig[key] for key in keys])
    bits, _ = _min_distance(y, base, sigs)
    return bits[:K]


def bits_to_class(bits: np.ndarray) -> np.ndarray:
    """Antipodal bit columns (K, n) -> class index sum_k [b_k = +1] 2^k."""
    bits = np.atleast_2d(bits)
    w = 2 ** np.arange(bits.shape[0])
    return ((bits > 0).astype(int) * w[:, None]).sum(axis=0)


def class_to_bits(cls: np.ndarray, k_users: int) -> np.ndarray:
    cls = np.atleast_1d(cls)
    return np.stack([np.where((cls >> k) & 1, 1, -1) for k in range(k_users)])


# ---------------------------------------------------------------------------
# CSV export


def save_scene(scene: CdmaScene, directory) -> None:
    """Write frames.csv, bits.csv, codes.csv and channels.csv into ``directory``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / "frames.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["p"] + [f"{part}_{i}" for i in range(scene.cfg.frame_len) for part in ("re", "im")])
        for p, y in enumerate(scene.frames):
            w.writerow([p] + [repr(float(v)) for z in y for v in (z.real, z.imag)])
    with open(d / "bits.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k"] + [f"b_{p}" for p in range(scene.true_bits.shape[1])])
        for k, row in enumerate(scene.true_bits):
            w.writerow([k] + [int(b) for b in row])
    with open(d / "codes.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "p"] + [f"c_{n}" for n in range(scene.codes.chips.shape[2])])
        for k in range(scene.codes.chips.shape[0]):
            for p in range(scene.codes.chips.shape[1]):
                w.writerow([k, p] + [int(c) for c in scene.codes.chips[k, p]])
    with open(d / "channels.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "amp_re", "amp_im", "offset", "path", "gain_re", "gain_im", "delay", "noise_var"])
        for k, uc in enumerate(scene.channels):
            amp = complex(uc.amplitude)
            for l, (a, dl) in enumerate(zip(uc.path_gains, uc.path_delays)):
                w.writerow([k, repr(amp.real), repr(amp.imag), repr(float(uc.offset)), l,
                            repr(float(a.real)), repr(float(a.imag)), repr(float(dl)), repr(scene.noise_var)])


def load_scene(directory, cfg: CdmaConfig) -> CdmaScene:
    d = Path(directory)
    with open(d / "frames.csv") as fh:
        rows = list(csv.reader(fh))[1:]
    vals = np.array([[float(v) for v in r[1:]] for r in rows])
    frames = vals[:, 0::2] + 1j * vals[:, 1::2]
    with open(d / "bits.csv") as fh:
        bits = np.array([[int(v) for v in r[1:]] for r in list(csv.reader(fh))[1:]])
    with open(d / "codes.csv") as fh:
        crows = list(csv.reader(fh))[1:]
    k_users = max(int(r[0]) for r in crows) + 1
    n_p = max(int(r[1]) for r in crows) + 1
    chips = np.zeros((k_users, n_p, len(crows[0]) - 2))
    for r in crows:
        chips[int(r[0]), int(r[1])] = [float(v) for v in r[2:]]
    with open(d / "channels.csv") as fh:
        chrows = list(csv.reader(fh))[1:]
    channels, noise_var = [], 0.0
    for k in range(k_users):
        rk = [r for r in chrows if int(r[0]) == k]
        amp = float(rk[0][1]) + 1j * float(rk[0][2])
        gains = [float(r[5]) + 1j * float(r[6]) for r in rk]
        delays = [float(r[7]) for r in rk]
        noise_var = float(rk[0][8])
        channels.append(UserChannel(amp, float(rk[0][3]), gains, delays))
    codes = SpreadingCodes(chips)
    g = np.stack([effective_chip_pulse(uc, cfg) for uc in channels])
    return CdmaScene(cfg, frames, bits, g, codes, channels, noise_var)
