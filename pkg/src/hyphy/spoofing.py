"""Spoofing detection from consecutive CFR measurements.

Bob receives a reference CFR known to come from Alice and a new CFR from
either Alice (hypothesis 0) or an impersonating Eve (hypothesis 1). The
feature is their difference. This module holds the distance-threshold
labeler, the Gaussian hypothesis models and likelihood-ratio test, the
scenario simulator, and the spoofing-specific hooks used by the hybrid
learner (parameter estimation and synthetic sampling).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .channel_cfr import (
    CfrDims,
    CfrSample,
    DiffuseNoiseParams,
    SimilarityParam,
    SpecularParams,
    cross_diff_cov,
    cross_taps,
    diff_cov_h0,
    diff_cov_h1,
    evolve_taps,
    kron_expand,
    safe_cholesky,
    sample_taps,
    specular_mean,
    taps_to_cfr,
    _cn,
)
from .datasets import LabeledDataset
from .errors import DimensionError
from .estimator_cfr import EstimationReport, GaussNewtonOptions, alternating_estimate

__all__ = [
    "PartyParams",
    "HypothesisModels",
    "SnapshotScenario",
    "ScenarioTruth",
    "heuristic_label",
    "pair_distances",
    "choose_threshold",
    "assemble_hypothesis_models",
    "lrt_log_ratio",
    "lrt_classify",
    "shrink_cov",
    "draw_specular",
    "simulate_pairs",
    "simulate_scenario",
    "complex_to_features",
    "features_to_complex",
    "SpoofingEstimate",
    "estimate_spoofing_params",
    "spoofing_samplers",
    "plugin_lrt_models",
    "ALICE_DEFAULT",
    "EVE_DEFAULT",
]


@dataclass(frozen=True)
class PartyParams:
    """Diffuse/noise statistics and AR-1 similarity of one transmitter."""

    dn: DiffuseNoiseParams
    a: float


ALICE_DEFAULT = PartyParams(DiffuseNoiseParams(alpha2=200.0, beta=0.02, l_taps=20, sigma2=20.0), 0.85)
EVE_DEFAULT = PartyParams(DiffuseNoiseParams(alpha2=250.0, beta=0.08, l_taps=16, sigma2=26.0), 0.65)


@dataclass
class HypothesisModels:
    mean_h0: np.ndarray
    cov_h0: np.ndarray
    mean_h1: np.ndarray
    cov_h1: np.ndarray

    def __post_init__(self):
        if np.any(self.mean_h0 != 0):
            raise ValueError("the null-hypothesis mean must be zero")


@dataclass(frozen=True)
class SnapshotScenario:
    """Acquisition law for training/test pairs.

    Each Alice coherence interval holds ``samples_per_coherence`` pairs and
    is split into ``coherence_ratio`` Eve intervals. Eve is active in an
    Eve interval with probability ``eve_activity``; while active, each pair's
    second CFR is Eve's with probability ``eve_share``. Specular paths are
    redrawn at every interval boundary of the respective transmitter.

    With ``test_same_coherence`` the test pairs stay inside the last
    training interval (same specular paths) and alternate between Alice
    and Eve, so the test set is balanced.
    """

    n_coherence_alice: int = 40
    coherence_ratio: float = 4.0
    samples_per_coherence: int = 100
    eve_activity: float = 0.5
    eve_share: float = 0.5
    n_test: int = 10000
    n_calibration: int = 1000
    k_paths: int = 4
    path_gains: tuple = (20.0, 14.0, 10.0, 7.0)
    test_same_coherence: bool = False

    def __post_init__(self):
        if self.n_coherence_alice < 1 or self.samples_per_coherence < 1:
            raise ValueError("counts must be positive")
        if self.coherence_ratio < 1:
            raise ValueError("coherence_ratio must be >= 1")
        if not 0 <= self.eve_activity <= 1 or not 0 <= self.eve_share <= 1:
            raise ValueError("probabilities must lie in [0, 1]")
        if self.n_test < 0 or self.n_calibration < 0:
            raise ValueError("sizes must be nonnegative")
        if len(self.path_gains) != self.k_paths:
            raise ValueError("path_gains must have k_paths entries")


@dataclass
class ScenarioTruth:
    alice: PartyParams
    eve: PartyParams
    alice_specular: dict
    eve_specular: dict
    eta: float = float("inf")
    coherence_ratio: int = 1


def complex_to_features(z: np.ndarray) -> np.ndarray:
    """Stack real and imaginary parts: (n, m) complex -> (n, 2m) real."""
    z = np.atleast_2d(z)
    return np.concatenate([z.real, z.imag], axis=1)


def features_to_complex(x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(x)
    m = x.shape[1] // 2
    return x[:, :m] + 1j * x[:, m:]


def pair_distances(h: np.ndarray, h_ref: np.ndarray) -> np.ndarray:
    d = np.atleast_2d(h) - np.atleast_2d(h_ref)
    return np.sum(np.abs(d) ** 2, axis=1)


def heuristic_label(h: np.ndarray, h_ref: np.ndarray, eta: float):
    """0 (same transmitter) iff the squared distance is below ``eta``; ties go to 1.

    Accepts single vectors or row-stacked batches.
    """
    h = np.asarray(h)
    h_ref = np.asarray(h_ref)
    if h.shape != h_ref.shape:
        raise DimensionError("h and h_ref must have equal shapes")
    lab = (pair_distances(h, h_ref) >= eta).astype(int)
    return int(lab[0]) if h.ndim == 1 else lab


def choose_threshold(reference_distances, quantile: float = 0.95) -> float:
    d = np.asarray(reference_distances, dtype=float).ravel()
    if d.size == 0:
        raise ValueError("no reference distances")
    if not 0 < quantile < 1:
        raise ValueError("quantile must lie in (0, 1)")
    return float(np.quantile(d, quantile))


def assemble_hypothesis_models(
    params_a: DiffuseNoiseParams,
    params_e: DiffuseNoiseParams,
    a_a: SimilarityParam | float,
    a_e: SimilarityParam | float,
    dims: CfrDims,
    sp_a: SpecularParams | None = None,
    sp_e: SpecularParams | None = None,
    realizable: bool = False,
) -> HypothesisModels:
    """Gaussian models of the CFR difference under both hypotheses.

    With ``realizable=True`` the alternative covariance is the exact
    covariance of the tap-domain cross-transmitter generator instead of
    the closed form, which can be indefinite.
    """
    a_a = a_a if isinstance(a_a, SimilarityParam) else SimilarityParam(float(a_a))
    a_e = a_e if isinstance(a_e, SimilarityParam) else SimilarityParam(float(a_e))
    eye = np.eye(dims.m)
    cov0 = kron_expand(diff_cov_h0(params_a, a_a, dims.n_f), dims) + 2 * params_a.sigma2 * eye
    blk1 = cross_diff_cov(params_a, params_e, a_e, dims.n_f) if realizable else diff_cov_h1(
        params_a, params_e, a_e, dims.n_f)
    cov1 = kron_expand(blk1, dims) + (params_a.sigma2 + params_e.sigma2) * eye
    mean1 = np.zeros(dims.m, dtype=complex)
    if sp_a is not None and sp_e is not None:
        mean1 = specular_mean(sp_e, dims) - specular_mean(sp_a, dims)
    return HypothesisModels(np.zeros(dims.m, dtype=complex), cov0, mean1, cov1)


def _loglik_rows(x: np.ndarray, mean: np.ndarray, chol: np.ndarray) -> np.ndarray:
    w = sla.solve_triangular(chol, (x - mean).T, lower=True)
    logdet = 2 * np.sum(np.log(np.diag(chol).real))
    return -np.sum(np.abs(w) ** 2, axis=0) - logdet


def lrt_log_ratio(h_diff: np.ndarray, models: HypothesisModels, mean_h1: np.ndarray | None = None) -> np.ndarray:
    """log p(x|H1) - log p(x|H0) for each row; ``mean_h1`` may be given per row."""
    x = np.atleast_2d(h_diff)
    c0 = safe_cholesky(models.cov_h0)
    c1 = safe_cholesky(models.cov_h1)
    mu1 = models.mean_h1 if mean_h1 is None else mean_h1
    return _loglik_rows(x, mu1, c1) - _loglik_rows(x, models.mean_h0, c0)


def lrt_classify(h_diff: np.ndarray, models: HypothesisModels, threshold: float = 1.0, mean_h1=None):
    """Decide 1 iff the log-likelihood ratio exceeds log(threshold); ties go to 0."""
    llr = lrt_log_ratio(h_diff, models, mean_h1)
    dec = (llr > np.log(threshold)).astype(int)
    return int(dec[0]) if np.ndim(h_diff) == 1 else dec


def shrink_cov(cov_hat: np.ndarray, alpha: float) -> np.ndarray:
    if not 0 <= alpha <= 1:
        raise ValueError("alpha must lie in [0, 1]")
    m = cov_hat.shape[0]
    return (1 - alpha) * cov_hat + alpha * (np.trace(cov_hat).real / m) * np.eye(m)


def draw_specular(k_paths: int, gains, rng: np.random.Generator) -> SpecularParams:
    """Uniform angles and phase slopes on [-pi, pi), fixed gain magnitudes with uniform phases."""
    gains = np.asarray(gains, dtype=float)
    return SpecularParams(
        psi_t=rng.uniform(-np.pi, np.pi, k_paths),
        psi_r=rng.uniform(-np.pi, np.pi, k_paths),
        tau=rng.uniform(-np.pi, np.pi, k_paths),
        rho=gains * np.exp(1j * rng.uniform(-np.pi, np.pi, k_paths)),
    )


def _cfr_from_taps(taps: np.ndarray, dims: CfrDims) -> np.ndarray:
    return taps_to_cfr(taps, dims.n_f).reshape(taps.shape[0], dims.m)


def simulate_pairs(
    is_eve: np.ndarray,
    mean_a: np.ndarray,
    mean_e: np.ndarray,
    alice: PartyParams,
    eve: PartyParams,
    dims: CfrDims,
    rng: np.random.Generator,
):
    """Independent (reference, next) CFR pairs.

    ``mean_a``/``mean_e`` are (n, m) specular means per pair. The reference
    taps are stationary draws; the next CFR's taps follow the AR-1 step for
    Alice or ``cross_taps`` for Eve.
    """
    n = len(is_eve)
    is_eve = np.asarray(is_eve, dtype=bool)
    taps_a = sample_taps(alice.dn, (n, dims.n_blocks), rng)
    h_ref = mean_a + _cfr_from_taps(taps_a, dims) + np.sqrt(alice.dn.sigma2) * _cn(rng, (n, dims.m))
    nxt_a = evolve_taps(taps_a, alice.dn, alice.a, rng)
    nxt_e = cross_taps(taps_a, alice.dn, eve.dn, eve.a, rng)
    q_a = _cfr_from_taps(nxt_a, dims)
    q_e = _cfr_from_taps(nxt_e, dims)
    noise = _cn(rng, (n, dims.m))
    sig = np.where(is_eve, np.sqrt(eve.dn.sigma2), np.sqrt(alice.dn.sigma2))[:, None]
    h_next = np.where(is_eve[:, None], mean_e + q_e, mean_a + q_a) + sig * noise
    return h_ref, h_next


def _simulate_same_interval(n_pairs, train, alice, eve, dims, rng, ratio):
    """Balanced pairs inside the last training interval, reusing its specular paths."""
    a_last = int(train["a_slot"][-1])
    pos = np.arange(n_pairs)
    a_slot = np.full(n_pairs, a_last)
    e_slot = a_last * ratio + pos * ratio // max(n_pairs, 1)
    is_eve = pos % 2 == 1
    ma = specular_mean(train["sp_a"][a_last], dims)
    mean_a = np.tile(ma, (n_pairs, 1))
    mean_e = np.stack([specular_mean(train["sp_e"][s], dims) for s in e_slot]) if n_pairs else mean_a
    h_ref, h_next = simulate_pairs(is_eve, mean_a, mean_e, alice, eve, dims, rng)
    return dict(h_ref=h_ref, h_next=h_next, is_eve=is_eve.astype(int), a_slot=a_slot, e_slot=e_slot,
                sp_a={}, sp_e={}, mean_a=mean_a, mean_e=mean_e)


def _simulate_block(scn, n_pairs, alice, eve, dims, rng, slot_offset=0):
    spc = scn.samples_per_coherence
    ratio = max(1, int(round(scn.coherence_ratio)))
    n_slots = -(-n_pairs // spc)
    pos = np.arange(n_pairs)
    a_slot = pos // spc
    e_slot = a_slot * ratio + (pos % spc) * ratio // spc
    sp_a = {slot_offset + s: draw_specular(scn.k_paths, scn.path_gains, rng) for s in range(n_slots)}
    sp_e = {slot_offset * ratio + s: draw_specular(scn.k_paths, scn.path_gains, rng) for s in range(n_slots * ratio)}
    active = rng.random(n_slots * ratio) < scn.eve_activity
    is_eve = active[e_slot] & (rng.random(n_pairs) < scn.eve_share)
    mean_a_tab = {k: specular_mean(v, dims) for k, v in sp_a.items()}
    mean_e_tab = {k: specular_mean(v, dims) for k, v in sp_e.items()}
    a_slot = a_slot + slot_offset
    e_slot = e_slot + slot_offset * ratio
    mean_a = np.stack([mean_a_tab[s] for s in a_slot]) if n_pairs else np.zeros((0, dims.m), complex)
    mean_e = np.stack([mean_e_tab[s] for s in e_slot]) if n_pairs else np.zeros((0, dims.m), complex)
    h_ref, h_next = simulate_pairs(is_eve, mean_a, mean_e, alice, eve, dims, rng)
    return dict(h_ref=h_ref, h_next=h_next, is_eve=is_eve.astype(int), a_slot=a_slot, e_slot=e_slot,
                sp_a=sp_a, sp_e=sp_e, mean_a=mean_a, mean_e=mean_e)


def simulate_scenario(
    scn: SnapshotScenario,
    params_a: PartyParams,
    params_e: PartyParams,
    dims: CfrDims,
    rng: np.random.Generator,
    quantile: float = 0.95,
):
    """Training and test sets of CFR-difference features.

    The labeling threshold is the ``quantile`` of distances from a separate
    Alice-only calibration run of ``n_calibration`` pairs. Training labels
    are the heuristic ones; true labels travel in ``extras['label_true']``.
    Test labels are the true ones.
    """
    n_train = scn.n_coherence_alice * scn.samples_per_coherence
    ratio = max(1, int(round(scn.coherence_ratio)))
    train = _simulate_block(scn, n_train, params_a, params_e, dims, rng, slot_offset=0)
    if scn.test_same_coherence:
        test = _simulate_same_interval(scn.n_test, train, params_a, params_e, dims, rng, ratio)
    else:
        test = _simulate_block(scn, scn.n_test, params_a, params_e, dims, rng, slot_offset=scn.n_coherence_alice)
    cal = scn.n_calibration
    eta = np.inf
    if cal:
        cal_means = np.stack([specular_mean(draw_specular(scn.k_paths, scn.path_gains, rng), dims)
                              for _ in range(-(-cal // scn.samples_per_coherence))])
        idx = np.arange(cal) // scn.samples_per_coherence
        r, nx = simulate_pairs(np.zeros(cal, bool), cal_means[idx], cal_means[idx], params_a, params_e, dims, rng)
        eta = choose_threshold(pair_distances(nx, r), quantile)
    heur = heuristic_label(train["h_next"], train["h_ref"], eta) if n_train else np.zeros(0, int)

    def dataset(block, labels, extra_labels):
        x = complex_to_features(block["h_next"] - block["h_ref"]) if len(labels) else np.zeros((0, 2 * dims.m))
        extras = {
            "label_true": block["is_eve"],
            "alice_slot": block["a_slot"],
            "eve_slot": block["e_slot"],
            "h_ref": block["h_ref"],
            "h_next": block["h_next"],
            "mean_diff": block["mean_e"] - block["mean_a"],
        }
        extras.update(extra_labels)
        return LabeledDataset(x, labels, "real", 2, None, extras)

    train_ds = dataset(train, heur, {"label_heuristic": heur})
    test_ds = dataset(test, test["is_eve"], {})
    truth = ScenarioTruth(
        alice=params_a, eve=params_e,
        alice_specular={**train["sp_a"], **test["sp_a"]},
        eve_specular={**train["sp_e"], **test["sp_e"]},
        eta=eta,
        coherence_ratio=ratio,
    )
    return train_ds, test_ds, truth


# ---------------------------------------------------------------------------
# hooks for the hybrid learner


@dataclass
class SpoofingEstimate:
    alice: PartyParams
    eve: PartyParams
    alice_specular: dict
    eve_specular: dict
    reports: dict = field(default_factory=dict)
    pairing: dict = field(default_factory=dict)


def estimate_spoofing_params(
    data: LabeledDataset,
    labels: np.ndarray,
    dims: CfrDims,
    k_paths: int = 4,
    opts: GaussNewtonOptions | None = None,
    n_rounds: int = 3,
    eta: float = 0.95,
    per_snapshot: bool = False,
    tap_search: int = 3,
    rng: np.random.Generator | None = None,
) -> SpoofingEstimate:
    """Estimate both transmitters' parameters from labeled raw pairs.

    Alice's snapshots are every reference CFR plus the next-CFRs labeled 0;
    Eve's are the next-CFRs labeled 1, grouped by Eve interval. Alice is
    fitted first; Eve's similarity is then fitted against Alice's estimate,
    with the difference means formed from both sets of specular fits.
    """
    rng = rng or np.random.default_rng(0)
    opts = opts or GaussNewtonOptions()
    labels = np.asarray(labels, dtype=int)
    h_ref = data.extras["h_ref"]
    h_next = data.extras["h_next"]
    a_slot = np.asarray(data.extras["alice_slot"])
    e_slot = np.asarray(data.extras["eve_slot"])
    alice_idx = np.flatnonzero(labels == 0)
    eve_idx = np.flatnonzero(labels == 1)

    snaps_a = [CfrSample(h_ref[i], int(a_slot[i])) for i in range(len(h_ref))]
    snaps_a += [CfrSample(h_next[i], int(a_slot[i])) for i in alice_idx]
    diffs_a = (h_next[alice_idx] - h_ref[alice_idx]).T
    rep_a = alternating_estimate(
        snaps_a, dims, opts, n_rounds, k_paths=k_paths, eta=eta, diff_samples=diffs_a,
        hypothesis="H0", a_init=0.5, per_snapshot=per_snapshot, tap_search=tap_search, rng=rng,
    )
    alice = PartyParams(rep_a.theta_vn_hat, rep_a.a_hat.a)
    sp_a = rep_a.slot_specular
    reports = {"alice": rep_a}
    eve = None
    sp_e: dict = {}
    if len(eve_idx) >= 2:
        snaps_e = [CfrSample(h_next[i], int(e_slot[i])) for i in eve_idx]
        diffs_e = (h_next[eve_idx] - h_ref[eve_idx]).T
        mean_a = np.stack([specular_mean(sp_a[int(a_slot[i])], dims) for i in eve_idx], axis=1)

        def diff_mean(slot_sp):
            return np.stack([specular_mean(slot_sp[int(e_slot[i])], dims) for i in eve_idx], axis=1) - mean_a

        rep_e = alternating_estimate(
            snaps_e, dims, opts, n_rounds, k_paths=k_paths, eta=eta, diff_samples=diffs_e,
            diff_mean_fn=diff_mean, hypothesis="H1", dn_ref=alice.dn, a_init=0.5,
            per_snapshot=per_snapshot, tap_search=tap_search, rng=rng,
        )
        eve = PartyParams(rep_e.theta_vn_hat, rep_e.a_hat.a)
        sp_e = rep_e.slot_specular
        reports["eve"] = rep_e
    pairing = {int(e_slot[i]): int(a_slot[i]) for i in eve_idx}
    return SpoofingEstimate(alice, eve, sp_a, sp_e, reports, pairing)


def spoofing_samplers(est: SpoofingEstimate, dims: CfrDims, pairing: dict | None = None):
    """Per-class samplers ``f(n, rng) -> (n, 2m)`` built from estimated parameters.

    Class 1 draws an Eve interval uniformly and takes the mean difference
    against its enclosing Alice interval from ``pairing`` (Eve interval ->
    Alice interval), defaulting to the pairing seen in the estimation data.
    """
    alice, eve = est.alice, est.eve

    def sample_h0(n, rng):
        z = np.zeros((n, dims.m), dtype=complex)
        r, nx = simulate_pairs(np.zeros(n, bool), z, z, alice, eve or alice, dims, rng)
        return complex_to_features(nx - r)

    samplers = [sample_h0]
    if eve is not None:
        keys = sorted(est.eve_specular)
        pairing = pairing if pairing is not None else est.pairing
        first = next(iter(est.alice_specular))
        pairing = {k: pairing.get(k, first) for k in keys}
        diff_tab = np.stack(
            [specular_mean(est.eve_specular[k], dims) - specular_mean(est.alice_specular[pairing[k]], dims)
             for k in keys]
        )

        def sample_h1(n, rng):
            pick = rng.integers(0, len(keys), n)
            mean_e = diff_tab[pick]
            z = np.zeros((n, dims.m), dtype=complex)
            r, nx = simulate_pairs(np.ones(n, bool), z, mean_e, alice, eve, dims, rng)
            return complex_to_features(nx - r)

        samplers.append(sample_h1)
    return samplers


def plugin_lrt_models(est: SpoofingEstimate, dims: CfrDims, realizable: bool = True) -> HypothesisModels:
    """Hypothesis models from estimated parameters; the H1 mean is left at zero."""
    eve = est.eve or est.alice
    return assemble_hypothesis_models(est.alice.dn, eve.dn, est.alice.a, eve.a, dims, realizable=realizable)
