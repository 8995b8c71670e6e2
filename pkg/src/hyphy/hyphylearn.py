"""Hybrid physics/learning classification.

The pipeline labels the real measurements with an imperfect rule, estimates
the parameters of a physical model from them, draws a large synthetic
labeled set from that model, and trains a classifier on the synthetic set
while a domain discriminator pushes the learned representation to make
real and synthetic inputs indistinguishable.

Three networks are involved: a mapper ``M`` (inputs to representation), a
classifier head ``h`` on the representation, and a discriminator ``d`` that
tells real from synthetic representations. One training step performs

    psi  <- psi  - mu1 * (G_s,psi - lambda * G_c,psi)
    phi1 <- phi1 - mu2 * G_s,phi1
    zeta <- zeta - mu3 * G_c,zeta

with ``G_s`` the gradient of the synthetic-batch classification loss and
``G_c`` the gradient of the domain-discrimination loss (steps taken by Adam).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import nnet
from .datasets import LabeledDataset, class_priors
from .errors import DimensionError, NumericalFailure, SingularModelError
from .gmm import DegenerateComponent, GaussianMixture, fit_gmm

__all__ = [
    "LabeledDataset",
    "TrainingConfig",
    "Classifier",
    "ConstantClassifier",
    "GmmClassifier",
    "AdversarialResult",
    "HyPhyResult",
    "cluster_label",
    "generate_synthetic",
    "adversarial_train",
    "train_supervised",
    "empirical_a_distance_proxy",
    "fresh_discriminator_proxy",
    "tv_bound_equal_cov",
    "fine_tune_baseline",
    "gmm_baseline",
    "run_hyphylearn",
    "ToyConfig",
    "ToyResult",
    "toy_gaussian_study",
]

LN2 = math.log(2.0)


@dataclass(frozen=True)
class TrainingConfig:
    n_train_steps: int = 20000
    batch_size: int = 128
    lr_mapper: float = 1e-4
    lr_classifier: float = 1e-4
    lr_discriminator: float = 1e-4
    seed: int = 0
    n_synthetic: int = 40000
    z_dim: int = 64
    mapper_hidden: tuple = (128, 128)
    classifier_hidden: tuple = (64,)
    discriminator_hidden: tuple = (40,)
    hidden_activation: str = "relu"
    domain_weight: float = 1.0
    standardize: bool = True
    log_every: int = 100
    fine_tune_steps: int = 2000

    def __post_init__(self):
        if self.n_train_steps < 0 or self.batch_size < 1:
            raise ValueError("n_train_steps must be >= 0 and batch_size >= 1")
        if min(self.lr_mapper, self.lr_classifier, self.lr_discriminator) < 0:
            raise ValueError("learning rates must be nonnegative")
        if self.z_dim < 1:
            raise ValueError("z_dim must be positive")

    def specs(self, d_in: int, n_classes: int):
        act = self.hidden_activation
        m = nnet.NetworkSpec((d_in, *self.mapper_hidden, self.z_dim), act, "linear")
        h = nnet.NetworkSpec((self.z_dim, *self.classifier_hidden, n_classes), act, "softmax")
        d = nnet.NetworkSpec((self.z_dim, *self.discriminator_hidden, 2), act, "softmax")
        return m, h, d


@dataclass
class Classifier:
    """Standardization, mapper and softmax head applied in sequence."""

    mapper: nnet.NetworkParams
    head: nnet.NetworkParams
    shift: np.ndarray
    scale: np.ndarray

    def embed(self, x: np.ndarray) -> np.ndarray:
        return nnet.forward(self.mapper, (np.asarray(x, dtype=float) - self.shift) / self.scale)

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return nnet.forward(self.head, self.embed(x))

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_proba(x), axis=1)


@dataclass
class ConstantClassifier:
    label: int
    n_classes: int = 1

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.full(np.atleast_2d(x).shape[0], self.label, dtype=int)

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        p = np.zeros((np.atleast_2d(x).shape[0], self.n_classes))
        p[:, self.label] = 1.0
        return p


@dataclass
class GmmClassifier:
    mixture: GaussianMixture
    component_class: np.ndarray

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.component_class[self.mixture.predict(x)]


@dataclass
class AdversarialResult:
    classifier: Classifier
    discriminator: nnet.NetworkParams
    diagnostics: list = field(default_factory=list)


@dataclass
class HyPhyResult:
    classifier: object
    estimate: object
    diagnostics: list
    d_r: LabeledDataset
    d_s: LabeledDataset | None


# ---------------------------------------------------------------------------
# steps 1 and 3


def _map_components(assign: np.ndarray, anchor_idx, anchor_labels, n_comp: int, n_classes: int) -> np.ndarray:
    anchor_labels = np.asarray(anchor_labels, dtype=int)
    overall = np.bincount(anchor_labels, minlength=n_classes)
    default = int(np.argmax(overall))
    out = np.empty(n_comp, dtype=int)
    comp_of_anchor = assign[np.asarray(anchor_idx, dtype=int)]
    for c in range(n_comp):
        votes = np.bincount(anchor_labels[comp_of_anchor == c], minlength=n_classes)
        # argmax returns the lowest index among ties
        out[c] = int(np.argmax(votes)) if votes.sum() else default
    return out


def cluster_label(
    rows: np.ndarray,
    anchor_idx: Sequence[int],
    anchor_labels: Sequence[int],
    c_classes: int = 2,
    rng: np.random.Generator | None = None,
):
    """Cluster rows with a C-component mixture and name clusters by anchor majority.

    Returns the labels and the fraction of anchors whose cluster disagrees
    with their own label.
    """
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if rows.shape[0] == 0:
        raise ValueError("no rows to label")
    if len(anchor_idx) == 0:
        raise ValueError("at least one anchor is required")
    gm = fit_gmm(rows, c_classes, rng=rng)
    assign = gm.predict(rows)
    comp_class = _map_components(assign, anchor_idx, anchor_labels, c_classes, c_classes)
    labels = comp_class[assign]
    err = float(np.mean(labels[np.asarray(anchor_idx, dtype=int)] != np.asarray(anchor_labels)))
    return labels, err


def generate_synthetic(
    samplers: Sequence[Callable],
    priors: np.ndarray,
    n_s: int,
    rng: np.random.Generator,
) -> LabeledDataset:
    """Draw ``n_s`` labeled rows: class by the prior, row by that class's sampler.

    Each sampler is called once as ``sampler(count, rng)`` in class order.
    """
    priors = np.asarray(priors, dtype=float)
    if np.any(priors < 0) or not np.isclose(priors.sum(), 1.0):
        raise ValueError("priors must be a probability vector")
    if len(samplers) < np.count_nonzero(priors) or len(samplers) > len(priors):
        raise ValueError("need one sampler per class with positive prior")
    cdf = np.cumsum(priors)
    cdf[-1] = 1.0
    labels = np.searchsorted(cdf, rng.random(n_s), side="right")
    labels = np.minimum(labels, len(priors) - 1)
    rows = None
    for c in range(len(priors)):
        idx = np.flatnonzero(labels == c)
        if idx.size == 0:
            continue
        block = np.atleast_2d(np.asarray(samplers[c](idx.size, rng), dtype=float))
        if rows is None:
            rows = np.empty((n_s, block.shape[1]))
        rows[idx] = block
    if rows is None:
        rows = np.zeros((0, 1))
    return LabeledDataset(rows, labels, "synthetic", len(priors), priors)


# ---------------------------------------------------------------------------
# step 4


def _scaler(*arrays, enabled: bool = True):
    x = np.concatenate(arrays, axis=0)
    d = x.shape[1]
    if not enabled:
        return np.zeros(d), np.ones(d)
    shift = x.mean(axis=0)
    scale = x.std(axis=0)
    scale[scale < 1e-12] = 1.0
    return shift, scale


def _batch(rng, n, k):
    return rng.choice(n, size=k, replace=False) if k <= n else rng.integers(0, n, k)


def _domain_loss(disc, z, n_real):
    """Mean cross-entropy of the discriminator with real=0, synthetic=1."""
    dom = np.r_[np.zeros(n_real, int), np.ones(z.shape[0] - n_real, int)]
    logits, cache = nnet.forward_cached(disc, z)
    loss, dz = nnet.cross_entropy(logits, dom)
    return loss, dz, cache


def adversarial_train(
    d_r: LabeledDataset,
    d_s: LabeledDataset,
    cfg: TrainingConfig,
    specs=None,
    init: tuple | None = None,
) -> AdversarialResult:
    """Saddle-point training of mapper, classifier head and discriminator.

    Real labels are not used; real rows only enter the domain loss.
    ``diagnostics`` rows are ``(step, L_s, L_c, d_hat_proxy)`` where the
    proxy is ``2 * (1 - L_c / ln 2)``: 0 at chance, 2 for a perfect
    discriminator.
    """
    if d_r.dim != d_s.dim:
        raise DimensionError("real and synthetic rows have different widths")
    if cfg.batch_size > len(d_r):
        raise ValueError("batch_size exceeds the number of real rows")
    rng = np.random.default_rng(cfg.seed)
    spec_m, spec_h, spec_d = specs or cfg.specs(d_s.dim, d_s.n_classes)
    if init is None:
        mapper = nnet.init_params(spec_m, rng)
        head = nnet.init_params(spec_h, rng)
        disc = nnet.init_params(spec_d, rng)
    else:
        mapper, head, disc = (p.copy() for p in init)
    shift, scale = _scaler(d_r.rows, d_s.rows, enabled=cfg.standardize)
    xr_all = (d_r.rows - shift) / scale
    xs_all = (d_s.rows - shift) / scale
    st_m = nnet.adam_init(mapper, cfg.lr_mapper)
    st_h = nnet.adam_init(head, cfg.lr_classifier)
    st_d = nnet.adam_init(disc, cfg.lr_discriminator)
    nb = cfg.batch_size
    diagnostics = []
    for step in range(cfg.n_train_steps):
        ir = _batch(rng, len(d_r), nb)
        is_ = _batch(rng, len(d_s), nb)
        x = np.concatenate([xr_all[ir], xs_all[is_]])
        z, cache_m = nnet.forward_cached(mapper, x)
        logits_h, cache_h = nnet.forward_cached(head, z[nb:])
        loss_s, dlog_h = nnet.cross_entropy(logits_h, d_s.labels[is_])
        g_h, dz_s = nnet.backward(head, cache_h, dlog_h)
        loss_c, dlog_d, cache_d = _domain_loss(disc, z, nb)
        g_d, dz_c = nnet.backward(disc, cache_d, dlog_d)
        if not (np.isfinite(loss_s) and np.isfinite(loss_c)):
            raise NumericalFailure(f"non-finite loss at training step {step}")
        dz_cls = np.zeros_like(z)
        dz_cls[nb:] = dz_s
        g_m_s, _ = nnet.backward(mapper, cache_m, dz_cls)
        g_m_c, _ = nnet.backward(mapper, cache_m, dz_c)
        g_m = g_m_s.scaled_add(g_m_c, -cfg.domain_weight)
        mapper, st_m = nnet.adam_step(st_m, mapper, g_m)
        head, st_h = nnet.adam_step(st_h, head, g_h)
        disc, st_d = nnet.adam_step(st_d, disc, g_d)
        if cfg.log_every and (step % cfg.log_every == 0 or step == cfg.n_train_steps - 1):
            diagnostics.append((step, loss_s, loss_c, 2.0 * (1.0 - loss_c / LN2)))
    return AdversarialResult(Classifier(mapper, head, shift, scale), disc, diagnostics)


def train_supervised(
    data: LabeledDataset,
    cfg: TrainingConfig,
    n_steps: int | None = None,
    init: Classifier | None = None,
    specs=None,
    seed_offset: int = 0,
) -> Classifier:
    """Train mapper and head jointly on labeled rows with no domain term."""
    rng = np.random.default_rng(cfg.seed + seed_offset)
    n_steps = cfg.n_train_steps if n_steps is None else n_steps
    if init is None:
        spec_m, spec_h, _ = specs or cfg.specs(data.dim, data.n_classes)
        mapper = nnet.init_params(spec_m, rng)
        head = nnet.init_params(spec_h, rng)
        shift, scale = _scaler(data.rows, enabled=cfg.standardize)
    else:
        mapper, head = init.mapper.copy(), init.head.copy()
        shift, scale = init.shift, init.scale
    x_all = (data.rows - shift) / scale
    st_m = nnet.adam_init(mapper, cfg.lr_mapper)
    st_h = nnet.adam_init(head, cfg.lr_classifier)
    nb = min(cfg.batch_size, len(data))
    for step in range(n_steps):
        idx = _batch(rng, len(data), nb)
        z, cache_m = nnet.forward_cached(mapper, x_all[idx])
        logits, cache_h = nnet.forward_cached(head, z)
        loss, dlog = nnet.cross_entropy(logits, data.labels[idx])
        if not np.isfinite(loss):
            raise NumericalFailure(f"non-finite loss at training step {step}")
        g_h, dz = nnet.backward(head, cache_h, dlog)
        g_m, _ = nnet.backward(mapper, cache_m, dz)
        mapper, st_m = nnet.adam_step(st_m, mapper, g_m)
        head, st_h = nnet.adam_step(st_h, head, g_h)
    return Classifier(mapper, head, shift, scale)


# ---------------------------------------------------------------------------
# diagnostics


def empirical_a_distance_proxy(z_r: np.ndarray, z_s: np.ndarray, d_zeta: nnet.NetworkParams) -> dict:
    """Discrepancy between two sample sets as seen by a fixed discriminator.

    ``ce``: ``2 * (1 - (CE_r + CE_s) / (2 ln 2))`` with per-domain mean
    cross-entropies (real labeled 0, synthetic 1).
    ``acc``: ``2 * (1 - min(e, 2 - e))`` with ``e`` the sum of the two
    per-domain error rates; the min covers the complemented discriminator.
    """
    z_r = np.atleast_2d(z_r)
    z_s = np.atleast_2d(z_s)
    if z_r.shape[0] == 0 or z_s.shape[0] == 0:
        raise ValueError("both sample sets must be nonempty")
    p_r = nnet.forward(d_zeta, z_r)
    p_s = nnet.forward(d_zeta, z_s)
    ce_r = -np.mean(np.log(np.maximum(p_r[:, 0], nnet.PROB_FLOOR)))
    ce_s = -np.mean(np.log(np.maximum(p_s[:, 1], nnet.PROB_FLOOR)))
    e = np.mean(np.argmax(p_r, axis=1) == 1) + np.mean(np.argmax(p_s, axis=1) == 0)
    return {
        "ce": float(2.0 * (1.0 - (ce_r + ce_s) / (2 * LN2))),
        "acc": float(2.0 * (1.0 - min(e, 2.0 - e))),
    }


def fresh_discriminator_proxy(
    z_r: np.ndarray,
    z_s: np.ndarray,
    hidden: tuple = (40,),
    hidden_activation: str = "relu",
    n_steps: int = 2000,
    lr: float = 1e-3,
    batch_size: int = 128,
    rng: np.random.Generator | None = None,
) -> dict:
    """Train a new discriminator on half of each set and score it on the other half."""
    rng = rng or np.random.default_rng(0)
    z_r = np.atleast_2d(z_r)
    z_s = np.atleast_2d(z_s)
    pr = rng.permutation(len(z_r))
    ps = rng.permutation(len(z_s))
    hr, hs = len(z_r) // 2, len(z_s) // 2
    tr_r, te_r = z_r[pr[:hr]], z_r[pr[hr:]]
    tr_s, te_s = z_s[ps[:hs]], z_s[ps[hs:]]
    shift, scale = _scaler(tr_r, tr_s)
    spec = nnet.NetworkSpec((z_r.shape[1], *hidden, 2), hidden_activation, "softmax")
    disc = nnet.init_params(spec, rng)
    st = nnet.adam_init(disc, lr)
    nb = max(1, min(batch_size, hr, hs))
    for _ in range(n_steps):
        x = np.concatenate([tr_r[_batch(rng, hr, nb)], tr_s[_batch(rng, hs, nb)]])
        y = np.r_[np.zeros(nb, int), np.ones(nb, int)]
        _, g = nnet.grad(disc, (x - shift) / scale, y)
        disc, st = nnet.adam_step(st, disc, g)
    return empirical_a_distance_proxy((te_r - shift) / scale, (te_s - shift) / scale, disc)


def tv_bound_equal_cov(mu: np.ndarray, mu_hat: np.ndarray, sigma: np.ndarray) -> float:
    """Upper bound ``4.5 * min(1, v'v / sqrt(v' Sigma v))`` with ``v = mu - mu_hat``."""
    v = np.asarray(mu, dtype=float) - np.asarray(mu_hat, dtype=float)
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    try:
        np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise SingularModelError("sigma must be positive definite") from exc
    vv = float(v @ v)
    if vv == 0.0:
        return 0.0
    return 4.5 * min(1.0, vv / math.sqrt(float(v @ sigma @ v)))


# ---------------------------------------------------------------------------
# baselines


def fine_tune_baseline(
    d_s: LabeledDataset,
    d_r: LabeledDataset,
    cfg: TrainingConfig,
    phase2_steps: int | None = None,
    specs=None,
) -> Classifier:
    """Train on synthetic rows, then continue on the (heuristically) labeled real rows."""
    base = train_supervised(d_s, cfg, specs=specs)
    steps = cfg.fine_tune_steps if phase2_steps is None else phase2_steps
    if steps == 0:
        return base
    return train_supervised(d_r, cfg, n_steps=steps, init=base, seed_offset=1)


def gmm_baseline(rows: np.ndarray, anchor_labels: np.ndarray, anchor_idx=None,
                 n_classes: int = 2, rng: np.random.Generator | None = None,
                 reg: float = 1e-6) -> GmmClassifier:
    """Two-component mixture on the rows; components named by anchor majority.

    The small relative ridge ``reg`` keeps full covariances invertible when
    a component holds fewer rows than dimensions.
    """
    rows = np.atleast_2d(rows)
    if anchor_idx is None:
        anchor_idx = np.arange(len(anchor_labels))
    gm = fit_gmm(rows, n_classes, reg=reg, rng=rng)
    comp_class = _map_components(gm.predict(rows), anchor_idx, anchor_labels, n_classes, n_classes)
    return GmmClassifier(gm, comp_class)


# ---------------------------------------------------------------------------
# full pipeline


def _step_error(step: str, exc: Exception) -> Exception:
    msg = f"{step}: {exc}"
    try:
        return type(exc)(msg)
    except Exception:
        return RuntimeError(msg)


def run_hyphylearn(
    d_r_raw: LabeledDataset,
    labeler: Callable[[LabeledDataset], np.ndarray],
    estimator: Callable[[LabeledDataset], object],
    samplers_from_params: Callable[[object], Sequence[Callable]],
    cfg: TrainingConfig,
    specs=None,
    unlabeled_rows: np.ndarray | None = None,
) -> HyPhyResult:
    """Labeling, estimation, synthetic generation and adversarial training in order.

    ``unlabeled_rows`` are extra real measurements that join the labeled
    real rows in the domain loss only; steps 1 to 3 never see them.
    """
    try:
        labels = np.asarray(labeler(d_r_raw), dtype=int)
        d_r = d_r_raw.relabel(labels)
    except Exception as exc:
        raise _step_error("step 1 (labeling)", exc) from exc
    priors = class_priors(d_r.labels, d_r.n_classes)
    d_r.prior_estimates = priors
    try:
        est = estimator(d_r)
    except Exception as exc:
        raise _step_error("step 2 (estimation)", exc) from exc
    if np.count_nonzero(priors) <= 1:
        return HyPhyResult(ConstantClassifier(int(np.argmax(priors)), d_r.n_classes), est, [], d_r, None)
    rng = np.random.default_rng(cfg.seed + 7919)
    try:
        samplers = samplers_from_params(est)
        d_s = generate_synthetic(samplers, priors, cfg.n_synthetic, rng)
    except Exception as exc:
        raise _step_error("step 3 (synthetic generation)", exc) from exc
    try:
        d_dom = d_r
        if unlabeled_rows is not None and len(unlabeled_rows):
            extra = np.atleast_2d(np.asarray(unlabeled_rows, dtype=float))
            d_dom = LabeledDataset(np.vstack([d_r.rows, extra]),
                                   np.r_[d_r.labels, np.zeros(len(extra), dtype=int)], "real", d_r.n_classes)
        res = adversarial_train(d_dom, d_s, cfg, specs)
    except Exception as exc:
        raise _step_error("step 4 (training)", exc) from exc
    return HyPhyResult(res.classifier, est, res.diagnostics, d_r, d_s)


# ---------------------------------------------------------------------------
# two-Gaussian illustration


@dataclass(frozen=True)
class ToyConfig:
    mu0: tuple = (2.9, 4.4)
    mu1: tuple = (5.0, 6.4)
    mu0_hat: tuple = (2.0, 3.0)
    mu1_hat: tuple = (4.0, 5.0)
    sigma: tuple = ((0.15, 0.11), (0.11, 0.15))
    n_r: int = 40
    n_s: int = 2000
    n_eval: int = 4000
    n_train_steps: int = 3000
    batch_size: int = 32
    lr: float = 1e-3
    width: int = 20
    proxy_steps: int = 1500


@dataclass
class ToyResult:
    acc_hyphy: float
    acc_synthetic_only: float
    proxy_identity: dict
    proxy_trained: dict
    proxy_trained_fresh: dict
    tv_bound: dict
    label_error: float
    eval_rows: np.ndarray = field(repr=False, default=None)
    eval_labels: np.ndarray = field(repr=False, default=None)
    eval_origin: np.ndarray = field(repr=False, default=None)
    mapped_rows: np.ndarray = field(repr=False, default=None)


def _toy_draw(rng, means, chol, labels):
    return np.asarray(means)[labels] + rng.standard_normal((len(labels), 2)) @ chol.T


def toy_gaussian_study(seed: int, cfg: ToyConfig = ToyConfig()) -> ToyResult:
    """Two shifted bivariate Gaussians: synthetic model with wrong means, few real rows.

    Real rows are labeled by clustering with one true-labeled anchor per
    class. Linear mapper ``2 -> width -> 2`` and linear-hidden softmax heads
    of width ``width`` are used throughout.

    ``proxy_identity`` scores a discriminator trained on the raw inputs;
    ``proxy_trained`` scores the adversary from training on the mapped
    inputs; ``proxy_trained_fresh`` retrains a discriminator on the mapped
    inputs. All are evaluated on held-out rows. A linear discriminator
    sees the same separability through any invertible affine mapper, so
    the fresh variant only drops when the mapper becomes singular.
    """
    rng = np.random.default_rng(seed)
    sigma = np.asarray(cfg.sigma)
    chol = np.linalg.cholesky(sigma)
    true_means = np.asarray([cfg.mu0, cfg.mu1])
    est_means = np.asarray([cfg.mu0_hat, cfg.mu1_hat])
    y_r = rng.integers(0, 2, cfg.n_r)
    y_r[:2] = [0, 1]
    x_r = _toy_draw(rng, true_means, chol, y_r)
    labels, label_err = cluster_label(x_r, [0, 1], y_r[:2], 2, rng)
    d_r = LabeledDataset(x_r, labels, "real", 2, extras={"label_true": y_r})
    priors = class_priors(labels, 2)
    samplers = [lambda n, g, c=c: _toy_draw(g, est_means, chol, np.full(n, c)) for c in range(2)]
    d_s = generate_synthetic(samplers, priors, cfg.n_s, rng)

    tcfg = TrainingConfig(
        n_train_steps=cfg.n_train_steps, batch_size=min(cfg.batch_size, cfg.n_r),
        lr_mapper=cfg.lr, lr_classifier=cfg.lr, lr_discriminator=cfg.lr, seed=seed,
        n_synthetic=cfg.n_s, z_dim=2, mapper_hidden=(cfg.width,), classifier_hidden=(cfg.width,),
        discriminator_hidden=(cfg.width,), hidden_activation="linear", log_every=0,
    )
    specs = tcfg.specs(2, 2)
    adv = adversarial_train(d_r, d_s, tcfg, specs)
    synth_only = train_supervised(d_s, tcfg, specs=specs)

    y_eval = rng.integers(0, 2, cfg.n_eval)
    x_eval = _toy_draw(rng, true_means, chol, y_eval)
    acc_h = float(np.mean(adv.classifier.predict(x_eval) == y_eval))
    acc_s = float(np.mean(synth_only.predict(x_eval) == y_eval))

    y_se = rng.choice(2, cfg.n_eval, p=priors)
    x_se = _toy_draw(rng, est_means, chol, y_se)
    prx_rng = np.random.default_rng(seed + 1)
    kw = dict(hidden=(cfg.width,), hidden_activation="linear", n_steps=cfg.proxy_steps, lr=cfg.lr)
    p_id = fresh_discriminator_proxy(x_eval, x_se, rng=prx_rng, **kw)
    z_eval = adv.classifier.embed(x_eval)
    z_se = adv.classifier.embed(x_se)
    p_tr = empirical_a_distance_proxy(z_eval, z_se, adv.discriminator)
    p_fresh = fresh_discriminator_proxy(z_eval, z_se, rng=np.random.default_rng(seed + 1), **kw)
    tv = {
        "class0": tv_bound_equal_cov(true_means[0], est_means[0], sigma),
        "class1": tv_bound_equal_cov(true_means[1], est_means[1], sigma),
    }
    rows = np.concatenate([x_eval, x_se])
    return ToyResult(
        acc_hyphy=acc_h, acc_synthetic_only=acc_s, proxy_identity=p_id, proxy_trained=p_tr,
        proxy_trained_fresh=p_fresh, tv_bound=tv, label_error=label_err,
        eval_rows=rows, eval_labels=np.r_[y_eval, y_se],
        eval_origin=np.r_[np.zeros(len(y_eval), int), np.ones(len(y_se), int)],
        mapped_rows=adv.classifier.embed(rows),
    )
