"""Multi-user detection with the hybrid learner.

Classes are the 2^K joint bit patterns ``b(p)``; a row is the stacked real
and imaginary parts of the two-frame window ``[y(p); y(p+1)]``. The base
station knows its (possibly corrupted) spreading codes and the training
bits of the first ``n_t`` frames. From those it fits the channel by least
squares, reduces each user's pulse to ``L`` paths, and draws synthetic
windows from the resulting linear model with random interfering bits.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .cdma import (
    CdmaConfig,
    CdmaScene,
    SpreadingCodes,
    bits_to_class,
    class_to_bits,
    corrupt_codes,
    effective_chip_pulse,
    extract_multipath,
    ls_channel_estimate,
    mmse_detect_all,
    random_bits,
    random_channels,
    random_codes,
    synthesize_scene,
    window_signatures,
)
from .datasets import LabeledDataset
from .hyphylearn import TrainingConfig, run_hyphylearn

__all__ = [
    "CdmaEstimate",
    "window_features",
    "training_windows",
    "estimate_cdma_params",
    "window_samplers",
    "evaluate_ber_rows",
    "CdmaTrial",
    "cdma_trial",
    "CDMA_TRAINING",
]

# Desk-scale network and optimizer settings for the detection task.
CDMA_TRAINING = TrainingConfig(
    n_train_steps=5000,
    batch_size=32,
    lr_mapper=1e-3,
    lr_classifier=1e-3,
    lr_discriminator=1e-3,
    n_synthetic=40000,
    z_dim=64,
    mapper_hidden=(128,),
    classifier_hidden=(64,),
    discriminator_hidden=(40,),
    log_every=500,
)


@dataclass
class CdmaEstimate:
    g: np.ndarray
    g_ls: np.ndarray
    channels: list
    noise_var: float
    codes: SpreadingCodes


def window_features(frames: np.ndarray) -> np.ndarray:
    """(P, MN) complex frames -> (P, 4MN) real window rows; the last window is zero-padded."""
    nxt = np.vstack([frames[1:], np.zeros_like(frames[:1])])
    w = np.concatenate([frames, nxt], axis=1)
    return np.concatenate([w.real, w.imag], axis=1)


def training_windows(scene: CdmaScene, n_t: int) -> LabeledDataset:
    """Windows ``p = 2 .. n_t - 2``: both frames inside the training block, no cold start."""
    if n_t < 4:
        raise ValueError("n_t must be at least 4")
    idx = np.arange(2, n_t - 1)
    x = window_features(scene.frames)[idx]
    y = bits_to_class(scene.true_bits[:, idx])
    return LabeledDataset(x, y, "real", n_classes=2 ** scene.cfg.k_users, extras={"frame": idx})


def estimate_cdma_params(frames: np.ndarray, codes: SpreadingCodes, bits: np.ndarray,
                         cfg: CdmaConfig, n_t: int, refine_passes: int = 2) -> CdmaEstimate:
    """LS pulse fit on the training frames, then per-user multipath extraction."""
    g_ls, res = ls_channel_estimate(frames, codes, bits, cfg, n_t, return_residual=True)
    chans = [extract_multipath(g_ls[k], cfg.l_paths, cfg, refine_passes) for k in range(cfg.k_users)]
    g = np.stack([effective_chip_pulse(c, cfg) for c in chans])
    return CdmaEstimate(g, g_ls, chans, res, codes)


def window_samplers(est: CdmaEstimate, cfg: CdmaConfig) -> list:
    """One sampler per bit pattern of ``b(p)``; interfering bits are uniform."""
    sig = window_signatures(est.codes, est.g, 2, cfg)
    keys = sorted(sig)
    S = np.stack([sig[k] for k in keys], axis=1)
    cur = np.array([i for i, key in enumerate(keys) if key[1] == 2])
    others = np.array([i for i, key in enumerate(keys) if key[1] != 2])
    sd = np.sqrt(est.noise_var / 2)

    def make(c):
        b_now = class_to_bits(np.array([c]), cfg.k_users)[:, 0].astype(float)

        def sample(n, rng):
            b = np.empty((len(keys), n))
            b[cur] = b_now[[keys[i][0] for i in cur], None]
            b[others] = rng.choice([-1.0, 1.0], size=(len(others), n))
            z = (S @ b).T
            z = z + sd * (rng.standard_normal(z.shape) + 1j * rng.standard_normal(z.shape))
            return np.concatenate([z.real, z.imag], axis=1)

        return sample

    return [make(c) for c in range(2 ** cfg.k_users)]


def evaluate_ber_rows(detected: np.ndarray, truth: np.ndarray, first: int = 2) -> float:
    """Bit error fraction over all users for frames ``p >= first``."""
    detected = np.asarray(detected)
    truth = np.asarray(truth)
    if detected.shape != truth.shape:
        raise ValueError("detected and true bits differ in shape")
    if truth.shape[1] <= first:
        raise ValueError("no frames to score")
    return float(np.mean(detected[:, first:] != truth[:, first:]))


@dataclass
class CdmaTrial:
    ber: dict
    estimate: CdmaEstimate
    diagnostics: list


def cdma_trial(cfg: CdmaConfig, seed: int, n_t: int = 40, n_test: int = 2000,
               methods=("perfect_mmse", "mismatched_mmse", "hyphylearn"),
               train_cfg: TrainingConfig = CDMA_TRAINING) -> CdmaTrial:
    """Simulate one scene and score the requested detectors on frames after training.

    ``mismatched_mmse`` uses the corrupted codes and the extracted-path
    pulse; ``perfect_mmse`` the true codes and pulse; ``hyphylearn`` trains
    on synthetic windows drawn from the extracted model, with every
    received window as real-domain input.
    """
    full = replace(cfg, n_packets=n_t + n_test)
    rng = np.random.default_rng(seed)
    codes = random_codes(full, rng)
    channels = random_channels(full, rng)
    bits = random_bits(full, rng)
    scene = synthesize_scene(full, codes, channels, bits, rng)
    codes_bs = corrupt_codes(codes, cfg.rho_mismatch, rng)
    est = estimate_cdma_params(scene.frames, codes_bs, bits, full, n_t)
    out, diag = {}, []
    for m in methods:
        if m == "perfect_mmse":
            det = mmse_detect_all(scene, scene.g_true, scene.noise_var, codes)
        elif m == "mismatched_mmse":
            det = mmse_detect_all(scene, est.g, est.noise_var, codes_bs)
        elif m == "hyphylearn":
            d_r = training_windows(scene, n_t)
            res = run_hyphylearn(
                d_r,
                labeler=lambda d: d.labels,
                estimator=lambda d: est,
                samplers_from_params=lambda e: window_samplers(e, full),
                cfg=replace(train_cfg, seed=seed),
                unlabeled_rows=window_features(scene.frames)[n_t:],
            )
            det = class_to_bits(res.classifier.predict(window_features(scene.frames)), full.k_users)
            diag = res.diagnostics
        else:
            raise ValueError(f"unknown detector {m!r}")
        out[m] = evaluate_ber_rows(det, bits, first=n_t)
    return CdmaTrial(out, est, diag)

