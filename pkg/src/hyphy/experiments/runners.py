"""Experiment drivers: each maps a resolved config to a ResultTable and files."""

from __future__ import annotations

import csv
import io
import os
import shutil
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np

from ..cdma import CdmaConfig
from ..cdma_hybrid import CDMA_TRAINING, cdma_trial
from ..channel_cfr import CfrDims, DiffuseNoiseParams, specular_mean
from ..errors import ConfigError
from ..hyphylearn import (
    ToyConfig,
    TrainingConfig,
    fine_tune_baseline,
    generate_synthetic,
    gmm_baseline,
    run_hyphylearn,
    toy_gaussian_study,
)
from ..spoofing import (
    PartyParams,
    SnapshotScenario,
    assemble_hypothesis_models,
    estimate_spoofing_params,
    features_to_complex,
    lrt_classify,
    plugin_lrt_models,
    simulate_scenario,
    spoofing_samplers,
)
from .config import ExperimentConfig
from .metrics import ResultTable, evaluate_accuracy

__all__ = ["run_experiment", "spoofing_trial", "spoofing_scenario", "party_params", "train_config"]


# ---------------------------------------------------------------------------
# config helpers


def party_params(cfg: ExperimentConfig, who: str) -> PartyParams:
    dn = DiffuseNoiseParams(
        alpha2=cfg[f"spoofing.{who}.alpha2"], beta=cfg[f"spoofing.{who}.beta"],
        l_taps=cfg[f"spoofing.{who}.l_taps"], sigma2=cfg[f"spoofing.{who}.sigma2"],
    )
    return PartyParams(dn, cfg[f"spoofing.{who}.a"])


def train_config(cfg: ExperimentConfig, seed: int) -> TrainingConfig:
    lr = cfg["train.lr"]
    return TrainingConfig(
        n_train_steps=cfg["train.steps"], batch_size=cfg["train.batch_size"],
        lr_mapper=lr, lr_classifier=lr, lr_discriminator=lr, seed=seed,
        n_synthetic=cfg["train.n_synthetic"], z_dim=cfg["train.z_dim"],
        mapper_hidden=tuple(cfg["train.mapper_hidden"]), classifier_hidden=tuple(cfg["train.classifier_hidden"]),
        discriminator_hidden=tuple(cfg["train.discriminator_hidden"]),
        fine_tune_steps=cfg["train.fine_tune_steps"], log_every=0,
    )


def spoofing_scenario(cfg: ExperimentConfig, same_coherence: bool, n: int) -> SnapshotScenario:
    """Single long coherence interval of ``n`` pairs, or ``n`` Alice intervals."""
    common = dict(
        n_test=cfg["spoofing.n_test"], n_calibration=cfg["spoofing.n_calibration"],
        k_paths=cfg["spoofing.k_paths"], path_gains=tuple(cfg["spoofing.path_gains"]),
    )
    if same_coherence:
        return SnapshotScenario(
            n_coherence_alice=1, samples_per_coherence=n, coherence_ratio=1,
            eve_activity=1.0, eve_share=cfg["spoofing.eve_share"], test_same_coherence=True, **common,
        )
    return SnapshotScenario(
        n_coherence_alice=n, samples_per_coherence=cfg["spoofing.samples_per_coherence"],
        coherence_ratio=cfg["spoofing.coherence_ratio"], eve_activity=cfg["spoofing.eve_activity"],
        eve_share=cfg["spoofing.eve_share"], **common,
    )


# ---------------------------------------------------------------------------
# spoofing


def _plugin_means(est, test, dims):
    """Per-row H1 means where the test intervals were seen in training, else zero."""
    a_slot, e_slot = test.extras["alice_slot"], test.extras["eve_slot"]
    out = np.zeros((len(test), dims.m), dtype=complex)
    for i, (a, e) in enumerate(zip(a_slot, e_slot)):
        if int(a) in est.alice_specular and int(e) in est.eve_specular:
            out[i] = specular_mean(est.eve_specular[int(e)], dims) - specular_mean(est.alice_specular[int(a)], dims)
    return out


def spoofing_trial(
    scn: SnapshotScenario,
    alice: PartyParams,
    eve: PartyParams,
    dims: CfrDims,
    tcfg: TrainingConfig,
    methods,
    seed: int,
    quantile: float = 0.95,
    rounds: int = 3,
) -> dict:
    """Accuracy of each requested method on one simulated scenario."""
    rng = np.random.default_rng([seed, 101])
    train, test, truth = simulate_scenario(scn, alice, eve, dims, rng, quantile)
    if len(test) == 0:
        raise ConfigError("the test set is empty")
    tcfg = replace(tcfg, batch_size=min(tcfg.batch_size, len(train)))
    est = estimate_spoofing_params(train, train.labels, dims, k_paths=scn.k_paths, n_rounds=rounds,
                                   rng=np.random.default_rng([seed, 202]))
    priors = train.prior_estimates
    thr = priors[0] / priors[1] if priors[1] > 0 else np.inf
    z_test = features_to_complex(test.rows)
    out = {}
    d_s = None
    for m in methods:
        if m == "hyphylearn":
            res = run_hyphylearn(train, lambda d: d.labels, lambda d: est,
                                 lambda e: spoofing_samplers(e, dims), tcfg)
            d_s = res.d_s
            out[m] = evaluate_accuracy(res.classifier, test)
        elif m == "fine_tune":
            if d_s is None:
                d_s = generate_synthetic(spoofing_samplers(est, dims), priors, tcfg.n_synthetic,
                                         np.random.default_rng(tcfg.seed + 7919))
            out[m] = evaluate_accuracy(fine_tune_baseline(d_s, train, tcfg), test)
        elif m == "gmm":
            clf = gmm_baseline(train.rows, train.labels, rng=np.random.default_rng([seed, 303]))
            out[m] = evaluate_accuracy(clf, test)
        elif m == "lrt_plugin":
            models = plugin_lrt_models(est, dims)
            dec = lrt_classify(z_test, models, thr, mean_h1=_plugin_means(est, test, dims))
            out[m] = float(np.mean(dec == test.labels))
        elif m == "lrt_bayes":
            models = assemble_hypothesis_models(alice.dn, eve.dn, alice.a, eve.a, dims, realizable=True)
            p1 = 0.5 if scn.test_same_coherence else scn.eve_activity * scn.eve_share
            t_true = (1 - p1) / p1 if p1 > 0 else np.inf
            dec = lrt_classify(z_test, models, t_true, mean_h1=test.extras["mean_diff"])
            out[m] = float(np.mean(dec == test.labels))
        else:
            raise ConfigError(f"unknown spoofing method {m!r}")
    return out


def _run_spoofing(cfg: ExperimentConfig, same_coherence: bool) -> ResultTable:
    dims = CfrDims(cfg["spoofing.n_tx"], cfg["spoofing.n_rx"], cfg["spoofing.n_f"])
    alice, eve = party_params(cfg, "alice"), party_params(cfg, "eve")
    sweep = "n_real" if same_coherence else "n_coherence"
    table = ResultTable()
    for seed in cfg.seeds:
        for n in cfg[f"spoofing.{sweep}"]:
            scn = spoofing_scenario(cfg, same_coherence, n)
            acc = spoofing_trial(scn, alice, eve, dims, train_config(cfg, seed), cfg["spoofing.methods"],
                                 seed, cfg["spoofing.quantile"], cfg["spoofing.estimator_rounds"])
            for m, v in acc.items():
                table.add(sweep, n, "", m, "accuracy", seed, v)
    return table, {}


# ---------------------------------------------------------------------------
# two-Gaussian illustration


def _run_toy(cfg: ExperimentConfig):
    tc = ToyConfig(
        n_r=cfg["toy.n_real"], n_s=cfg["toy.n_synthetic"], n_eval=cfg["toy.n_eval"],
        n_train_steps=cfg["toy.train_steps"], batch_size=cfg["toy.batch_size"], lr=cfg["toy.lr"],
        width=cfg["toy.width"], proxy_steps=cfg["toy.proxy_steps"],
    )
    table = ResultTable()
    files = {}
    means = io.StringIO()
    w = csv.writer(means, lineterminator="\n")
    means.write("#schema=hyphy-toy-means/1:seed,space,origin,label,mean_0,mean_1\n")
    w.writerow(["seed", "space", "origin", "label", "mean_0", "mean_1"])
    for seed in cfg.seeds:
        r = toy_gaussian_study(seed, tc)
        table.add("seed", seed, "", "hyphylearn", "accuracy", seed, r.acc_hyphy)
        table.add("seed", seed, "", "synthetic_only", "accuracy", seed, r.acc_synthetic_only)
        table.add("seed", seed, "identity", "proxy", "d_hat", seed, r.proxy_identity["acc"])
        table.add("seed", seed, "trained_adversary", "proxy", "d_hat", seed, r.proxy_trained["acc"])
        table.add("seed", seed, "trained_fresh", "proxy", "d_hat", seed, r.proxy_trained_fresh["acc"])
        for c, v in r.tv_bound.items():
            table.add("seed", seed, c, "model_mismatch", "tv_bound", seed, v)
        buf = io.StringIO()
        buf.write("#schema=hyphy-toy-samples/1:space,origin,label,x_0,x_1\n")
        sw = csv.writer(buf, lineterminator="\n")
        sw.writerow(["space", "origin", "label", "x_0", "x_1"])
        origin = np.where(r.eval_origin == 0, "real", "synthetic")
        for space, arr in (("input", r.eval_rows), ("mapped", r.mapped_rows)):
            for o, lab, x in zip(origin, r.eval_labels, arr):
                sw.writerow([space, o, int(lab), repr(float(x[0])), repr(float(x[1]))])
            for o in ("real", "synthetic"):
                for lab in (0, 1):
                    sel = (origin == o) & (r.eval_labels == lab)
                    mu = arr[sel].mean(axis=0)
                    w.writerow([seed, space, o, lab, repr(float(mu[0])), repr(float(mu[1]))])
        files[f"samples_seed{seed}.csv"] = buf.getvalue()
    files["means.csv"] = means.getvalue()
    return table, files


# ---------------------------------------------------------------------------
# CDMA


def _cdma_train(cfg: ExperimentConfig, seed: int) -> TrainingConfig:
    lr = cfg["cdma.lr"]
    return replace(
        CDMA_TRAINING, n_train_steps=cfg["cdma.train_steps"], batch_size=cfg["cdma.batch_size"],
        lr_mapper=lr, lr_classifier=lr, lr_discriminator=lr, n_synthetic=cfg["cdma.n_synthetic"],
        mapper_hidden=tuple(cfg["cdma.mapper_hidden"]), classifier_hidden=tuple(cfg["cdma.classifier_hidden"]),
        seed=seed, log_every=0,
    )


def _run_cdma(cfg: ExperimentConfig, over_snr: bool):
    table = ResultTable()
    sweep = "snr_db" if over_snr else "n_t"
    values = cfg["cdma.snr_db"] if over_snr else cfg["cdma.n_t"]
    for seed in cfg.seeds:
        for rho in cfg["cdma.rho"]:
            for v in values:
                snr = v if over_snr else cfg["cdma.snr_fixed_db"]
                n_t = cfg["cdma.n_t_fixed"] if over_snr else int(v)
                cc = CdmaConfig(k_users=cfg["cdma.k_users"], n_gain=cfg["cdma.n_gain"], l_paths=cfg["cdma.l_paths"],
                                nfr_db=cfg["cdma.nfr_db"], snr_db=snr, rho_mismatch=rho)
                trial = cdma_trial(cc, seed, n_t=n_t, n_test=cfg["cdma.n_test_frames"],
                                   methods=cfg["cdma.methods"], train_cfg=_cdma_train(cfg, seed))
                for m, b in trial.ber.items():
                    table.add(sweep, v, f"rho={rho!r}", m, "ber", seed, b)
    return table, {}


# ---------------------------------------------------------------------------
# entry point


def _compute(cfg: ExperimentConfig):
    exp = cfg.experiment
    if exp == "toy-gaussian":
        return _run_toy(cfg)
    if exp == "spoofing-accuracy":
        return _run_spoofing(cfg, same_coherence=True)
    if exp == "spoofing-coherence":
        return _run_spoofing(cfg, same_coherence=False)
    if exp == "cdma-ber-vs-snr":
        return _run_cdma(cfg, over_snr=True)
    if exp == "cdma-ber-vs-data":
        return _run_cdma(cfg, over_snr=False)
    raise ConfigError(f"unknown experiment id {exp!r}")


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> ResultTable:
    """Run, then write ``manifest.cfg`` and one CSV per method into ``out_dir``.

    Files are staged in a sibling temporary directory and moved into place
    only after the whole run succeeded, so a failure leaves no partial files.
    """
    out = Path(out_dir if out_dir is not None else cfg["out"]).resolve()
    cfg = cfg.with_overrides(out=str(out))
    parent = out.parent
    try:
        parent.mkdir(parents=True, exist_ok=True)
        stage = Path(tempfile.mkdtemp(prefix=".hyphy-stage-", dir=parent))
    except OSError as exc:
        raise ConfigError(f"output path {out} is not writable: {exc}") from exc
    try:
        table, extra = _compute(cfg)
        for m in table.methods():
            (stage / f"{m}.csv").write_text(table.to_csv(m))
        for name, text in extra.items():
            (stage / name).write_text(text)
        (stage / "manifest.cfg").write_text(cfg.to_text())
        out.mkdir(parents=True, exist_ok=True)
        for f in sorted(stage.iterdir()):
            os.replace(f, out / f.name)
    finally:
        shutil.rmtree(stage, ignore_errors=True)
    return table
