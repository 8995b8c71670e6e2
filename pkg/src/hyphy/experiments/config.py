"""Flat ``key = value`` experiment configuration.

One assignment per line, ``#`` starts a comment, keys are dotted
(``spoofing.alice.alpha2 = 200``). Lists are comma separated. Every key
must appear in ``SCHEMA``; anything else is an error.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ConfigError

__all__ = ["SCHEMA", "EXPERIMENTS", "ExperimentConfig", "parse_config", "load_config", "schema_text"]

EXPERIMENTS = ("toy-gaussian", "spoofing-accuracy", "spoofing-coherence", "cdma-ber-vs-snr", "cdma-ber-vs-data")

# key -> (kind, default, help). Kinds: int, float, str, bool, ints, floats, strs.
SCHEMA = {
    "experiment": ("str", None, "experiment id: " + ", ".join(EXPERIMENTS)),
    "seeds": ("ints", "0", "seed list; one result row set per seed"),
    "out": ("str", "results", "output directory"),
    "paper_scale": ("bool", "false", "published network and synthetic sizes instead of desk-scale ones"),
    # two-Gaussian illustration
    "toy.n_real": ("int", "40", "real rows"),
    "toy.n_synthetic": ("int", "2000", "synthetic rows"),
    "toy.n_eval": ("int", "4000", "fresh rows per evaluation set"),
    "toy.train_steps": ("int", "3000", "adversarial training steps"),
    "toy.batch_size": ("int", "32", "minibatch size"),
    "toy.lr": ("float", "0.001", "Adam step size for all networks"),
    "toy.width": ("int", "20", "hidden width"),
    "toy.proxy_steps": ("int", "1500", "training steps of the fresh discriminator"),
    # spoofing
    "spoofing.n_tx": ("int", "2", "transmit antennas"),
    "spoofing.n_rx": ("int", "2", "receive antennas"),
    "spoofing.n_f": ("int", "20", "subcarriers"),
    "spoofing.alice.alpha2": ("float", "200", "Alice diffuse power"),
    "spoofing.alice.beta": ("float", "0.02", "Alice normalized coherence bandwidth"),
    "spoofing.alice.l_taps": ("int", "20", "Alice diffuse taps"),
    "spoofing.alice.sigma2": ("float", "20", "Alice noise variance"),
    "spoofing.alice.a": ("float", "0.85", "Alice similarity"),
    "spoofing.eve.alpha2": ("float", "250", "Eve diffuse power"),
    "spoofing.eve.beta": ("float", "0.08", "Eve normalized coherence bandwidth"),
    "spoofing.eve.l_taps": ("int", "16", "Eve diffuse taps"),
    "spoofing.eve.sigma2": ("float", "26", "Eve noise variance"),
    "spoofing.eve.a": ("float", "0.65", "Eve similarity"),
    "spoofing.k_paths": ("int", "4", "specular paths per transmitter"),
    "spoofing.path_gains": ("floats", "20,14,10,7", "specular gain magnitudes"),
    "spoofing.n_real": ("ints", "4000", "training pairs (spoofing-accuracy sweep)"),
    "spoofing.n_coherence": ("ints", "1,2,4,8", "Alice coherence intervals (spoofing-coherence sweep)"),
    "spoofing.samples_per_coherence": ("int", "100", "pairs per Alice coherence interval"),
    "spoofing.coherence_ratio": ("int", "4", "Eve intervals per Alice interval"),
    "spoofing.eve_activity": ("float", "0.5", "probability Eve is active in an Eve interval"),
    "spoofing.eve_share": ("float", "0.5", "probability an active-interval pair is Eve's"),
    "spoofing.n_test": ("int", "10000", "test pairs"),
    "spoofing.n_calibration": ("int", "1000", "Alice-only pairs for the labeling threshold"),
    "spoofing.quantile": ("float", "0.95", "labeling threshold quantile"),
    "spoofing.estimator_rounds": ("int", "3", "alternating estimation rounds"),
    "spoofing.methods": ("strs", "hyphylearn,fine_tune,gmm,lrt_plugin,lrt_bayes", "methods to score"),
    # learner (spoofing)
    "train.steps": ("int", "20000", "adversarial training steps"),
    "train.batch_size": ("int", "128", "minibatch size"),
    "train.lr": ("float", "0.0001", "Adam step size for all networks"),
    "train.n_synthetic": ("int", "40000", "synthetic rows"),
    "train.z_dim": ("int", "64", "representation width"),
    "train.mapper_hidden": ("ints", "128,128", "mapper hidden widths"),
    "train.classifier_hidden": ("ints", "64", "classifier hidden widths"),
    "train.discriminator_hidden": ("ints", "40", "discriminator hidden widths"),
    "train.fine_tune_steps": ("int", "2000", "second-phase steps of the fine-tuning baseline"),
    # cdma
    "cdma.k_users": ("int", "3", "users"),
    "cdma.n_gain": ("int", "32", "chips per bit"),
    "cdma.l_paths": ("int", "3", "multipath components per user"),
    "cdma.nfr_db": ("float", "5", "near-far spread in dB"),
    "cdma.snr_db": ("floats", "0,2,4,6,8,10,12", "SNR sweep (cdma-ber-vs-snr)"),
    "cdma.snr_fixed_db": ("float", "8", "SNR for cdma-ber-vs-data"),
    "cdma.rho": ("floats", "0.2", "code mismatch levels"),
    "cdma.n_t": ("ints", "20,40,80,160", "training frames sweep (cdma-ber-vs-data)"),
    "cdma.n_t_fixed": ("int", "40", "training frames for cdma-ber-vs-snr"),
    "cdma.n_test_frames": ("int", "2000", "scored frames per run"),
    "cdma.methods": ("strs", "perfect_mmse,mismatched_mmse,hyphylearn", "detectors to score"),
    "cdma.train_steps": ("int", "5000", "adversarial training steps"),
    "cdma.batch_size": ("int", "32", "minibatch size"),
    "cdma.lr": ("float", "0.001", "Adam step size"),
    "cdma.n_synthetic": ("int", "40000", "synthetic windows"),
    "cdma.mapper_hidden": ("ints", "128", "mapper hidden widths"),
    "cdma.classifier_hidden": ("ints", "64", "classifier hidden widths"),
}

# Overrides applied by --paper-scale.
PAPER_SCALE = {
    "train.n_synthetic": "400000",
    "train.mapper_hidden": "400,400,400",
    "train.classifier_hidden": "400,400,400",
    "cdma.n_synthetic": "1000000",
    "cdma.mapper_hidden": "300,300,300,300",
    "cdma.classifier_hidden": "300,300,300,300",
    "cdma.lr": "0.0001",
}


def _convert(key: str, kind: str, text: str):
    text = text.strip()
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "str":
            if not text:
                raise ValueError("empty value")
            return text
        if kind == "bool":
            low = text.lower()
            if low in ("true", "yes", "1"):
                return True
            if low in ("false", "no", "0"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        parts = [p.strip() for p in text.split(",") if p.strip()]
        if kind == "ints":
            return tuple(int(p) for p in parts)
        if kind == "floats":
            return tuple(float(p) for p in parts)
        if kind == "strs":
            return tuple(parts)
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from exc
    raise ConfigError(f"{key}: unknown kind {kind}")


def _format(kind: str, value) -> str:
    if kind in ("ints", "floats", "strs"):
        return ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
    if kind == "float":
        return repr(float(value))
    if kind == "bool":
        return "true" if value else "false"
    return str(value)


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=dict)

    def __getitem__(self, key: str):
        return self.values[key]

    @property
    def experiment(self) -> str:
        return self.values["experiment"]

    @property
    def seeds(self) -> tuple:
        return self.values["seeds"]

    def with_overrides(self, **raw) -> "ExperimentConfig":
        """Replace values given as text, keyed with ``.`` replaced by ``__``."""
        vals = dict(self.values)
        for k, v in raw.items():
            key = k.replace("__", ".")
            if key not in SCHEMA:
                raise ConfigError(f"unknown key {key!r}")
            vals[key] = _convert(key, SCHEMA[key][0], str(v))
        return validate(ExperimentConfig(vals))

    def to_text(self) -> str:
        """Fully resolved config; parsing it back gives an equal config."""
        lines = []
        for key, (kind, _, _) in SCHEMA.items():
            lines.append(f"{key} = {_format(kind, self.values[key])}")
        return "\n".join(lines) + "\n"


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    v = cfg.values
    if v.get("experiment") not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment id {v.get('experiment')!r}")
    if not v["seeds"]:
        raise ConfigError("seeds must be nonempty")
    if any(s < 0 for s in v["seeds"]):
        raise ConfigError("seeds must be nonnegative")
    positive = [k for k, (kind, _, _) in SCHEMA.items() if kind == "int" and not k.endswith("fine_tune_steps")]
    for k in positive:
        if v[k] < 1 and k not in ("spoofing.n_calibration",):
            raise ConfigError(f"{k} must be positive")
    for k in ("spoofing.eve_activity", "spoofing.eve_share", "spoofing.alice.a", "spoofing.eve.a"):
        if not 0 <= v[k] <= 1:
            raise ConfigError(f"{k} must lie in [0, 1]")
    if not 0 < v["spoofing.quantile"] < 1:
        raise ConfigError("spoofing.quantile must lie in (0, 1)")
    if any(not 0 <= r <= 1 for r in v["cdma.rho"]):
        raise ConfigError("cdma.rho values must lie in [0, 1]")
    if len(v["spoofing.path_gains"]) != v["spoofing.k_paths"]:
        raise ConfigError("spoofing.path_gains needs k_paths entries")
    if min(v["spoofing.n_real"] + v["spoofing.n_coherence"] + v["cdma.n_t"] or (0,)) < 1:
        raise ConfigError("sweep values must be positive")
    for k in ("spoofing.methods", "cdma.methods"):
        if not v[k]:
            raise ConfigError(f"{k} must be nonempty")
    return cfg


def parse_config(text: str, paper_scale: bool = False) -> ExperimentConfig:
    raw = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"line {n}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"line {n}: duplicate key {key!r}")
        raw[key] = val
    if "experiment" not in raw:
        raise ConfigError("missing key 'experiment'")
    if paper_scale:
        raw["paper_scale"] = "true"
    if raw.get("paper_scale", "false").strip().lower() in ("true", "yes", "1"):
        for k, v in PAPER_SCALE.items():
            raw.setdefault(k, v)
    vals = {k: _convert(k, kind, raw.get(k, default)) for k, (kind, default, _) in SCHEMA.items()
            if k in raw or default is not None}
    return validate(ExperimentConfig(vals))


def load_config(path, paper_scale: bool = False) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, paper_scale)


def schema_text() -> str:
    lines = []
    for key, (kind, default, desc) in SCHEMA.items():
        d = "(required)" if default is None else default
        lines.append(f"{key:34s} {kind:7s} {d:28s} {desc}")
    return "\n".join(lines) + "\n"
