import numpy as np
import pytest

from hyphy.errors import ConfigError, NumericalFailure
from hyphy.experiments import cli
from hyphy.experiments.config import SCHEMA, load_config, parse_config, schema_text
from hyphy.experiments.metrics import RESULT_SCHEMA, ResultTable, evaluate_accuracy, evaluate_ber
from hyphy.experiments.runners import run_experiment
from hyphy.datasets import LabeledDataset

TINY_TOY = """
experiment = toy-gaussian
seeds = 0,1
toy.n_synthetic = 200
toy.n_eval = 100
toy.train_steps = 40
toy.proxy_steps = 20
"""

TINY_SPOOF = """
experiment = spoofing-accuracy
seeds = 0
spoofing.n_tx = 1
spoofing.n_rx = 2
spoofing.n_f = 6
spoofing.alice.l_taps = 4
spoofing.eve.l_taps = 3
spoofing.n_real = 60
spoofing.n_test = 40
spoofing.n_calibration = 100
spoofing.estimator_rounds = 1
train.steps = 30
train.batch_size = 16
train.n_synthetic = 200
train.z_dim = 8
train.mapper_hidden = 8
train.classifier_hidden = 8
train.discriminator_hidden = 8
train.fine_tune_steps = 10
"""

TINY_CDMA = """
experiment = cdma-ber-vs-snr
seeds = 0
cdma.k_users = 2
cdma.n_gain = 8
cdma.snr_db = 4,12
cdma.rho = 0
cdma.n_test_frames = 60
cdma.train_steps = 30
cdma.n_synthetic = 200
cdma.mapper_hidden = 16
cdma.classifier_hidden = 16
"""


# ---------------------------------------------------------------------------
# config


def test_defaults_fill_every_key():
    cfg = parse_config("experiment = toy-gaussian")
    assert set(cfg.values) == set(SCHEMA)
    assert cfg["spoofing.alice.alpha2"] == 200.0
    assert cfg["spoofing.path_gains"] == (20.0, 14.0, 10.0, 7.0)
    assert cfg.seeds == (0,)


@pytest.mark.parametrize("text, match", [
    ("experiment = toy-gaussian\nbogus = 1", "unknown key"),
    ("experiment = toy-gaussian\nseeds = 1\nseeds = 2", "duplicate"),
    ("seeds = 1", "missing key"),
    ("experiment = nope", "unknown experiment"),
    ("experiment = toy-gaussian\ntoy.n_real = ten", "toy.n_real"),
    ("experiment = toy-gaussian\nno equals sign", "key = value"),
    ("experiment = toy-gaussian\nspoofing.quantile = 1.0", "quantile"),
    ("experiment = toy-gaussian\nspoofing.k_paths = 3", "path_gains"),
    ("experiment = toy-gaussian\nseeds = -1", "nonnegative"),
    ("experiment = spoofing-accuracy\nspoofing.n_test = 0", "n_test"),
])
def test_config_errors(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text)


def test_comments_and_text_roundtrip():
    cfg = parse_config("# header\nexperiment = cdma-ber-vs-snr  # trailing\ncdma.rho = 0.1, 0.25\n")
    assert cfg["cdma.rho"] == (0.1, 0.25)
    assert parse_config(cfg.to_text()).values == cfg.values


def test_paper_scale_overrides_only_unset_keys():
    cfg = parse_config("experiment = toy-gaussian\ntrain.n_synthetic = 5", paper_scale=True)
    assert cfg["paper_scale"] is True
    assert cfg["train.n_synthetic"] == 5
    assert cfg["cdma.n_synthetic"] == 1_000_000
    assert parse_config("experiment = toy-gaussian")["cdma.n_synthetic"] == 40000


def test_with_overrides():
    cfg = parse_config("experiment = toy-gaussian").with_overrides(seeds="3", toy__n_real="12")
    assert cfg.seeds == (3,) and cfg["toy.n_real"] == 12
    with pytest.raises(ConfigError):
        cfg.with_overrides(nothing="1")


def test_shipped_configs_validate():
    from pathlib import Path

    paths = sorted(Path(__file__).resolve().parents[1].joinpath("configs").glob("*.cfg"))
    assert len(paths) == 5
    ids = {load_config(p).experiment for p in paths}
    assert ids == {"toy-gaussian", "spoofing-accuracy", "spoofing-coherence", "cdma-ber-vs-snr", "cdma-ber-vs-data"}


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "absent.cfg")


# ---------------------------------------------------------------------------
# metrics


def test_result_table_ranges_and_csv():
    t = ResultTable()
    t.add("snr_db", 8.0, "rho=0.0", "perfect_mmse", "ber", 1, 0.01)
    t.add("snr_db", 2.0, "rho=0.0", "perfect_mmse", "ber", 0, 0.1)
    t.add("seed", 0, "", "proxy", "d_hat", 0, -0.5)
    for metric, bad in (("accuracy", 1.2), ("ber", -0.1), ("d_hat", 2.5), ("tv_bound", 5.0), ("ber", np.nan)):
        with pytest.raises(ValueError):
            t.add("x", 0, "", "m", metric, 0, bad)
    text = t.to_csv("perfect_mmse").splitlines()
    assert text[0].startswith(f"#schema={RESULT_SCHEMA}:")
    assert text[1] == "sweep,value,setting,method,metric,seed,result"
    # rows sorted by sweep value, not insertion order
    assert text[2].startswith("snr_db,2.0") and len(text) == 4
    assert t.methods() == ["perfect_mmse", "proxy"]
    assert len(t.select(metric="ber")) == 2


class _Lookup:
    def __init__(self, labels):
        self.labels = labels

    def predict(self, rows):
        return self.labels


def test_evaluate_accuracy():
    d = LabeledDataset(np.zeros((4, 1)), np.array([0, 1, 0, 1]))
    assert evaluate_accuracy(_Lookup(d.labels), d) == 1.0
    assert evaluate_accuracy(_Lookup(np.zeros(4, int)), d) == 0.5
    with pytest.raises(ValueError):
        evaluate_accuracy(_Lookup([]), LabeledDataset(np.zeros((0, 1)), np.zeros(0, int)))


def test_evaluate_ber():
    class Scene:
        true_bits = np.array([[1, -1, 1, 1], [-1, -1, 1, -1]])

    s = Scene()
    assert evaluate_ber(lambda sc: sc.true_bits, s) == 0.0
    assert evaluate_ber(-s.true_bits, s) == 1.0
    rng = np.random.default_rng(0)
    big = type("Big", (), {"true_bits": rng.choice([-1, 1], (4, 20000))})()
    assert abs(evaluate_ber(rng.choice([-1, 1], (4, 20000)), big) - 0.5) < 0.01
    with pytest.raises(ValueError):
        evaluate_ber(s.true_bits[:, :2], type("E", (), {"true_bits": s.true_bits[:, :2]})())
    with pytest.raises(ValueError):
        evaluate_ber(s.true_bits[:1], s)


# ---------------------------------------------------------------------------
# runs


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_toy_run_outputs_and_determinism(tmp_path):
    cfg = parse_config(TINY_TOY)
    table = run_experiment(cfg, tmp_path / "a")
    names = set(_files(tmp_path / "a"))
    assert names == {"hyphylearn.csv", "synthetic_only.csv", "proxy.csv", "model_mismatch.csv", "means.csv",
                     "samples_seed0.csv", "samples_seed1.csv", "manifest.cfg"}
    assert len(table.select(metric="tv_bound")) == 4
    samples = (tmp_path / "a" / "samples_seed0.csv").read_text().splitlines()
    assert samples[0].startswith("#schema=")
    assert {line.split(",")[0] for line in samples[2:]} == {"input", "mapped"}
    run_experiment(cfg, tmp_path / "b")
    a, b = _files(tmp_path / "a"), _files(tmp_path / "b")
    assert {k: v for k, v in a.items() if k != "manifest.cfg"} == {k: v for k, v in b.items() if k != "manifest.cfg"}


def test_manifest_reproduces_run(tmp_path):
    first = tmp_path / "first"
    run_experiment(parse_config(TINY_TOY), first)
    manifest = load_config(first / "manifest.cfg")
    assert manifest["out"] == str(first.resolve())
    before = _files(first)
    for p in first.iterdir():
        p.unlink()
    run_experiment(manifest)
    assert _files(first) == before


def test_spoofing_run(tmp_path):
    table = run_experiment(parse_config(TINY_SPOOF), tmp_path)
    assert table.methods() == ["fine_tune", "gmm", "hyphylearn", "lrt_bayes", "lrt_plugin"]
    assert all(0 <= r[-1] <= 1 for r in table.rows)


def test_cdma_run(tmp_path):
    table = run_experiment(parse_config(TINY_CDMA), tmp_path)
    perfect = [r[-1] for r in sorted(table.select(method="perfect_mmse"), key=lambda r: r[1])]
    assert len(perfect) == 2 and perfect[1] <= perfect[0]


def test_failed_run_leaves_no_files(tmp_path, monkeypatch):
    from hyphy.experiments import runners

    def boom(cfg):
        raise NumericalFailure("diverged")

    monkeypatch.setattr(runners, "_compute", boom)
    with pytest.raises(NumericalFailure):
        run_experiment(parse_config(TINY_TOY), tmp_path / "out")
    assert list(tmp_path.iterdir()) == []


def test_unknown_method_is_config_error(tmp_path):
    cfg = parse_config(TINY_SPOOF + "spoofing.methods = magic\n")
    with pytest.raises(ConfigError, match="magic"):
        run_experiment(cfg, tmp_path / "out")
    assert list(tmp_path.iterdir()) == []


# ---------------------------------------------------------------------------
# command line


def test_cli_schema(capsys):
    assert cli.main(["schema"]) == 0
    out = capsys.readouterr().out
    assert out == schema_text()
    assert "spoofing.alice.alpha2" in out


def test_cli_validate(tmp_path, capsys):
    p = tmp_path / "c.cfg"
    p.write_text(TINY_TOY)
    assert cli.main(["validate", str(p)]) == 0
    assert parse_config(capsys.readouterr().out).values == parse_config(TINY_TOY).values
    p.write_text("experiment = toy-gaussian\nwhat = 1\n")
    assert cli.main(["validate", str(p)]) == 2
    assert "unknown key" in capsys.readouterr().err


def test_cli_run_with_seed_and_out(tmp_path, capsys):
    p = tmp_path / "c.cfg"
    p.write_text(TINY_TOY)
    out = tmp_path / "res"
    assert cli.main(["run", str(p), "--seed", "4", "--out", str(out)]) == 0
    assert load_config(out / "manifest.cfg").seeds == (4,)
    assert "samples_seed4.csv" in _files(out)


def test_cli_numerical_failure_exit_code(tmp_path, monkeypatch, capsys):
    def boom(cfg, out):
        raise NumericalFailure("diverged")

    monkeypatch.setattr(cli, "run_experiment", boom)
    p = tmp_path / "c.cfg"
    p.write_text(TINY_TOY)
    assert cli.main(["run", str(p)]) == 3
    assert "numerical failure" in capsys.readouterr().err


def test_cli_missing_config_exit_code(tmp_path):
    assert cli.main(["run", str(tmp_path / "none.cfg")]) == 2
