"""Scores and the result table written by the experiment runners."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

__all__ = ["evaluate_accuracy", "evaluate_ber", "ResultTable", "RESULT_SCHEMA", "METRIC_RANGES"]

RESULT_SCHEMA = "hyphy-results/1"
RESULT_COLUMNS = ("sweep", "value", "setting", "method", "metric", "seed", "result")
METRIC_RANGES = {
    "accuracy": (0.0, 1.0),
    "ber": (0.0, 1.0),
    "d_hat": (-2.0, 2.0),
    "tv_bound": (0.0, 4.5),
}


def evaluate_accuracy(classifier, test) -> float:
    """Fraction of test rows whose predicted class equals the label."""
    if len(test) == 0:
        raise ValueError("empty test set")
    pred = np.asarray(classifier.predict(test.rows))
    return float(np.mean(pred == test.labels))


def evaluate_ber(detector, scene, first: int = 2) -> float:
    """Bit error fraction over all users and frames ``p >= first``.

    ``detector`` is a callable ``scene -> (K, P)`` antipodal bits or the
    bit array itself. Frames before ``first`` are cold-start frames.
    """
    truth = np.asarray(scene.true_bits)
    if truth.size == 0 or truth.shape[1] <= first:
        raise ValueError("empty scene")
    bits = np.asarray(detector(scene) if callable(detector) else detector)
    if bits.shape != truth.shape:
        raise ValueError("detector output has the wrong shape")
    return float(np.mean(bits[:, first:] != truth[:, first:]))


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


@dataclass
class ResultTable:
    rows: list = field(default_factory=list)

    def add(self, sweep: str, value, setting: str, method: str, metric: str, seed: int, result: float):
        lo, hi = METRIC_RANGES[metric]
        result = float(result)
        if not (lo <= result <= hi) or not np.isfinite(result):
            raise ValueError(f"{metric} value {result} outside [{lo}, {hi}]")
        self.rows.append((sweep, value, setting, method, metric, int(seed), result))

    def methods(self) -> list:
        return sorted({r[3] for r in self.rows})

    def select(self, **kw) -> list:
        idx = {c: i for i, c in enumerate(RESULT_COLUMNS)}
        return [r for r in self.rows if all(r[idx[k]] == v for k, v in kw.items())]

    def to_csv(self, method: str | None = None) -> str:
        rows = self.rows if method is None else [r for r in self.rows if r[3] == method]
        buf = io.StringIO()
        buf.write(f"#schema={RESULT_SCHEMA}:" + ",".join(RESULT_COLUMNS) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in sorted(rows, key=lambda r: (r[0], float(r[1]), r[2], r[3], r[4], r[5])):
            w.writerow([_fmt(x) for x in r])
        return buf.getvalue()
