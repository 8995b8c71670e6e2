"""Labeled feature tables shared by the case studies and the learners."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["LabeledDataset", "class_priors"]


def class_priors(labels: np.ndarray, n_classes: int) -> np.ndarray:
    counts = np.bincount(np.asarray(labels, dtype=int), minlength=n_classes).astype(float)
    total = counts.sum()
    return counts / total if total else np.full(n_classes, 1.0 / n_classes)


@dataclass
class LabeledDataset:
    """Real-valued rows with integer labels.

    ``extras`` holds per-row side information (true labels when ``labels``
    are heuristic, snapshot indices, raw complex measurements, ...); every
    entry must have the same leading length as ``rows``.
    """

    rows: np.ndarray
    labels: np.ndarray
    origin: str = "real"
    n_classes: int = 2
    prior_estimates: np.ndarray | None = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.rows.ndim != 2 or self.labels.shape != (self.rows.shape[0],):
            raise ValueError("rows must be (n, d) and labels (n,)")
        if self.origin not in ("real", "synthetic"):
            raise ValueError("origin must be 'real' or 'synthetic'")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise ValueError("label out of range")
        if self.prior_estimates is None:
            self.prior_estimates = class_priors(self.labels, self.n_classes)
        self.prior_estimates = np.asarray(self.prior_estimates, dtype=float)
        if np.any(self.prior_estimates < 0) or not np.isclose(self.prior_estimates.sum(), 1.0):
            raise ValueError("priors must be nonnegative and sum to one")
        for k, v in self.extras.items():
            if len(v) != len(self.labels):
                raise ValueError(f"extra {k!r} has the wrong length")

    def __len__(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def subset(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx)
        return LabeledDataset(
            self.rows[idx], self.labels[idx], self.origin, self.n_classes,
            None, {k: np.asarray(v)[idx] for k, v in self.extras.items()},
        )

    def relabel(self, labels: np.ndarray) -> "LabeledDataset":
        return LabeledDataset(self.rows, labels, self.origin, self.n_classes, None, dict(self.extras))
