"""Outlier scorers for four notions of outlyingness.

Every scorer maps rows to real scores oriented so that higher means worse:

* ``anomaly_isolation``: isolation-forest anomaly score (a proxy for low density).
* ``two_sample_classifier``: forest probability that the row belongs to the test set.
* ``residual``: out-of-sample error of a forest trained to predict the label.
* ``resampling_uncertainty``: standard error of the per-tree predictions.

A scorer offers two entry points. ``calibrate(data, seed)`` fits on ``data``
and returns a score function for new rows (used by sample splitting).
``oob_scores(data, seed)`` fits on ``data`` and returns an out-of-sample
score for every row of ``data`` (used by the out-of-bag and permutation
variants).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from ._seeding import derive_seed
from .data import Dataset, label_task
from .errors import ConfigError, DataError
from .forest import (
    ForestHyperparams,
    ForestModel,
    fit_isolation_forest,
    fit_random_forest as _fit_forest,
    score_isolation,
)

__all__ = [
    "Notion",
    "ScorerConfig",
    "Scorer",
    "make_scorer",
    "fit_isolation_forest",
    "score_isolation",
    "fit_random_forest",
    "score_two_sample",
    "score_residual",
    "score_uncertainty",
]


class Notion(str, Enum):
    TWO_SAMPLE = "two_sample_classifier"
    ANOMALY = "anomaly_isolation"
    RESIDUAL = "residual"
    UNCERTAINTY = "resampling_uncertainty"

    @classmethod
    def parse(cls, value) -> "Notion":
        if isinstance(value, cls):
            return value
        aliases = {
            "two-sample": cls.TWO_SAMPLE,
            "two_sample": cls.TWO_SAMPLE,
            "anomaly": cls.ANOMALY,
            "isolation": cls.ANOMALY,
            "uncertainty": cls.UNCERTAINTY,
        }
        key = str(value).strip().lower()
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise ConfigError(f"unknown notion of outlyingness: {value!r}") from None

    @property
    def needs_label(self) -> bool:
        return self in (Notion.RESIDUAL, Notion.UNCERTAINTY)


@dataclass
class ScorerConfig:
    notion: Notion
    forest: ForestHyperparams = field(default_factory=ForestHyperparams)
    task: str = "auto"  # supervised notions: "auto" | "classification" | "regression"

    def __post_init__(self):
        self.notion = Notion.parse(self.notion)
        if self.task not in ("auto", "classification", "regression"):
            raise ConfigError(f"unknown task {self.task!r}")


# --------------------------------------------------------------------------
# forest-level scoring


def fit_random_forest(data: Dataset, target: str, hp: Optional[ForestHyperparams] = None, seed: int = 0,
                      rows=None) -> ForestModel:
    """Fit a bagged forest on ``data`` (optionally restricted to ``rows``).

    ``target`` is ``"origin_label"`` (classify test vs train),
    ``"supervised_label"`` (classify the label) or ``"supervised_response"``
    (regress on the label).
    """
    rows = np.arange(data.n_rows) if rows is None else np.asarray(rows)
    X = data.features[rows]
    if target == "origin_label":
        return _fit_forest(X, data.is_test[rows], "classification", hp, seed)
    if data.label is None:
        raise ConfigError(f"target {target!r} needs a label column")
    if target == "supervised_label":
        return _fit_forest(X, data.label[rows], "classification", hp, seed)
    if target == "supervised_response":
        return _fit_forest(X, data.label[rows].astype(float), "regression", hp, seed)
    raise ConfigError(f"unknown target {target!r}")


def _tree_mask(model: ForestModel, n: int, mode: str, rows) -> np.ndarray:
    if mode == "in_sample":
        return np.ones((n, model.n_trees), dtype=bool)
    if mode == "oob":
        if model.inbag is None:
            raise ConfigError("out-of-bag scoring needs a bootstrapped forest")
        rows = np.arange(n) if rows is None else np.asarray(rows)
        if rows.size != n:
            raise DataError("rows must index the training rows being scored")
        if rows.size and (rows.min() < 0 or rows.max() >= model.n_rows):
            raise DataError("out-of-bag scores requested for a row the forest never saw")
        mask = model.oob_mask[rows]
        empty = ~mask.any(axis=1)
        if empty.any():
            raise DataError(f"row {int(rows[np.argmax(empty)])} is in-bag for every tree")
        return mask
    raise ConfigError(f"unknown scoring mode {mode!r}")


def _votes(model: ForestModel, X) -> np.ndarray:
    return model.tree_values(X).argmax(axis=2)


def score_two_sample(model: ForestModel, X, mode: str = "in_sample", rows=None, tree_mask=None) -> np.ndarray:
    """Fraction of (out-of-bag) trees voting that a row belongs to the test set."""
    if model.kind != "classification" or model.classes is None or model.classes.size != 2:
        raise ConfigError("two-sample scoring needs a binary origin classifier")
    votes = _votes(model, X)
    mask = tree_mask if tree_mask is not None else _tree_mask(model, votes.shape[0], mode, rows)
    return ((votes == 1) & mask).sum(axis=1) / mask.sum(axis=1)


def _class_index(model: ForestModel, truth) -> np.ndarray:
    truth = np.asarray(truth)
    pos = np.searchsorted(model.classes, truth)
    pos = np.clip(pos, 0, model.classes.size - 1)
    unknown = model.classes[pos] != truth
    if unknown.any():
        raise DataError(f"label {truth[np.argmax(unknown)]!r} was not seen when fitting")
    return pos


def score_residual(model: ForestModel, X, truth, mode: str = "in_sample", rows=None, tree_mask=None) -> np.ndarray:
    """Out-of-sample error: ``1 - P(true class)`` or ``|prediction - truth|``."""
    values = model.tree_values(X)
    mask = tree_mask if tree_mask is not None else _tree_mask(model, values.shape[0], mode, rows)
    used = mask.sum(axis=1)
    if model.kind == "classification":
        cls = _class_index(model, truth)
        votes = values.argmax(axis=2)
        p_true = ((votes == cls[:, None]) & mask).sum(axis=1) / used
        return 1.0 - p_true
    if model.kind == "regression":
        pred = (values[..., 0] * mask).sum(axis=1) / used
        return np.abs(pred - np.asarray(truth, dtype=float))
    raise ConfigError("residual scoring needs a supervised forest")


def score_uncertainty(model: ForestModel, X, mode: str = "in_sample", rows=None, tree_mask=None) -> np.ndarray:
    """Standard error of the mean prediction over the (out-of-bag) trees.

    Per-tree predictions are leaf means (regression) or leaf probabilities of
    the forest's majority class (classification; for two classes this is the
    same spread as the class-1 probability).
    """
    values = model.tree_values(X)
    mask = tree_mask if tree_mask is not None else _tree_mask(model, values.shape[0], mode, rows)
    k = mask.sum(axis=1)
    if (k < 2).any():
        raise DataError("uncertainty needs at least two usable trees per row")
    if model.kind == "classification":
        votes = values.argmax(axis=2)
        counts = np.stack([((votes == c) & mask).sum(axis=1) for c in range(values.shape[2])], axis=1)
        majority = counts.argmax(axis=1)
        pred = np.take_along_axis(values, majority[:, None, None], axis=2)[..., 0]
    elif model.kind == "regression":
        pred = values[..., 0]
    else:
        raise ConfigError("uncertainty scoring needs a supervised forest")
    pred = np.where(mask, pred, 0.0)
    mean = pred.sum(axis=1) / k
    var = (np.where(mask, pred - mean[:, None], 0.0) ** 2).sum(axis=1) / (k - 1)
    return np.sqrt(var) / np.sqrt(k)


# --------------------------------------------------------------------------
# scorer objects


class ScoreFunction:
    """A calibrated score function: ``phi(X, label=None) -> scores``."""

    def __init__(self, fn, needs_label=False):
        self._fn = fn
        self.needs_label = needs_label

    def __call__(self, X, label=None) -> np.ndarray:
        if self.needs_label and label is None:
            raise ConfigError("this score function needs the label of every row")
        return self._fn(X, label)


class Scorer:
    #: whether calibration reads the origin labels (permutations must refit)
    uses_origin = True
    supports_oob = True

    def __init__(self, config: ScorerConfig):
        self.config = config

    @property
    def notion(self) -> Notion:
        return self.config.notion

    def check(self, data: Dataset) -> None:
        if self.notion.needs_label and data.label is None:
            raise ConfigError(f"notion {self.notion.value!r} needs a label column")

    def calibrate(self, data: Dataset, seed: int = 0) -> ScoreFunction:
        raise NotImplementedError

    def oob_scores(self, data: Dataset, seed: int = 0) -> np.ndarray:
        raise NotImplementedError


class IsolationScorer(Scorer):
    uses_origin = False

    def calibrate(self, data, seed=0):
        model = fit_isolation_forest(data.features, self.config.forest, seed)
        return ScoreFunction(lambda X, label=None: score_isolation(model, X))

    def oob_scores(self, data, seed=0):
        # Isolation never reads origin labels, so in-sample scores leak nothing.
        model = fit_isolation_forest(data.features, self.config.forest, seed)
        return score_isolation(model, data.features)


class TwoSampleScorer(Scorer):
    def calibrate(self, data, seed=0):
        model = fit_random_forest(data, "origin_label", self.config.forest, seed)
        return ScoreFunction(lambda X, label=None: score_two_sample(model, X))

    def oob_scores(self, data, seed=0):
        model = fit_random_forest(data, "origin_label", self.config.forest, seed)
        return score_two_sample(model, data.features, mode="oob")


class SupervisedScorer(Scorer):
    """Residual and uncertainty scorers; the forest only ever sees training rows."""

    def _task(self, data: Dataset) -> str:
        if self.config.task != "auto":
            return self.config.task
        return label_task(data.label[~data.is_test])

    def _fit(self, data: Dataset, seed: int) -> ForestModel:
        self.check(data)
        target = "supervised_label" if self._task(data) == "classification" else "supervised_response"
        return fit_random_forest(data, target, self.config.forest, seed, rows=np.flatnonzero(~data.is_test))

    def _score(self, model, X, label, **kw):
        if self.notion is Notion.RESIDUAL:
            return score_residual(model, X, label, **kw)
        return score_uncertainty(model, X, **kw)

    def calibrate(self, data, seed=0):
        model = self._fit(data, seed)
        return ScoreFunction(lambda X, label=None: self._score(model, X, label), needs_label=True)

    def oob_scores(self, data, seed=0):
        model = self._fit(data, seed)
        train = np.flatnonzero(~data.is_test)
        test = np.flatnonzero(data.is_test)
        out = np.empty(data.n_rows)
        out[train] = self._score(model, data.features[train], data.label[train], mode="oob")
        # Test rows get the same kind of aggregate as an OOB row: each tree is
        # kept with the empirical out-of-bag rate, so the number of trees
        # behind a score does not depend on the row's origin.
        q = model.oob_mask.mean()
        rng = np.random.default_rng(derive_seed(seed, 0x7E57))
        mask = rng.random((test.size, model.n_trees)) < q
        short = mask.sum(axis=1) < 2
        while short.any():
            mask[short] = rng.random((int(short.sum()), model.n_trees)) < q
            short = mask.sum(axis=1) < 2
        out[test] = self._score(model, data.features[test], data.label[test], tree_mask=mask)
        return out


def make_scorer(config: ScorerConfig) -> Scorer:
    """Build the calibration procedure for a notion of outlyingness."""
    notion = config.notion
    if notion is Notion.ANOMALY:
        return IsolationScorer(config)
    if notion is Notion.TWO_SAMPLE:
        return TwoSampleScorer(config)
    return SupervisedScorer(config)
