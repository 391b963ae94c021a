"""Bundled iris data and four train/test split presets.

* ``random``: uniformly random rows go to the test set.
* ``stratified``: random within each species, same class mix on both sides.
* ``in-distribution``: the test set is the most typical rows (lowest
  isolation scores on the full data).
* ``out-of-distribution``: the test set is the most atypical rows (highest
  isolation scores on the full data).

The last two are deterministic: the isolation forest is fit once on all
150 rows with seed 0. One third of the rows (50) go to the test set.
"""
from __future__ import annotations

import csv
from functools import lru_cache
from importlib import resources
from typing import Tuple

import numpy as np

from ._seeding import rng_for
from .data import Dataset
from .errors import ConfigError
from .forest import ForestHyperparams, fit_isolation_forest, score_isolation

PRESETS = ("random", "stratified", "in-distribution", "out-of-distribution")
FEATURES = ("sepal_length", "sepal_width", "petal_length", "petal_width")
N_TEST = 50
_QUANTILE_SEED = 0


@lru_cache(maxsize=1)
def load_iris() -> Tuple[np.ndarray, np.ndarray]:
    """``(features 150 x 4, species strings)``."""
    text = resources.files("dsos").joinpath("data/iris.csv").read_text()
    rows = list(csv.reader(text.splitlines()))[1:]
    X = np.array([[float(v) for v in r[:4]] for r in rows])
    y = np.array([r[4] for r in rows])
    X.setflags(write=False)
    y.setflags(write=False)
    return X, y


@lru_cache(maxsize=1)
def _isolation_order() -> np.ndarray:
    X, _ = load_iris()
    model = fit_isolation_forest(X, ForestHyperparams(), _QUANTILE_SEED)
    return np.argsort(score_isolation(model, X), kind="stable")


def iris_split(preset: str, seed: int = 0) -> Dataset:
    """Labeled iris dataset with test rows chosen by ``preset``.

    ``seed`` only affects the random and stratified presets.
    """
    if preset not in PRESETS:
        raise ConfigError(f"unknown iris preset {preset!r}; choose from {PRESETS}")
    X, y = load_iris()
    n = X.shape[0]
    is_test = np.zeros(n, bool)
    if preset == "random":
        is_test[rng_for(seed, 0x1215).choice(n, N_TEST, replace=False)] = True
    elif preset == "stratified":
        rng = rng_for(seed, 0x1215)
        classes, counts = np.unique(y, return_counts=True)
        # largest-remainder allocation of the N_TEST slots; ties go to random classes
        quota = N_TEST * counts / n
        take = np.floor(quota).astype(int)
        rest = np.lexsort((rng.random(classes.size), -(quota - take)))
        take[rest[: N_TEST - take.sum()]] += 1
        for cls, k in zip(classes, take):
            is_test[rng.choice(np.flatnonzero(y == cls), k, replace=False)] = True
    elif preset == "in-distribution":
        is_test[_isolation_order()[:N_TEST]] = True
    else:
        is_test[_isolation_order()[-N_TEST:]] = True
    return Dataset(X.copy(), is_test, y.copy())
