"""Pooled train/test data container."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class Dataset:
    """Pooled feature matrix with a per-row origin flag and an optional label.

    ``is_test[i]`` is true when row ``i`` comes from the test sample. Labels,
    when present, are either categorical (any dtype) or a real response.
    """

    features: np.ndarray
    is_test: np.ndarray
    label: Optional[np.ndarray] = None

    def __post_init__(self):
        X = np.ascontiguousarray(self.features, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] < 1:
            raise DataError("features must be an n x d matrix with d >= 1")
        if not np.isfinite(X).all():
            bad = np.argwhere(~np.isfinite(X))[0]
            raise DataError(f"missing or non-finite value at row {bad[0]}, column {bad[1]}")
        origin = np.asarray(self.is_test, dtype=bool).ravel()
        if origin.size != X.shape[0]:
            raise DataError("origin vector length does not match the number of rows")
        if origin.all() or not origin.any():
            raise DataError("both train and test sides need at least one row")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "is_test", origin)
        if self.label is not None:
            label = np.asarray(self.label).ravel()
            if label.size != X.shape[0]:
                raise DataError("label length does not match the number of rows")
            object.__setattr__(self, "label", label)

    @classmethod
    def from_samples(cls, train, test, train_label=None, test_label=None) -> "Dataset":
        train = np.atleast_2d(np.asarray(train, dtype=float))
        test = np.atleast_2d(np.asarray(test, dtype=float))
        if train.shape[1] != test.shape[1]:
            raise DataError("train and test must have the same number of columns")
        label = None
        if (train_label is None) != (test_label is None):
            raise DataError("labels must be given for both sides or neither")
        if train_label is not None:
            label = np.concatenate([np.asarray(train_label), np.asarray(test_label)])
        is_test = np.r_[np.zeros(len(train), bool), np.ones(len(test), bool)]
        return cls(np.vstack([train, test]), is_test, label)

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_train(self) -> int:
        return int(np.count_nonzero(~self.is_test))

    @property
    def n_test(self) -> int:
        return int(np.count_nonzero(self.is_test))

    @property
    def train(self) -> np.ndarray:
        return self.features[~self.is_test]

    @property
    def test(self) -> np.ndarray:
        return self.features[self.is_test]

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        label = None if self.label is None else self.label[rows]
        return Dataset(self.features[rows], self.is_test[rows], label)

    def with_origin(self, is_test) -> "Dataset":
        return Dataset(self.features, is_test, self.label)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.asarray(self.features.shape, dtype=np.int64).tobytes())
        h.update(self.features.tobytes())
        h.update(self.is_test.astype(np.uint8).tobytes())
        if self.label is not None:
            h.update("\x1f".join(map(str, self.label.tolist())).encode())
        return h.hexdigest()


def label_task(label: np.ndarray) -> str:
    """``"classification"`` for categorical or integer-valued labels, else ``"regression"``."""
    label = np.asarray(label)
    if label.dtype.kind in "biuOUSb":
        return "classification"
    if label.dtype.kind == "f" and np.all(np.mod(label, 1) == 0) and np.unique(label).size <= 20:
        return "classification"
    return "regression"
