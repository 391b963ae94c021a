"""Weighted AUC statistic, its asymptotic null and p/s-value transforms.

The statistic treats test rows as positives and weights every threshold by
the squared empirical CDF of the training scores, so that disagreement in
the upper (outlying) tail counts the most and disagreement among low,
nominal scores is nearly ignored.

All functions here are pure and thread-safe.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
from scipy import special, stats

from .errors import DataError

#: Null mean of the statistic for exchangeable samples.
NULL_MEAN = 1.0 / 12.0
#: Variance constant of the asymptotic null, 1/112 ~ 0.008928571.
A1 = 1.0 / 112.0
#: s-value assigned to p == 0 when the resampling budget is unknown.
DEFAULT_S_CAP = 52.0

_LN2 = math.log(2.0)


class Method(str, Enum):
    PT = "PT"
    SS = "SS"
    AT = "AT"
    CTST = "CTST"
    ENERGY = "ENERGY"


@dataclass(frozen=True)
class ScoredSample:
    """Outlier scores for the training and test sides.

    Higher scores mean more outlying. Both sides must be nonempty and finite.
    """

    train_scores: np.ndarray
    test_scores: np.ndarray

    def __post_init__(self):
        tr = np.asarray(self.train_scores, dtype=float).ravel()
        te = np.asarray(self.test_scores, dtype=float).ravel()
        if tr.size == 0 or te.size == 0:
            raise DataError("both train and test scores must be nonempty")
        if not (np.isfinite(tr).all() and np.isfinite(te).all()):
            raise DataError("scores must be finite")
        object.__setattr__(self, "train_scores", tr)
        object.__setattr__(self, "test_scores", te)

    @classmethod
    def from_pooled(cls, scores, is_test) -> "ScoredSample":
        scores = np.asarray(scores, dtype=float)
        is_test = np.asarray(is_test, dtype=bool)
        return cls(scores[~is_test], scores[is_test])

    @property
    def n_train(self) -> int:
        return self.train_scores.size

    @property
    def n_test(self) -> int:
        return self.test_scores.size


@dataclass(frozen=True)
class AsymptoticNull:
    mean: float
    sd: float
    delta: float
    a1: float = A1


@dataclass
class WaucResult:
    """Outcome of one test.

    ``statistic`` is the weighted AUC for the D-SOS variants, the plain AUC
    for CTST and the energy distance for ENERGY.
    """

    statistic: float
    p_value: float
    s_value: float
    method: Method
    null_mean: Optional[float]
    null_sd: Optional[float]
    n_train: int
    n_test: int
    seed: Optional[int] = None
    permutations_used: Optional[int] = None
    notion: Optional[str] = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.method = Method(self.method)
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError(f"p_value out of [0, 1]: {self.p_value}")
        if self.s_value < 0:
            raise ValueError(f"negative s_value: {self.s_value}")
        if self.method is not Method.ENERGY and not (-1e-12 <= self.statistic <= 1 + 1e-12):
            raise ValueError(f"statistic out of [0, 1]: {self.statistic}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["method"] = self.method.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "WaucResult":
        return cls(**d)


def empirical_cdf_train(sample: ScoredSample, s: float) -> float:
    """Midrank empirical CDF of the training scores at ``s``."""
    tr = sample.train_scores
    below = np.count_nonzero(tr < s)
    ties = np.count_nonzero(tr == s)
    return (below + 0.5 * ties) / tr.size


def weight_at(sample: ScoredSample, s: float) -> float:
    """Threshold weight ``(C_train(s) - 1)**2``, i.e. the squared train CDF."""
    return empirical_cdf_train(sample, s) ** 2


def _wauc(train: np.ndarray, test: np.ndarray) -> float:
    # Hot path for permutation loops: inputs assumed 1-d finite float arrays.
    n_tr = train.size
    n_te = test.size
    cdf = (stats.rankdata(train) - 0.5) / n_tr
    te_sorted = np.sort(test)
    lo = np.searchsorted(te_sorted, train, side="left")
    hi = np.searchsorted(te_sorted, train, side="right")
    contamination = ((n_te - hi) + 0.5 * (hi - lo)) / n_te
    return float(np.mean(contamination * cdf * cdf))


def wauc(sample: ScoredSample) -> float:
    """Weighted AUC with test rows as the positive class.

    Plug-in estimator evaluated at the training scores::

        T = mean_i  C_test(s_i) * F_train(s_i)**2

    where ``C_test(s)`` counts test scores above ``s`` (ties count one half)
    and ``F_train(s_i) = (rank_i - 0.5) / n_train`` with midranks. Runs in
    ``O((n_train + n_test) log n)``.
    """
    return _wauc(sample.train_scores, sample.test_scores)


def asymptotic_null(n_train: int, n_test: int) -> AsymptoticNull:
    """Normal null of the weighted AUC: mean 1/12, sd sqrt(a1 (delta + 1) / n_test)."""
    if n_train < 1 or n_test < 1:
        raise DataError("sample sizes must be at least 1")
    delta = n_test / n_train
    sd = math.sqrt(A1 * (delta + 1.0) / n_test)
    return AsymptoticNull(mean=NULL_MEAN, sd=sd, delta=delta)


def upper_tail_s_value(z: float) -> float:
    """``-log2`` of the standard normal upper tail at ``z``, computed in log space.

    Stays finite where ``norm.sf(z)`` underflows to zero.
    """
    return max(0.0, -float(special.log_ndtr(-z)) / _LN2)


def p_value_asymptotic(t0: float, null: AsymptoticNull) -> float:
    """One-sided upper-tail p-value, ``1 - Phi((t0 - mean) / sd)``."""
    if not math.isfinite(t0):
        raise ValueError("t0 must be finite")
    return float(stats.norm.sf((t0 - null.mean) / null.sd))


def s_value(p: float, cap: Optional[float] = None) -> float:
    """Bits of evidence against the null, ``-log2(p)``.

    ``p == 0`` maps to ``cap`` (default 52 bits); pass ``log2(R + 1)`` for a
    permutation test with ``R`` resamples.
    """
    if not 0.0 <= p <= 1.0 or math.isnan(p):
        raise ValueError(f"p must lie in [0, 1], got {p}")
    if p == 0.0:
        return DEFAULT_S_CAP if cap is None else float(cap)
    return max(0.0, -math.log2(p))


def asymptotic_result(sample: ScoredSample, method: Method, seed=None, **kw) -> WaucResult:
    """Weighted AUC plus its asymptotic p-value, packaged as a result."""
    t0 = wauc(sample)
    null = asymptotic_null(sample.n_train, sample.n_test)
    z = (t0 - null.mean) / null.sd
    s = upper_tail_s_value(z)
    p = float(stats.norm.sf(z))
    return WaucResult(
        statistic=t0,
        p_value=p,
        s_value=s,
        method=method,
        null_mean=null.mean,
        null_sd=null.sd,
        n_train=sample.n_train,
        n_test=sample.n_test,
        seed=seed,
        **kw,
    )
