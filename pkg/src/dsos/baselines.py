"""Equal-distribution baselines: classifier two-sample test and energy test."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats
from scipy.spatial.distance import cdist

from ._seeding import rng_for
from .data import Dataset
from .errors import ConfigError
from .forest import ForestHyperparams
from .scorers import Notion, ScorerConfig, make_scorer
from .stats import Method, WaucResult, s_value, upper_tail_s_value
from .testing import SplitPlan, split_rows


@dataclass
class EnergyPlan:
    permutations: int = 199
    seed: int = 0

    def __post_init__(self):
        if self.permutations < 99:
            raise ConfigError("energy test needs at least 99 permutations")


def mann_whitney_auc(neg, pos) -> float:
    """AUC of ``pos`` over ``neg`` with midranks (ties count one half)."""
    neg = np.asarray(neg, dtype=float)
    pos = np.asarray(pos, dtype=float)
    ranks = stats.rankdata(np.concatenate([neg, pos]))
    u = ranks[neg.size:].sum() - pos.size * (pos.size + 1) / 2.0
    return u / (neg.size * pos.size)


def mann_whitney_null_sd(n1: int, n2: int, pooled=None) -> float:
    """Null sd of the AUC, ``sqrt((n1 + n2 + 1) / (12 n1 n2))`` with a tie correction."""
    n = n1 + n2
    tie_term = 0.0
    if pooled is not None:
        _, counts = np.unique(pooled, return_counts=True)
        tie_term = float(np.sum(counts**3 - counts)) / (n * (n - 1))
    return math.sqrt(((n + 1) - tie_term) / (12.0 * n1 * n2))


def ctst(data: Dataset, plan: Optional[SplitPlan] = None,
         forest: Optional[ForestHyperparams] = None) -> WaucResult:
    """Classifier two-sample test with sample splitting.

    The origin classifier is fit on the calibration half (same split and
    forest as the split-sample D-SOS test for the same seed); its test-class
    probabilities on the held-out half are compared with the plain AUC
    against its Mann-Whitney normal null, upper tail.
    """
    plan = plan or SplitPlan()
    cal, inf = split_rows(data, plan)
    scorer = make_scorer(ScorerConfig(Notion.TWO_SAMPLE, forest or ForestHyperparams()))
    phi = scorer.calibrate(data.subset(cal), plan.seed)
    held = data.subset(inf)
    scores = phi(held.features)
    neg, pos = scores[~held.is_test], scores[held.is_test]
    auc = mann_whitney_auc(neg, pos)
    sd = mann_whitney_null_sd(neg.size, pos.size, scores)
    z = (auc - 0.5) / sd if sd > 0 else 0.0
    return WaucResult(
        statistic=auc,
        p_value=float(stats.norm.sf(z)),
        s_value=upper_tail_s_value(z),
        method=Method.CTST,
        null_mean=0.5,
        null_sd=sd,
        n_train=int(neg.size),
        n_test=int(pos.size),
        seed=plan.seed,
        notion=Notion.TWO_SAMPLE.value,
    )


def energy_statistic(x, y) -> float:
    """``2/(nm) sum|x - y| - 1/n^2 sum|x - x'| - 1/m^2 sum|y - y'|`` (Euclidean)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    n, m = len(x), len(y)
    return (2.0 * cdist(x, y).sum() / (n * m)
            - cdist(x, x).sum() / (n * n)
            - cdist(y, y).sum() / (m * m))


def _energy_from_distances(D, rowsum_total, Z):
    # Z: (N, B) 0/1 test indicators for B labelings
    m = Z.sum(axis=0)
    n = Z.shape[0] - m
    DZ = D @ Z
    yy = np.einsum("ij,ij->j", Z, DZ)
    xy = DZ.sum(axis=0) - yy
    xx = rowsum_total - 2.0 * xy - yy
    return 2.0 * xy / (n * m) - xx / (n * n) - yy / (m * m)


def energy_test(data: Dataset, plan: Optional[EnergyPlan] = None) -> WaucResult:
    """Energy test of equal distributions with an add-one permutation p-value."""
    plan = plan or EnergyPlan()
    X = data.features
    D = cdist(X, X)
    total = D.sum()
    z0 = data.is_test.astype(float)[:, None]
    e0 = float(_energy_from_distances(D, total, z0)[0])
    R = plan.permutations
    perms = np.stack(
        [rng_for(plan.seed, 0xE6, r).permutation(data.is_test) for r in range(1, R + 1)], axis=1
    ).astype(float)
    null = np.concatenate(
        [_energy_from_distances(D, total, perms[:, i:i + 64]) for i in range(0, R, 64)]
    )
    # Same labeling gives the same value up to summation order.
    p = (1 + np.count_nonzero(null >= e0 - 1e-12 * max(1.0, abs(e0)))) / (R + 1)
    return WaucResult(
        statistic=e0,
        p_value=p,
        s_value=s_value(p, cap=math.log2(R + 1)),
        method=Method.ENERGY,
        null_mean=None,
        null_sd=None,
        n_train=data.n_train,
        n_test=data.n_test,
        seed=plan.seed,
        permutations_used=R,
    )
