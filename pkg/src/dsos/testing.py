"""Permutation, split-sample and out-of-bag variants of the shift test.

All three share the statistic; they differ in how the scores are made
out-of-sample and how the null is obtained:

* ``dsos_pt``: calibrate on the pooled data, compare the observed statistic
  with statistics recomputed after shuffling the origin labels (and
  recalibrating the scorer).
* ``dsos_ss``: calibrate on one half, score the other half, use the normal null.
* ``dsos_at``: calibrate on the pooled data, score every row out-of-bag, use
  the normal null.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Union

import numpy as np

from ._seeding import derive_seed, rng_for
from .data import Dataset
from .errors import CalibrationError, ConfigError, DataError
from .forest import ForestHyperparams
from .scorers import Notion, Scorer, ScorerConfig, make_scorer
from .stats import Method, ScoredSample, WaucResult, _wauc, asymptotic_result, s_value

_PERMUTE = 0x5EED


@dataclass
class PermutationPlan:
    """Permutation budget and early-stopping rule.

    With ``sequential`` on, sampling stops as soon as the add-one p-value
    can no longer land on the other side of ``alpha`` whatever the remaining
    permutations give. The accept/reject decision at ``alpha`` is then the
    same as with the full budget. ``alpha`` only steers stopping.

    ``recalibrate=False`` permutes scores of a single fit instead of
    refitting per permutation. For scorers that read origin labels this is
    an approximation; label-blind scorers are never refit either way.
    """

    max_permutations: int = 1000
    sequential: bool = True
    alpha: float = 0.05
    seed: int = 0
    paper_exact: bool = False
    recalibrate: bool = True

    def __post_init__(self):
        if self.max_permutations < 19:
            raise ConfigError("max_permutations must be >= 19")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha must lie in [0, 1]")


@dataclass
class SplitPlan:
    calibration_fraction: float = 0.5
    seed: int = 0
    stratify_by_origin: bool = field(default=True, init=False)

    def __post_init__(self):
        if not 0.0 < self.calibration_fraction < 1.0:
            raise ConfigError("calibration_fraction must lie in (0, 1)")


def _as_scorer(scorer) -> Scorer:
    if isinstance(scorer, Scorer):
        return scorer
    if isinstance(scorer, ScorerConfig):
        return make_scorer(scorer)
    return make_scorer(ScorerConfig(Notion.parse(scorer)))


def split_rows(data: Dataset, plan: SplitPlan):
    """Origin-stratified split into (calibration rows, inference rows)."""
    rng = rng_for(plan.seed, 0x5B17)
    cal, inf = [], []
    for side in (False, True):
        rows = np.flatnonzero(data.is_test == side)
        rows = rows[rng.permutation(rows.size)]
        k = int(round(rows.size * plan.calibration_fraction))
        if k < 2 or rows.size - k < 2:
            name = "test" if side else "train"
            raise DataError(f"{name} side too small to split: {rows.size} rows")
        cal.append(rows[:k])
        inf.append(rows[k:])
    return np.sort(np.concatenate(cal)), np.sort(np.concatenate(inf))


def _pooled_stat(scores: np.ndarray, is_test: np.ndarray) -> float:
    return _wauc(scores[~is_test], scores[is_test])


def dsos_pt(data: Dataset, scorer, plan: Optional[PermutationPlan] = None) -> WaucResult:
    """Permutation test.

    The observed statistic uses out-of-sample scores of a scorer calibrated
    on the pooled data (exactly the scores of :func:`dsos_at` for the same
    seed). Each permutation shuffles the origin labels, recalibrates and
    rescores. Scorers that never read origin labels are not refit: the
    pooled rows are unchanged by a shuffle, so refitting would only reroll
    the forest noise.

    The default p-value is ``(1 + #{T_r >= T_0}) / (R + 1)``;
    ``plan.paper_exact`` switches to ``1 - mean(T_r <= T_0)``.
    """
    plan = plan or PermutationPlan()
    scorer = _as_scorer(scorer)
    scorer.check(data)
    try:
        scores0 = scorer.oob_scores(data, plan.seed)
    except Exception as exc:  # noqa: BLE001
        raise CalibrationError(f"calibration failed: {exc}", permutation=0) from exc
    t0 = _pooled_stat(scores0, data.is_test)

    R = plan.max_permutations
    refit = scorer.uses_origin and plan.recalibrate
    n_ge = n_gt = used = 0
    stopped = None
    for r in range(1, R + 1):
        origin = rng_for(plan.seed, _PERMUTE, r).permutation(data.is_test)
        if refit:
            try:
                scores = scorer.oob_scores(data.with_origin(origin), derive_seed(plan.seed, r))
            except Exception as exc:  # noqa: BLE001
                raise CalibrationError(f"calibration failed: {exc}", permutation=r) from exc
        else:
            scores = scores0
        t_r = _pooled_stat(scores, origin)
        n_ge += t_r >= t0
        n_gt += t_r > t0
        used = r
        if plan.sequential and r < R:
            if (1 + n_ge) / (R + 1) > plan.alpha:
                stopped = "accept"
                break
            if (1 + n_ge + (R - r)) / (R + 1) <= plan.alpha:
                stopped = "reject"
                break

    if plan.paper_exact:
        p = n_gt / used
    elif stopped == "accept":
        p = (1 + n_ge) / (used + 1)
    elif stopped == "reject":
        p = (1 + n_ge + R - used) / (R + 1)
    else:
        p = (1 + n_ge) / (R + 1)
    return WaucResult(
        statistic=t0,
        p_value=p,
        s_value=s_value(p, cap=math.log2(R + 1)),
        method=Method.PT,
        null_mean=None,
        null_sd=None,
        n_train=data.n_train,
        n_test=data.n_test,
        seed=plan.seed,
        permutations_used=used,
        notion=scorer.notion.value,
        extra={"stopped_early": stopped, "exceedances": int(n_ge)},
    )


def dsos_ss(data: Dataset, scorer, plan: Optional[SplitPlan] = None) -> WaucResult:
    """Split-sample test: calibrate on one half, score the other, normal null."""
    plan = plan or SplitPlan()
    scorer = _as_scorer(scorer)
    scorer.check(data)
    cal, inf = split_rows(data, plan)
    phi = scorer.calibrate(data.subset(cal), plan.seed)
    held = data.subset(inf)
    scores = phi(held.features, held.label)
    sample = ScoredSample.from_pooled(scores, held.is_test)
    return asymptotic_result(sample, Method.SS, seed=plan.seed, notion=scorer.notion.value)


def dsos_at(data: Dataset, scorer, seed: int = 0) -> WaucResult:
    """Out-of-bag test: pooled calibration, out-of-bag scores, normal null."""
    scorer = _as_scorer(scorer)
    if not scorer.supports_oob:
        raise ConfigError("scorer cannot produce out-of-bag scores")
    scorer.check(data)
    scores = scorer.oob_scores(data, seed)
    sample = ScoredSample.from_pooled(scores, data.is_test)
    return asymptotic_result(sample, Method.AT, seed=seed, notion=scorer.notion.value)


def run_test(data: Dataset, scorer, method: Union[str, Method], seed: int = 0,
             permutations: int = 1000, sequential: bool = True, alpha: float = 0.05,
             paper_exact: bool = False, calibration_fraction: float = 0.5) -> WaucResult:
    method = Method(str(method).upper() if not isinstance(method, Method) else method)
    if method is Method.PT:
        plan = PermutationPlan(permutations, sequential, alpha, seed, paper_exact)
        return dsos_pt(data, scorer, plan)
    if method is Method.SS:
        return dsos_ss(data, scorer, SplitPlan(calibration_fraction, seed))
    if method is Method.AT:
        return dsos_at(data, scorer, seed)
    raise ConfigError(f"{method.value} is not a D-SOS variant")


@dataclass
class PanelEntry:
    notion: Notion
    result: Optional[WaucResult]
    error: Optional[str] = None


def run_notion_panel(data: Dataset, notions: Sequence, method="AT", seed: int = 0,
                     forest: Optional[ForestHyperparams] = None, **kw) -> List[PanelEntry]:
    """One test per notion of outlyingness, all with the same seed.

    A notion that fails (for example a supervised notion on unlabeled data)
    is reported with its error; the rest of the panel still runs.
    """
    notions = [Notion.parse(n) for n in notions]
    if not notions:
        raise ConfigError("empty notion list")
    out = []
    for notion in notions:
        config = ScorerConfig(notion, forest or ForestHyperparams())
        try:
            out.append(PanelEntry(notion, run_test(data, config, method, seed, **kw)))
        except Exception as exc:  # noqa: BLE001
            out.append(PanelEntry(notion, None, f"{type(exc).__name__}: {exc}"))
    return out
