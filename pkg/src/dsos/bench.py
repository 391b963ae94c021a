"""Head-to-head benchmark on simulated shifts.

``run_grid`` runs every method on the same generated datasets (common random
numbers); ``signed_rank_compare`` turns paired s-values into a posterior
over (win a, tie, win b) with a region of practical equivalence on the
s-value scale; ``summarize_table`` applies the dominance rule.
"""
from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence

import numpy as np

from ._seeding import derive_seed
from .baselines import EnergyPlan, ctst, energy_test
from .data import Dataset
from .errors import ConfigError
from .forest import ForestHyperparams
from .scorers import Notion, ScorerConfig, make_scorer
from .simgen import GmmShiftSpec, generate
from .testing import PermutationPlan, SplitPlan, dsos_at, dsos_pt, dsos_ss


class BenchMethod(str, Enum):
    DSOS_PT = "DSOS_PT"
    DSOS_SS = "DSOS_SS"
    DSOS_AT = "DSOS_AT"
    CTST = "CTST"
    ENERGY = "ENERGY"


@dataclass
class BenchGrid:
    specs: List[GmmShiftSpec]
    methods: List[BenchMethod] = field(default_factory=lambda: list(BenchMethod))
    replicates: int = 100
    seed: int = 0
    forest: ForestHyperparams = field(default_factory=ForestHyperparams)
    notion: Notion = Notion.TWO_SAMPLE
    permutations: int = 199
    energy_permutations: int = 199

    def __post_init__(self):
        if not self.specs:
            raise ConfigError("grid needs at least one spec")
        self.methods = [BenchMethod(m) for m in self.methods]
        if not self.methods:
            raise ConfigError("grid needs at least one method")
        if self.replicates < 20:
            raise ConfigError("replicates must be >= 20")
        self.notion = Notion.parse(self.notion)


@dataclass
class BenchRecord:
    spec_index: int
    shift: str
    intensity: float
    n_per_side: int
    d: int
    replicate: int
    method: str
    p_value: Optional[float]
    s_value: Optional[float]
    statistic: Optional[float]
    data_fingerprint: str
    error: Optional[str] = None


def _run_method(method: BenchMethod, data: Dataset, seed: int, grid: BenchGrid):
    scorer = make_scorer(ScorerConfig(grid.notion, grid.forest))
    if method is BenchMethod.DSOS_PT:
        return dsos_pt(data, scorer, PermutationPlan(grid.permutations, seed=seed))
    if method is BenchMethod.DSOS_SS:
        return dsos_ss(data, scorer, SplitPlan(seed=seed))
    if method is BenchMethod.DSOS_AT:
        return dsos_at(data, scorer, seed)
    if method is BenchMethod.CTST:
        return ctst(data, SplitPlan(seed=seed), grid.forest)
    return energy_test(data, EnergyPlan(grid.energy_permutations, seed))


def replicate_dataset(grid: BenchGrid, spec_index: int, replicate: int) -> Dataset:
    """The dataset every method sees in cell ``(spec_index, replicate)``."""
    spec = grid.specs[spec_index].with_seed(derive_seed(grid.seed, spec_index, replicate))
    train, test = generate(spec)
    return Dataset.from_samples(train, test)


def run_grid(grid: BenchGrid, progress=None) -> List[BenchRecord]:
    """Run every method on every (spec, replicate) dataset.

    Per-cell failures are recorded in ``error`` and the grid carries on.
    """
    records = []
    for si, spec in enumerate(grid.specs):
        for rep in range(grid.replicates):
            data = replicate_dataset(grid, si, rep)
            fp = data.fingerprint()
            method_seed = derive_seed(grid.seed, si, rep, 1)
            for method in grid.methods:
                base = dict(spec_index=si, shift=spec.shift, intensity=spec.intensity,
                            n_per_side=spec.n_per_side, d=spec.d, replicate=rep,
                            method=method.value, data_fingerprint=fp)
                try:
                    res = _run_method(method, data, method_seed, grid)
                    records.append(BenchRecord(p_value=res.p_value, s_value=res.s_value,
                                               statistic=res.statistic, **base))
                except Exception as exc:  # noqa: BLE001
                    records.append(BenchRecord(p_value=None, s_value=None, statistic=None,
                                               error=f"{type(exc).__name__}: {exc}", **base))
            if progress is not None:
                progress(si, rep)
    return records


# --------------------------------------------------------------------------
# Bayesian signed-rank comparison


@dataclass
class ComparisonResult:
    method_a: str
    method_b: str
    p_win_a: float
    p_tie: float
    p_win_b: float
    rope_halfwidth: float = 1.0

    def __post_init__(self):
        probs = (self.p_win_a, self.p_tie, self.p_win_b)
        if min(probs) < 0 or abs(sum(probs) - 1.0) > 1e-9:
            raise ValueError(f"posterior probabilities must be nonnegative and sum to 1: {probs}")

    @property
    def verdict(self) -> str:
        return verdict(self)


def _weighted_median(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    # values sorted ascending (k,), weights (draws, k); lower weighted median
    cum = np.cumsum(weights, axis=1)
    idx = np.argmax(cum >= 0.5 * cum[:, -1:], axis=1)
    return values[idx]


def signed_rank_compare(s_a: Sequence[float], s_b: Sequence[float], rope: float = 1.0,
                        prior_pseudo_at_zero: int = 1, mc_draws: int = 10000, seed: int = 0,
                        method_a: str = "a", method_b: str = "b") -> ComparisonResult:
    """Posterior probability that ``a`` beats, ties or loses to ``b``.

    Paired differences ``s_a - s_b`` plus ``prior_pseudo_at_zero`` pseudo
    differences at zero get Dirichlet(1, ..., 1) weights. Each Monte Carlo
    draw is scored by the weighted median of the differences: inside
    ``[-rope, rope]`` is a tie, above is a win for ``a``, below a win for ``b``.
    """
    a = np.asarray(s_a, dtype=float)
    b = np.asarray(s_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ConfigError("s_a and s_b must be vectors of equal length")
    if a.size < 20:
        raise ConfigError("need at least 20 paired s-values")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise ConfigError("s-values must be finite")
    if rope < 0 or mc_draws < 1 or prior_pseudo_at_zero < 0:
        raise ConfigError("rope, mc_draws and prior_pseudo_at_zero must be nonnegative (draws >= 1)")
    diffs = np.concatenate([a - b, np.zeros(prior_pseudo_at_zero)])
    rng = np.random.default_rng(seed)
    w = rng.standard_exponential((mc_draws, diffs.size))
    # Median of the negated differences is the negated median, so a and b
    # swap exactly: break the (measure-zero) 0.5 boundary symmetrically.
    order = np.argsort(diffs, kind="stable")
    lo = _weighted_median(diffs[order], w[:, order])
    hi = -_weighted_median(-diffs[order[::-1]], w[:, order[::-1]])
    med = 0.5 * (lo + hi)
    n_a = np.count_nonzero(med > rope)
    n_b = np.count_nonzero(med < -rope)
    return ComparisonResult(method_a, method_b, n_a / mc_draws, (mc_draws - n_a - n_b) / mc_draws,
                            n_b / mc_draws, rope)


def verdict(c: ComparisonResult) -> str:
    """Dominance rule: a side wins (or the pair ties) with posterior >= 0.5."""
    if c.p_win_a >= 0.5:
        return f"win {c.method_a}"
    if c.p_win_b >= 0.5:
        return f"win {c.method_b}"
    if c.p_tie >= 0.5:
        return "tie"
    return "inconclusive"


def _paired(records: Sequence[BenchRecord], spec_index: int, ma: str, mb: str):
    by = {(r.method, r.replicate): r.s_value for r in records
          if r.spec_index == spec_index and r.error is None}
    reps = sorted({r.replicate for r in records if r.spec_index == spec_index})
    keep = [k for k in reps if (ma, k) in by and (mb, k) in by]
    return [by[(ma, k)] for k in keep], [by[(mb, k)] for k in keep]


def compare_grid(records: Sequence[BenchRecord], rope: float = 1.0, mc_draws: int = 10000,
                 seed: int = 0) -> List[dict]:
    """One comparison per (spec cell, method pair), pairs in canonical order."""
    methods = [m.value for m in BenchMethod if any(r.method == m.value for r in records)]
    cells = sorted({r.spec_index for r in records})
    out = []
    for si in cells:
        for ma, mb in itertools.combinations(methods, 2):
            sa, sb = _paired(records, si, ma, mb)
            if len(sa) < 20:
                continue
            c = signed_rank_compare(sa, sb, rope, mc_draws=mc_draws, seed=derive_seed(seed, si),
                                    method_a=ma, method_b=mb)
            out.append({"spec_index": si, **asdict(c), "verdict": c.verdict})
    return out


def summarize_table(comparisons: Sequence) -> List[dict]:
    """Win/tie/loss counts per contender pair over all cells."""
    table: Dict[tuple, dict] = {}
    for c in comparisons:
        if isinstance(c, dict):
            c = ComparisonResult(c["method_a"], c["method_b"], c["p_win_a"], c["p_tie"],
                                 c["p_win_b"], c.get("rope_halfwidth", 1.0))
        row = table.setdefault((c.method_a, c.method_b), {
            "contender_1": c.method_a, "contender_2": c.method_b,
            "tie": 0, "win_1": 0, "win_2": 0, "inconclusive": 0})
        v = verdict(c)
        if v == "tie":
            row["tie"] += 1
        elif v == "inconclusive":
            row["inconclusive"] += 1
        elif v == f"win {c.method_a}":
            row["win_1"] += 1
        else:
            row["win_2"] += 1
    return list(table.values())


def mean_s_values(records: Sequence[BenchRecord]) -> Dict[tuple, float]:
    acc: Dict[tuple, list] = {}
    for r in records:
        if r.error is None:
            acc.setdefault((r.spec_index, r.method), []).append(r.s_value)
    return {k: float(np.mean(v)) for k, v in acc.items()}


def default_grid_specs(n_per_side: int = 400, d: int = 4, intensity_index: int = 2) -> List[GmmShiftSpec]:
    """No shift plus each shift family at one intensity."""
    return [GmmShiftSpec(n_per_side, d, "none")] + [
        GmmShiftSpec(n_per_side, d, s, intensity_index)
        for s in ("label", "corrupted", "mean", "noise", "dependency")
    ]


def records_fieldnames() -> List[str]:
    return [f for f in BenchRecord.__dataclass_fields__]


