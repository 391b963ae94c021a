"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py`` (lines are repeated in the
terminal summary) or directly with ``python3 tests/test_acceptance.py``.
"""
import json
import math
import subprocess
import sys
import tempfile
import time
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from dsos.baselines import EnergyPlan, ctst, energy_statistic, energy_test
from dsos.bench import BenchGrid, compare_grid, run_grid
from dsos.data import Dataset
from dsos.forest import ForestHyperparams
from dsos.iris import iris_split
from dsos.scorers import ScorerConfig
from dsos.simgen import GmmShiftSpec, generate
from dsos.stats import NULL_MEAN, ScoredSample, asymptotic_null, wauc
from dsos.testing import PermutationPlan, SplitPlan, dsos_at, dsos_pt, dsos_ss, run_notion_panel

sys.path.insert(0, str(Path(__file__).parent))
from oracles import wauc_double_loop  # noqa: E402

pytestmark = pytest.mark.slow

RESULTS = []
ALPHA = 0.05
TWO_SAMPLE = ScorerConfig("two-sample")
ANOMALY = ScorerConfig("anomaly")


def record(number, name, passed, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {name} -- {detail}"
    RESULTS.append(line)
    print(line)
    return passed


def null_dataset(seed):
    return Dataset.from_samples(*generate(GmmShiftSpec(400, 4, "none", seed=seed)))


@lru_cache(maxsize=None)
def null_pvalues(method, runs):
    """Null p-values on the GMM baseline (n=400, d=4), seeds 0..runs-1."""
    out = []
    for seed in range(runs):
        data = null_dataset(10_000 + seed)
        if method == "SS":
            out.append(dsos_ss(data, TWO_SAMPLE, SplitPlan(seed=seed)).p_value)
        elif method == "AT":
            out.append(dsos_at(data, TWO_SAMPLE, seed).p_value)
        elif method == "CTST":
            out.append(ctst(data, SplitPlan(seed=seed)).p_value)
        elif method == "PT":
            # recalibrating two-sample scorer, early stopping on (decision-preserving)
            cfg = ScorerConfig("two-sample", ForestHyperparams(n_trees=100))
            out.append(dsos_pt(data, cfg, PermutationPlan(199, seed=seed)).p_value)
        elif method == "PT-full":
            # full budget, label-blind scorer: the p-value itself is tested
            out.append(dsos_pt(data, ANOMALY, PermutationPlan(199, sequential=False, seed=seed)).p_value)
    return tuple(out)


def test_c1_wauc_oracle():
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst = 0.0
    for i in range(1000):
        n_tr, n_te = rng.integers(1, 40, size=2)
        if i % 2:
            tr, te = rng.integers(0, 8, n_tr).astype(float), rng.integers(0, 8, n_te).astype(float)
        else:
            tr, te = rng.normal(size=n_tr), rng.normal(size=n_te)
        worst = max(worst, abs(wauc(ScoredSample(tr, te)) - wauc_double_loop(tr, te)))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and elapsed < 10
    assert record(1, "WAUC oracle equivalence", ok, f"max |diff| = {worst:.2e}, {elapsed:.1f} s")


def test_c2_null_moments():
    rng = np.random.default_rng(2)
    start = time.perf_counter()
    t = np.array([wauc(ScoredSample(rng.random(200), rng.random(200))) for _ in range(2000)])
    elapsed = time.perf_counter() - start
    se = t.std(ddof=1) / math.sqrt(t.size)
    sigma = asymptotic_null(200, 200).sd
    mean_ok = abs(t.mean() - NULL_MEAN) <= 4 * se
    sd_ok = abs(t.std(ddof=1) / sigma - 1) <= 0.15
    ok = mean_ok and sd_ok and elapsed < 60
    assert record(2, "null mean and sd", ok,
                  f"mean {t.mean():.5f} (1/12 +- {4 * se:.5f}), sd {t.std(ddof=1):.5f} vs {sigma:.5f}, "
                  f"{elapsed:.1f} s")


def test_c3_type_one_error():
    rates = {m: float(np.mean(np.array(null_pvalues(m, 200)) <= ALPHA)) for m in ("SS", "AT", "CTST")}
    rates["PT"] = float(np.mean(np.array(null_pvalues("PT", 100)) <= ALPHA))
    ok = all(0.02 <= r <= 0.09 for r in rates.values())
    assert record(3, "type-I calibration", ok,
                  ", ".join(f"{m} {r:.3f}" for m, r in rates.items()) + " (bounds [0.02, 0.09])")


def test_c4_uniformity():
    pvals = {"SS": null_pvalues("SS", 500), "AT": null_pvalues("AT", 500), "PT": null_pvalues("PT-full", 500)}
    ks = {}
    for m, p in pvals.items():
        p = np.asarray(p)
        if m == "PT":
            # the permutation p-value lives on the grid k/200; compare with the
            # discrete uniform by jittering within grid cells
            u = np.random.default_rng(4).random(p.size)
            p = p - u / 200
        ks[m] = stats.kstest(p, "uniform").pvalue
    ok = all(v > 0.01 for v in ks.values())
    assert record(4, "p-value uniformity", ok, ", ".join(f"{m} KS p = {v:.3f}" for m, v in ks.items()))


def _power_grid(sign):
    grid = BenchGrid([GmmShiftSpec(1600, 4, "mean", 2, mean_shift_sign=sign)],
                     ["DSOS_SS", "DSOS_AT", "CTST"], replicates=100, seed=5)
    records = run_grid(grid)
    comps = {(c["method_a"], c["method_b"]): c for c in compare_grid(records, seed=5)}
    return records, comps


def test_c5_power_ordering():
    lines, oks = [], []
    for sign in (1, -1):
        records, comps = _power_grid(sign)
        ss_at = verdict_of(comps, "DSOS_SS", "DSOS_AT")
        ss_ctst = verdict_of(comps, "DSOS_SS", "CTST")
        ok = ss_at != "win DSOS_SS" and ss_ctst != "win CTST"
        oks.append(ok)
        means = {m: np.mean([r.s_value for r in records if r.method == m and r.error is None])
                 for m in ("DSOS_AT", "DSOS_SS", "CTST")}
        lines.append(f"mean_shift_sign={sign:+d}: SS vs AT '{ss_at}', SS vs CTST '{ss_ctst}', mean s "
                     + " ".join(f"{m}={v:.1f}" for m, v in means.items()))
    # the criterion is judged on the default parameterization (sign +1);
    # the -1 line is informational
    record(5, "power ordering AT >= SS >= CTST (mean shift, kappa=14)", oks[0], "; ".join(lines))
    assert oks[0]


def verdict_of(comps, a, b):
    if (a, b) in comps:
        return comps[(a, b)]["verdict"]
    c = comps[(b, a)]
    return c["verdict"]


def test_c6_at_pt_equivalence():
    # Cells are fixed up front: n=400, d=4, no shift and every family except
    # the mean shift at its top intensity. The mean shift is left out because
    # it drives AT far beyond the largest s-value a 199-permutation test can
    # report (log2 200 = 7.6 bits).
    specs = [GmmShiftSpec(400, 4, "none")] + [GmmShiftSpec(400, 4, s, 2)
                                               for s in ("label", "corrupted", "noise", "dependency")]
    grid = BenchGrid(specs, ["DSOS_AT", "DSOS_PT"], replicates=20, seed=6,
                     forest=ForestHyperparams(n_trees=100), permutations=199)
    comps = compare_grid(run_grid(grid), seed=6)
    verdicts = [c["verdict"] for c in comps]
    ok = len(verdicts) == len(specs) and all(v in ("tie", "inconclusive") for v in verdicts)
    detail = ", ".join(f"{s.shift}: {v}" for s, v in zip(specs, verdicts))
    assert record(6, "AT ~ PT practical equivalence", ok, detail)


def truncated_dataset(seed):
    train, _ = generate(GmmShiftSpec(400, 4, "none", seed=seed))
    pool, _ = generate(GmmShiftSpec(1600, 4, "none", seed=seed + 1_000_000))
    # keep the 80% of draws closest to a component mean: strictly fewer outliers
    dist = np.minimum(((pool - 1) ** 2).sum(axis=1), ((pool + 1) ** 2).sum(axis=1))
    test = pool[dist < np.quantile(dist, 0.8)][:400]
    return Dataset.from_samples(train, test)


def test_c7_one_sided():
    medians = {}
    for m in ("PT", "SS", "AT"):
        ps = []
        for seed in range(20):
            data = truncated_dataset(seed)
            if m == "PT":
                ps.append(dsos_pt(data, ANOMALY, PermutationPlan(199, seed=seed)).p_value)
            elif m == "SS":
                ps.append(dsos_ss(data, ANOMALY, SplitPlan(seed=seed)).p_value)
            else:
                ps.append(dsos_at(data, ANOMALY, seed).p_value)
        medians[m] = float(np.median(ps))
    ok = all(v >= 0.3 for v in medians.values())
    assert record(7, "one-sidedness (truncated test draws)", ok,
                  ", ".join(f"{m} median p = {v:.3f}" for m, v in medians.items()))


def test_c8_iris():
    notions = ["two-sample", "anomaly", "residual", "uncertainty"]
    random_wins = ood_hits = strat_hits = 0
    for seed in range(20):
        s = [e.result.s_value for e in run_notion_panel(iris_split("random", seed), notions, "AT", seed)]
        random_wins += s[0] > max(s[1:])
        ood = dsos_at(iris_split("out-of-distribution", seed), ANOMALY, seed)
        ood_hits += ood.p_value < ALPHA
        ps = [e.result.p_value for e in run_notion_panel(iris_split("stratified", seed), notions, "AT", seed)]
        strat_hits += all(p > ALPHA for p in ps)
    parts = [random_wins >= 12, ood_hits >= 15, strat_hits >= 12]
    ok = all(parts)
    record(8, "iris qualitative reproduction", ok,
           f"random: two-sample highest in {random_wins}/20 (need 12); "
           f"out-of-distribution: anomaly p<0.05 in {ood_hits}/20 (need 15); "
           f"stratified: all p>0.05 in {strat_hits}/20 (need 12)")
    assert ok


def test_c9_energy():
    zero = energy_statistic([[0.5, 1.5]], [[0.5, 1.5]])
    rng = np.random.default_rng(9)
    x, y = rng.normal(size=(50, 4)), rng.normal(size=(40, 4)) + 0.3
    q, _ = np.linalg.qr(rng.normal(size=(4, 4)))
    shift = rng.normal(size=4) * 5
    drift = abs(energy_statistic(x @ q.T + shift, y @ q.T + shift) - energy_statistic(x, y))
    rejections = 0
    for seed in range(100):
        data = Dataset.from_samples(*generate(GmmShiftSpec(1600, 4, "mean", 2, seed=20_000 + seed)))
        rejections += energy_test(data, EnergyPlan(199, seed=seed)).p_value <= ALPHA
    ok = zero == 0.0 and drift <= 1e-9 and rejections >= 80
    assert record(9, "energy test sanity", ok,
                  f"E(singletons) = {zero}, rigid-motion drift {drift:.1e}, rejections {rejections}/100")


def _cli(*args, cwd):
    return subprocess.run([sys.executable, "-m", "dsos", *args], cwd=cwd, capture_output=True, text=True)


def test_c10_determinism():
    commands = {
        "test.json": ["test", "--iris", "random", "--scorer", "two-sample", "--method", "pt",
                      "--permutations", "99", "--n-trees", "100", "--seed", "7", "--out", "{out}"],
        "panel.json": ["panel", "--iris", "stratified", "--label", "species", "--seed", "7",
                       "--out", "{out}", "--plot-data", "{out}.csv"],
        "sim.csv": ["simulate", "--shift", "dependency", "--intensity", "1", "--seed", "7", "--out", "{out}"],
        "bench": ["bench", "--replicates", "20", "--shifts", "none", "noise", "--n-trees", "50",
                  "--mc-draws", "1000", "--seed", "7", "--out-dir", "{out}"],
    }
    mismatches = []
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        for run in ("a", "b"):
            (tmp / run).mkdir()
            for name, args in commands.items():
                out = str(tmp / run / name)
                proc = _cli(*[a.replace("{out}", out) for a in args], cwd=tmp)
                if proc.returncode not in (0, 3):
                    mismatches.append(f"{name} exited {proc.returncode}: {proc.stderr.strip()}")
        files = sorted(p.relative_to(tmp / "a") for p in (tmp / "a").rglob("*") if p.is_file())
        for rel in files:
            if (tmp / "a" / rel).read_bytes() != (tmp / "b" / rel).read_bytes():
                mismatches.append(str(rel))
        json.loads((tmp / "a" / "test.json").read_text())
    ok = not mismatches and len(files) == 6
    assert record(10, "determinism of CLI artifacts", ok,
                  f"{len(files)} artifacts compared" + (f", mismatches: {mismatches}" if mismatches else ", all identical"))


if __name__ == "__main__":
    failed = 0
    for name, fn in list(globals().items()):
        if name.startswith("test_c") and callable(fn):
            try:
                fn()
            except AssertionError:
                failed += 1
    print("\n".join(["", "summary:"] + RESULTS))
    sys.exit(1 if failed else 0)
