import numpy as np
import pytest

from dsos.data import Dataset
from dsos.errors import CalibrationError, ConfigError, DataError
from dsos.forest import ForestHyperparams
from dsos.scorers import Notion, Scorer, ScorerConfig
from dsos.stats import Method
from dsos.testing import (
    PermutationPlan,
    SplitPlan,
    dsos_at,
    dsos_pt,
    dsos_ss,
    run_notion_panel,
    run_test,
    split_rows,
)

SMALL = ForestHyperparams(n_trees=50)
ANOMALY = ScorerConfig("anomaly", SMALL)
TWO_SAMPLE = ScorerConfig("two-sample", SMALL)


def gaussian(seed, n=60, d=2, shift=0.0):
    rng = np.random.default_rng(seed)
    return Dataset.from_samples(rng.normal(size=(n, d)), rng.normal(size=(n, d)) + shift)


class TestPlans:
    def test_permutation_plan_bounds(self):
        with pytest.raises(ConfigError):
            PermutationPlan(max_permutations=18)
        PermutationPlan(max_permutations=19)

    def test_split_plan_bounds(self):
        for f in (0.0, 1.0):
            with pytest.raises(ConfigError):
                SplitPlan(calibration_fraction=f)

    def test_split_is_stratified(self):
        data = Dataset(np.zeros((101, 1)) + np.arange(101)[:, None], np.arange(101) >= 60)
        cal, inf = split_rows(data, SplitPlan(seed=3))
        assert np.intersect1d(cal, inf).size == 0
        assert cal.size + inf.size == 101
        assert abs(np.sum(~data.is_test[cal]) - 30) <= 1
        assert abs(np.sum(data.is_test[cal]) - 41 / 2) <= 1

    def test_split_too_small(self):
        data = Dataset(np.arange(10.0)[:, None], np.arange(10) >= 7)
        with pytest.raises(DataError):
            split_rows(data, SplitPlan())


class TestPermutation:
    def test_budget_contract(self):
        data = gaussian(0)
        r = dsos_pt(data, ANOMALY, PermutationPlan(59, sequential=False))
        assert r.permutations_used == 59
        assert r.p_value >= 1 / 60
        r = dsos_pt(data, ANOMALY, PermutationPlan(59, sequential=True))
        assert r.permutations_used <= 59

    def test_t0_matches_at(self):
        data = gaussian(1, shift=0.5)
        pt = dsos_pt(data, TWO_SAMPLE, PermutationPlan(19, seed=4))
        at = dsos_at(data, TWO_SAMPLE, seed=4)
        assert pt.statistic == at.statistic

    def test_paper_exact(self):
        data = gaussian(2, shift=3.0)
        r = dsos_pt(data, TWO_SAMPLE, PermutationPlan(19, sequential=False, paper_exact=True))
        assert r.p_value == 0.0
        assert r.s_value == pytest.approx(np.log2(20))
        r = dsos_pt(data, TWO_SAMPLE, PermutationPlan(19, sequential=False))
        assert r.p_value == pytest.approx(1 / 20)

    def test_sequential_keeps_decision(self):
        for seed in range(100):
            data = gaussian(seed, n=30, shift=0.6 * (seed % 3))
            cfg = ScorerConfig("anomaly", ForestHyperparams(n_trees=20))
            full = dsos_pt(data, cfg, PermutationPlan(99, sequential=False, seed=seed))
            seq = dsos_pt(data, cfg, PermutationPlan(99, sequential=True, seed=seed))
            assert (full.p_value <= 0.05) == (seq.p_value <= 0.05), seed

    def test_duplicated_rows_not_rejected(self):
        ps = []
        for seed in range(20):
            X = np.random.default_rng(seed).normal(size=(60, 2))
            ps.append(dsos_pt(Dataset.from_samples(X, X), ANOMALY, PermutationPlan(99, seed=seed)).p_value)
        assert np.median(ps) >= 0.3

    def test_planted_cluster_rejected(self):
        rejections = 0
        for seed in range(20):
            rng = np.random.default_rng(seed)
            train = rng.normal(size=(500, 2))
            test = rng.normal(size=(500, 2))
            test[:50] = 10 + 0.1 * rng.normal(size=(50, 2))
            r = dsos_pt(Dataset.from_samples(train, test), ANOMALY, PermutationPlan(99, seed=seed))
            rejections += r.p_value <= 0.05
        assert rejections >= 18

    def test_uniform_on_grid_for_label_blind_scorer(self):
        # isolation ignores origins, so T0 and the T_r are exchangeable
        ps = [dsos_pt(gaussian(s, n=20), ScorerConfig("anomaly", ForestHyperparams(n_trees=10)),
                      PermutationPlan(19, sequential=False, seed=s)).p_value for s in range(200)]
        assert 0.4 < np.mean(ps) < 0.6
        assert np.mean(np.array(ps) <= 0.05) < 0.12

    def test_calibration_error_carries_index(self):
        class Flaky(Scorer):
            calls = 0

            def oob_scores(self, data, seed=0):
                Flaky.calls += 1
                if Flaky.calls == 3:
                    raise RuntimeError("boom")
                return data.features[:, 0]

        with pytest.raises(CalibrationError) as err:
            dsos_pt(gaussian(0), Flaky(ScorerConfig("two-sample")), PermutationPlan(19, sequential=False))
        assert err.value.permutation == 2
        assert "permutation 2" in str(err.value)

    def test_deterministic(self):
        data = gaussian(5, shift=0.3)
        a = dsos_pt(data, TWO_SAMPLE, PermutationPlan(19, seed=9))
        b = dsos_pt(data, TWO_SAMPLE, PermutationPlan(19, seed=9))
        assert a == b


class TestAsymptotic:
    def test_ss_counts_from_second_half(self):
        data = gaussian(0, n=100)
        r = dsos_ss(data, TWO_SAMPLE, SplitPlan(seed=1))
        assert r.method is Method.SS
        assert (r.n_train, r.n_test) == (50, 50)

    def test_ss_anomaly_works(self):
        r = dsos_ss(gaussian(0), ANOMALY, SplitPlan())
        assert 0 <= r.p_value <= 1

    def test_at_full_counts_and_determinism(self):
        data = gaussian(0, n=80)
        a = dsos_at(data, TWO_SAMPLE, 3)
        assert (a.n_train, a.n_test) == (80, 80)
        assert a == dsos_at(data, TWO_SAMPLE, 3)

    def test_at_rejects_non_oob_scorer(self):
        class NoOob(Scorer):
            supports_oob = False

        with pytest.raises(ConfigError):
            dsos_at(gaussian(0), NoOob(ScorerConfig("two-sample")))

    def test_strong_shift_detected(self):
        for method in ("SS", "AT"):
            assert run_test(gaussian(0, n=100, shift=2.0), TWO_SAMPLE, method).p_value < 1e-3

    def test_run_test_rejects_baseline_methods(self):
        with pytest.raises(ConfigError):
            run_test(gaussian(0), TWO_SAMPLE, "CTST")

    def test_supervised_at(self):
        rng = np.random.default_rng(0)
        train = rng.normal(size=(100, 2))
        test = rng.normal(size=(100, 2))
        f = lambda Z: Z[:, 0] - Z[:, 1]  # noqa: E731
        # test labels follow a different rule: residuals blow up
        data = Dataset.from_samples(train, test, f(train), -f(test))
        for notion in ("residual", "uncertainty"):
            r = dsos_at(data, ScorerConfig(notion, SMALL), 0)
            assert r.notion == Notion.parse(notion).value
        assert dsos_at(data, ScorerConfig("residual", SMALL), 0).p_value < 1e-3


class TestPanel:
    def test_unlabeled_single_notion(self):
        out = run_notion_panel(gaussian(0), ["anomaly"], forest=SMALL)
        assert len(out) == 1 and out[0].error is None

    def test_failures_do_not_abort(self):
        out = run_notion_panel(gaussian(0), ["two-sample", "residual", "anomaly"], forest=SMALL)
        assert [e.error is None for e in out] == [True, False, True]
        assert "label" in out[1].error

    def test_empty_list(self):
        with pytest.raises(ConfigError):
            run_notion_panel(gaussian(0), [])
