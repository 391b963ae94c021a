import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dsos.bench import (
    BenchGrid,
    ComparisonResult,
    compare_grid,
    replicate_dataset,
    run_grid,
    signed_rank_compare,
    summarize_table,
    verdict,
)
from dsos.errors import ConfigError
from dsos.forest import ForestHyperparams
from dsos.simgen import GmmShiftSpec

TINY = ForestHyperparams(n_trees=20)


def grid(**kw):
    base = dict(specs=[GmmShiftSpec(400, 4)], methods=["DSOS_AT", "ENERGY"], replicates=20, seed=1,
                forest=TINY, energy_permutations=99)
    base.update(kw)
    return BenchGrid(**base)


class TestGrid:
    def test_replicate_floor(self):
        with pytest.raises(ConfigError):
            grid(replicates=19)

    def test_arity_and_determinism(self):
        g = grid()
        a, b = run_grid(g), run_grid(g)
        assert len(a) == 40
        assert a == b

    def test_common_random_numbers(self):
        recs = run_grid(grid())
        fp = {}
        for r in recs:
            fp.setdefault(r.replicate, set()).add(r.data_fingerprint)
        assert all(len(v) == 1 for v in fp.values())
        g = grid()
        assert np.array_equal(replicate_dataset(g, 0, 3).features, replicate_dataset(g, 0, 3).features)

    def test_failures_recorded(self):
        g = grid(methods=["DSOS_AT"])
        g.forest = ForestHyperparams(n_trees=1)  # OOB impossible for some rows
        recs = run_grid(g)
        assert len(recs) == 20
        assert all(r.error is not None and r.s_value is None for r in recs)


class TestSignedRank:
    def test_zero_differences(self):
        c = signed_rank_compare(np.zeros(20), np.zeros(20))
        assert c.p_tie == 1.0 and verdict(c) == "tie"

    def test_plus_five(self):
        c = signed_rank_compare(np.full(30, 5.0), np.zeros(30), rope=1, mc_draws=10000)
        assert c.p_win_a >= 0.99

    @given(st.integers(0, 1000))
    @settings(max_examples=20, deadline=None)
    def test_swap_antisymmetry(self, seed):
        rng = np.random.default_rng(seed)
        a, b = rng.exponential(2, 25), rng.exponential(2, 25)
        ab = signed_rank_compare(a, b, seed=seed, mc_draws=2000)
        ba = signed_rank_compare(b, a, seed=seed, mc_draws=2000)
        assert (ab.p_win_a, ab.p_tie, ab.p_win_b) == (ba.p_win_b, ba.p_tie, ba.p_win_a)

    @given(st.integers(0, 1000))
    @settings(max_examples=20, deadline=None)
    def test_probabilities_valid(self, seed):
        rng = np.random.default_rng(seed)
        c = signed_rank_compare(rng.normal(0, 3, 20), rng.normal(0, 3, 20), seed=seed, mc_draws=500)
        assert min(c.p_win_a, c.p_tie, c.p_win_b) >= 0
        assert c.p_win_a + c.p_tie + c.p_win_b == pytest.approx(1.0, abs=1e-9)

    def test_self_comparison_ties(self):
        s = np.random.default_rng(0).exponential(3, 50)
        assert signed_rank_compare(s, s).p_tie >= 0.95

    def test_input_checks(self):
        with pytest.raises(ConfigError):
            signed_rank_compare(np.zeros(20), np.zeros(21))
        with pytest.raises(ConfigError):
            signed_rank_compare(np.zeros(19), np.zeros(19))


class TestDominance:
    @pytest.mark.parametrize("post,expected", [
        ((0.6, 0.3, 0.1), "win a"),
        ((0.3, 0.5, 0.2), "tie"),
        ((0.4, 0.35, 0.25), "inconclusive"),
        ((0.1, 0.3, 0.6), "win b"),
    ])
    def test_rule(self, post, expected):
        assert verdict(ComparisonResult("a", "b", *post)) == expected

    def test_invalid_posterior(self):
        with pytest.raises(ValueError):
            ComparisonResult("a", "b", 0.5, 0.6, 0.0)

    def test_table_counts(self):
        comps = [ComparisonResult("a", "b", 0.6, 0.3, 0.1), ComparisonResult("a", "b", 0.1, 0.8, 0.1),
                 ComparisonResult("a", "b", 0.4, 0.35, 0.25), ComparisonResult("a", "c", 0.0, 0.0, 1.0)]
        table = summarize_table(comps)
        assert table[0] == {"contender_1": "a", "contender_2": "b", "tie": 1, "win_1": 1, "win_2": 0,
                            "inconclusive": 1}
        assert table[1]["win_2"] == 1

    def test_null_grid(self):
        recs = run_grid(grid(methods=["DSOS_AT", "DSOS_SS", "CTST", "ENERGY"], replicates=20,
                             forest=ForestHyperparams(n_trees=50)))
        assert all(r.error is None for r in recs)
        for m in ("DSOS_AT", "DSOS_SS", "CTST", "ENERGY"):
            assert np.mean([r.s_value for r in recs if r.method == m]) <= 3
        comps = compare_grid(recs, mc_draws=2000)
        assert len(comps) == 6
