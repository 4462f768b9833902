"""Sampling strategy semantics and the closed-form probability calculator."""

import numpy as np
import pytest

from slide.samplers import (
    SamplerConfig,
    hard_threshold_sample,
    retrieval_probability,
    sample,
    topk_sample,
    vanilla_sample,
)
from slide.tables import RawCandidates


def raw(per_table, width=100):
    return RawCandidates([list(ids) for ids in per_table], width)


class TestVanilla:
    def test_all_empty_probes_everything(self):
        rng = np.random.default_rng(0)
        rep = vanilla_sample(raw([[], [], [], []]), SamplerConfig(beta=5), rng)
        assert rep.active_ids.size == 0
        assert rep.tables_probed == 4

    def test_beta_one_stops_at_first_nonempty(self):
        rng = np.random.default_rng(1)
        rep = vanilla_sample(raw([[3], [4], [5]]), SamplerConfig(beta=1), rng)
        assert rep.tables_probed == 1
        assert rep.active_ids.size == 1

    def test_whole_buckets_never_truncated(self):
        rng = np.random.default_rng(2)
        rep = vanilla_sample(raw([[1, 2, 3, 4, 5]] * 3), SamplerConfig(beta=2), rng)
        assert set(rep.active_ids.tolist()) == {1, 2, 3, 4, 5}
        assert rep.tables_probed == 1

    def test_reaches_beta_when_union_allows(self):
        per_table = [[i] for i in range(10)]
        for s in range(20):
            rep = vanilla_sample(raw(per_table), SamplerConfig(beta=6), np.random.default_rng(s))
            assert rep.active_ids.size >= 6
            assert rep.tables_probed == 6

    def test_freq_counts_probed_tables_only(self):
        rng = np.random.default_rng(3)
        rep = vanilla_sample(raw([[7], [7], [7], [7]]), SamplerConfig(beta=1), rng)
        assert rep.freq[7] == 1  # stopped after the first table
        assert np.all(rep.freq[rep.active_ids] >= 1)


class TestTopK:
    def test_highest_frequency_ranks_first(self):
        per_table = [[1, 2], [1, 3], [1, 4], [1, 5]]
        rep = topk_sample(raw(per_table), SamplerConfig(strategy="topk", beta=2))
        assert rep.active_ids[0] == 1

    def test_returns_all_when_fewer_than_beta(self):
        rep = topk_sample(raw([[1], [2]]), SamplerConfig(strategy="topk", beta=10))
        assert set(rep.active_ids.tolist()) == {1, 2}

    def test_tie_breaks_toward_lower_id(self):
        # frequencies: 10 -> 5, 20 -> 4, 30 -> 3, 31 -> 3, 40 -> 1
        per_table = [[10]] * 5 + [[20]] * 4 + [[31, 30]] * 3 + [[40]]
        rep = topk_sample(raw(per_table), SamplerConfig(strategy="topk", beta=3))
        assert rep.active_ids.tolist() == [10, 20, 30]

    def test_deterministic(self):
        rng = np.random.default_rng(9)
        per_table = [rng.integers(0, 50, size=8).tolist() for _ in range(6)]
        a = topk_sample(raw(per_table), SamplerConfig(strategy="topk", beta=5))
        b = topk_sample(raw(per_table), SamplerConfig(strategy="topk", beta=5))
        np.testing.assert_array_equal(a.active_ids, b.active_ids)


class TestHardThreshold:
    def test_min_freq_one_keeps_union(self):
        per_table = [[1, 2], [2, 3], [4]]
        cfg = SamplerConfig(strategy="hard_threshold", min_freq=1)
        rep = hard_threshold_sample(raw(per_table), cfg)
        assert set(rep.active_ids.tolist()) == {1, 2, 3, 4}

    def test_min_freq_l_keeps_only_everywhere_ids(self):
        per_table = [[1, 2], [1, 3], [1, 4]]
        cfg = SamplerConfig(strategy="hard_threshold", min_freq=3)
        rep = hard_threshold_sample(raw(per_table), cfg)
        assert rep.active_ids.tolist() == [1]

    def test_threshold_sets_are_nested(self):
        rng = np.random.default_rng(5)
        per_table = [rng.integers(0, 30, size=10).tolist() for _ in range(8)]
        prev = None
        for m in range(1, 9):
            cfg = SamplerConfig(strategy="hard_threshold", min_freq=m)
            ids = set(hard_threshold_sample(raw(per_table), cfg).active_ids.tolist())
            if prev is not None:
                assert ids <= prev
            prev = ids

    def test_min_freq_above_l_rejected_by_validate(self):
        with pytest.raises(ValueError):
            SamplerConfig(strategy="hard_threshold", min_freq=11).validate(num_tables=10)


class TestDispatcherAndConfig:
    def test_dispatch(self):
        r = raw([[1], [1], [2]])
        rng = np.random.default_rng(0)
        assert sample(r, SamplerConfig(strategy="vanilla", beta=9), rng).tables_probed == 3
        assert sample(r, SamplerConfig(strategy="topk", beta=1)).active_ids.tolist() == [1]
        got = sample(r, SamplerConfig(strategy="hard_threshold", min_freq=2))
        assert got.active_ids.tolist() == [1]

    def test_bad_strategy(self):
        with pytest.raises(ValueError):
            SamplerConfig(strategy="mystery").validate()


class TestRetrievalProbability:
    def test_zero_collision_probability_gives_zero(self):
        assert retrieval_probability("vanilla", 0.0, 2, 10, tau=1) == 0.0
        assert retrieval_probability("hard_threshold", 0.0, 2, 10, min_freq=1) == 0.0

    def test_threshold_zero_sums_to_one(self):
        assert retrieval_probability("hard_threshold", 0.37, 3, 10, min_freq=0) == pytest.approx(1.0)

    def test_binomial_tail_value(self):
        # L=10, m=9, p^K = 0.8: C(10,9) 0.8^9 0.2 + 0.8^10
        p = 0.8 ** (1 / 2)
        got = retrieval_probability("hard_threshold", p, 2, 10, min_freq=9)
        assert got == pytest.approx(0.3758096384, rel=1e-9)

    def test_vanilla_formula_value(self):
        p = 0.5
        got = retrieval_probability("vanilla", p, 1, 4, tau=2)
        assert got == pytest.approx(0.5**2 * 0.5**2)

    def test_threshold_monotone_in_p(self):
        ps = np.linspace(0, 1, 50)
        for m in range(1, 10):
            vals = [retrieval_probability("hard_threshold", p, 2, 10, min_freq=m) for p in ps]
            assert np.all(np.diff(vals) >= -1e-12)

    def test_vanilla_monotone_when_all_tables_probed(self):
        ps = np.linspace(0, 1, 50)
        vals = [retrieval_probability("vanilla", p, 2, 10, tau=10) for p in ps]
        assert np.all(np.diff(vals) >= -1e-12)

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            retrieval_probability("vanilla", 1.5, 2, 10, tau=1)
        with pytest.raises(ValueError):
            retrieval_probability("vanilla", 0.5, 2, 10, tau=11)
        with pytest.raises(ValueError):
            retrieval_probability("hard_threshold", 0.5, 2, 10)
        with pytest.raises(ValueError):
            retrieval_probability("topk", 0.5, 2, 10)
