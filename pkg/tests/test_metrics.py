import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seppchange import evaluate, hausdorff, k_error, mean_se, one_sided
from seppchange.metrics import EvalResult, aggregate, table_cell

index_sets = st.sets(st.integers(min_value=1, max_value=500), min_size=1, max_size=10)


class TestOneSided:
    def test_identical_singletons(self):
        assert one_sided({5}, {5}) == 0

    def test_directed(self):
        assert one_sided({1, 10}, {4}) == 6

    def test_asymmetry(self):
        assert one_sided({4}, {1, 10}) == 3

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            one_sided(set(), {1})
        with pytest.raises(ValueError):
            one_sided({1}, set())


class TestHausdorff:
    def test_identical(self):
        assert hausdorff({5}, {5}, T=100) == (0, False)

    def test_max_of_one_sided(self):
        assert hausdorff({1, 10}, {4}, T=100) == (6, False)

    def test_both_empty(self):
        assert hausdorff(set(), set(), T=300) == (0, False)

    def test_one_empty_flagged(self):
        assert hausdorff(set(), {4}, T=300) == (300, True)
        assert hausdorff({4}, set(), T=300) == (300, True)

    def test_example_from_evaluation(self):
        d, flagged = hausdorff({148, 290}, {151}, T=300)
        assert (d, flagged) == (139, False)

    @given(index_sets, index_sets)
    @settings(max_examples=300, deadline=None)
    def test_symmetry_and_dominance(self, a, b):
        d_ab = hausdorff(a, b, T=500)[0]
        d_ba = hausdorff(b, a, T=500)[0]
        assert d_ab == d_ba
        assert one_sided(a, b) <= d_ab

    @given(index_sets)
    @settings(max_examples=100, deadline=None)
    def test_identity(self, a):
        assert hausdorff(a, a, T=500) == (0, False)

    @given(index_sets, index_sets, index_sets)
    @settings(max_examples=400, deadline=None)
    def test_triangle_inequality(self, a, b, c):
        d_ac = hausdorff(a, c, T=500)[0]
        d_ab = hausdorff(a, b, T=500)[0]
        d_bc = hausdorff(b, c, T=500)[0]
        assert d_ac <= d_ab + d_bc


class TestKError:
    def test_equal_sizes(self):
        assert k_error({3, 7}, {4, 8}) == 0

    def test_empty_estimate(self):
        assert k_error(set(), {4, 8}) == 2

    def test_overshoot(self):
        assert k_error({1, 2, 3}, {9}) == 2


class TestAggregation:
    def test_mean_se(self):
        mean, se = mean_se([1.0, 2.0, 3.0])
        assert mean == 2.0
        assert se == pytest.approx(math.sqrt(1.0 / 3.0))

    def test_single_value_se_absent(self):
        assert mean_se([5.0]) == (5.0, None)

    def test_aggregate_recomputable(self):
        results = [
            EvalResult(hausdorff=3, flagged=False, k_error=0),
            EvalResult(hausdorff=5, flagged=True, k_error=1),
            EvalResult(hausdorff=1, flagged=False, k_error=0),
        ]
        agg = aggregate(results)
        assert agg["n"] == 3
        assert agg["hausdorff_mean"] == pytest.approx(3.0)
        assert agg["flagged"] == 1
        mean, se = mean_se(agg["hausdorff"])
        assert (mean, se) == (agg["hausdorff_mean"], agg["hausdorff_se"])

    def test_table_cell_layout(self):
        assert table_cell(0.612, 0.45) == "0.6(0.5)"
        assert table_cell(3.0, None) == "3.0(-)"


class TestEvaluate:
    def test_exact_match(self):
        r = evaluate([151], [151], T=300)
        assert (r.hausdorff, r.k_error, r.flagged) == (0, 0, False)

    def test_total_miss(self):
        r = evaluate([], [151], T=300)
        assert (r.hausdorff, r.k_error, r.flagged) == (300, 1, True)
