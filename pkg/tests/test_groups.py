import numpy as np
import pytest

from difair.data import synth_biased, synth_simpsons, synth_simpsons_dataset
from difair.groups import (
    GroupSpace,
    OutcomeTable,
    Subgroup,
    build_table,
    enumerate_subgroups,
    project,
)
from difair.model import init_classifier


class TestGroupSpace:
    def test_cell_count_is_product(self):
        space = GroupSpace(("a", "b"), (("x", "y", "z"), ("0", "1")))
        assert space.n_cells == 6

    def test_cell_id_bijection(self):
        space = GroupSpace(("a", "b", "c"), (("x", "y"), ("0", "1", "2"), ("p", "q")))
        seen = set()
        for i in range(space.n_cells):
            values = space.cell_values(i)
            assert space.cell_id(values) == i
            seen.add(values)
        assert len(seen) == space.n_cells

    def test_enumeration_is_lexicographic(self):
        space = GroupSpace(("a", "b"), (("x", "y"), ("0", "1")))
        order = [space.cell_values(i) for i in range(4)]
        assert order == [(0, 0), (0, 1), (1, 0), (1, 1)]

    def test_needs_two_values(self):
        with pytest.raises(ValueError, match="2 values"):
            GroupSpace(("a",), (("only",),))


class TestEnumerateSubgroups:
    def test_bottom_only_p3_k2(self):
        space = GroupSpace(("a", "b", "c"), (("0", "1"),) * 3)
        assert len(enumerate_subgroups(space, "bottom_only")) == 8

    def test_all_levels_p3_k2(self):
        space = GroupSpace(("a", "b", "c"), (("0", "1"),) * 3)
        col = enumerate_subgroups(space, "all_levels")
        assert len(col) == 26  # 6 + 12 + 8
        by_level = {}
        for g in col:
            by_level[g.level] = by_level.get(g.level, 0) + 1
        assert by_level == {1: 6, 2: 12, 3: 8}

    def test_single_attribute_modes_agree(self):
        space = GroupSpace(("a",), (("0", "1"),))
        assert len(enumerate_subgroups(space, "bottom_only")) == 2
        assert len(enumerate_subgroups(space, "all_levels")) == 2

    def test_closed_form_count_random_spaces(self):
        from itertools import combinations
        from math import prod

        rng = np.random.default_rng(0)
        for _ in range(25):
            p = int(rng.integers(1, 6))
            cards = [int(c) for c in rng.integers(2, 5, size=p)]
            space = GroupSpace(
                tuple(f"a{i}" for i in range(p)),
                tuple(tuple(f"v{j}" for j in range(c)) for c in cards),
            )
            expected = sum(
                prod(cards[a] for a in attrs)
                for j in range(1, p + 1)
                for attrs in combinations(range(p), j)
            )
            assert len(enumerate_subgroups(space, "all_levels")) == expected

    def test_member_cells(self):
        space = GroupSpace(("a", "b"), (("0", "1"), ("x", "y", "z")))
        g = Subgroup(attrs=(0,), values=(1,))
        assert list(g.member_cells(space)) == [3, 4, 5]
        assert g.name(space) == "a=1"


class TestBuildTable:
    def test_labels_reproduce_simpsons(self):
        ds = synth_simpsons_dataset()
        assert np.array_equal(build_table(ds, "labels").counts, synth_simpsons().counts)

    def test_soft_counts_degenerate_classifier(self):
        # a classifier that outputs P(y=1|x)=1 for every row
        ds = synth_biased(0.5, 0.5, 0.5, 1, 50, seed=0)
        model = init_classifier("logistic", ds.features.shape[1], 2, seed=0)
        big = np.array(model.weights)
        big[-1] = 200.0  # output bias drives sigmoid to 1
        from dataclasses import replace

        model = replace(model, weights=big)
        t = build_table(ds, "classifier_soft", model)
        assert np.allclose(t.counts[:, 1], t.totals)
        assert np.allclose(t.counts[:, 0], 0.0)

    def test_soft_count_sums_probabilities(self):
        # 3 rows in one cell with P(y=1|x) = 0.2, 0.5, 0.9 -> soft count 1.6
        space = GroupSpace(("g",), (("a", "b"),))
        probs = np.array([[0.8, 0.2], [0.5, 0.5], [0.1, 0.9]])
        counts = np.zeros((2, 2))
        np.add.at(counts, np.array([0, 0, 0]), probs)
        table = OutcomeTable(space=space, outcomes=("0", "1"), counts=counts)
        assert table.counts[0, 1] == pytest.approx(1.6, abs=1e-12)

    def test_soft_table_totals_match_cell_sizes(self):
        ds = synth_biased(0.5, 0.7, 0.2, 2, 300, seed=1)
        model = init_classifier("mlp", ds.features.shape[1], 2, 2, 8, seed=3)
        t = build_table(ds, "classifier_soft", model)
        sizes = np.bincount(ds.group_index, minlength=2)
        assert np.allclose(t.totals, sizes, atol=1e-9)

    def test_hard_counts_are_argmax(self):
        ds = synth_biased(0.5, 0.7, 0.2, 2, 100, seed=1)
        model = init_classifier("logistic", ds.features.shape[1], 2, seed=3)
        from difair.model import forward

        preds = np.argmax(forward(model, ds.features), axis=1)
        t = build_table(ds, "classifier_hard", model)
        manual = np.zeros((2, 2))
        np.add.at(manual, (ds.group_index, preds), 1.0)
        assert np.array_equal(t.counts, manual)

    def test_feature_width_mismatch_rejected(self):
        ds = synth_biased(0.5, 0.7, 0.2, 2, 20, seed=1)
        model = init_classifier("logistic", ds.features.shape[1] + 1, 2, seed=3)
        with pytest.raises(ValueError, match="features"):
            build_table(ds, "classifier_hard", model)


class TestProject:
    def test_simpsons_gender_marginal(self):
        t = project(synth_simpsons(), ["gender"])
        assert list(t.counts[:, 1]) == [273.0, 289.0]
        assert list(t.totals) == [350.0, 350.0]

    def test_simpsons_race_marginal(self):
        t = project(synth_simpsons(), ["race"])
        assert list(t.counts[:, 1]) == [315.0, 247.0]
        assert list(t.totals) == [357.0, 343.0]

    def test_full_subset_rejected(self):
        with pytest.raises(ValueError, match="proper subset"):
            project(synth_simpsons(), ["gender", "race"])

    def test_empty_subset_rejected(self):
        with pytest.raises(ValueError, match="non-empty"):
            project(synth_simpsons(), [])

    def test_mass_conserved(self):
        t = synth_simpsons()
        assert project(t, ["race"]).counts.sum() == t.counts.sum()


class TestOutcomeTable:
    def test_totals_and_empty_cells(self):
        space = GroupSpace(("g",), (("a", "b", "c"),))
        t = OutcomeTable(space, ("0", "1"), np.array([[1.0, 2.0], [0.0, 0.0], [3.0, 1.0]]))
        assert list(t.totals) == [3.0, 0.0, 4.0]
        assert t.empty_cells == (1,)

    def test_negative_counts_rejected(self):
        space = GroupSpace(("g",), (("a", "b"),))
        with pytest.raises(ValueError, match="non-negative"):
            OutcomeTable(space, ("0", "1"), np.array([[1.0, -2.0], [0.0, 1.0]]))

    def test_to_text_lists_cells_counts_totals(self):
        text = synth_simpsons().to_text()
        assert "(A, 1)" in text
        assert "81" in text and "87" in text
