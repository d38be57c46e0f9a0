import math

import numpy as np
import pytest

from difair.data import (
    DataFormatError,
    Schema,
    SchemaColumn,
    SchemaError,
    SplitSpec,
    example_schema_path,
    gaussian_hiring_population,
    load_csv,
    split,
    synth_biased,
    synth_gaussian_hiring,
    synth_simpsons,
    synth_simpsons_dataset,
    write_scenario_csv,
)
from difair.groups import build_table
from difair.metrics import EstimatorSpec, epsilon_df, table_to_probs


def small_schema():
    return Schema(
        columns=(
            SchemaColumn("g", "protected", values=("A", "B")),
            SchemaColumn("y", "outcome", values=("0", "1")),
        ),
        outcome_positive_label="1",
    )


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


class TestSchema:
    def test_requires_exactly_one_outcome(self):
        with pytest.raises(SchemaError, match="outcome"):
            Schema(
                columns=(SchemaColumn("g", "protected", values=("A", "B")),),
                outcome_positive_label="1",
            )

    def test_requires_protected_column(self):
        with pytest.raises(SchemaError, match="protected"):
            Schema(
                columns=(SchemaColumn("y", "outcome", values=("0", "1")),),
                outcome_positive_label="1",
            )

    def test_categorical_needs_alphabet(self):
        with pytest.raises(SchemaError, match="alphabet"):
            SchemaColumn("c", "categorical")

    def test_duplicate_names_rejected(self):
        with pytest.raises(SchemaError, match="unique"):
            Schema(
                columns=(
                    SchemaColumn("g", "protected", values=("A", "B")),
                    SchemaColumn("g", "outcome", values=("0", "1")),
                ),
                outcome_positive_label="1",
            )

    def test_positive_label_must_be_in_alphabet(self):
        with pytest.raises(SchemaError, match="positive"):
            Schema(
                columns=(
                    SchemaColumn("g", "protected", values=("A", "B")),
                    SchemaColumn("y", "outcome", values=("0", "1")),
                ),
                outcome_positive_label="yes",
            )

    def test_json_round_trip(self, tmp_path):
        schema = small_schema()
        path = tmp_path / "s.json"
        schema.to_json(path)
        assert Schema.from_json(path) == schema


class TestLoadCsv:
    def test_four_row_example(self, tmp_path):
        p = write(tmp_path, "d.csv", "g,y\nA,0\nA,1\nB,0\nB,1\n")
        ds = load_csv(p, small_schema())
        assert ds.n_rows == 4
        assert ds.n_outcomes == 2
        assert ds.space.n_attributes == 1
        assert list(ds.outcome) == [0, 1, 0, 1]
        assert list(ds.group_index) == [0, 0, 1, 1]

    def test_unknown_label_is_schema_error(self, tmp_path):
        p = write(tmp_path, "d.csv", "g,y\nA,0\nC,1\n")
        with pytest.raises(SchemaError, match=r"'g'.*'C'.*line 3"):
            load_csv(p, small_schema())

    def test_wrong_column_count_names_line(self, tmp_path):
        p = write(tmp_path, "d.csv", "g,y\nA,0\nA\n")
        with pytest.raises(DataFormatError, match="line 3"):
            load_csv(p, small_schema())

    def test_bad_number_names_column_and_line(self, tmp_path):
        schema = Schema(
            columns=(
                SchemaColumn("g", "protected", values=("A", "B")),
                SchemaColumn("x", "continuous"),
                SchemaColumn("y", "outcome", values=("0", "1")),
            ),
            outcome_positive_label="1",
        )
        p = write(tmp_path, "d.csv", "g,x,y\nA,1.5,0\nB,oops,1\n")
        with pytest.raises(DataFormatError, match=r"'x'.*'oops'.*line 3"):
            load_csv(p, schema)

    def test_missing_values_dropped_by_default(self, tmp_path):
        p = write(tmp_path, "d.csv", "g,y\nA,0\n?,1\nB,\nB,1\n")
        ds = load_csv(p, small_schema())
        assert ds.n_rows == 2

    def test_missing_policy_error(self, tmp_path):
        schema = Schema(
            columns=small_schema().columns,
            outcome_positive_label="1",
            missing_policy="error",
        )
        p = write(tmp_path, "d.csv", "g,y\nA,0\n?,1\n")
        with pytest.raises(DataFormatError, match="line 3"):
            load_csv(p, schema)

    def test_extra_columns_ignored_and_cells_stripped(self, tmp_path):
        p = write(tmp_path, "d.csv", "id,g,y\n1, A ,0\n2, B ,1\n")
        ds = load_csv(p, small_schema())
        assert ds.n_rows == 2
        assert ds.decode_protected(0) == ("A",)

    def test_adult_style_binarization(self, tmp_path):
        schema = Schema.from_json(example_schema_path("adult"))
        header = ("age,workclass,fnlwgt,education,education-num,marital-status,"
                  "occupation,relationship,race,sex,capital-gain,capital-loss,"
                  "hours-per-week,native-country,income")
        rows = [
            "39, State-gov, 77516, Bachelors, 13, Never-married, Adm-clerical,"
            " Not-in-family, White, Male, 2174, 0, 40, United-States, <=50K",
            "50, Self-emp-not-inc, 83311, Bachelors, 13, Married-civ-spouse,"
            " Exec-managerial, Husband, Black, Female, 0, 0, 13, Jamaica, >50K",
            "38, Private, 215646, HS-grad, 9, Divorced, Handlers-cleaners,"
            " Not-in-family, Asian-Pac-Islander, Male, 0, 0, 40, Mexico, <=50K",
        ]
        p = write(tmp_path, "adult.csv", header + "\n" + "\n".join(rows) + "\n")
        ds = load_csv(p, schema)
        assert ds.space.n_attributes == 3
        assert ds.space.n_cells == 8
        assert ds.decode_protected(0) == ("White", "Male", "US")
        assert ds.decode_protected(1) == ("Non-White", "Female", "Non-US")

    def test_protected_encoding_round_trip(self, tmp_path):
        p = write(tmp_path, "d.csv", "g,y\nA,0\nB,1\nA,1\nB,0\n")
        ds = load_csv(p, small_schema())
        for i, expected in enumerate(("A", "B", "A", "B")):
            assert ds.decode_protected(i) == (expected,)

    def test_protected_in_features_by_default_and_excludable(self, tmp_path):
        p = write(tmp_path, "d.csv", "g,y\nA,0\nB,1\n")
        ds = load_csv(p, small_schema())
        assert ds.feature_names == ("g=A", "g=B")
        schema = Schema(
            columns=(
                SchemaColumn("g", "protected", values=("A", "B"), in_features=False),
                SchemaColumn("y", "outcome", values=("0", "1")),
            ),
            outcome_positive_label="1",
        )
        assert load_csv(p, schema).feature_names == ()


class TestSplit:
    def _data(self, n, seed=0):
        return synth_biased(0.4, 0.7, 0.3, 2, n, seed)

    def test_sizes_80_20_0(self):
        tr, dev, te = split(self._data(10), SplitSpec(0.8, 0.2, 0.0, seed=1))
        assert (tr.n_rows, dev.n_rows, te.n_rows) == (8, 2, 0)

    def test_sizes_60_20_20(self):
        tr, dev, te = split(self._data(10), SplitSpec(0.6, 0.2, 0.2, seed=1))
        assert (tr.n_rows, dev.n_rows, te.n_rows) == (6, 2, 2)

    def test_deterministic(self):
        data = self._data(50)
        spec = SplitSpec(0.5, 0.3, 0.2, seed=42)
        a = split(data, spec)
        b = split(data, spec)
        for x, y in zip(a, b):
            assert np.array_equal(x.outcome, y.outcome)
            assert np.array_equal(x.features, y.features)

    def test_partition_is_disjoint_and_complete(self):
        data = self._data(37)
        parts = split(data, SplitSpec(0.5, 0.25, 0.25, seed=3))
        assert sum(p.n_rows for p in parts) == 37
        # outcome/group counts add back up to the full data
        total = sum(int(p.outcome.sum()) for p in parts)
        assert total == int(data.outcome.sum())

    def test_fractions_must_sum_to_one(self):
        with pytest.raises(ValueError, match="sum to 1"):
            SplitSpec(0.5, 0.2, 0.2, seed=0)

    def test_standardization_uses_train_stats(self):
        data = self._data(400)
        tr, dev, _ = split(data, SplitSpec(0.8, 0.2, 0.0, seed=5))
        cols = list(tr.continuous_columns)
        train_feats = tr.features[:, cols]
        assert np.all(np.abs(train_feats.mean(axis=0)) < 1e-9)
        assert np.all(np.abs(train_feats.std(axis=0) - 1.0) < 1e-6)
        # dev is scaled with the train scaler, not its own stats
        assert tr.scaler is dev.scaler
        raw_dev = data.take(np.where(np.isin(np.arange(400), []))[0])  # noqa: F841
        assert dev.features[:, cols].std(axis=0).min() > 0


class TestSynthGaussian:
    def test_population_probabilities(self):
        pt = gaussian_hiring_population(10.0, 12.0, 1.0, 10.5)
        assert pt.probs[0, 1] == pytest.approx(0.3085, abs=5e-4)
        assert pt.probs[1, 1] == pytest.approx(0.9332, abs=5e-4)
        eps, witness = epsilon_df(pt)
        assert eps == pytest.approx(2.337, abs=5e-4)
        assert pt.outcomes[witness.outcome] == "no"

    def test_equal_means_give_zero_epsilon(self):
        pt = gaussian_hiring_population(10.0, 10.0, 1.0, 10.5)
        eps, _ = epsilon_df(pt)
        assert eps == 0.0

    def test_monte_carlo_epsilon_near_population(self):
        ds = synth_gaussian_hiring(10.0, 12.0, 1.0, 10.5, 100000, seed=7)
        probs = table_to_probs(build_table(ds, "labels"), EstimatorSpec("empirical"))
        eps, _ = epsilon_df(probs)
        assert eps == pytest.approx(2.337, abs=0.1)

    def test_outcome_is_threshold_on_score(self):
        ds = synth_gaussian_hiring(10.0, 12.0, 1.0, 10.5, 500, seed=1)
        score = ds.features[:, ds.continuous_columns[0]]
        assert np.array_equal(ds.outcome, (score >= 10.5).astype(int))

    def test_rejects_bad_sigma(self):
        with pytest.raises(ValueError, match="sigma"):
            synth_gaussian_hiring(10.0, 12.0, 0.0, 10.5, 10, seed=0)


class TestSynthSimpsons:
    def test_exact_cells(self):
        t = synth_simpsons()
        by_name = {t.space.cell_name(s): tuple(t.counts[s]) for s in range(4)}
        assert by_name["gender=A,race=1"] == (6.0, 81.0)
        assert by_name["gender=B,race=1"] == (36.0, 234.0)
        assert by_name["gender=A,race=2"] == (71.0, 192.0)
        assert by_name["gender=B,race=2"] == (25.0, 55.0)

    def test_totals_700(self):
        assert synth_simpsons().totals.sum() == 700

    def test_gender_marginals(self):
        from difair.groups import project

        t = project(synth_simpsons(), ["gender"])
        assert list(t.counts[:, 1]) == [273.0, 289.0]
        assert list(t.totals) == [350.0, 350.0]

    def test_dataset_matches_table(self):
        ds = synth_simpsons_dataset()
        rebuilt = build_table(ds, "labels")
        assert np.array_equal(rebuilt.counts, synth_simpsons().counts)


class TestSynthBiased:
    def test_population_label_epsilon(self):
        from difair.data import biased_population

        pt = biased_population(0.5, 0.8, 0.1)
        eps, _ = epsilon_df(pt)
        assert eps == pytest.approx(math.log(0.8 / 0.1), abs=1e-12)

    def test_equal_rates_zero_epsilon(self):
        from difair.data import biased_population

        eps, _ = epsilon_df(biased_population(0.3, 0.6, 0.6))
        assert eps == 0.0

    def test_empirical_rates_near_parameters(self):
        ds = synth_biased(0.3, 0.8, 0.1, 3, 20000, seed=2)
        t = build_table(ds, "labels")
        rates = t.counts[:, 1] / t.totals
        assert rates[0] == pytest.approx(0.8, abs=0.02)  # majority cell
        assert rates[1] == pytest.approx(0.1, abs=0.02)
        assert t.totals[1] / t.totals.sum() == pytest.approx(0.3, abs=0.02)

    def test_features_shift_by_outcome_and_group(self):
        ds = synth_biased(0.5, 0.5, 0.5, 2, 40000, seed=4)
        f = ds.features[:, ds.continuous_columns[0]]
        pos = ds.outcome == 1
        maj = ds.protected[:, 0] == 0
        assert f[pos].mean() - f[~pos].mean() == pytest.approx(2.0, abs=0.1)
        assert f[maj].mean() - f[~maj].mean() == pytest.approx(1.0, abs=0.1)

    def test_rejects_bad_probability(self):
        with pytest.raises(ValueError, match="p_minority"):
            synth_biased(1.5, 0.5, 0.5, 2, 10, seed=0)

    def test_deterministic(self):
        a = synth_biased(0.5, 0.8, 0.1, 2, 100, seed=9)
        b = synth_biased(0.5, 0.8, 0.1, 2, 100, seed=9)
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(a.outcome, b.outcome)


class TestScenarioCsv:
    def test_csv_round_trip_matches_dataset(self, tmp_path):
        csv_path, schema_path = write_scenario_csv(
            "biased",
            dict(p_minority=0.4, p_pos_majority=0.7, p_pos_minority=0.2,
                 n_features=2, n=200, seed=6),
            tmp_path / "b.csv",
        )
        ds_file = load_csv(csv_path, Schema.from_json(schema_path))
        ds_mem = synth_biased(0.4, 0.7, 0.2, 2, 200, seed=6)
        assert np.array_equal(ds_file.outcome, ds_mem.outcome)
        assert np.array_equal(ds_file.group_index, ds_mem.group_index)
        assert np.allclose(ds_file.features, ds_mem.features)

    def test_simpsons_csv_700_rows(self, tmp_path):
        csv_path, schema_path = write_scenario_csv("simpsons", {}, tmp_path / "s.csv")
        ds = load_csv(csv_path, Schema.from_json(schema_path))
        assert ds.n_rows == 700


def test_shipped_schemas_parse():
    for name in ("adult", "compas"):
        schema = Schema.from_json(example_schema_path(name))
        assert schema.protected_columns
