import json

import numpy as np
import pytest

from attribkit.core import (
    DataError,
    Dataset,
    Explanation,
    FeatureSchema,
    FunctionPredictor,
    LinearPredictor,
    ScaledPredictor,
    Scaler,
    SplitConfig,
    background_rows,
    evaluate,
    load_csv,
    load_schema,
    split,
    standardize,
    write_csv,
)


class TestSchema:
    def test_rejects_duplicate_and_empty_names(self):
        with pytest.raises(DataError):
            FeatureSchema(("a", "a"))
        with pytest.raises(DataError):
            FeatureSchema(("a", ""))

    def test_target_must_not_overlap_features(self):
        with pytest.raises(DataError, match="overlap"):
            FeatureSchema(("a", "b"), "regression", ("b",))

    def test_sidecar_round_trip(self, schema_file):
        schema = FeatureSchema(("x", "y"), "multilabel", ("l1", "l2"), subject="sid", activity="act")
        path = schema_file(schema)
        assert json.loads(path.read_text())["target"] == {"kind": "multilabel", "columns": ["l1", "l2"]}
        assert load_schema(path) == schema
        assert schema.group_keys == {"subject": "sid", "activity": "act"}


class TestLoadCsv:
    def test_three_numeric_rows(self, csv_factory, ab_schema):
        path = csv_factory(["a", "b", "target"], [[1, 2, 3], [4, 5, 6], [7, 8, 9]])
        ds = load_csv(path, ab_schema)
        assert len(ds) == 3 and ds.n_features == 2
        np.testing.assert_array_equal(ds.rows, [[1, 2], [4, 5], [7, 8]])
        np.testing.assert_array_equal(ds.targets[:, 0], [3, 6, 9])

    def test_header_order_does_not_matter(self, csv_factory, ab_schema):
        path = csv_factory(["target", "b", "a"], [[3, 2, 1]])
        np.testing.assert_array_equal(load_csv(path, ab_schema).rows, [[1, 2]])

    def test_missing_column_is_named(self, csv_factory, ab_schema):
        path = csv_factory(["a", "target"], [[1, 3]])
        with pytest.raises(DataError, match="'b'"):
            load_csv(path, ab_schema)

    def test_nan_cites_row(self, csv_factory, ab_schema):
        path = csv_factory(["a", "b", "target"], [[1, 2, 3], [4, "NaN", 6], [7, 8, 9]])
        with pytest.raises(DataError, match="row 2") as exc:
            load_csv(path, ab_schema)
        assert "'b'" in str(exc.value)

    def test_unparseable_value(self, csv_factory, ab_schema):
        path = csv_factory(["a", "b", "target"], [[1, "x", 3]])
        with pytest.raises(DataError, match="row 1, column 'b'"):
            load_csv(path, ab_schema)

    def test_missing_file_and_empty_dataset(self, tmp_path, csv_factory, ab_schema):
        with pytest.raises(FileNotFoundError):
            load_csv(tmp_path / "nope.csv", ab_schema)
        with pytest.raises(DataError, match="no rows"):
            load_csv(csv_factory(["a", "b", "target"], []), ab_schema)

    def test_delimiter_and_groups(self, tmp_path):
        schema = FeatureSchema(("a",), "multilabel", ("l1", "l2"), subject="sid")
        path = tmp_path / "d.tsv"
        path.write_text("sid;a;l1;l2\ns1;0.5;1;0\ns2;1.5;0;1\n")
        ds = load_csv(path, schema, delimiter=";")
        np.testing.assert_array_equal(ds.targets, [[1, 0], [0, 1]])
        assert ds.groups["subject"].tolist() == ["s1", "s2"]

    def test_multilabel_targets_must_be_indicators(self, csv_factory):
        schema = FeatureSchema(("a",), "multilabel", ("l1",))
        with pytest.raises(DataError, match="0/1"):
            load_csv(csv_factory(["a", "l1"], [[1, 0.5]]), schema)

    def test_write_read_round_trip(self, tmp_path):
        schema = FeatureSchema(("a", "b"), "regression", ("y",), subject="sid")
        ds = Dataset(schema, [[0.1, 1e-17], [np.pi, -2.5]], [1.0 / 3.0, 2.0], {"subject": ["1", "2"]})
        write_csv(ds, tmp_path / "o.csv")
        back = load_csv(tmp_path / "o.csv", schema)
        np.testing.assert_array_equal(back.rows, ds.rows)
        np.testing.assert_array_equal(back.targets, ds.targets)
        assert back.groups["subject"].tolist() == ["1", "2"]


class TestDataset:
    def test_immutable(self):
        ds = Dataset(FeatureSchema(("a",)), [[1.0]], [0.0])
        with pytest.raises(ValueError):
            ds.rows[0, 0] = 2.0

    def test_rejects_non_finite_and_bad_width(self):
        with pytest.raises(DataError):
            Dataset(FeatureSchema(("a",)), [[np.inf]], [0.0])
        with pytest.raises(DataError):
            Dataset(FeatureSchema(("a",)), [[1.0, 2.0]], [0.0])

    def test_select_group_partitions(self):
        ds = Dataset(FeatureSchema(("a",)), np.arange(6.0)[:, None], np.zeros(6), {"subject": list("aabbab")})
        a, b = ds.select_group({"subject": "a"}), ds.select_group({"subject": "b"})
        assert set(a.index) & set(b.index) == set()
        assert sorted([*a.index, *b.index]) == list(range(6))
        with pytest.raises(DataError):
            ds.select_group({"activity": "1"})


class TestSplit:
    def _ds(self, n=10):
        return Dataset(FeatureSchema(("a",)), np.arange(n, dtype=float)[:, None], np.zeros(n))

    def test_cardinality_and_reproducible(self):
        tr, te = split(self._ds(), SplitConfig(0.8, seed=7))
        tr2, te2 = split(self._ds(), SplitConfig(0.8, seed=7))
        assert (len(tr), len(te)) == (8, 2)
        np.testing.assert_array_equal(tr.index, tr2.index)
        np.testing.assert_array_equal(te.index, te2.index)
        assert sorted([*tr.index, *te.index]) == list(range(10))

    def test_no_shuffle_keeps_file_order(self):
        tr, te = split(self._ds(), SplitConfig(0.8, shuffle=False))
        np.testing.assert_array_equal(tr.index, np.arange(8))
        np.testing.assert_array_equal(te.index, [8, 9])

    def test_row_identity_survives(self):
        tr, _ = split(self._ds(), SplitConfig(0.8, seed=3))
        np.testing.assert_array_equal(tr.rows[:, 0], tr.index.astype(float))

    def test_rounding_and_limits(self):
        tr, te = split(self._ds(7), SplitConfig(0.5, seed=0))
        assert len(tr) == 4  # round(3.5) away from zero
        tr, te = split(self._ds(2), SplitConfig(0.99))
        assert (len(tr), len(te)) == (1, 1)
        with pytest.raises(DataError):
            split(self._ds(1))
        with pytest.raises(ValueError):
            SplitConfig(1.0)


class TestStandardize:
    def test_population_std(self):
        ds = Dataset(FeatureSchema(("a",)), [[1.0], [2.0], [3.0]], np.zeros(3))
        out, _ = standardize(ds)
        np.testing.assert_allclose(out.rows[:, 0], [-1.224744871391589, 0, 1.224744871391589], atol=1e-12)

    def test_constant_column_passes_through_with_warning(self):
        ds = Dataset(FeatureSchema(("a", "c")), [[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]], np.zeros(3))
        with pytest.warns(UserWarning, match="constant"):
            out, sc = standardize(ds)
        np.testing.assert_array_equal(out.rows[:, 1], [5.0, 5.0, 5.0])
        assert sc.constant.tolist() == [False, True]

    def test_moments_and_inverse(self, rng):
        X = rng.normal(3.0, 7.0, size=(200, 4))
        ds = Dataset(FeatureSchema(tuple("abcd")), X, np.zeros(200))
        out, sc = standardize(ds)
        np.testing.assert_allclose(out.rows.mean(axis=0), 0, atol=1e-9)
        np.testing.assert_allclose(out.rows.std(axis=0), 1, atol=1e-9)
        np.testing.assert_allclose(sc.inverse(out.rows), X, atol=1e-12)
        again = Scaler.from_dict(json.loads(json.dumps(sc.to_dict())))
        np.testing.assert_array_equal(again.transform(X), out.rows)


class TestPredictors:
    def test_linear_and_function(self):
        lin = LinearPredictor([2.0, -1.0], 0.5)
        np.testing.assert_array_equal(lin.predict(np.array([[1.0, 1.0]])), [[1.5]])
        f = FunctionPredictor(lambda X: np.stack([X.sum(1), X.prod(1)], 1), 2)
        assert f.predict(np.ones((3, 2))).shape == (3, 2)

    def test_scaled_predictor_works_in_raw_units(self):
        xs = Scaler(np.array([1.0]), np.array([2.0]), np.array([False]))
        ys = Scaler(np.array([10.0]), np.array([3.0]), np.array([False]))
        m = ScaledPredictor(LinearPredictor([1.0]), xs, ys)
        # x=5 -> z=2 -> inner 2 -> 10 + 3*2
        np.testing.assert_array_equal(m.predict([[5.0]]), [[16.0]])

    def test_evaluate_is_worker_count_independent(self, rng):
        X = rng.normal(size=(20000, 3))
        f = FunctionPredictor(lambda A: np.sin(A) @ np.array([[1.0], [2.0], [3.0]]), 1)
        np.testing.assert_array_equal(evaluate(f, X, n_jobs=1), evaluate(f, X, n_jobs=4))

    def test_background_subsample(self, rng):
        X = rng.normal(size=(300, 2))
        Z = background_rows(X, 128, seed=1)
        assert Z.shape == (128, 2)
        np.testing.assert_array_equal(Z, background_rows(X, 128, seed=1))
        assert background_rows(X, None).shape == (300, 2)
        with pytest.raises(DataError):
            background_rows(np.zeros((0, 2)))


class TestExplanation:
    def _ex(self, method="exact", **kw):
        return Explanation([1.0], [[0.5], [0.25]], ("a", "b"), method, [1.75], **kw)

    def test_efficiency(self):
        ex = self._ex()
        assert ex.satisfies_efficiency()
        np.testing.assert_allclose(ex.efficiency_residual(), [0.0])
        bad = Explanation([1.0], [[0.5], [0.3]], ("a", "b"), "kernel", [1.75])
        assert not bad.satisfies_efficiency()

    def test_mc_tolerance_uses_stderr(self):
        ex = self._ex("mc", diagnostics={"stderr": np.array([[0.01], [0.02]])})
        assert ex.tolerance() == pytest.approx(0.12)
        assert self._ex("attention").tolerance() is None

    def test_shape_checks(self):
        with pytest.raises(ValueError):
            Explanation([0.0], [[1.0]], ("a", "b"), "exact")
        with pytest.raises(ValueError):
            Explanation([0.0], [[1.0]], ("a",), "lime")

    def test_dict_round_trip(self):
        ex = self._ex("mc", diagnostics={"stderr": np.array([[0.1], [0.2]]), "seed": 3})
        back = Explanation.from_dict(json.loads(json.dumps(ex.to_dict())))
        np.testing.assert_array_equal(back.phi, ex.phi)
        assert back.diagnostics["seed"] == 3
