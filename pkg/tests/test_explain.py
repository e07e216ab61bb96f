import json
import math
import re

import numpy as np
import pytest

from attribkit.core import DataError, Dataset, Explanation, FeatureSchema, LinearPredictor
from attribkit.explain import (
    NEGATIVE_COLOR,
    POSITIVE_COLOR,
    ForceDecomposition,
    GlobalImportance,
    GroupExplanation,
    ReportFormatError,
    global_importance,
    group_explanations,
    importance_from_matrix,
    local_force,
    make_estimator,
    merge_feature_groups,
    read_report,
    render_html,
    render_svg,
    write_report,
)
from attribkit.nnet import AttentionNet, AttentionNetSpec, extract_attention

NAMES = ("a", "b", "c")


def _expl(phi, base=0.0, method="exact", pred=None, **diag):
    phi = np.asarray(phi, dtype=float)
    if pred is None:
        pred = base + phi.sum(axis=0)
    return Explanation(np.atleast_1d(base), phi, NAMES[: phi.shape[0]], method, np.atleast_1d(pred), diag)


class TestGlobalImportance:
    def test_mean_absolute(self):
        g = global_importance([_expl([2.0, 1.0]), _expl([-2.0, 3.0])])
        np.testing.assert_array_equal(g.importance, [2.0, 2.0])
        assert g.order == (0, 1) and g.n_instances == 2

    def test_rank_invariant_to_positive_scaling(self, rng):
        phi = rng.normal(size=(20, 3))
        a = importance_from_matrix(phi, NAMES, "kernel")
        b = importance_from_matrix(phi * 7.5, NAMES, "kernel")
        assert a.order == b.order
        np.testing.assert_allclose(b.importance, 7.5 * a.importance)

    def test_ties_break_by_index(self):
        g = importance_from_matrix(np.array([[1.0, 3.0, 3.0]]), NAMES, "exact")
        assert g.order == (1, 2, 0)
        assert g.top(2) == (1, 2)
        assert g.ranked()[0] == ("b", 3.0)

    def test_rejects_mixed_inputs(self):
        with pytest.raises(ValueError):
            global_importance([_expl([1.0, 2.0]), _expl([1.0, 2.0], method="kernel")])
        with pytest.raises(ValueError):
            global_importance([_expl([1.0, 2.0]), _expl([1.0, 2.0, 3.0])])
        with pytest.raises(ValueError):
            global_importance([])

    def test_output_index(self):
        phi = np.array([[1.0, -5.0], [2.0, 0.5]])
        g = global_importance([_expl(phi, base=[0.0, 0.0])], output_index=1)
        assert g.order == (0, 1) and g.output_index == 1
        with pytest.raises(ValueError):
            global_importance([_expl(phi, base=[0.0, 0.0])], output_index=2)


class TestLocalForce:
    def test_example(self):
        fd = local_force(_expl([1.0, -0.5], base=10.0))
        assert fd.base_value + sum(fd.forces) == 10.5 == fd.prediction
        assert fd.positive == (0,) and fd.negative == (1,)

    def test_zero_forces_on_neither_side(self):
        fd = local_force(_expl([0.0, 2.0, -1.0]))
        assert fd.positive == (1,) and fd.negative == (2,)

    def test_sides_sorted_by_magnitude(self):
        fd = local_force(_expl([0.5, 3.0, 1.0]))
        assert fd.positive == (1, 2, 0)

    def test_reconstruction_enforced(self):
        with pytest.raises(ValueError, match="misses"):
            local_force(_expl([1.0, 1.0], pred=[2.1]))

    def test_mc_tolerance_from_stderr(self):
        fd = local_force(_expl([1.0, 1.0], method="mc", pred=[2.05], stderr=np.array([[0.01], [0.01]])))
        assert fd.tolerance == pytest.approx(0.08)
        np.testing.assert_array_equal(fd.diagnostics["stderr"], [0.01, 0.01])

    def test_attention_refused(self):
        with pytest.raises(ValueError):
            local_force(_expl([0.5, 0.5], method="attention"))

    def test_linear_model_exact_force(self, rng):
        w = np.array([1.0, -2.0, 0.5])
        Z = rng.normal(size=(30, 3))
        x = np.array([0.3, 0.1, -1.0])
        est = make_estimator("exact", LinearPredictor(w, 1.0), Z, background_cap=None)
        fd = local_force(est(x))
        np.testing.assert_allclose(fd.forces, w * (x - Z.mean(axis=0)), atol=1e-12)
        assert abs(fd.residual) < 1e-12


@pytest.fixture
def grouped():
    rows = np.arange(24, dtype=float).reshape(8, 3) / 10
    schema = FeatureSchema(NAMES, "regression", ("y",), subject="subject", activity="activity")
    groups = {
        "subject": np.array(["1", "1", "2", "1", "2", "2", "1", "3"]),
        "activity": np.array(["walk", "run", "walk", "walk", "run", "walk", "walk", "run"]),
    }
    return Dataset(schema, rows, np.zeros(8), groups, np.array([10, 11, 12, 13, 14, 15, 16, 17]))


class TestGroups:
    def test_members_and_summary(self, grouped):
        model = LinearPredictor(np.array([1.0, 0.0, -1.0]), 0.0)
        est = make_estimator("exact", model, grouped.rows, background_cap=None)
        ge = group_explanations(grouped, {"subject": "1", "activity": "walk"}, est)
        assert ge.instances == (10, 13, 16)
        np.testing.assert_array_equal(ge.summary()["mean"], ge.forces.mean(axis=0))
        assert np.all(ge.summary()["min"] <= ge.summary()["max"])

    def test_limit_takes_first_rows(self, grouped):
        est = make_estimator("exact", LinearPredictor(np.ones(3), 0.0), grouped.rows, background_cap=None)
        assert group_explanations(grouped, {"subject": "1"}, est, limit=2).instances == (10, 11)

    def test_disjoint_groups(self, grouped):
        est = make_estimator("exact", LinearPredictor(np.ones(3), 0.0), grouped.rows, background_cap=None)
        a = set(group_explanations(grouped, {"subject": "1"}, est).instances)
        b = set(group_explanations(grouped, {"subject": "2"}, est).instances)
        assert not a & b and len(a | b) == 7

    def test_empty_group(self, grouped):
        est = make_estimator("exact", LinearPredictor(np.ones(3), 0.0), grouped.rows)
        with pytest.raises(DataError):
            group_explanations(grouped, {"subject": "9"}, est)
        with pytest.raises(DataError):
            group_explanations(grouped, {"session": "1"}, est)

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            make_estimator("lime", None, np.zeros((1, 1)))


class TestMerge:
    def test_example(self):
        ex = merge_feature_groups(_expl([1.0, -1.0, 2.0]), {"a": "g1", "b": "g1", "c": "g2"})
        np.testing.assert_array_equal(ex.phi[:, 0], [0.0, 2.0])
        np.testing.assert_array_equal(ex.diagnostics["magnitude"][:, 0], [2.0, 2.0])
        assert ex.feature_names == ("g1", "g2")
        assert ex.diagnostics["members"] == {"g1": ["a", "b"], "g2": ["c"]}

    def test_singletons_are_identity(self, rng):
        base = _expl(rng.normal(size=3), base=0.3)
        ex = merge_feature_groups(base, {n: n for n in NAMES})
        np.testing.assert_array_equal(ex.phi, base.phi)

    def test_conserves_total_exactly_on_dyadic_values(self, rng):
        phi = rng.integers(-64, 64, size=3) / 8.0
        base = _expl(phi, base=0.25)
        ex = merge_feature_groups(base, {"a": "g", "b": "h", "c": "g"})
        assert ex.base_value[0] + ex.phi.sum() == base.prediction[0]

    def test_totals_round_alike(self, rng):
        names = tuple("abcdef")
        grouping = dict(zip(names, "xxyyzz"))
        for _ in range(2000):
            phi = rng.normal(size=6) * 10.0 ** rng.uniform(-3, 3, size=6)
            ex = merge_feature_groups(Explanation([0.0], phi, names, "kernel", [math.fsum(phi)]), grouping)
            sums = np.array([math.fsum(phi[[0, 1]]), math.fsum(phi[[2, 3]]), math.fsum(phi[[4, 5]])])
            assert np.max(np.abs(ex.phi[:, 0] - sums)) <= np.sum(np.spacing(np.abs(sums)))
            if "conservation_residual" not in ex.diagnostics:
                assert math.fsum(ex.phi[:, 0]) == math.fsum(phi)

    def test_unattainable_total_is_reported(self):
        # no two floats near +-1e16 sum to 0.5
        ex = merge_feature_groups(_expl([1e16, 0.5, -1e16]), {"a": "g", "b": "g", "c": "h"})
        np.testing.assert_array_equal(ex.phi[:, 0], [1e16, -1e16])
        assert ex.diagnostics["conservation_residual"] == [-0.5]

    def test_order_by_first_member(self):
        ex = merge_feature_groups(_expl([1.0, 2.0, 3.0]), {"a": "z", "b": "y", "c": "z"})
        assert ex.feature_names == ("z", "y")

    def test_stderr_in_quadrature(self):
        ex = merge_feature_groups(
            _expl([1.0, 2.0, 3.0], method="mc", stderr=np.array([[3.0], [4.0], [1.0]])), {"a": "g", "b": "g", "c": "h"}
        )
        np.testing.assert_allclose(ex.diagnostics["stderr"][:, 0], [5.0, 1.0])

    def test_missing_feature(self):
        with pytest.raises(ValueError, match="missing"):
            merge_feature_groups(_expl([1.0, 2.0]), {"a": "g"})


def _artifacts(rng):
    gi = importance_from_matrix(rng.normal(size=(5, 3)), NAMES, "kernel")
    fd = local_force(_expl([0.5, -0.25, 0.0], base=1.0), instance=4, feature_values=[1.0, 2.0, 3.0])
    ge = GroupExplanation({"subject": "1"}, (fd, local_force(_expl([-1.0, 2.0, 0.5]), instance=7)), NAMES, "exact")
    _, summary = extract_attention(AttentionNet(AttentionNetSpec(3, 1), seed=0), rng.normal(size=(4, 3)), NAMES)
    return [gi, fd, ge, summary]


class TestReports:
    def test_json_round_trip(self, rng, tmp_path):
        for art in _artifacts(rng):
            path = tmp_path / "r.json"
            write_report(art, "json", path, meta={"seed": 3})
            back, meta = read_report(path, with_meta=True)
            assert type(back) is type(art) and meta == {"seed": 3}
            assert back.to_dict() == art.to_dict()
            doc = json.loads(path.read_text())
            assert doc["schema"] == "attribkit-report" and doc["version"] == 1

    def test_force_dict_roundtrip(self):
        fd = local_force(_expl([0.5, -0.25]), instance=2)
        back = ForceDecomposition.from_dict(fd.to_dict())
        np.testing.assert_array_equal(back.forces, fd.forces)
        assert (back.positive, back.negative, back.instance) == ((0,), (1,), 2)
        g = importance_from_matrix(np.array([[1.0, 2.0]]), NAMES[:2], "exact")
        assert GlobalImportance.from_dict(g.to_dict()).order == (1, 0)

    def test_svg_bars(self, rng):
        gi, fd, ge, summary = _artifacts(rng)
        svg = render_svg(fd)
        assert svg.count("<rect") == 2
        assert svg.count('class="bar positive"') == 1 and POSITIVE_COLOR in svg
        assert svg.count('class="bar negative"') == 1 and NEGATIVE_COLOR in svg
        assert render_svg(gi).count("<rect") == 3
        assert render_svg(summary).count("<rect") == 3
        assert render_svg(ge).count("<rect") == 3

    def test_negative_bars_left_of_axis(self, rng):
        svg = render_svg(local_force(_expl([0.5, -0.25])))
        axis = float(re.search(r'<line x1="([\d.]+)"', svg).group(1))
        neg = re.search(r'class="bar negative" x="([\d.]+)" y="[\d.]+" width="([\d.]+)"', svg)
        pos = re.search(r'class="bar positive" x="([\d.]+)"', svg)
        assert float(neg.group(1)) + float(neg.group(2)) == pytest.approx(axis, abs=0.01)
        assert float(pos.group(1)) == pytest.approx(axis)

    def test_html(self, rng, tmp_path):
        gi, fd, ge, summary = _artifacts(rng)
        page = render_html(ge, meta={"method": "exact"})
        assert page.startswith("<!DOCTYPE html>") and "Members by prediction" in page
        assert "<svg" in page and "&quot;method&quot;" in page
        assert "mean weight alpha" in render_html(summary)
        write_report(gi, "html", tmp_path / "g.html")
        assert "<table>" in (tmp_path / "g.html").read_text()

    def test_unknown_format(self, rng, tmp_path):
        with pytest.raises(ReportFormatError):
            write_report(_artifacts(rng)[0], "pdf", tmp_path / "x.pdf")
        assert not (tmp_path / "x.pdf").exists()

    def test_read_rejects_foreign(self, tmp_path):
        (tmp_path / "x.json").write_text('{"schema": "other"}')
        with pytest.raises(ValueError):
            read_report(tmp_path / "x.json")

    def test_not_reportable(self):
        with pytest.raises(TypeError):
            render_svg(object())
