"""Grids, cross-validation, and the accuracy-shortlist selection rule."""
from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import fairerm as fe
from conftest import random_dataset


def _row(c, acc, deo, gamma=None, epsilon=0.0):
    return {
        "params": {"C": c, "gamma": gamma, "epsilon": epsilon},
        "mean_accuracy": acc,
        "accuracy_std": 0.0,
        "mean_deo": deo,
        "deo_std": 0.0,
        "deo_defined_folds": 10,
    }


class TestGrid:
    def test_default_c_axis(self):
        grid = fe.Grid()
        cs = np.array(grid.c_values)
        assert len(cs) == 30
        assert cs[0] == pytest.approx(1e-4, rel=1e-12)
        assert cs[-1] == pytest.approx(1e4, rel=1e-12)
        ratios = cs[1:] / cs[:-1]
        np.testing.assert_allclose(ratios, ratios[0], rtol=1e-9)
        assert grid.gamma_values == ()
        assert grid.epsilon_values == (0.0,)

    def test_default_rbf_gammas(self):
        assert fe.Grid.default_rbf().gamma_values == (0.001, 0.01, 0.1, 1.0)

    def test_points_cover_product(self):
        grid = fe.Grid(c_values=(1.0, 2.0), gamma_values=(0.1,),
                       epsilon_values=(0.0, 0.1))
        points = grid.points()
        assert len(points) == 4
        assert all(p.gamma == 0.1 for p in points)

    def test_linear_grid_uses_none_gamma(self):
        points = fe.Grid(c_values=(1.0,)).points()
        assert len(points) == 1 and points[0].gamma is None

    def test_rejects_empty_c_axis(self):
        with pytest.raises(ValueError):
            fe.Grid(c_values=())

    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            fe.Grid(c_values=(0.0,))
        with pytest.raises(ValueError):
            fe.Grid(c_values=(1.0,), epsilon_values=(-0.1,))


class TestSelectNvp:
    def test_singleton(self):
        row = _row(1.0, 0.8, 0.2)
        assert fe.select_nvp([row]) is row

    def test_ninety_percent_shortlist_excludes(self):
        rows = [_row(1.0, 0.80, 0.20), _row(2.0, 0.70, 0.01)]
        assert fe.select_nvp(rows) is rows[0]

    def test_min_deo_wins_inside_shortlist(self):
        rows = [_row(1.0, 0.80, 0.20), _row(2.0, 0.75, 0.01)]
        assert fe.select_nvp(rows) is rows[1]

    def test_row_order_invariance(self):
        rows = [_row(1.0, 0.80, 0.20), _row(2.0, 0.75, 0.01),
                _row(0.5, 0.79, 0.05)]
        chosen = fe.select_nvp(rows)
        for shift in range(1, len(rows)):
            rotated = rows[shift:] + rows[:shift]
            assert fe.select_nvp(rotated) is chosen

    def test_ties_resolved_by_smallest_c_then_gamma_then_epsilon(self):
        rows = [_row(2.0, 0.8, 0.1), _row(1.0, 0.8, 0.1)]
        assert fe.select_nvp(rows)["params"]["C"] == 1.0
        rows = [_row(1.0, 0.8, 0.1, gamma=0.1), _row(1.0, 0.8, 0.1, gamma=0.01)]
        assert fe.select_nvp(rows)["params"]["gamma"] == 0.01
        rows = [_row(1.0, 0.8, 0.1, epsilon=0.2), _row(1.0, 0.8, 0.1, epsilon=0.1)]
        assert fe.select_nvp(rows)["params"]["epsilon"] == 0.1

    def test_undefined_deo_sorts_last(self):
        rows = [_row(1.0, 0.8, None), _row(2.0, 0.8, 0.4)]
        assert fe.select_nvp(rows)["params"]["C"] == 2.0

    def test_empty_rows_rejected(self):
        with pytest.raises(ValueError):
            fe.select_nvp([])

    @given(st.lists(
        st.tuples(st.floats(0.01, 100), st.floats(0.3, 1.0), st.floats(0, 1)),
        min_size=1, max_size=12))
    @settings(max_examples=60)
    def test_selected_is_always_inside_shortlist(self, raw):
        rows = [_row(c, acc, deo) for c, acc, deo in raw]
        chosen = fe.select_nvp(rows)
        best = max(r["mean_accuracy"] for r in rows)
        assert chosen["mean_accuracy"] >= 0.9 * best

    def test_naive_ratio_prefers_accuracy(self):
        rows = [_row(1.0, 0.80, 0.20), _row(2.0, 0.75, 0.01)]
        naive = fe.select_nvp(rows, threshold_ratio=1.0)
        nvp = fe.select_nvp(rows, threshold_ratio=0.9)
        assert naive["mean_accuracy"] >= nvp["mean_accuracy"]


class TestFitPointAndEvaluate:
    @pytest.mark.parametrize("family", fe.FAMILIES)
    def test_families_train_and_score(self, toy_splits, family):
        train, test = toy_splits
        fitted = fe.fit_point(family, train, fe.GridPoint(1.0, None, 0.0))
        rep = fe.evaluate(fitted, test)
        assert 0.0 <= rep["accuracy"] <= 1.0
        assert rep["deo"] is not None
        assert fitted.family == family

    def test_rbf_point(self, toy_splits):
        train, test = toy_splits
        fitted = fe.fit_point("fair-svm", train, fe.GridPoint(1.0, 0.1, 0.0))
        rep = fe.evaluate(fitted, test)
        assert 0.0 <= rep["accuracy"] <= 1.0

    @pytest.mark.parametrize("family", ["lasso", "fair-lasso"])
    def test_lasso_families_reject_gamma(self, toy_splits, family):
        train, _ = toy_splits
        with pytest.raises(ValueError):
            fe.fit_point(family, train, fe.GridPoint(1.0, 0.1, 0.0))

    def test_unknown_family(self, toy_splits):
        with pytest.raises(ValueError):
            fe.fit_point("forest", toy_splits[0], fe.GridPoint(1.0, None, 0.0))

    def test_perfect_classifier_report(self, rng):
        data = random_dataset(rng, n=16, d=2)

        class Oracle:
            converged = True

            @staticmethod
            def decision_values(x):
                return data.labels * 2.0

        rep = fe.evaluate(Oracle(), data)
        assert rep["accuracy"] == 1.0
        assert rep["deo"] == 0.0

    def test_constant_zero_classifier_report(self, rng):
        # zero scores satisfy y * f > 0 nowhere, so accuracy is zero and
        # every group's positive rate is zero
        data = random_dataset(rng, n=20, d=2)
        model = fe.LinearModel(np.zeros(2))
        rep = fe.evaluate(fe.FittedModel("svm", fe.GridPoint(1.0, None, 0.0),
                                         model), data)
        assert rep["accuracy"] == 0.0
        assert rep["deo"] == 0.0
        assert all(v == 0.0 for v in rep["tpr_by_group"].values())

    def test_group_without_test_positives_reports_none(self, rng):
        data = random_dataset(rng, n=20, d=2)
        test = fe.Dataset(np.array([[0.5, 0.5], [1.0, -1.0]]),
                          np.array([1.0, -1.0]),
                          np.array([0, 1], np.int64), ("a", "b"))
        fitted = fe.fit_point("svm", data, fe.GridPoint(1.0, None, 0.0))
        rep = fe.evaluate(fitted, test)
        assert rep["deo"] is None
        assert rep["deo_defined"] is False
        assert rep["tpr_by_group"]["b"] is None
        assert rep["tpr_by_group"]["a"] is not None

    def test_fitted_model_json_round_trip(self, toy_splits, rng):
        train, _ = toy_splits
        held = rng.normal(size=(8, train.dim))
        for family in fe.FAMILIES:
            fitted = fe.fit_point(family, train, fe.GridPoint(0.5, None, 0.0))
            doc = json.loads(json.dumps(fitted.to_json_dict()))
            back = fe.FittedModel.from_json_dict(doc)
            np.testing.assert_allclose(back.decision_values(held),
                                       fitted.decision_values(held),
                                       atol=1e-12)


class TestCrossValidate:
    def _small(self, rng, n=40):
        return random_dataset(rng, n=n, d=2)

    def test_singleton_grid_selected(self, rng):
        data = self._small(rng)
        plan = fe.make_folds(data.n, 4, 3)
        rep = fe.cross_validate(data, fe.Grid(c_values=(1.0,)), "svm", plan)
        assert rep.selected_point.c == 1.0
        assert len(rep.rows) == 1

    def test_deterministic_replay(self, rng):
        data = self._small(rng)
        plan = fe.make_folds(data.n, 4, 3)
        grid = fe.Grid(c_values=(0.5, 1.0, 2.0))
        a = fe.cross_validate(data, grid, "fair-svm", plan)
        b = fe.cross_validate(data, grid, "fair-svm", plan)
        assert json.dumps(a.to_json_dict()) == json.dumps(b.to_json_dict())
        assert a.to_csv_text() == b.to_csv_text()

    def test_workers_do_not_change_results(self, rng):
        data = self._small(rng)
        plan = fe.make_folds(data.n, 4, 3)
        grid = fe.Grid(c_values=(0.5, 2.0))
        seq = fe.cross_validate(data, grid, "svm", plan, workers=1)
        par = fe.cross_validate(data, grid, "svm", plan, workers=4)
        assert json.dumps(seq.to_json_dict()) == json.dumps(par.to_json_dict())

    def test_selected_row_is_marked(self, rng):
        data = self._small(rng)
        plan = fe.make_folds(data.n, 4, 3)
        rep = fe.cross_validate(data, fe.Grid(c_values=(0.5, 1.0)), "svm", plan)
        assert rep.rows[rep.selected_index] is rep.selected
        assert rep.selection["threshold"] == pytest.approx(
            0.9 * rep.selection["best_mean_accuracy"])
        assert rep.selected_index in rep.selection["shortlist"]

    def test_undefined_deo_folds_are_averaged_over_defined(self):
        rng = np.random.default_rng(0)
        features = rng.normal(size=(24, 2))
        labels = np.where(rng.random(24) < 0.5, 1.0, -1.0)
        groups = np.zeros(24, np.int64)
        # group b exists but has exactly one positive member
        labels[0] = 1.0
        groups[0] = 1
        groups[1] = 1
        labels[1] = -1.0
        labels[2] = 1.0  # group a keeps positives
        data = fe.Dataset(features, labels, groups, ("a", "b"))
        plan = fe.make_folds(24, 4, 1)
        rep = fe.cross_validate(data, fe.Grid(c_values=(1.0,)), "svm", plan)
        row = rep.rows[0]
        assert row["deo_defined_folds"] == 1
        assert row["mean_deo"] is not None

    def test_plan_must_match_data(self, rng):
        data = self._small(rng)
        plan = fe.make_folds(data.n + 1, 4, 3)
        with pytest.raises(ValueError):
            fe.cross_validate(data, fe.Grid(c_values=(1.0,)), "svm", plan)

    def test_standardize_refits_per_fold(self, rng):
        data = self._small(rng)
        plan = fe.make_folds(data.n, 4, 3)
        raw = fe.cross_validate(data, fe.Grid(c_values=(1.0,)), "svm", plan,
                                standardize=False)
        scaled = fe.cross_validate(data, fe.Grid(c_values=(1.0,)), "svm", plan,
                                   standardize=True)
        assert (raw.rows[0]["mean_accuracy"] != scaled.rows[0]["mean_accuracy"]
                or raw.rows[0]["mean_deo"] != scaled.rows[0]["mean_deo"])

    def test_csv_text_shape(self, rng):
        data = self._small(rng)
        plan = fe.make_folds(data.n, 4, 3)
        grid = fe.Grid(c_values=(0.5, 1.0, 2.0))
        rep = fe.cross_validate(data, grid, "svm", plan)
        lines = rep.to_csv_text().strip().splitlines()
        assert lines[0].startswith("C,")
        assert len(lines) == 1 + 3
        assert sum(line.endswith(",1") for line in lines[1:]) == 1
