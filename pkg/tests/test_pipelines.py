import numpy as np
import pytest

from src.config import RunConfig
from src.features import smote
from src.features.tables import POINT_FEATURES
from src.pipeline.aggregated import run_aggregated
from src.pipeline.point import POINT_MODELS, run_point
from src.pipeline.synthetic import SyntheticSpec, generate_aggregated_table, generate_point_table


def quick_config(**sections) -> RunConfig:
    return RunConfig.model_validate({
        "seed": 0,
        "cv": {"aggregated_folds": 5, "point_folds": 5},
        "gbm": {"n_trees": 80, "min_samples_leaf": 5},
        "rf": {"n_trees": 30, "max_depth": 8},
        **sections,
    })


def test_aggregated_recovers_noise_free_signal():
    spec = SyntheticSpec(spatial_amplitude=0.0, noise_sd=0.0, seed=3)
    cfg = quick_config(gbm={"n_trees": 300, "min_samples_leaf": 5})
    fit = run_aggregated(generate_aggregated_table(spec), cfg, stage2=False)
    assert fit.r2_stage1 > 0.9
    assert fit.stage2 is None
    assert fit.r2_incremental == 0.0
    assert fit.importance.top() == "complexity"


def test_spatial_field_adds_incremental_r2():
    spec = SyntheticSpec(grid_rows=16, grid_cols=16, spatial_amplitude=1.5, noise_sd=0.1, seed=4)
    fit = run_aggregated(generate_aggregated_table(spec), quick_config())
    assert fit.r2_incremental > 0.05
    assert fit.r2_combined == pytest.approx(fit.r2_stage1 + fit.r2_incremental)
    assert len(fit.gp_kernels) == 5


def test_stage2_does_not_touch_stage1():
    table = generate_aggregated_table(SyntheticSpec(grid_rows=12, grid_cols=12, seed=6))
    with_gp = run_aggregated(table, quick_config(), stage2=True)
    without_gp = run_aggregated(table, quick_config(), stage2=False)
    assert np.array_equal(with_gp.oof_stage1, without_gp.oof_stage1)
    assert with_gp.r2_stage1 == without_gp.r2_stage1


def test_aggregated_same_for_any_thread_count():
    table = generate_aggregated_table(SyntheticSpec(grid_rows=10, grid_cols=10, seed=8))
    serial = run_aggregated(table, quick_config(threads=1))
    parallel = run_aggregated(table, quick_config(threads=2))
    assert np.array_equal(serial.oof_stage1 + serial.oof_stage2, parallel.oof_stage1 + parallel.oof_stage2)


def test_aggregated_needs_enough_rows():
    table = generate_aggregated_table(SyntheticSpec(grid_rows=3, grid_cols=3))
    with pytest.raises(ValueError, match="insufficient rows"):
        run_aggregated(table, RunConfig())


def test_aggregated_names_missing_column():
    table = generate_aggregated_table(SyntheticSpec(grid_rows=10, grid_cols=10)).drop(columns=["complexity"])
    with pytest.raises(ValueError, match="missing column 'complexity'"):
        run_aggregated(table, quick_config())


def test_aggregated_prediction_uses_both_stages():
    table = generate_aggregated_table(SyntheticSpec(grid_rows=10, grid_cols=10, seed=2))
    fit = run_aggregated(table, quick_config())
    bundle = fit.bundle()
    assert bundle.required_columns()[-2:] == ["centroid_x", "centroid_y"]
    assert np.allclose(bundle.predict(table), fit.predict(
        table[bundle.feature_names].to_numpy(), table[["centroid_x", "centroid_y"]].to_numpy()
    ))


def test_smote_only_sees_training_minority_rows(monkeypatch, small_spec):
    table = generate_point_table(small_spec)
    X = table[POINT_FEATURES].to_numpy(dtype=float)
    y = table["label"].to_numpy(dtype=int)
    seen = []
    original = smote.smote_oversample

    def recording(X_minority, cfg, n_needed):
        seen.append(np.array(X_minority, copy=True))
        return original(X_minority, cfg, n_needed)

    monkeypatch.setattr(smote, "smote_oversample", recording)
    report = run_point(table, quick_config(), models=["gbm_smote"], refit=False)

    plan = report.plan
    expected = [X[train][y[train] == 1] for _, train, _ in plan.splits()]
    assert len(seen) == plan.k
    for rows in seen:
        assert any(rows.shape == e.shape and np.array_equal(rows, e) for e in expected)
    # minority rows of held-out folds never reach the oversampler
    assert all(len(rows) < int(y.sum()) for rows in seen)
    assert report.train_positive_share["gbm_smote"] == pytest.approx(0.5, abs=0.01)


def test_leaky_smote_oversamples_before_splitting(small_spec):
    table = generate_point_table(small_spec)
    report = run_point(table, quick_config(smote={"leaky": True}), models=["gbm_smote"], refit=False)
    assert report.leaky_smote
    assert report.plan.n > len(table)
    assert report.result("gbm_smote").smote_enabled


def test_point_rejects_single_class(small_spec):
    table = generate_point_table(small_spec)
    table["label"] = 0
    with pytest.raises(ValueError, match="single class"):
        run_point(table, quick_config())


def test_point_rejects_unknown_model(small_spec):
    with pytest.raises(ValueError, match="unknown point model"):
        run_point(generate_point_table(small_spec), quick_config(), models=["svm"])


def test_point_report_shape(small_spec):
    report = run_point(generate_point_table(small_spec), quick_config(), models=["gbm", "logreg"])
    data = report.to_report()
    assert [m["name"] for m in data["models"]] == ["gbm", "logreg"]
    assert data["folds"]["stratified"] is True
    assert report.final_model is not None
    assert report.bundle().feature_names == list(POINT_FEATURES)


def test_no_signal_gives_chance_auc():
    table = generate_point_table(SyntheticSpec(n_points=3000, point_signal=0.0, seed=11))
    report = run_point(table, quick_config(), models=["logreg"], refit=False)
    assert 0.45 <= report.result("logreg").auc <= 0.55


@pytest.mark.slow
def test_boosting_beats_linear_on_interaction_boundary():
    table = generate_point_table(SyntheticSpec(n_points=4000, seed=12))
    cfg = quick_config(gbm={"n_trees": 200, "min_samples_leaf": 10})
    report = run_point(table, cfg, models=POINT_MODELS)
    auc = {r.name: r.auc for r in report.results}
    assert auc["gbm"] > auc["logreg"] + 0.05
    assert auc["rf"] > auc["logreg"]
    assert abs(auc["gbm_smote"] - auc["gbm"]) < 0.05


def test_refit_follows_requested_boosted_model(monkeypatch, small_spec):
    calls = []
    original = smote.smote_balance

    def recording(X, y, params):
        calls.append(len(y))
        return original(X, y, params)

    monkeypatch.setattr(smote, "smote_balance", recording)
    table = generate_point_table(small_spec)
    report = run_point(table, quick_config(), models=["logreg", "gbm"])
    assert report.final_name == "gbm"
    assert report.bundle().name == "gbm"
    assert report.to_report()["refit_model"] == "gbm"
    # neither the folds nor the refit oversample for plain gbm
    assert calls == []


def test_refit_balances_only_for_gbm_smote(small_spec):
    table = generate_point_table(small_spec)
    report = run_point(table, quick_config(), models=["gbm_smote", "gbm"])
    assert report.bundle().name == "gbm_smote"
    assert run_point(table, quick_config(), models=["rf", "logreg"]).final_model is None


@pytest.mark.slow
def test_planted_field_gain_on_a_thousand_tracts():
    spec = SyntheticSpec(grid_rows=32, grid_cols=32, seed=14)
    fit = run_aggregated(generate_aggregated_table(spec), quick_config())
    assert fit.r2_incremental > 0.05
    assert fit.r2_combined > fit.r2_stage1


@pytest.mark.slow
def test_no_spatial_field_gives_no_incremental_r2():
    spec = SyntheticSpec(grid_rows=32, grid_cols=32, spatial_amplitude=0.0, seed=14)
    fit = run_aggregated(generate_aggregated_table(spec), quick_config())
    assert abs(fit.r2_incremental) < 0.03


@pytest.mark.slow
def test_classifier_ordering_on_rare_severe_class():
    table = generate_point_table(SyntheticSpec(n_points=50_000, positive_rate=0.05, seed=21))
    cfg = quick_config(gbm={"n_trees": 200, "min_samples_leaf": 20})
    report = run_point(table, cfg, models=["gbm_smote", "gbm", "logreg"], refit=False)
    auc = {r.name: r.auc for r in report.results}
    # pooled AUC at this size moves by about 0.005 between seeds
    assert auc["gbm_smote"] >= auc["gbm"] - 0.01
    assert auc["gbm"] > auc["logreg"]
    assert auc["gbm_smote"] - auc["logreg"] >= 0.05
