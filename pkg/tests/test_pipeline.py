"""
Testes do EEATC, dos modelos de fase única e da varredura.
"""

from dataclasses import replace

import numpy as np
import pytest

from eeatc.cli import emit_report, parse_report
from eeatc.dataset import FeatureSpec, assemble_features, normalize_apply, normalize_fit, train_test_split
from eeatc.errors import BadConfig, DataError
from eeatc.metrics import r2, rmse
from eeatc.pipeline import (
    EeatcConfig,
    EeatcModel,
    EvalRun,
    SinglePhaseModel,
    SweepConfig,
    aggregate_runs,
    eeatc_predict,
    eeatc_train,
    evaluate_records,
    feature_sweep,
    load_model,
    predict_records,
    prepare_training_set,
    save_model,
    single_phase_train,
)
from eeatc.regress import ForestParams, forest_fit, forest_predict, mlr_fit
from eeatc.synth import HETEROSCEDASTIC_SCENARIO, SynthConfig, generate


PHI = ("s", "t", "rh")
PHI_LAG = ("s", "t", "rh", "s_lag1")


def _config(seed=5, n_trees=25):
    return EeatcConfig(forest=ForestParams(n_trees=n_trees), seed=seed)


def _split(records, features=PHI, seed=0):
    ds = assemble_features(records, FeatureSpec(features))
    train, test = train_test_split(ds, 0.75, seed=seed)
    norm = normalize_fit(train)
    return normalize_apply(train, norm), normalize_apply(test, norm)


def test_zero_first_phase_error_degenerates_to_single_phase(linear_records):
    train = assemble_features(linear_records, FeatureSpec(PHI))
    # árvores completas sem bootstrap reproduzem o treino exatamente
    full_trees = ForestParams(n_trees=10, min_samples_leaf=1, min_samples_split=2, bootstrap=False)
    cfg = EeatcConfig(forest=full_trees, seed=5)
    model = eeatc_train(train, cfg)

    e_hat = model.estimate_error(train.X)
    assert np.all(e_hat == 0.0)

    augmented = np.column_stack([train.X, np.zeros(train.n_rows)])
    baseline = forest_fit(augmented, train.y, cfg.forest, seed=cfg.seed)
    np.testing.assert_allclose(eeatc_predict(model, train.X), forest_predict(baseline, augmented),
                               rtol=0.0, atol=1e-9)
    assert r2(eeatc_predict(model, train), train.y) >= 0.999


def test_prediction_path_does_not_need_reference(linear_records):
    train = assemble_features(linear_records, FeatureSpec(PHI))
    model = eeatc_train(train, _config(n_trees=10))
    features_only = assemble_features(linear_records.drop(columns=["y"]), FeatureSpec(PHI), require_target=False)
    assert not features_only.has_target
    out = eeatc_predict(model, features_only)
    assert out.shape == (train.n_rows,)


def test_phase_two_has_error_column(synthetic_records):
    train, _ = _split(synthetic_records)
    model = eeatc_train(train, _config())
    assert model.phase2.n_features == len(PHI) + 1
    assert model.nanny.n_features == len(PHI)


def test_eeatc_beats_linear_baseline_on_humidity_coupled_data(synthetic_records):
    train, test = _split(synthetic_records)
    cfg = _config()
    eeatc = eeatc_train(train, cfg)
    mlr = single_phase_train(train, "mlr", cfg)
    rf = single_phase_train(train, "rf", cfg)

    r2_eeatc = r2(eeatc.predict(test.X), test.y)
    r2_mlr = r2(mlr.predict(test.X), test.y)
    r2_rf = r2(rf.predict(test.X), test.y)
    assert r2_eeatc > r2_mlr
    assert r2_rf > r2_mlr
    assert r2(eeatc.predict(train.X), train.y) >= r2(mlr.predict(train.X), train.y) - 1e-6


@pytest.mark.slow
def test_eeatc_against_single_phase_forest_over_seeds():
    scores = {"eeatc": [], "rf": [], "mlr": []}
    for seed in range(10):
        records, _ = generate(replace(HETEROSCEDASTIC_SCENARIO, seed=seed))
        train, test = _split(records, seed=seed)
        cfg = EeatcConfig(forest=ForestParams(n_trees=50), seed=seed, n_jobs=4)
        models = {
            "eeatc": eeatc_train(train, cfg),
            "rf": single_phase_train(train, "rf", cfg),
            "mlr": single_phase_train(train, "mlr", cfg),
        }
        for kind, model in models.items():
            scores[kind].append(r2(model.predict(test.X), test.y))
        assert r2(models["eeatc"].predict(train.X), train.y) >= r2(models["mlr"].predict(train.X), train.y) - 1e-6

    median = {kind: float(np.median(values)) for kind, values in scores.items()}
    assert median["eeatc"] > median["rf"] > median["mlr"]
    assert np.median(np.subtract(scores["eeatc"], scores["rf"])) >= 0.02


def test_single_phase_models(linear_records):
    train = assemble_features(linear_records, FeatureSpec(PHI))
    mlr = single_phase_train(train, "mlr")
    direct = mlr_fit(train.X, train.y)
    np.testing.assert_array_equal(mlr.regressor.coefficients, direct.coefficients)

    slr = single_phase_train(train, "slr")
    assert slr.regressor.coefficients.shape == (1,)
    assert slr.predict(train.X).shape == (train.n_rows,)

    constant = assemble_features(linear_records.assign(y=3.25), FeatureSpec(PHI))
    rf = single_phase_train(constant, "rf", _config(n_trees=5))
    assert np.all(rf.predict(constant.X) == 3.25)

    with pytest.raises(BadConfig):
        single_phase_train(train, "svm")


def test_training_requires_reference(linear_records):
    features_only = assemble_features(linear_records, FeatureSpec(PHI), require_target=False)
    with pytest.raises(DataError):
        eeatc_train(features_only)


def test_nanny_holdout(synthetic_records):
    train, test = _split(synthetic_records)
    cfg = EeatcConfig(forest=ForestParams(n_trees=15), nanny_holdout=0.3, seed=1)
    model = eeatc_train(train, cfg)
    assert r2(model.predict(test.X), test.y) > 0.0


def test_model_save_and_load_is_bit_identical(tmp_path, synthetic_records):
    train, test = _split(synthetic_records)
    for kind in ("eeatc", "mlr", "rf", "slr"):
        cfg = _config(n_trees=10)
        model = eeatc_train(train, cfg) if kind == "eeatc" else single_phase_train(train, kind, cfg)
        path = save_model(model, tmp_path / f"{kind}.json")
        restored = load_model(path)
        assert restored.kind == kind
        assert restored.spec == model.spec
        np.testing.assert_array_equal(restored.predict(test.X), model.predict(test.X))


def test_load_model_rejects_other_files(tmp_path):
    path = tmp_path / "other.json"
    path.write_text('{"format": "outro"}', encoding="utf-8")
    with pytest.raises(DataError):
        load_model(path)


def test_predict_and_evaluate_records(synthetic_records):
    spec = FeatureSpec(PHI)
    train = prepare_training_set(synthetic_records, spec)
    model = eeatc_train(train, _config(n_trees=10))

    out = predict_records(model, synthetic_records.drop(columns=["y"]))
    assert list(out.columns) == ["timestamp", "y_hat", "e_hat"]
    assert (out["e_hat"] >= 0).all()
    # previsões voltam para µg/m³
    assert abs(out["y_hat"].mean() - synthetic_records["y"].mean()) < 2.0

    normalized = evaluate_records(model, synthetic_records)
    raw = evaluate_records(model, synthetic_records, metric_space="raw")
    assert raw.r2 == pytest.approx(normalized.r2)
    assert raw.rmse == pytest.approx(normalized.rmse * model.norm.std("y"))


def _sweep_config(n_trees=15, **kwargs):
    return SweepConfig(model=EeatcConfig(forest=ForestParams(n_trees=n_trees)), **kwargs)


def test_sweep_single_cell_matches_standalone_run(synthetic_records):
    report = feature_sweep(synthetic_records, ["mlr"], [PHI], [4], _sweep_config())
    assert len(report.rows) == 1
    row = report.rows[0]
    assert row.best

    train, test = _split(synthetic_records, seed=4)
    model = single_phase_train(train, "mlr")
    assert row.r2_test == pytest.approx(r2(model.predict(test.X), test.y))
    assert row.rmse_train == pytest.approx(rmse(model.predict(train.X), train.y))


def test_sweep_prefers_meteorology_features_for_forest(synthetic_records):
    report = feature_sweep(synthetic_records, ["rf"], [("s",), PHI], [0, 1], _sweep_config(n_trees=25))
    best = report.best_rows()
    assert len(best) == 1
    assert best[0].features == PHI


def test_sweep_lag_feature_wins_on_sluggish_sensor():
    records, _ = generate(SynthConfig(n=600, seed=2, b=0.0, sigma0=0.2, sigma1=0.0, lag_alpha=0.5))
    report = feature_sweep(records, ["mlr"], [PHI, PHI_LAG], [0, 1, 2], _sweep_config())
    rows = {row.features: row for row in report.rows}
    assert rows[PHI_LAG].r2_test > rows[PHI].r2_test
    assert rows[PHI_LAG].rmse_test < rows[PHI].rmse_test
    assert rows[PHI_LAG].best


def test_sweep_report_layout_and_stars(synthetic_records):
    kinds = ["slr", "mlr", "eeatc"]
    report = feature_sweep(synthetic_records, kinds, [("s",), PHI], [0, 1], _sweep_config(n_trees=10))
    # slr só no subconjunto {s}
    assert [(r.kind, r.features) for r in report.rows] == [
        ("slr", ("s",)), ("mlr", ("s",)), ("mlr", PHI), ("eeatc", ("s",)), ("eeatc", PHI),
    ]
    assert sum(r.best for r in report.rows) == 3
    assert report.seeds == (0, 1)
    assert all(r.n_seeds == 2 for r in report.rows)
    assert report.recompute() == report


def test_sweep_is_reproducible_and_round_trips(synthetic_records):
    args = (synthetic_records, ["mlr", "rf"], [PHI], [3])
    first = emit_report(feature_sweep(*args, _sweep_config(n_trees=8)), "machine")
    second = emit_report(feature_sweep(*args, _sweep_config(n_trees=8, n_jobs=4)), "machine")
    assert first == second
    assert emit_report(parse_report(first), "machine") == first


def test_sweep_multi_sensor(synthetic_records):
    other = synthetic_records.assign(s=synthetic_records["s"] * 1.1 + 2.0)
    report = feature_sweep({"a": synthetic_records, "b": other}, ["mlr"], [("s",), PHI], [0], _sweep_config())
    assert {r.sensor for r in report.rows} == {"a", "b"}
    assert sum(r.best for r in report.rows) == 2
    assert set(report.data_identity) == {"a", "b"}


def test_sweep_raw_metric_space(synthetic_records):
    normalized = feature_sweep(synthetic_records, ["mlr"], [PHI], [0], _sweep_config())
    raw = feature_sweep(synthetic_records, ["mlr"], [PHI], [0], _sweep_config(metric_space="raw"))
    assert raw.rows[0].r2_test == pytest.approx(normalized.rows[0].r2_test)
    assert raw.rows[0].rmse_test > normalized.rows[0].rmse_test


def test_sweep_rejects_unknown_models(synthetic_records):
    with pytest.raises(BadConfig):
        feature_sweep(synthetic_records, ["svm"], [PHI], [0], _sweep_config())


def test_sweep_full_normalization_uses_every_row(synthetic_records):
    train_only = feature_sweep(synthetic_records, ["mlr"], [PHI], [0], _sweep_config())
    full = feature_sweep(synthetic_records, ["mlr"], [PHI], [0], _sweep_config(normalize_scope="full"))

    ds = assemble_features(synthetic_records, FeatureSpec(PHI))
    everything = normalize_apply(ds, normalize_fit(ds))
    run = full.runs[0]
    target = np.concatenate([run.train_true, run.test_true])
    np.testing.assert_allclose(np.sort(target), np.sort(everything.y), rtol=0.0, atol=1e-12)
    assert target.mean() == pytest.approx(0.0, abs=1e-9)
    # só o treino fica centrado quando a normalização é ajustada no treino
    assert np.mean(train_only.runs[0].train_true) == pytest.approx(0.0, abs=1e-9)
    assert abs(np.mean(run.train_true)) > 1e-6

    assert full.rows[0].rmse_test != pytest.approx(train_only.rows[0].rmse_test, rel=1e-9)
    assert full.rows[0].r2_test == pytest.approx(train_only.rows[0].r2_test, abs=1e-6)


def test_sweep_skips_cells_with_constant_partition(synthetic_records):
    flat = synthetic_records.assign(y=1.0)
    flat.loc[flat.index[10], "y"] = 2.0
    report = feature_sweep({"a": synthetic_records, "b": flat}, ["mlr"], [PHI], [0, 1],
                           _sweep_config(normalize_scope="full"))
    assert {row.sensor for row in report.rows} == {"a"}
    assert [s["seed"] for s in report.skipped] == [0, 1]
    assert all(s["sensor"] == "b" and "constante" in s["error"] for s in report.skipped)


def _run_with_test_r2(target_r2, features):
    truth = np.arange(10.0)
    # SS_tot de 0..9 é 82.5; um deslocamento constante fixa o R²
    pred = truth + np.sqrt((1.0 - target_r2) * 82.5 / truth.size)
    return EvalRun("s", "mlr", features, 0, tuple(truth), tuple(pred), tuple(truth), tuple(pred))


def test_aggregate_runs_usepa_threshold():
    rows = aggregate_runs([_run_with_test_r2(0.79, ("s",)), _run_with_test_r2(0.81, PHI)])
    by_features = {row.features: row for row in rows}
    below, above = by_features[("s",)], by_features[PHI]
    assert below.r2_test == pytest.approx(0.79)
    assert above.r2_test == pytest.approx(0.81)
    assert not below.meets_usepa
    assert above.meets_usepa
    assert above.best and not below.best
    assert below.r2_test_std == 0.0


def test_model_types():
    assert EeatcModel.kind == "eeatc"
    with pytest.raises(BadConfig):
        SinglePhaseModel("eeatc", None, FeatureSpec(PHI))
