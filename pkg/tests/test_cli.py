import json

import numpy as np
import pandas as pd
import pytest

from src.geo.geometry import GeoPoint
from src.ingest.accidents import AccidentRecord, write_accidents
from src.ingest.tracts import write_tracts
from src.main import EXIT_DATA, EXIT_OK, EXIT_USAGE, main
from src.pipeline.synthetic import SyntheticSpec, generate_point_table
from tests.conftest import square_tract

FAST = ["--set", "cv.aggregated_folds=4", "--set", "gbm.n_trees=20", "--set", "gbm.min_samples_leaf=5"]


@pytest.fixture
def synth_dir(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"grid_rows": 8, "grid_cols": 8, "n_points": 400}))
    out = tmp_path / "synth"
    assert main(["synth", "--spec", str(spec), "--seed", "5", "--out", str(out)]) == EXIT_OK
    return out


def read_report(out_dir):
    return json.loads((out_dir / "report.json").read_text())


def test_synth_writes_every_artifact(synth_dir):
    for name in ["tracts.geojson", "nodes.csv", "edges.csv", "accidents.csv", "aggregated.csv", "point.csv"]:
        assert (synth_dir / name).exists()
    report = read_report(synth_dir)
    assert report["command"] == "synth"
    assert report["synthetic"]["seed"] == 5


def test_train_aggregated_from_table(synth_dir, tmp_path):
    out = tmp_path / "agg"
    code = main(["train-agg", "--table", str(synth_dir / "aggregated.csv"), "--out", str(out), *FAST])
    assert code == EXIT_OK
    report = read_report(out)
    for key in ["r2_stage1", "r2_incremental", "r2_combined", "importance", "per_fold"]:
        assert key in report["aggregated"]
    assert report["dataset"]["rows"] == 64
    assert report["config"]["cv.aggregated_folds"] == 4
    assert (out / "model_aggregated.json").exists()


def test_features_from_raw_inputs(synth_dir, tmp_path):
    out = tmp_path / "features"
    raw = [
        "--tracts", str(synth_dir / "tracts.geojson"), "--accidents", str(synth_dir / "accidents.csv"),
        "--nodes", str(synth_dir / "nodes.csv"), "--edges", str(synth_dir / "edges.csv"),
    ]
    assert main(["features", *raw, "--out", str(out)]) == EXIT_OK
    for name in ["aggregated.csv", "point.csv", "temporal_profile.csv", "tract_metrics.csv"]:
        assert (out / name).exists()
    report = read_report(out)
    assert report["aggregated_coverage"]["rows"] == 64
    assert report["ingest"]["accidents"]["rows_rejected"] == 0


def test_synth_tables_match_features_rerun(synth_dir, tmp_path):
    out = tmp_path / "features"
    raw = [
        "--tracts", str(synth_dir / "tracts.geojson"), "--accidents", str(synth_dir / "accidents.csv"),
        "--nodes", str(synth_dir / "nodes.csv"), "--edges", str(synth_dir / "edges.csv"),
    ]
    assert main(["features", *raw, "--out", str(out)]) == EXIT_OK
    for name in ["aggregated.csv", "point.csv"]:
        assert (out / name).read_bytes() == (synth_dir / name).read_bytes()
    metrics = pd.read_csv(out / "tract_metrics.csv", dtype={"tract_id": str}).set_index("tract_id")
    table = pd.read_csv(synth_dir / "aggregated.csv", dtype={"tract_id": str}).set_index("tract_id")
    assert np.allclose(table["complexity"], metrics.loc[table.index, "complexity"])


def test_predict_with_missing_column_is_usage_error(synth_dir, tmp_path):
    out = tmp_path / "agg"
    assert main(["train-agg", "--table", str(synth_dir / "aggregated.csv"), "--out", str(out), *FAST]) == EXIT_OK
    table = pd.read_csv(synth_dir / "aggregated.csv").drop(columns=["complexity"])
    broken = tmp_path / "broken.csv"
    table.to_csv(broken, index=False)
    code = main(["predict", "--model", str(out / "model_aggregated.json"), "--table", str(broken), "--out", str(out)])
    assert code == EXIT_USAGE


def test_predict_writes_scores(synth_dir, tmp_path):
    out = tmp_path / "agg"
    assert main(["train-agg", "--table", str(synth_dir / "aggregated.csv"), "--out", str(out), *FAST]) == EXIT_OK
    target = tmp_path / "pred.csv"
    code = main([
        "predict", "--model", str(out / "model_aggregated.json"),
        "--table", str(synth_dir / "aggregated.csv"), "--output", str(target),
    ])
    assert code == EXIT_OK
    predictions = pd.read_csv(target, dtype={"tract_id": str})
    assert list(predictions.columns) == ["tract_id", "prediction"]
    assert len(predictions) == 64


def test_unknown_config_key_is_usage_error(tmp_path, capsys):
    code = main(["synth", "--out", str(tmp_path), "--set", "gbm.n_tree=5"])
    assert code == EXIT_USAGE
    assert "unknown config key 'gbm.n_tree'" in capsys.readouterr().err


def test_missing_inputs_is_usage_error(tmp_path):
    assert main(["moran", "--out", str(tmp_path)]) == EXIT_USAGE


def test_unreadable_input_is_data_error(tmp_path):
    code = main(["validate", "--accidents", str(tmp_path / "nope.csv"), "--out", str(tmp_path)])
    assert code == EXIT_DATA


def test_help_lists_config_keys(capsys):
    assert main(["moran", "--help"]) == EXIT_OK
    text = capsys.readouterr().out
    assert "moran.n_perm = 999" in text
    assert "gbm.n_trees = 300" in text


def test_validate_counts_rejected_rows(tmp_path):
    accidents = tmp_path / "accidents.csv"
    accidents.write_text(
        "id,date,time,lon,lat,injured,killed\n"
        "a,2019-01-01,10:00,-73.9,40.7,0,0\n"
        "b,2019-01-01,10:00,,,0,0\n"
        "c,2019-01-01,10:00,-73.9,40.7,-2,0\n"
    )
    assert main(["validate", "--accidents", str(accidents), "--out", str(tmp_path / "v")]) == EXIT_OK
    report = read_report(tmp_path / "v")["ingest"]["accidents"]
    assert (report["rows_ok"], report["rows_rejected"]) == (1, 2)
    assert main(["validate", "--accidents", str(accidents), "--strict", "--out", str(tmp_path / "v")]) == EXIT_DATA


def planted_city(tmp_path, rng):
    tracts = [square_tract(f"T{r:02d}{c:02d}", c * 0.01, r * 0.01) for r in range(12) for c in range(12)]
    when = pd.Timestamp("2019-06-01 08:00").to_pydatetime()
    accidents = []
    for t in tracts:
        r, c = int(t.tract_id[1:3]), int(t.tract_id[3:5])
        severe = int(rng.poisson(12.0 if 4 <= r < 8 and 4 <= c < 8 else 1.0))
        for i in range(severe):
            lon = c * 0.01 + rng.uniform(0.001, 0.009)
            lat = r * 0.01 + rng.uniform(0.001, 0.009)
            accidents.append(AccidentRecord(f"{t.tract_id}-{i}", GeoPoint(lon, lat), when, ("Sedan",), 1, 0))
    write_tracts(tracts, tmp_path / "tracts.geojson")
    write_accidents(accidents, tmp_path / "accidents.csv")
    return tmp_path / "tracts.geojson", tmp_path / "accidents.csv"


def test_moran_finds_planted_block(tmp_path, rng):
    tracts, accidents = planted_city(tmp_path, rng)
    out = tmp_path / "moran"
    code = main([
        "moran", "--tracts", str(tracts), "--accidents", str(accidents), "--out", str(out),
        "--n-perm", "499",
    ])
    assert code == EXIT_OK
    frame = pd.read_csv(out / "moran.csv", dtype={"tract_id": str})
    block = frame["tract_id"].map(lambda s: 4 <= int(s[1:3]) < 8 and 4 <= int(s[3:5]) < 8)
    assert (frame.loc[block, "cluster"] == "HH").sum() >= 12
    geojson = json.loads((out / "moran.geojson").read_text())
    assert len(geojson["features"]) == 144
    assert read_report(out)["moran"]["units"] == 144


def test_train_point_is_reproducible(tmp_path):
    table = generate_point_table(SyntheticSpec(n_points=500, seed=9))
    path = tmp_path / "point.csv"
    table.to_csv(path, index=False)
    out = tmp_path / "point"
    args = ["train-point", "--table", str(path), "--out", str(out), "--models", "gbm_smote", "logreg",
            "--set", "cv.point_folds=3", *FAST]
    assert main(args) == EXIT_OK
    first = {name: (out / name).read_bytes() for name in ["report.json", "roc_gbm_smote.svg", "roc_logreg.csv"]}
    assert main(args) == EXIT_OK
    assert first == {name: (out / name).read_bytes() for name in first}
    report = read_report(out)["point"]
    assert [m["name"] for m in report["models"]] == ["gbm_smote", "logreg"]
    assert (out / "model_gbm_smote.json").exists()
    assert np.isfinite(report["models"][0]["auc"])


@pytest.mark.parametrize("command", ["train-agg", "train-point", "moran"])
def test_report_identical_for_any_thread_count(synth_dir, tmp_path, command):
    out = tmp_path / "run"
    if command == "moran":
        inputs = ["--tracts", str(synth_dir / "tracts.geojson"), "--accidents", str(synth_dir / "accidents.csv"),
                  "--n-perm", "199"]
    else:
        table = "aggregated.csv" if command == "train-agg" else "point.csv"
        inputs = ["--table", str(synth_dir / table), "--set", "cv.point_folds=3", *FAST]
    reports = []
    for threads in ["1", "2"]:
        assert main([command, *inputs, "--threads", threads, "--out", str(out)]) == EXIT_OK
        reports.append((out / "report.json").read_bytes())
    assert reports[0] == reports[1]
    assert "threads" not in read_report(out)["config"]
