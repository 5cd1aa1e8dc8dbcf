import json

import numpy as np
import pandas as pd
import pytest

from src.features.tables import AGGREGATED_COLUMNS, POINT_COLUMNS, build_aggregated
from src.ingest.accidents import parse_accidents
from src.ingest.network import parse_network
from src.ingest.tracts import parse_tracts
from src.network.metrics import summarize_tracts
from src.pipeline.synthetic import (
    FEATURE_MOMENTS,
    SyntheticSpec,
    generate_aggregated_table,
    generate_point_table,
    generate_synthetic_city,
    hotspot_mask,
    save_synthetic,
)
from src.spatial.moran import moran_permutation
from src.spatial.weights import lattice_queen, queen_contiguity


def test_tables_are_deterministic(small_spec):
    pd.testing.assert_frame_equal(generate_aggregated_table(small_spec), generate_aggregated_table(small_spec))
    pd.testing.assert_frame_equal(generate_point_table(small_spec), generate_point_table(small_spec))
    other = small_spec.model_copy(update={"seed": small_spec.seed + 1})
    assert not generate_aggregated_table(small_spec).equals(generate_aggregated_table(other))


def test_table_layouts(small_spec):
    aggregated = generate_aggregated_table(small_spec)
    point = generate_point_table(small_spec)
    assert list(aggregated.columns) == AGGREGATED_COLUMNS
    assert list(point.columns) == POINT_COLUMNS
    assert len(aggregated) == 100
    assert len(point) == small_spec.n_points
    assert aggregated["tract_id"].is_unique
    assert (aggregated["y"] >= 0).all()


def test_feature_moments_match_reference():
    table = generate_aggregated_table(SyntheticSpec(grid_rows=60, grid_cols=60, seed=1))
    for name, (mean, std) in FEATURE_MOMENTS.items():
        assert table[name].mean() == pytest.approx(mean, rel=0.10)
        assert table[name].std() == pytest.approx(std, rel=0.10)


def test_point_positive_share_near_target():
    point = generate_point_table(SyntheticSpec(n_points=4000, seed=2))
    assert point["label"].mean() == pytest.approx(0.23, abs=0.03)
    vehicle = point[[c for c in point.columns if c.startswith("vehicle_")]]
    assert (vehicle.sum(axis=1) == 1).all()


def test_hotspot_is_centred():
    mask = hotspot_mask(SyntheticSpec(grid_rows=6, grid_cols=6, hotspot_size=2)).reshape(6, 6)
    assert mask.sum() == 4
    assert mask[2:4, 2:4].all()


def test_hotspot_must_fit():
    with pytest.raises(ValueError):
        SyntheticSpec(grid_rows=4, grid_cols=4, hotspot_size=5)


def test_unknown_effect_rejected():
    with pytest.raises(ValueError, match="unknown feature effects"):
        SyntheticSpec(effects={"speed_limit": 1.0})


def test_no_spatial_field_gives_little_clustering():
    spec = SyntheticSpec(spatial_amplitude=0.0, seed=5)
    y = generate_aggregated_table(spec)["y"].to_numpy()
    result = moran_permutation(y, lattice_queen(spec.grid_rows, spec.grid_cols), n_perm=199, seed=5)
    assert result.significant_fraction <= 0.10


def test_spatial_field_gives_clustering():
    spec = SyntheticSpec(spatial_amplitude=2.0, seed=5)
    y = generate_aggregated_table(spec)["y"].to_numpy()
    result = moran_permutation(
        y, lattice_queen(spec.grid_rows, spec.grid_cols), n_perm=199, seed=5, variant="conventional"
    )
    assert result.significant_fraction > 0.15


def test_city_is_consistent(small_spec):
    city = generate_synthetic_city(small_spec)
    assert len(city.tracts) == 100
    weights = queen_contiguity(city.tracts)
    assert np.array_equal(weights.to_sparse().toarray(), lattice_queen(10, 10).to_sparse().toarray())

    summaries, coverage = summarize_tracts(city.network, city.tracts)
    assert coverage.edges_straddling == 0
    assert coverage.empty_tracts == 0
    frame, table_coverage = build_aggregated(city.accidents, city.tracts, summaries)
    assert table_coverage.accidents_outside_tracts == 0
    assert frame["y"].sum() == sum(1 for a in city.accidents if a.injured + a.killed > 0)


def test_saved_city_parses_cleanly(small_spec, tmp_path):
    paths = save_synthetic(small_spec, tmp_path)
    assert all(p.exists() for p in paths.values())
    _, accident_report = parse_accidents(paths["accidents"])
    _, network_report = parse_network(paths["nodes"], paths["edges"])
    assert accident_report.rows_rejected == 0
    assert network_report.rows_rejected == 0
    assert len(parse_tracts(paths["tracts"])) == 100
    assert json.loads(paths["spec"].read_text())["seed"] == small_spec.seed


def test_saved_tables_describe_saved_city(small_spec, tmp_path):
    paths = save_synthetic(small_spec, tmp_path)
    tracts = parse_tracts(paths["tracts"])
    accidents, _ = parse_accidents(paths["accidents"])
    network, _ = parse_network(paths["nodes"], paths["edges"])
    summaries, _ = summarize_tracts(network, tracts)

    table = pd.read_csv(paths["aggregated"], dtype={"tract_id": str}).set_index("tract_id")
    by_id = {s.tract_id: s for s in summaries}
    assert np.allclose(table["complexity"], [by_id[t].complexity for t in table.index])

    severe = {t.tract_id: 0 for t in tracts}
    for a in accidents:
        if a.injured + a.killed > 0:
            severe[a.id[:a.id.index("A")]] += 1
    assert table["y"].to_dict() == {t: severe[t] for t in table.index}
    assert len(pd.read_csv(paths["point"])) == len(accidents)
