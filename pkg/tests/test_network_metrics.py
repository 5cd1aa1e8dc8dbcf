import pytest

from src.geo.geometry import GeoPoint, great_circle_distance
from src.ingest.network import StreetEdge, StreetNetwork
from src.network.metrics import (
    circuity,
    clip_network,
    intersection_count,
    summarize_tracts,
    summaries_to_frame,
    tract_summary,
)
from tests.conftest import square_tract

STEP = 0.001


def grid_network(rows: int, cols: int, x0: float = 0.0, y0: float = 0.0, stretch: float = 1.0) -> StreetNetwork:
    nodes = {f"n{r}_{c}": GeoPoint(x0 + c * STEP, y0 + r * STEP) for r in range(rows) for c in range(cols)}
    edges = []
    for r in range(rows):
        for c in range(cols):
            for rr, cc in ((r, c + 1), (r + 1, c)):
                if rr < rows and cc < cols:
                    u, v = f"n{r}_{c}", f"n{rr}_{cc}"
                    chord = great_circle_distance(nodes[u], nodes[v])
                    edges.append(StreetEdge(u, v, length_m=stretch * chord, width_m=10.0, bike_lanes=0))
    return StreetNetwork(nodes=nodes, edges=edges)


def test_single_curved_street():
    a, b = GeoPoint(0.0, 0.0), GeoPoint(STEP, 0.0)
    chord = great_circle_distance(a, b)
    net = StreetNetwork(nodes={"a": a, "b": b}, edges=[StreetEdge("a", "b", length_m=1.5 * chord)])
    assert circuity(net) == pytest.approx(1.5)


def test_circuity_is_ratio_of_sums():
    # a 100 m chord with a 120 m street plus an 80 m chord walked straight
    net = StreetNetwork(
        nodes={"a": GeoPoint(0, 0), "b": GeoPoint(0, 0.000899322), "c": GeoPoint(0, 0.000899322 * 1.8)},
        edges=[StreetEdge("a", "b", length_m=120.0), StreetEdge("b", "c", length_m=80.0)],
    )
    assert circuity(net) == pytest.approx(200.0 / 180.0, rel=1e-5)


def test_circuity_of_empty_network_is_absent():
    assert circuity(StreetNetwork()) is None


def test_coincident_endpoints_rejected():
    p = GeoPoint(0.0, 0.0)
    net = StreetNetwork(nodes={"a": p, "b": p}, edges=[StreetEdge("a", "b", length_m=5.0)])
    with pytest.raises(ValueError, match="zero total chord"):
        circuity(net)


def test_intersection_counts():
    path = grid_network(1, 4)
    star = StreetNetwork(
        nodes={k: GeoPoint(x, y) for k, x, y in [("c", 0, 0), ("n", 0, STEP), ("s", 0, -STEP), ("e", STEP, 0), ("w", -STEP, 0)]},
        edges=[StreetEdge("c", k, length_m=111.0) for k in "nsew"],
    )
    assert intersection_count(path) == 0
    assert intersection_count(star) == 1
    assert intersection_count(grid_network(3, 3)) == 5


def test_tract_summary_on_grid():
    net = grid_network(3, 3, x0=0.002, y0=0.002, stretch=1.2)
    summary = tract_summary(net, square_tract("T", 0.0, 0.0))
    assert summary.intersections == 5
    assert summary.circuity == pytest.approx(1.2)
    assert summary.complexity == pytest.approx(5 * 1.2)
    assert summary.n_edges == 12
    assert summary.avg_node_degree == pytest.approx(24 / 9)
    assert summary.avg_street_width_m == pytest.approx(10.0)
    assert not summary.empty


def test_directed_degree_doubles():
    net = grid_network(3, 3, x0=0.002, y0=0.002)
    summary = tract_summary(net, square_tract("T", 0.0, 0.0), directed_degree=True)
    assert summary.avg_node_degree == pytest.approx(48 / 9)


def test_length_weighted_width():
    a, b, c = GeoPoint(0.001, 0.001), GeoPoint(0.002, 0.001), GeoPoint(0.005, 0.001)
    net = StreetNetwork(
        nodes={"a": a, "b": b, "c": c},
        edges=[StreetEdge("a", "b", length_m=100.0, width_m=10.0), StreetEdge("b", "c", length_m=300.0, width_m=20.0)],
    )
    tract = square_tract("T", 0.0, 0.0)
    assert tract_summary(net, tract).avg_street_width_m == pytest.approx(15.0)
    assert tract_summary(net, tract, length_weighted=True).avg_street_width_m == pytest.approx(17.5)


def test_empty_tract():
    summary = tract_summary(grid_network(2, 2, x0=0.5, y0=0.5), square_tract("T", 0.0, 0.0))
    assert summary.empty
    assert summary.intersections == 0
    assert summary.circuity is None
    assert summary.complexity == 0.0


def test_clip_keeps_boundary_nodes_and_drops_crossing_edges():
    net = StreetNetwork(
        nodes={"in": GeoPoint(0.005, 0.005), "edge": GeoPoint(0.01, 0.005), "out": GeoPoint(0.02, 0.005)},
        edges=[StreetEdge("in", "edge", length_m=560.0), StreetEdge("edge", "out", length_m=1120.0)],
    )
    clipped = clip_network(net, square_tract("T", 0.0, 0.0))
    assert set(clipped.nodes) == {"in", "edge"}
    assert [(e.u, e.v) for e in clipped.edges] == [("in", "edge")]


def test_shared_boundary_node_goes_to_lowest_id():
    net = StreetNetwork(
        nodes={"a": GeoPoint(0.005, 0.005), "m": GeoPoint(0.01, 0.005), "b": GeoPoint(0.015, 0.005)},
        edges=[StreetEdge("a", "m", length_m=560.0), StreetEdge("m", "b", length_m=560.0)],
    )
    tracts = [square_tract("B", 0.01, 0.0), square_tract("A", 0.0, 0.0)]
    summaries, coverage = summarize_tracts(net, tracts)
    by_id = {s.tract_id: s for s in summaries}
    assert by_id["A"].n_nodes == 2
    assert by_id["A"].n_edges == 1
    assert by_id["B"].n_edges == 0
    assert coverage.edges_straddling == 1
    assert coverage.edges_assigned + coverage.edges_straddling == coverage.edges_total


def test_summaries_follow_tract_order_and_workers_agree():
    net = grid_network(6, 6, stretch=1.1)
    tracts = [square_tract(f"T{i}", 0.003 * i, 0.0, size=0.003) for i in range(2)]
    serial, _ = summarize_tracts(net, tracts)
    parallel, _ = summarize_tracts(net, tracts, n_jobs=2)
    assert [s.tract_id for s in serial] == ["T0", "T1"]
    assert serial == parallel
    frame = summaries_to_frame(serial)
    assert list(frame["tract_id"]) == ["T0", "T1"]


def test_parallel_streets_count_toward_degree():
    a, b, c = GeoPoint(0.001, 0.001), GeoPoint(0.002, 0.001), GeoPoint(0.003, 0.001)
    net = StreetNetwork(
        nodes={"a": a, "b": b, "c": c},
        edges=[StreetEdge("a", "b", length_m=90.0), StreetEdge("b", "a", length_m=95.0), StreetEdge("b", "c", length_m=90.0)],
    )
    assert net.degrees() == {"a": 2, "b": 3, "c": 1}
    assert intersection_count(net) == 1
    summary = tract_summary(net, square_tract("T", 0.0, 0.0))
    assert summary.n_edges == 3
    assert summary.avg_node_degree == pytest.approx(2.0)
