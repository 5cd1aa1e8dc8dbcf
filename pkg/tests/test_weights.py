import numpy as np
import pytest

from src.spatial.weights import SpatialWeights, lattice_queen, queen_contiguity
from tests.conftest import square_tract


def test_edge_and_corner_neighbours():
    tracts = [
        square_tract("A", 0.0, 0.0),
        square_tract("B", 0.01, 0.0),   # shares an edge with A
        square_tract("C", 0.01, 0.01),  # touches A at one corner
        square_tract("D", 0.05, 0.05),  # disjoint
    ]
    w = queen_contiguity(tracts)
    assert w.ids == ("A", "B", "C", "D")
    assert w.neighbors[0] == (1, 2)
    assert w.neighbors[1] == (0, 2)
    assert w.islands == [3]


def test_t_junction_counts_as_contact():
    big = square_tract("big", 0.0, 0.0, size=0.03)
    small = square_tract("small", 0.03, 0.01, size=0.01)
    w = queen_contiguity([big, small])
    assert w.neighbors == ((1,), (0,))


def test_snap_tolerance_closes_small_gaps():
    a = square_tract("A", 0.0, 0.0)
    # roughly 0.1 m east of A's right edge
    b = square_tract("B", 0.010001, 0.0)
    assert queen_contiguity([a, b], snap_tol=0.5).neighbors == ((1,), (0,))
    assert queen_contiguity([a, b], snap_tol=0.01).islands == [0, 1]


def test_queen_needs_tracts():
    with pytest.raises(ValueError):
        queen_contiguity([])


def test_contiguity_is_symmetric_on_grid():
    tracts = [square_tract(f"T{r}{c}", c * 0.01, r * 0.01) for r in range(4) for c in range(5)]
    dense = queen_contiguity(tracts).to_sparse().toarray()
    assert np.array_equal(dense, dense.T)
    assert np.all(np.diag(dense) == 0)
    assert np.array_equal(dense, lattice_queen(4, 5).to_sparse().toarray())


def test_lattice_cardinalities():
    w = lattice_queen(3, 3)
    assert w.cardinalities.tolist() == [3, 5, 3, 5, 8, 5, 3, 5, 3]


def test_asymmetric_lists_rejected():
    with pytest.raises(ValueError, match="not symmetric"):
        SpatialWeights(n=2, neighbors=((1,), ()))


def test_self_neighbour_rejected():
    with pytest.raises(ValueError, match="itself"):
        SpatialWeights(n=1, neighbors=((0,),))


def test_from_pairs_ignores_duplicates_and_self_pairs():
    w = SpatialWeights.from_pairs(3, [(0, 1), (1, 0), (2, 2)])
    assert w.neighbors == ((1,), (0,), ())


def test_subset_reindexes():
    w = lattice_queen(1, 4).subset([3, 2, 0])
    assert w.neighbors == ((1,), (0,), ())
