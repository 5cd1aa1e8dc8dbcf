import io
import os
from pathlib import Path

import numpy as np
import pytest

from src.geo.geometry import PolygonGeom
from src.ingest.tracts import make_tract
from src.pipeline.synthetic import SyntheticSpec

NYC_DATA_ENV = "CRASHLENS_NYC_DATA"


def square(x0: float, y0: float, size: float = 0.01) -> PolygonGeom:
    return PolygonGeom.from_coords([(x0, y0), (x0 + size, y0), (x0 + size, y0 + size), (x0, y0 + size)])


def square_tract(tract_id: str, x0: float, y0: float, size: float = 0.01):
    return make_tract(tract_id, [square(x0, y0, size)])


def csv_stream(text: str) -> io.StringIO:
    return io.StringIO(text.lstrip("\n"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_spec():
    """A 10x10 city that builds in well under a second."""
    return SyntheticSpec(grid_rows=10, grid_cols=10, n_points=600, seed=3)


@pytest.fixture(scope="session")
def nyc_data_dir():
    path = os.getenv(NYC_DATA_ENV)
    if not path or not Path(path).is_dir():
        pytest.skip(f"{NYC_DATA_ENV} not set")
    return Path(path)
