"""Shared fixtures: vehicle, table sets (constant-speed and optimized) and a saved copy."""

import pytest

from eoam.commands import build_table_set
from eoam.config import GridSpec
from eoam.dmm.persistence import save_table_set
from eoam.trajectory.grid import generate_grid
from eoam.vehicle.params import VehicleParams


@pytest.fixture(scope="session")
def params():
    return VehicleParams()


@pytest.fixture(scope="session")
def fast_grid():
    # Constant-speed rows only; the optimizer has its own tests.
    return GridSpec(optimize=False, n_samples=201)


@pytest.fixture(scope="session")
def grid_points(params, fast_grid):
    return generate_grid(fast_grid, params)


@pytest.fixture(scope="session")
def tables(params, fast_grid, grid_points):
    return build_table_set(grid_points, params, fast_grid)


@pytest.fixture(scope="session")
def tables_dir(tmp_path_factory, tables):
    out = tmp_path_factory.mktemp("tables")
    save_table_set(out, tables, manifest_hash="feedc0de")
    return out


@pytest.fixture(scope="session")
def optimized_tables(params):
    # One μ page keeps the optimizer cost down; only slow tests ask for it.
    grid = GridSpec(optimize=True, mus=[1.0], n_samples=201)
    return build_table_set(generate_grid(grid, params), params, grid)
