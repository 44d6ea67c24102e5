import time

import numpy as np
import pytest

from graphem.config import load_config
from graphem.model import make_dataset
from graphem.runner import default_gamma_grid, gamma_search, initial_gamma_max, parallel_map, run_realization

SMALL = {
    "dataset.preset": None, "dataset.block_sizes": [2, 2], "dataset.sigma_q": 0.1,
    "dataset.sigma_r": 0.1, "dataset.sigma_p": 1e-4, "dataset.seq_length": 300, "dataset.seed": 2,
}


@pytest.fixture(scope="module")
def small():
    config = load_config(overrides=SMALL)
    return config, make_dataset(config.dataset_spec())


def test_parallel_map_keeps_input_order():
    def slow_square(x):
        time.sleep(0.01 * (5 - x))
        return x * x

    results = parallel_map(slow_square, range(5), jobs=3, progress=False)
    assert results == [0, 1, 4, 9, 16]


def test_default_grid_brackets_gamma_max():
    grid = default_gamma_grid(25.0)
    assert grid == sorted(grid)
    assert grid[0] == pytest.approx(0.5)
    assert grid[-1] == pytest.approx(50.0)


def test_sparsity_path_is_nonincreasing(small):
    config, dataset = small
    gmax = initial_gamma_max(dataset, config)
    grid = [f * gmax for f in (0.02, 0.08, 0.2, 0.8, 2.0)]
    result = gamma_search(config, dataset, grid=grid, progress=False)
    nonzeros = result.table["nonzeros"].tolist()
    assert all(a >= b for a, b in zip(nonzeros, nonzeros[1:]))
    assert nonzeros[-1] == 0
    assert nonzeros[0] > 0


def test_realization_outcome_row_reports_stall_flag(small):
    config, dataset = small
    outcome = run_realization(config, dataset, "mlem", 0.0)
    row = outcome.row("custom")
    assert row["stalled"] is False
    assert row["converged"] == outcome.fit.trace.converged
    assert np.isfinite(row["objective"])
