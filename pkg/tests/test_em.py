import numpy as np
import pytest

import graphem.em as em_module
from graphem.em import (
    FitTrace,
    GraphemConfig,
    MStepResult,
    default_initializer,
    gamma_max,
    graphem_fit,
    mlem_fit,
    mlem_mstep,
)
from graphem.errors import EMIterationError
from graphem.estep import compute_estep_stats
from graphem.inference import kalman_filter, rts_smoother
from graphem.model import DatasetSpec, KnownParameters, make_dataset

from conftest import random_stats


@pytest.fixture(scope="module")
def small_dataset():
    return make_dataset(DatasetSpec(block_sizes=(2, 2), sigma_q=0.1, sigma_r=0.1, sigma_p=1e-4, seq_length=300, seed=5))


@pytest.fixture(scope="module")
def dataset_a():
    return make_dataset(DatasetSpec.preset("A", seed=1))


def _known(dataset):
    return KnownParameters.from_model(dataset.model)


def _first_stats(dataset, config=GraphemConfig()):
    known = _known(dataset)
    model = known.with_transition(config.initial_matrix(known.n_x))
    sp = rts_smoother(model, kalman_filter(model, dataset.trajectory.observations))
    return compute_estep_stats(sp)


def _first_gamma_max(dataset, config=GraphemConfig()):
    return gamma_max(_first_stats(dataset, config), _known(dataset).Q)


def test_default_initializer():
    assert np.array_equal(default_initializer(3), 0.1 * np.eye(3))
    assert np.array_equal(default_initializer(2, alpha=0.5), 0.5 * np.eye(2))
    with pytest.raises(ValueError):
        default_initializer(0)
    with pytest.raises(ValueError):
        default_initializer(2, kind="random")


def test_config_accepts_an_explicit_start():
    config = GraphemConfig(A0=np.eye(2))
    assert config.A0 == ((1.0, 0.0), (0.0, 1.0))
    assert np.array_equal(config.initial_matrix(2), np.eye(2))
    with pytest.raises(ValueError):
        config.initial_matrix(3)


def test_config_validates_fields():
    with pytest.raises(ValueError):
        GraphemConfig(gamma=-1.0)
    with pytest.raises(ValueError):
        GraphemConfig(em_tolerance=0.0)
    with pytest.raises(ValueError):
        GraphemConfig(em_max_iters=0)


def test_mlem_mstep_is_c_phi_inverse(rng):
    stats = random_stats(rng, 3)
    assert np.allclose(mlem_mstep(stats) @ stats.Phi, stats.C)


def test_fit_trace_helpers():
    trace = FitTrace(objectives=[3.0, 2.0, 2.0], inner_iters=[0, 4, 2], elapsed=[0.0, 0.1, 0.2])
    assert trace.n_iterations == 2
    assert trace.is_monotone()
    assert not FitTrace(objectives=[1.0, 1.1]).is_monotone()
    frame = trace.to_frame()
    assert list(frame.columns) == ["iteration", "objective", "inner_iterations", "elapsed"]
    assert frame["iteration"].tolist() == [0, 1, 2]


def test_mlem_fit_decreases_the_objective(small_dataset):
    result = mlem_fit(small_dataset.trajectory.observations, _known(small_dataset))
    trace = result.trace
    assert trace.is_monotone()
    assert trace.objectives[-1] < trace.objectives[0]
    assert len(trace.iterates) == len(trace.objectives)
    assert result.smoother.smoothed_means.shape == (301, 4)
    assert np.array_equal(trace.iterates[-1], result.A_hat)


def test_graphem_fit_is_monotone_and_sparse(small_dataset):
    gamma = 0.1 * _first_gamma_max(small_dataset)
    result = graphem_fit(small_dataset.trajectory.observations, _known(small_dataset), GraphemConfig(gamma=gamma))
    assert result.trace.is_monotone()
    assert result.trace.n_iterations >= 1
    assert all(n >= 1 for n in result.trace.inner_iters[1:])
    dense = mlem_fit(small_dataset.trajectory.observations, _known(small_dataset)).A_hat
    assert np.count_nonzero(result.A_hat) < np.count_nonzero(dense)


def test_gamma_above_gamma_max_gives_zero_estimate(small_dataset):
    gamma = 2.0 * _first_gamma_max(small_dataset)
    result = graphem_fit(small_dataset.trajectory.observations, _known(small_dataset), GraphemConfig(gamma=gamma))
    assert np.count_nonzero(result.A_hat) == 0
    assert result.trace.converged


def test_first_iterate_without_penalty_is_c_phi_inverse(dataset_a):
    result = graphem_fit(dataset_a.trajectory.observations, _known(dataset_a), GraphemConfig(gamma=0.0, em_max_iters=1))
    expected = mlem_mstep(_first_stats(dataset_a))
    assert np.linalg.norm(result.trace.iterates[1] - expected) <= 1e-6


def test_gamma_zero_matches_mlem_iteration_by_iteration(dataset_a):
    Y = dataset_a.trajectory.observations
    known = _known(dataset_a)
    graphem = graphem_fit(Y, known, GraphemConfig(gamma=0.0, em_tolerance=1e-12, em_max_iters=4))
    mlem = mlem_fit(Y, known, GraphemConfig(em_tolerance=1e-12, em_max_iters=4))
    assert len(graphem.trace.iterates) == len(mlem.trace.iterates) == 5
    for A_g, A_m in zip(graphem.trace.iterates, mlem.trace.iterates):
        assert np.linalg.norm(A_g - A_m) <= 1e-5


def test_rejected_mstep_keeps_previous_iterate(small_dataset):
    Y = small_dataset.trajectory.observations
    known = _known(small_dataset)
    config = GraphemConfig()

    def bad_step(stats, A_prev, tol):
        return MStepResult(A=A_prev + 100.0, inner_iters=1, converged=True)

    result = em_module._run_em(Y, known, config, 0.0, bad_step, "test")
    assert np.array_equal(result.A_hat, config.initial_matrix(4))
    assert result.trace.stalled
    assert not result.trace.converged
    assert result.trace.objectives[-1] == result.trace.objectives[0]


def test_divergent_filter_is_wrapped_with_iteration(small_dataset):
    known = _known(small_dataset)
    broken = KnownParameters(H=np.zeros((4, 4)), Q=known.Q, R=np.diag([1.0, 1.0, 1.0, 1e-17]),
                             x0_mean=known.x0_mean, P0=known.P0)
    with pytest.raises(EMIterationError) as info:
        mlem_fit(small_dataset.trajectory.observations, broken)
    assert info.value.iteration == 0


def test_short_sequences_are_rejected(small_dataset):
    with pytest.raises(ValueError):
        mlem_fit(small_dataset.trajectory.observations[:1], _known(small_dataset))
