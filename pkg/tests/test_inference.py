import numpy as np
import pytest

from graphem.errors import FilterDivergenceError
from graphem.inference import kalman_filter, l1_norm, map_objective, rts_smoother
from graphem.model import LgssmModel, simulate

from conftest import JointGaussian, random_model


def _oracle_cases(rng, count=20):
    for i in range(count):
        n_x = int(rng.integers(1, 4))
        n_y = int(rng.integers(1, 4))
        K = int(rng.integers(1, 9))
        model = random_model(rng, n_x, n_y)
        yield model, simulate(model, K, rng_seed=i).observations


def test_filter_nll_matches_joint_gaussian(rng):
    for model, Y in _oracle_cases(rng):
        fp = kalman_filter(model, Y)
        expected = JointGaussian(model, Y.shape[0]).neg_log_lik(Y)
        assert fp.neg_log_lik == pytest.approx(expected, abs=1e-8, rel=1e-10)


def test_smoother_matches_joint_gaussian_posterior(rng):
    for model, Y in _oracle_cases(rng):
        oracle = JointGaussian(model, Y.shape[0])
        mean, cov = oracle.posterior(Y)
        sp = rts_smoother(model, kalman_filter(model, Y))
        assert np.allclose(sp.smoothed_means, mean, atol=1e-8)
        for k in range(Y.shape[0] + 1):
            assert np.allclose(sp.smoothed_covs[k], oracle.block(cov, k, k), atol=1e-8)


def test_last_filtered_mean_is_last_smoothed_mean(rng):
    model = random_model(rng, 3)
    Y = simulate(model, 12, 1).observations
    fp = kalman_filter(model, Y)
    sp = rts_smoother(model, fp)
    assert np.allclose(fp.means[-1], sp.smoothed_means[-1])
    assert np.allclose(fp.covariances[-1], sp.smoothed_covs[-1])


def test_filter_output_shapes(rng):
    model = random_model(rng, 3, 2)
    Y = simulate(model, 6, 0).observations
    fp = kalman_filter(model, Y)
    assert fp.means.shape == (7, 3)
    assert fp.covariances.shape == (7, 3, 3)
    assert fp.innovations.shape == (6, 2)
    assert fp.innovation_covs.shape == (6, 2, 2)
    assert fp.seq_length == 6
    assert np.array_equal(fp.means[0], model.x0_mean)
    sp = rts_smoother(model, fp)
    assert sp.gains.shape == (6, 3, 3)


def test_covariances_stay_symmetric(rng):
    model = random_model(rng, 4)
    fp = kalman_filter(model, simulate(model, 30, 2).observations)
    for P in fp.covariances[1:]:
        assert np.array_equal(P, P.T)


def test_observation_dimension_mismatch(rng):
    model = random_model(rng, 2, 2)
    with pytest.raises(ValueError):
        kalman_filter(model, np.zeros((5, 3)))
    with pytest.raises(ValueError):
        kalman_filter(model, np.zeros((0, 2)))


def test_ill_conditioned_innovation_raises():
    model = LgssmModel(
        A=np.zeros((2, 2)),
        H=np.zeros((2, 2)),
        Q=np.eye(2),
        R=np.diag([1.0, 1e-17]),
        x0_mean=np.zeros(2),
        P0=np.eye(2),
    )
    with pytest.raises(FilterDivergenceError) as info:
        kalman_filter(model, np.zeros((3, 2)))
    assert info.value.step == 1
    assert info.value.stage == "kalman_filter"


def test_map_objective_adds_the_l1_penalty(rng):
    model = random_model(rng, 3)
    Y = simulate(model, 10, 0).observations
    nll = kalman_filter(model, Y).neg_log_lik
    assert map_objective(model, Y) == pytest.approx(nll)
    assert map_objective(model, Y, 2.5) == pytest.approx(nll + 2.5 * l1_norm(model.A))
    with pytest.raises(ValueError):
        map_objective(model, Y, -1.0)


def test_scalar_single_step_by_hand():
    one = np.ones((1, 1))
    model = LgssmModel(A=one, H=one, Q=one, R=one, x0_mean=np.zeros(1), P0=one)
    fp = kalman_filter(model, np.zeros((1, 1)))
    assert fp.means[1, 0] == 0.0
    assert fp.covariances[1, 0, 0] == pytest.approx(2 / 3)
    assert fp.innovation_covs[0, 0, 0] == pytest.approx(3.0)
    assert fp.innovations[0, 0] == 0.0
    assert fp.neg_log_lik == pytest.approx(0.5 * np.log(6 * np.pi))


def test_exact_observations_pin_the_filtered_means(rng):
    base = random_model(rng, 3)
    model = LgssmModel(A=base.A, H=np.eye(3), Q=base.Q, R=1e-30 * np.eye(3), x0_mean=base.x0_mean, P0=base.P0)
    Y = simulate(model, 20, 5).observations
    fp = kalman_filter(model, Y)
    assert np.max(np.abs(fp.means[1:] - Y)) <= 1e-6


def test_constant_state_smooths_to_the_last_filtered_mean():
    model = LgssmModel(A=np.eye(2), H=np.eye(2), Q=1e-30 * np.eye(2), R=np.eye(2), x0_mean=np.zeros(2), P0=np.eye(2))
    Y = simulate(model, 20, 6).observations
    fp = kalman_filter(model, Y)
    sp = rts_smoother(model, fp)
    assert np.max(np.abs(sp.smoothed_means - fp.means[-1])) <= 1e-6


def test_smoothing_never_increases_the_covariance_trace(rng):
    for model, Y in _oracle_cases(rng, count=10):
        fp = kalman_filter(model, Y)
        sp = rts_smoother(model, fp)
        for P_s, P in zip(sp.smoothed_covs, fp.covariances):
            assert np.trace(P_s) <= np.trace(P) + 1e-9
