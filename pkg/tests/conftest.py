import numpy as np
import pytest
from scipy.linalg import block_diag
from scipy.stats import multivariate_normal

import graphem.em as em_module
from graphem.estep import EStepStats
from graphem.model import LgssmModel

# ==================== Random models ====================


def random_spd(rng, n, floor=0.5):
    B = rng.standard_normal((n, n))
    return B @ B.T / n + floor * np.eye(n)


def random_stable_matrix(rng, n, norm=0.8):
    A = rng.standard_normal((n, n))
    return norm * A / np.linalg.norm(A, 2)


def random_model(rng, n_x, n_y=None):
    n_y = n_x if n_y is None else n_y
    return LgssmModel(
        A=random_stable_matrix(rng, n_x),
        H=rng.standard_normal((n_y, n_x)),
        Q=random_spd(rng, n_x),
        R=random_spd(rng, n_y),
        x0_mean=rng.standard_normal(n_x),
        P0=random_spd(rng, n_x),
    )


def random_stats(rng, n, seq_length=20):
    """A consistent (Sigma, Phi, C) triplet: second moments of a random joint Gaussian."""
    J = random_spd(rng, 2 * n, floor=0.3)
    return EStepStats(Sigma=J[:n, :n], Phi=J[n:, n:], C=J[:n, n:], seq_length=seq_length)


# ==================== Joint-Gaussian oracle ====================


class JointGaussian:
    """
    x_{0:K} and y_{1:K} stacked into one Gaussian vector; every filter and
    smoother quantity is a conditional moment of it.
    """

    def __init__(self, model: LgssmModel, seq_length: int):
        A, H, Q, R = model.A, model.H, model.Q, model.R
        n, K = model.n_x, seq_length
        self.n, self.K = n, K

        # x = T w with w = (x_0 - mean, q_1, ..., q_K)
        T = np.zeros(((K + 1) * n, (K + 1) * n))
        powers = [np.eye(n)]
        for _ in range(K):
            powers.append(A @ powers[-1])
        for k in range(K + 1):
            for i in range(k + 1):
                T[k * n:(k + 1) * n, i * n:(i + 1) * n] = powers[k - i]
        cov_w = block_diag(model.P0, *([Q] * K))
        self.mean_x = np.concatenate([powers[k] @ model.x0_mean for k in range(K + 1)])
        self.cov_x = T @ cov_w @ T.T

        H_big = np.zeros((K * model.n_y, (K + 1) * n))
        for k in range(1, K + 1):
            H_big[(k - 1) * model.n_y:k * model.n_y, k * n:(k + 1) * n] = H
        self.mean_y = H_big @ self.mean_x
        self.cov_y = H_big @ self.cov_x @ H_big.T + block_diag(*([R] * K))
        self.cov_xy = self.cov_x @ H_big.T

    def neg_log_lik(self, observations) -> float:
        return -multivariate_normal(self.mean_y, self.cov_y).logpdf(np.ravel(observations))

    def posterior(self, observations):
        gain = np.linalg.solve(self.cov_y, self.cov_xy.T).T
        mean = self.mean_x + gain @ (np.ravel(observations) - self.mean_y)
        cov = self.cov_x - gain @ self.cov_xy.T
        return mean.reshape(self.K + 1, self.n), cov

    def block(self, cov, j, k):
        n = self.n
        return cov[j * n:(j + 1) * n, k * n:(k + 1) * n]

    def second_moments(self, observations):
        """(Sigma, Phi, C) from exact posterior moments."""
        mean, cov = self.posterior(observations)
        K = self.K
        Sigma = sum(self.block(cov, k, k) + np.outer(mean[k], mean[k]) for k in range(1, K + 1)) / K
        Phi = sum(self.block(cov, k, k) + np.outer(mean[k], mean[k]) for k in range(K)) / K
        C = sum(self.block(cov, k, k - 1) + np.outer(mean[k], mean[k - 1]) for k in range(1, K + 1)) / K
        return Sigma, Phi, C


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# ==================== Proximal-gradient oracle ====================


def proximal_gradient_oracle(stats: EStepStats, Q, gamma: float, iters: int = 20000) -> np.ndarray:
    """Accelerated proximal gradient (FISTA) on f1 + gamma ||A||_1."""
    Q_inv = np.linalg.inv(Q)
    K = stats.seq_length
    L = K * np.linalg.eigvalsh(Q_inv).max() * np.linalg.eigvalsh(stats.Phi).max()
    A = np.zeros_like(stats.C)
    Y, t = A.copy(), 1.0
    for _ in range(iters):
        grad = K * Q_inv @ (Y @ stats.Phi - stats.C)
        X = Y - grad / L
        A_next = np.sign(X) * np.maximum(np.abs(X) - gamma / L, 0.0)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        Y = A_next + ((t - 1.0) / t_next) * (A_next - A)
        A, t = A_next, t_next
    return A


# ==================== EM monotonicity collector ====================

_traces = []


@pytest.fixture(scope="session", autouse=True)
def em_monotonicity_collector():
    """Every EM fit run anywhere in the suite must have a nonincreasing objective."""
    original = em_module._run_em

    def recording(*args, **kwargs):
        result = original(*args, **kwargs)
        _traces.append(result.trace)
        return result

    em_module._run_em = recording
    yield _traces
    em_module._run_em = original
    bad = [i for i, trace in enumerate(_traces) if not trace.is_monotone(1e-8)]
    assert not bad, f"{len(bad)} of {len(_traces)} EM traces increased the objective"
