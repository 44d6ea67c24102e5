# graphem/inference.py
"""Kalman filter, RTS smoother and the MAP objective phi_K(A)."""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, lu_factor, lu_solve

from .errors import FilterDivergenceError
from .model import LgssmModel

logger = logging.getLogger(__name__)

MAX_CONDITION = 1e14
LOG_2PI = np.log(2.0 * np.pi)


def _symmetrize(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + P.T)


@dataclass(frozen=True)
class FilterPass:
    means: np.ndarray            # (K+1, N_x), m_0 = x0_mean
    covariances: np.ndarray      # (K+1, N_x, N_x)
    innovations: np.ndarray      # (K, N_y)
    innovation_covs: np.ndarray  # (K, N_y, N_y)
    neg_log_lik: float

    @property
    def seq_length(self) -> int:
        return self.innovations.shape[0]


@dataclass(frozen=True)
class SmootherPass:
    smoothed_means: np.ndarray   # (K+1, N_x)
    smoothed_covs: np.ndarray    # (K+1, N_x, N_x)
    gains: np.ndarray            # (K, N_x, N_x), G_0..G_{K-1}

    @property
    def seq_length(self) -> int:
        return self.gains.shape[0]


def _checked_condition(M: np.ndarray, step: int, stage: str):
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise FilterDivergenceError(step=step, stage=stage, condition=float(cond))


def kalman_filter(model: LgssmModel, observations) -> FilterPass:
    """
    Forward pass of the Kalman filter.

    Returns filtered means/covariances for k = 0..K (slot 0 holds the prior),
    innovations z_k, their covariances S_k and -log p(y_{1:K}).
    """
    Y = np.asarray(observations, dtype=float)
    if Y.ndim != 2 or Y.shape[0] == 0:
        raise ValueError("observations must be a nonempty (K, N_y) array")
    if Y.shape[1] != model.n_y:
        raise ValueError(f"observations have dimension {Y.shape[1]}, model expects {model.n_y}")

    A, H, Q, R = model.A, model.H, model.Q, model.R
    K, n_x, n_y = Y.shape[0], model.n_x, model.n_y

    means = np.empty((K + 1, n_x))
    covs = np.empty((K + 1, n_x, n_x))
    innovations = np.empty((K, n_y))
    innovation_covs = np.empty((K, n_y, n_y))
    means[0] = model.x0_mean
    covs[0] = model.P0
    nll = 0.0

    for k in range(1, K + 1):
        m_pred = A @ means[k - 1]
        P_pred = A @ covs[k - 1] @ A.T + Q

        z = Y[k - 1] - H @ m_pred
        S = _symmetrize(H @ P_pred @ H.T + R)
        _checked_condition(S, k, "kalman_filter")
        S_chol = cho_factor(S, lower=True)
        gain = cho_solve(S_chol, H @ P_pred).T

        means[k] = m_pred + gain @ z
        covs[k] = _symmetrize(P_pred - gain @ S @ gain.T)
        innovations[k - 1] = z
        innovation_covs[k - 1] = S

        log_det = 2.0 * np.sum(np.log(np.diag(S_chol[0])))
        nll += 0.5 * (n_y * LOG_2PI + log_det) + 0.5 * z @ cho_solve(S_chol, z)

    return FilterPass(
        means=means,
        covariances=covs,
        innovations=innovations,
        innovation_covs=innovation_covs,
        neg_log_lik=float(nll),
    )


def rts_smoother(model: LgssmModel, filter_pass: FilterPass) -> SmootherPass:
    """Rauch-Tung-Striebel backward pass over a filter pass run with the same model."""
    A, Q = model.A, model.Q
    K = filter_pass.seq_length
    ms = filter_pass.means.copy()
    Ps = filter_pass.covariances.copy()
    gains = np.empty((K, model.n_x, model.n_x))

    for k in range(K - 1, -1, -1):
        P_k = filter_pass.covariances[k]
        P_pred = _symmetrize(A @ P_k @ A.T + Q)
        _checked_condition(P_pred, k, "rts_smoother")
        # G_k = P_k A^T P_pred^{-1}; both covariances are symmetric
        G = lu_solve(lu_factor(P_pred), A @ P_k).T
        ms[k] = filter_pass.means[k] + G @ (ms[k + 1] - A @ filter_pass.means[k])
        Ps[k] = _symmetrize(P_k + G @ (Ps[k + 1] - P_pred) @ G.T)
        gains[k] = G

    return SmootherPass(smoothed_means=ms, smoothed_covs=Ps, gains=gains)


def l1_norm(A) -> float:
    return float(np.abs(A).sum())


def map_objective(model: LgssmModel, observations, gamma: float = 0.0) -> float:
    """phi_K(A) = gamma * ||A||_1 - log p(y_{1:K} | A), filter re-run for this A."""
    if gamma < 0:
        raise ValueError(f"gamma must be nonnegative, got {gamma}")
    return gamma * l1_norm(model.A) + kalman_filter(model, observations).neg_log_lik
