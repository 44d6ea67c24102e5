# graphem/estep.py
"""
Sufficient statistics of the EM majorizer

    Q(A; A') = (K/2) tr(Q^{-1} (Sigma - C A^T - A C^T + A Phi A^T)) + gamma ||A||_1

The additive constant independent of A is dropped everywhere.
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import SingularSystemError
from .inference import SmootherPass, l1_norm

logger = logging.getLogger(__name__)

PHI_MAX_CONDITION = 1e12
PHI_RIDGE = 1e-10


@dataclass(frozen=True)
class EStepStats:
    Sigma: np.ndarray
    Phi: np.ndarray
    C: np.ndarray
    seq_length: int

    @property
    def n_x(self) -> int:
        return self.Sigma.shape[0]


def compute_estep_stats(smoother: SmootherPass, seq_length: Optional[int] = None) -> EStepStats:
    ms, Ps, G = smoother.smoothed_means, smoother.smoothed_covs, smoother.gains
    K = smoother.seq_length if seq_length is None else int(seq_length)
    if ms.shape[0] != K + 1 or Ps.shape[0] != K + 1 or G.shape[0] != K:
        raise ValueError(
            f"smoother pass does not cover k=0..{K}: means {ms.shape[0]}, covs {Ps.shape[0]}, gains {G.shape[0]}"
        )
    if K < 1:
        raise ValueError("seq_length must be >= 1")

    Sigma = (Ps[1:].sum(axis=0) + ms[1:].T @ ms[1:]) / K
    Phi = (Ps[:-1].sum(axis=0) + ms[:-1].T @ ms[:-1]) / K
    # P_k^s G_{k-1}^T is the smoothed cross-covariance of (x_k, x_{k-1})
    C = (np.einsum("kij,klj->il", Ps[1:], G) + ms[1:].T @ ms[:-1]) / K
    return EStepStats(
        Sigma=0.5 * (Sigma + Sigma.T),
        Phi=0.5 * (Phi + Phi.T),
        C=C,
        seq_length=K,
    )


def guarded_phi(stats: EStepStats) -> np.ndarray:
    """Phi, ridge-regularized when its condition number exceeds PHI_MAX_CONDITION."""
    Phi = stats.Phi
    if np.linalg.cond(Phi) > PHI_MAX_CONDITION:
        ridge = PHI_RIDGE * np.trace(Phi) / stats.n_x
        logger.warning("Phi is ill-conditioned, adding ridge %.3e", ridge)
        Phi = Phi + ridge * np.eye(stats.n_x)
    return Phi


def noise_precision(Q) -> np.ndarray:
    Q = np.asarray(Q, dtype=float)
    try:
        return cho_solve(cho_factor(Q), np.eye(Q.shape[0]))
    except LinAlgError as e:
        raise SingularSystemError(f"state-noise covariance is not invertible: {e}") from e


def majorizer_value(A, stats: EStepStats, Q, gamma: float = 0.0) -> float:
    A = np.asarray(A, dtype=float)
    if A.shape != stats.Sigma.shape or np.shape(Q) != stats.Sigma.shape:
        raise ValueError(f"dimension mismatch: A {A.shape}, Q {np.shape(Q)}, stats {stats.Sigma.shape}")
    Q_inv = noise_precision(Q)
    CAt = stats.C @ A.T
    inner = stats.Sigma - CAt - CAt.T + A @ stats.Phi @ A.T
    return 0.5 * stats.seq_length * float(np.sum(Q_inv * inner)) + gamma * l1_norm(A)
