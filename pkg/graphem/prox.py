# graphem/prox.py
"""
Proximity operators of the M-step objective f1 + f2 and the Douglas-Rachford
solver that combines them.

    f1(A) = (K/2) tr(Q^{-1} (Sigma - C A^T - A C^T + A Phi A^T))
    f2(A) = gamma ||A||_1
    prox_{theta f}(At) = argmin_A  theta f(A) + 1/2 ||A - At||_F^2
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, NamedTuple, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.linalg import cho_factor, cho_solve, lu_factor, lu_solve, solve_sylvester

from .errors import SingularSystemError
from .estep import EStepStats, guarded_phi, noise_precision

logger = logging.getLogger(__name__)

MAX_CONDITION = 1e14
# objective changes below this fraction of |objective| are rounding noise
OBJECTIVE_RESOLUTION = 1e-12
KRONECKER_MAX_DIM = 20
ISOTROPY_TOL = 1e-12


def soft_threshold(M, threshold: float) -> np.ndarray:
    if threshold < 0:
        raise ValueError(f"threshold must be nonnegative, got {threshold}")
    M = np.asarray(M, dtype=float)
    return np.sign(M) * np.maximum(np.abs(M) - threshold, 0.0)


def _is_scaled_identity(Q: np.ndarray, s2: float) -> bool:
    return s2 > 0 and bool(np.max(np.abs(Q - s2 * np.eye(Q.shape[0]))) <= ISOTROPY_TOL * s2)


def isotropic_variance_of(Q) -> Optional[float]:
    """sigma^2 if Q == sigma^2 I (to ISOTROPY_TOL relative to sigma^2), else None."""
    Q = np.asarray(Q, dtype=float)
    s2 = float(np.mean(np.diag(Q)))
    return s2 if _is_scaled_identity(Q, s2) else None


@dataclass(frozen=True)
class QuadraticProxProblem:
    stats: EStepStats
    Q: np.ndarray
    isotropic_variance: Optional[float] = None
    _factors: Dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=float)
        object.__setattr__(self, "Q", Q)
        if Q.shape != self.stats.Sigma.shape:
            raise ValueError(f"Q has shape {Q.shape}, stats are {self.stats.Sigma.shape}")
        if self.isotropic_variance is not None:
            s2 = float(self.isotropic_variance)
            if not _is_scaled_identity(Q, s2):
                raise ValueError("Q does not equal isotropic_variance * I")
        object.__setattr__(self, "_Q_inv", noise_precision(Q))
        object.__setattr__(self, "_Phi", guarded_phi(self.stats))

    @classmethod
    def from_stats(cls, stats: EStepStats, Q) -> "QuadraticProxProblem":
        return cls(stats=stats, Q=Q, isotropic_variance=isotropic_variance_of(Q))

    @property
    def seq_length(self) -> int:
        return self.stats.seq_length

    @property
    def Phi(self) -> np.ndarray:
        return self._Phi

    def value(self, A) -> float:
        """f1(A) without the constant term."""
        A = np.asarray(A, dtype=float)
        CAt = self.stats.C @ A.T
        inner = self.stats.Sigma - CAt - CAt.T + A @ self.Phi @ A.T
        return 0.5 * self.seq_length * float(np.sum(self._Q_inv * inner))

    def residual(self, A, A_tilde, theta: float) -> float:
        """Frobenius norm of the first-order condition theta K Q^{-1}(A Phi - C) + A - At."""
        r = theta * self.seq_length * self._Q_inv @ (A @ self.Phi - self.stats.C) + A - A_tilde
        return float(np.linalg.norm(r))

    def _kronecker_factor(self, theta: float):
        key = ("kron", theta)
        if key not in self._factors:
            n = self.stats.n_x
            N = self.Q / (theta * self.seq_length)
            # vec(N A) = (I kron N) vec(A), vec(A Phi) = (Phi^T kron I) vec(A), column-major vec
            L = np.kron(np.eye(n), N) + np.kron(self.Phi.T, np.eye(n))
            cond = np.linalg.cond(L)
            if not np.isfinite(cond) or cond > MAX_CONDITION:
                raise SingularSystemError(f"Kronecker prox system is singular (condition {cond:.3e})")
            self._factors[key] = (N, lu_factor(L))
        return self._factors[key]

    def _isotropic_factor(self, theta: float):
        key = ("iso", theta)
        if key not in self._factors:
            c = theta * self.seq_length / self.isotropic_variance
            self._factors[key] = (c, cho_factor(c * self.Phi + np.eye(self.stats.n_x)))
        return self._factors[key]

    def prox(self, A_tilde, theta: float, general: bool = False) -> np.ndarray:
        """
        prox_{theta f1}(At): solves theta K Q^{-1}(A Phi - C) + A = At.

        Uses the closed form (c C + At)(c Phi + I)^{-1}, c = theta K / sigma^2,
        when Q is isotropic. Otherwise (or when `general` is set) it solves the
        equivalent Sylvester equation N A + A Phi = N At + C, N = Q / (theta K),
        vectorized for small N_x.
        """
        if theta <= 0:
            raise ValueError(f"theta must be positive, got {theta}")
        A_tilde = np.asarray(A_tilde, dtype=float)
        n = self.stats.n_x

        if self.isotropic_variance is not None and not general:
            c, factor = self._isotropic_factor(theta)
            # right-multiplication by a symmetric inverse
            return cho_solve(factor, (c * self.stats.C + A_tilde).T).T

        if n > KRONECKER_MAX_DIM:
            N = self.Q / (theta * self.seq_length)
            return solve_sylvester(N, self.Phi, N @ A_tilde + self.stats.C)

        N, factor = self._kronecker_factor(theta)
        rhs = (N @ A_tilde + self.stats.C).ravel(order="F")
        return lu_solve(factor, rhs).reshape((n, n), order="F")


def prox_quadratic(problem: QuadraticProxProblem, A_tilde, theta: float) -> np.ndarray:
    return problem.prox(A_tilde, theta)


def solve_right(B: np.ndarray, Phi: np.ndarray) -> np.ndarray:
    """B Phi^{-1} for symmetric Phi."""
    cond = np.linalg.cond(Phi)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularSystemError(f"Phi is singular (condition {cond:.3e})")
    return np.linalg.solve(Phi, B.T).T


class DrConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    theta: float = Field(1.0, gt=0.0, lt=2.0)
    tolerance: float = Field(1e-3, gt=0.0)
    residual_tolerance: float = Field(1e-8, gt=0.0)
    max_iters: int = Field(5000, ge=1)


class DrResult(NamedTuple):
    A: np.ndarray
    iters: int
    converged: bool


def douglas_rachford(
    prox_f1: Callable[[np.ndarray, float], np.ndarray],
    prox_f2: Callable[[np.ndarray, float], np.ndarray],
    objective: Callable[[np.ndarray], float],
    config: DrConfig,
    Z0,
    tolerance: Optional[float] = None,
) -> DrResult:
    """
    Douglas-Rachford splitting for min f1 + f2.

        A_n     = prox_{theta f2}(Z_n)
        V_n     = prox_{theta f1}(2 A_n - Z_n)
        Z_{n+1} = Z_n + theta (V_n - A_n)

    Stops when successive objective values differ by at most the tolerance and
    the fixed-point residual ||V_n - A_n||_F is at most
    config.residual_tolerance * (1 + ||A_n||_F). The residual test keeps the
    solver from stopping while A_n sits still in the dead zone of the
    threshold, and bounds the distance to the minimizer.
    Reaching max_iters is reported through `converged`, not raised.
    """
    theta = config.theta
    tol = config.tolerance if tolerance is None else tolerance
    Z = np.array(Z0, dtype=float)
    A = prox_f2(Z, theta)
    obj = objective(A)

    for n in range(1, config.max_iters + 1):
        V = prox_f1(2.0 * A - Z, theta)
        residual = np.linalg.norm(V - A)
        Z = Z + theta * (V - A)
        A_next = prox_f2(Z, theta)
        obj_next = objective(A_next)
        obj_tol = max(tol, OBJECTIVE_RESOLUTION * abs(obj_next))
        if abs(obj_next - obj) <= obj_tol and residual <= config.residual_tolerance * (1.0 + np.linalg.norm(A)):
            return DrResult(A=A_next, iters=n, converged=True)
        A, obj = A_next, obj_next

    logger.warning("Douglas-Rachford reached max_iters=%d without meeting tolerance %.3e", config.max_iters, tol)
    return DrResult(A=A, iters=config.max_iters, converged=False)
