# graphem/em.py
"""
EM drivers for the transition matrix A.

GraphEM minimizes phi_K(A) = gamma ||A||_1 - log p(y_{1:K} | A): the E-step runs
the Kalman filter and RTS smoother with the current A, the M-step minimizes the
resulting majorizer with Douglas-Rachford. MLEM is the gamma = 0 variant with
the closed-form M-step A = C Phi^{-1}.
"""
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, List, Literal, NamedTuple, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .errors import EMIterationError, FilterDivergenceError, SingularSystemError
from .estep import EStepStats, compute_estep_stats, guarded_phi, noise_precision
from .inference import FilterPass, SmootherPass, kalman_filter, l1_norm, rts_smoother
from .model import KnownParameters
from .prox import DrConfig, QuadraticProxProblem, douglas_rachford, soft_threshold, solve_right

logger = logging.getLogger(__name__)

MIN_DR_TOLERANCE = 1e-12


class GraphemConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    gamma: float = Field(0.0, ge=0.0)
    em_tolerance: float = Field(1e-3, gt=0.0)
    em_max_iters: int = Field(50, ge=1)
    dr_config: DrConfig = DrConfig()
    init_alpha: float = 0.1
    A0: Optional[Tuple[Tuple[float, ...], ...]] = None
    adaptive_dr_tolerance: bool = True
    # "per_sample" runs DR on (f1 + f2) / K, same minimizer, prox step theta / K
    mstep_scaling: Literal["per_sample", "none"] = "per_sample"

    @field_validator("A0", mode="before")
    @classmethod
    def _matrix_to_tuples(cls, v):
        if v is None:
            return v
        return tuple(tuple(float(x) for x in row) for row in np.asarray(v, dtype=float))

    def initial_matrix(self, n_x: int) -> np.ndarray:
        if self.A0 is not None:
            A0 = np.array(self.A0, dtype=float)
            if A0.shape != (n_x, n_x):
                raise ValueError(f"A0 has shape {A0.shape}, expected {(n_x, n_x)}")
            return A0
        return default_initializer(n_x, "ar1", self.init_alpha)


@dataclass
class FitTrace:
    iterates: List[np.ndarray] = field(default_factory=list)
    objectives: List[float] = field(default_factory=list)
    inner_iters: List[int] = field(default_factory=list)
    elapsed: List[float] = field(default_factory=list)
    converged: bool = False
    # the M-step failed to decrease the majorizer and the loop stopped early
    stalled: bool = False
    wall_time: float = 0.0

    def record(self, A, objective, inner, started):
        self.iterates.append(np.array(A, copy=True))
        self.objectives.append(float(objective))
        self.inner_iters.append(int(inner))
        self.elapsed.append(time.perf_counter() - started)

    @property
    def n_iterations(self) -> int:
        return len(self.objectives) - 1

    def is_monotone(self, slack: float = 1e-8) -> bool:
        obj = np.asarray(self.objectives)
        return bool(np.all(np.diff(obj) <= slack))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "iteration": np.arange(len(self.objectives)),
                "objective": self.objectives,
                "inner_iterations": self.inner_iters,
                "elapsed": self.elapsed,
            }
        )


class FitResult(NamedTuple):
    A_hat: np.ndarray
    trace: FitTrace
    smoother: SmootherPass
    filter_pass: FilterPass


def default_initializer(n_x: int, kind: str = "ar1", alpha: float = 0.1) -> np.ndarray:
    if n_x < 1:
        raise ValueError(f"n_x must be >= 1, got {n_x}")
    if kind != "ar1":
        raise ValueError(f"Unknown initializer {kind!r}")
    return alpha * np.eye(n_x)


def gamma_max(stats: EStepStats, Q) -> float:
    """Smallest gamma for which A = 0 minimizes the majorizer built from `stats`."""
    return float(stats.seq_length * np.max(np.abs(noise_precision(Q) @ stats.C)))


def mlem_mstep(stats: EStepStats) -> np.ndarray:
    return solve_right(stats.C, guarded_phi(stats))


class MStepResult(NamedTuple):
    A: np.ndarray
    inner_iters: int
    converged: bool


def graphem_mstep(
    stats: EStepStats,
    Q,
    gamma: float,
    A_prev,
    dr_config: DrConfig = DrConfig(),
    tolerance: Optional[float] = None,
    scaling: str = "per_sample",
) -> MStepResult:
    """
    argmin_A f1(A) + gamma ||A||_1 by Douglas-Rachford started at Z0 = A_prev.

    With scaling="per_sample" both proximity steps use theta / K, which is DR on
    the objective divided by K. The minimizer is the same; the threshold then
    lives on the scale of the entries of A instead of K times it. The stopping
    test always uses the unscaled objective.
    """
    if gamma < 0:
        raise ValueError(f"gamma must be nonnegative, got {gamma}")
    problem = QuadraticProxProblem.from_stats(stats, Q)
    if scaling == "per_sample":
        step = 1.0 / stats.seq_length
    elif scaling == "none":
        step = 1.0
    else:
        raise ValueError(f"Unknown M-step scaling {scaling!r}")
    result = douglas_rachford(
        prox_f1=lambda X, theta: problem.prox(X, theta * step),
        prox_f2=lambda Z, theta: soft_threshold(Z, theta * step * gamma),
        objective=lambda A: problem.value(A) + gamma * l1_norm(A),
        config=dr_config,
        Z0=A_prev,
        tolerance=tolerance,
    )
    return MStepResult(A=result.A, inner_iters=result.iters, converged=result.converged)


def _e_step(known: KnownParameters, A, filter_pass: FilterPass) -> Tuple[SmootherPass, EStepStats]:
    smoother = rts_smoother(known.with_transition(A), filter_pass)
    return smoother, compute_estep_stats(smoother)


def _run_em(
    observations,
    known: KnownParameters,
    config: GraphemConfig,
    gamma: float,
    m_step: Callable[[EStepStats, np.ndarray, Optional[float]], MStepResult],
    label: str,
) -> FitResult:
    Y = np.asarray(observations, dtype=float)
    if Y.ndim != 2 or Y.shape[0] < 2:
        raise ValueError("observations must be a (K, N_y) array with K >= 2")

    started = time.perf_counter()
    trace = FitTrace()
    A = config.initial_matrix(known.n_x)
    try:
        fp = kalman_filter(known.with_transition(A), Y)
    except FilterDivergenceError as e:
        raise EMIterationError(0, e) from e
    objective = gamma * l1_norm(A) + fp.neg_log_lik
    trace.record(A, objective, 0, started)
    last_decrease = None

    for i in range(1, config.em_max_iters + 1):
        try:
            smoother, stats = _e_step(known, A, fp)
            dr_tol = None
            if config.adaptive_dr_tolerance and last_decrease is not None:
                dr_tol = max(min(config.dr_config.tolerance, 0.1 * last_decrease), MIN_DR_TOLERANCE)
            step = m_step(stats, A, dr_tol)
            A_next = step.A

            # an inexact M-step must still decrease the majorizer
            problem = QuadraticProxProblem.from_stats(stats, known.Q)
            surrogate_prev = problem.value(A) + gamma * l1_norm(A)
            surrogate_next = problem.value(A_next) + gamma * l1_norm(A_next)
            if surrogate_next > surrogate_prev:
                logger.warning(
                    "%s iteration %d: M-step increased the majorizer (%.6e > %.6e), keeping previous iterate",
                    label, i, surrogate_next, surrogate_prev,
                )
                trace.record(A, objective, step.inner_iters, started)
                trace.stalled = True
                break

            fp_next = kalman_filter(known.with_transition(A_next), Y)
        except (FilterDivergenceError, SingularSystemError) as e:
            raise EMIterationError(i, e) from e

        objective_next = gamma * l1_norm(A_next) + fp_next.neg_log_lik
        trace.record(A_next, objective_next, step.inner_iters, started)
        logger.debug("%s iteration %d: phi_K=%.10g (inner %d)", label, i, objective_next, step.inner_iters)

        delta = objective_next - objective
        A, fp, objective = A_next, fp_next, objective_next
        if abs(delta) <= config.em_tolerance:
            trace.converged = True
            break
        last_decrease = abs(delta)

    trace.wall_time = time.perf_counter() - started
    if trace.stalled:
        logger.warning("%s stalled at iteration %d before meeting tolerance %.3e", label, trace.n_iterations, config.em_tolerance)
    elif not trace.converged:
        logger.warning("%s stopped after %d iterations without meeting tolerance %.3e", label, config.em_max_iters, config.em_tolerance)
    logger.info("%s finished: %d iterations, phi_K=%.6f, %.2fs", label, trace.n_iterations, objective, trace.wall_time)

    smoother = rts_smoother(known.with_transition(A), fp)
    return FitResult(A_hat=A, trace=trace, smoother=smoother, filter_pass=fp)


def graphem_fit(observations, known: KnownParameters, config: GraphemConfig) -> FitResult:
    def m_step(stats, A_prev, tol):
        return graphem_mstep(stats, known.Q, config.gamma, A_prev, config.dr_config, tol, config.mstep_scaling)

    return _run_em(observations, known, config, config.gamma, m_step, "GraphEM")


def mlem_fit(observations, known: KnownParameters, config: Optional[GraphemConfig] = None) -> FitResult:
    """Maximum-likelihood EM; `config.gamma` is ignored."""
    config = config or GraphemConfig()

    def m_step(stats, A_prev, tol):
        return MStepResult(A=mlem_mstep(stats), inner_iters=0, converged=True)

    return _run_em(observations, known, config, 0.0, m_step, "MLEM")
