# graphem/model.py
"""
Linear-Gaussian state-space model, simulation and the block-diagonal AR(1)
synthetic datasets.

    x_k = A x_{k-1} + q_k,   q_k ~ N(0, Q)
    y_k = H x_k + r_k,       r_k ~ N(0, R)
    x_0 ~ N(x0_mean, P0)
"""
import logging
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator
from scipy.linalg import block_diag, cholesky

from .errors import DatasetSpecError, ModelValidationError

logger = logging.getLogger(__name__)

SYMMETRY_RTOL = 1e-12
DEFAULT_SPECTRAL_BOUND = 0.99


def _as_matrix(value) -> np.ndarray:
    arr = np.array(value, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class LgssmModel:
    A: np.ndarray
    H: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    x0_mean: np.ndarray
    P0: np.ndarray

    def __post_init__(self):
        for name in ("A", "H", "Q", "R", "x0_mean", "P0"):
            object.__setattr__(self, name, _as_matrix(getattr(self, name)))

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_y(self) -> int:
        return self.H.shape[0]

    def with_transition(self, A) -> "LgssmModel":
        return LgssmModel(A=A, H=self.H, Q=self.Q, R=self.R, x0_mean=self.x0_mean, P0=self.P0)


@dataclass(frozen=True)
class KnownParameters:
    """Everything but the transition matrix; these stay fixed during EM."""

    H: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    x0_mean: np.ndarray
    P0: np.ndarray

    @classmethod
    def from_model(cls, model: LgssmModel) -> "KnownParameters":
        return cls(H=model.H, Q=model.Q, R=model.R, x0_mean=model.x0_mean, P0=model.P0)

    @property
    def n_x(self) -> int:
        return self.P0.shape[0]

    def with_transition(self, A) -> LgssmModel:
        return LgssmModel(A=A, H=self.H, Q=self.Q, R=self.R, x0_mean=self.x0_mean, P0=self.P0)


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray        # (K+1, N_x), x_0..x_K
    observations: np.ndarray  # (K, N_y), y_1..y_K

    def __post_init__(self):
        states = _as_matrix(self.states)
        observations = _as_matrix(self.observations)
        if states.ndim != 2 or observations.ndim != 2:
            raise ValueError("states and observations must be 2-D arrays")
        if states.shape[0] != observations.shape[0] + 1:
            raise ValueError(
                f"states must have one more row than observations, got "
                f"{states.shape[0]} and {observations.shape[0]}"
            )
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "observations", observations)

    @property
    def seq_length(self) -> int:
        return self.observations.shape[0]


@dataclass
class ValidationReport:
    violations: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def _check_spd(name: str, M: np.ndarray, report: ValidationReport):
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        report.violations.append(f"{name} not square")
        return
    if not np.all(np.isfinite(M)):
        report.violations.append(f"{name} has non-finite entries")
        return
    scale = np.max(np.abs(M)) if M.size else 0.0
    if np.max(np.abs(M - M.T), initial=0.0) > SYMMETRY_RTOL * scale:
        report.violations.append(f"{name} not symmetric")
        return
    if np.linalg.eigvalsh(M).min(initial=np.inf) <= 0.0:
        report.violations.append(f"{name} not positive definite")


def validate_model(model: LgssmModel) -> ValidationReport:
    report = ValidationReport()
    A, H = model.A, model.H
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        report.violations.append("dimension mismatch: A not square")
        return report
    n_x = A.shape[0]
    if H.ndim != 2 or H.shape[1] != n_x:
        report.violations.append(f"dimension mismatch: H has shape {H.shape}, A has shape {A.shape}")
        return report
    n_y = H.shape[0]
    expected = {"Q": (n_x, n_x), "R": (n_y, n_y), "P0": (n_x, n_x), "x0_mean": (n_x,)}
    for name, shape in expected.items():
        actual = getattr(model, name).shape
        if actual != shape:
            report.violations.append(f"dimension mismatch: {name} has shape {actual}, expected {shape}")
    if not report.ok:
        return report
    if not np.all(np.isfinite(A)) or not np.all(np.isfinite(H)) or not np.all(np.isfinite(model.x0_mean)):
        report.violations.append("A, H or x0_mean has non-finite entries")
    for name in ("Q", "R", "P0"):
        _check_spd(name, getattr(model, name), report)
    return report


def _gaussian_draws(rng: np.random.Generator, cov: np.ndarray, n: int) -> np.ndarray:
    L = cholesky(cov, lower=True)
    return rng.standard_normal((n, cov.shape[0])) @ L.T


def simulate(model: LgssmModel, seq_length: int, rng_seed=None) -> Trajectory:
    report = validate_model(model)
    if not report.ok:
        raise ModelValidationError(report)
    if seq_length < 1:
        raise ValueError(f"seq_length must be >= 1, got {seq_length}")

    rng = np.random.default_rng(rng_seed)
    x0 = model.x0_mean + _gaussian_draws(rng, model.P0, 1)[0]
    state_noise = _gaussian_draws(rng, model.Q, seq_length)
    obs_noise = _gaussian_draws(rng, model.R, seq_length)

    states = np.empty((seq_length + 1, model.n_x))
    states[0] = x0
    for k in range(1, seq_length + 1):
        states[k] = model.A @ states[k - 1] + state_noise[k - 1]
    observations = states[1:] @ model.H.T + obs_noise
    return Trajectory(states=states, observations=observations)


def project_spectral_norm(M, bound: float = DEFAULT_SPECTRAL_BOUND) -> np.ndarray:
    """Frobenius-nearest matrix with spectral norm <= bound (singular values clipped)."""
    if bound <= 0:
        raise ValueError(f"bound must be positive, got {bound}")
    M = np.asarray(M, dtype=float)
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    if s.max(initial=0.0) <= bound:
        return M.copy()
    return (U * np.minimum(s, bound)) @ Vt


def block_mask(block_sizes) -> np.ndarray:
    return block_diag(*[np.ones((b, b), dtype=bool) for b in block_sizes])


def random_block_ar1_matrix(block_sizes, rng_seed=None, bound: float = DEFAULT_SPECTRAL_BOUND) -> np.ndarray:
    block_sizes = list(block_sizes)
    if not block_sizes:
        raise DatasetSpecError("block_sizes must not be empty")
    if any(int(b) < 1 for b in block_sizes):
        raise DatasetSpecError(f"block sizes must be positive, got {block_sizes}")

    rng = np.random.default_rng(rng_seed)
    A = block_diag(*[rng.uniform(-1.0, 1.0, size=(b, b)) for b in block_sizes])
    A = project_spectral_norm(A, bound)
    # SVD round-off leaks ~1e-17 into the off-block entries
    return np.where(block_mask(block_sizes), A, 0.0)


class DatasetSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    block_sizes: Tuple[int, ...]
    sigma_q: float
    sigma_r: float
    sigma_p: float
    seq_length: int = 1000
    seed: int = 0
    spectral_bound: float = DEFAULT_SPECTRAL_BOUND
    name: Optional[str] = None

    @field_validator("block_sizes")
    @classmethod
    def _positive_blocks(cls, v):
        if not v or any(b < 1 for b in v):
            raise ValueError("block_sizes must be a nonempty list of positive integers")
        return v

    @field_validator("sigma_q", "sigma_r", "sigma_p", "spectral_bound")
    @classmethod
    def _positive(cls, v):
        if v <= 0:
            raise ValueError("must be positive")
        return v

    @field_validator("seq_length")
    @classmethod
    def _positive_length(cls, v):
        if v < 1:
            raise ValueError("seq_length must be >= 1")
        return v

    @property
    def n_x(self) -> int:
        return sum(self.block_sizes)

    @classmethod
    def preset(cls, name: str, **overrides) -> "DatasetSpec":
        key = str(name).upper()
        if key not in PRESETS:
            raise DatasetSpecError(f"Unknown dataset preset {name!r}; expected one of {sorted(PRESETS)}")
        return cls(**{**PRESETS[key], "name": key, **overrides})


PRESETS = {
    "A": {"block_sizes": (3, 3, 3), "sigma_q": 1e-1, "sigma_r": 1e-1, "sigma_p": 1e-4, "seq_length": 1000},
    "B": {"block_sizes": (3, 3, 3), "sigma_q": 1.0, "sigma_r": 1.0, "sigma_p": 1e-4, "seq_length": 1000},
    "C": {"block_sizes": (3, 5, 5, 3), "sigma_q": 1e-1, "sigma_r": 1e-1, "sigma_p": 1e-4, "seq_length": 1000},
    "D": {"block_sizes": (3, 5, 5, 3), "sigma_q": 1.0, "sigma_r": 1.0, "sigma_p": 1e-4, "seq_length": 1000},
}


class Dataset(NamedTuple):
    true_A: np.ndarray
    model: LgssmModel
    trajectory: Trajectory


def known_parameters(spec: DatasetSpec) -> KnownParameters:
    """H = I, Q = sigma_q^2 I, R = sigma_r^2 I, P0 = sigma_p^2 I, x0_mean = 0."""
    n = spec.n_x
    eye = np.eye(n)
    return KnownParameters(
        H=eye,
        Q=spec.sigma_q ** 2 * eye,
        R=spec.sigma_r ** 2 * eye,
        x0_mean=np.zeros(n),
        P0=spec.sigma_p ** 2 * eye,
    )


def make_dataset(spec: DatasetSpec) -> Dataset:
    # independent streams for the matrix and the trajectory, both fixed by spec.seed
    matrix_seed, trajectory_seed = np.random.SeedSequence(spec.seed).spawn(2)
    A = random_block_ar1_matrix(spec.block_sizes, matrix_seed, spec.spectral_bound)
    n = spec.n_x
    model = known_parameters(spec).with_transition(A)
    trajectory = simulate(model, spec.seq_length, trajectory_seed)
    logger.debug("Generated dataset %s (N_x=%d, K=%d, seed=%d)", spec.name or "custom", n, spec.seq_length, spec.seed)
    return Dataset(true_A=model.A, model=model, trajectory=trajectory)
