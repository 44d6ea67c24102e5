# graphem/load_data.py
"""CSV and manifest readers/writers for datasets, matrices and fit traces."""
import logging
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd
import yaml

from .config import dump_manifest, settings
from .errors import DatasetSpecError
from .model import Dataset, DatasetSpec, Trajectory, known_parameters

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

TRAJECTORY_FILE = "trajectory.csv"
TRUE_A_FILE = "true_A.csv"
MANIFEST_FILE = "manifest.yaml"


def _write_csv(frame: pd.DataFrame, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=settings.csv_float_format, na_rep="", lineterminator="\n")
    return path


def _read_csv(path: PathLike) -> pd.DataFrame:
    # round_trip keeps 17-digit decimals bit-exact
    return pd.read_csv(path, float_precision="round_trip")


def write_matrix(M, path: PathLike) -> Path:
    M = np.asarray(M, dtype=float)
    columns = [f"x_{j + 1}" for j in range(M.shape[1])]
    return _write_csv(pd.DataFrame(M, columns=columns), path)


def read_matrix(path: PathLike) -> np.ndarray:
    try:
        return _read_csv(path).to_numpy(dtype=float)
    except FileNotFoundError:
        logger.error("Matrix file not found: %s", path)
        raise


def trajectory_frame(trajectory: Trajectory) -> pd.DataFrame:
    K = trajectory.seq_length
    frame = pd.DataFrame(
        trajectory.states, columns=[f"x_{j + 1}" for j in range(trajectory.states.shape[1])]
    )
    obs = np.vstack([np.full((1, trajectory.observations.shape[1]), np.nan), trajectory.observations])
    for j in range(obs.shape[1]):
        frame[f"y_{j + 1}"] = obs[:, j]
    frame.insert(0, "k", np.arange(K + 1))
    return frame


def write_trajectory(trajectory: Trajectory, path: PathLike) -> Path:
    return _write_csv(trajectory_frame(trajectory), path)


def read_trajectory(path: PathLike) -> Trajectory:
    frame = _read_csv(path).sort_values("k")
    x_cols = [c for c in frame.columns if c.startswith("x_")]
    y_cols = [c for c in frame.columns if c.startswith("y_")]
    return Trajectory(
        states=frame[x_cols].to_numpy(dtype=float),
        observations=frame[y_cols].to_numpy(dtype=float)[1:],
    )


def write_states(means, path: PathLike) -> Path:
    """Smoothed state means, one row per k = 0..K."""
    means = np.asarray(means, dtype=float)
    frame = pd.DataFrame(means, columns=[f"x_{j + 1}" for j in range(means.shape[1])])
    frame.insert(0, "k", np.arange(means.shape[0]))
    return _write_csv(frame, path)


def write_frame(frame: pd.DataFrame, path: PathLike) -> Path:
    return _write_csv(frame, path)


def write_dataset(spec: DatasetSpec, dataset: Dataset, directory: PathLike, extra: Optional[dict] = None) -> Path:
    """trajectory.csv, true_A.csv and a manifest echoing the dataset spec (plus any `extra` keys)."""
    directory = Path(directory)
    write_trajectory(dataset.trajectory, directory / TRAJECTORY_FILE)
    write_matrix(dataset.true_A, directory / TRUE_A_FILE)
    dump_manifest({**(extra or {}), "dataset": spec.model_dump(mode="json")}, directory / MANIFEST_FILE)
    return directory


def read_dataset_spec(directory: PathLike) -> DatasetSpec:
    manifest_path = Path(directory) / MANIFEST_FILE
    if not manifest_path.exists():
        raise DatasetSpecError(f"No {MANIFEST_FILE} in {directory}")
    with open(manifest_path, "r", encoding="utf-8") as f:
        manifest = yaml.safe_load(f) or {}
    if "dataset" not in manifest:
        raise DatasetSpecError(f"{manifest_path} has no dataset section")
    return DatasetSpec(**manifest["dataset"])


def load_dataset(directory: PathLike) -> Dataset:
    """Read back a dataset written by `write_dataset`; known parameters come from the manifest."""
    directory = Path(directory)
    spec = read_dataset_spec(directory)
    for name in (TRUE_A_FILE, TRAJECTORY_FILE):
        if not (directory / name).exists():
            raise DatasetSpecError(f"No {name} in {directory}")

    true_A = read_matrix(directory / TRUE_A_FILE)
    trajectory = read_trajectory(directory / TRAJECTORY_FILE)
    if true_A.shape != (spec.n_x, spec.n_x) or trajectory.observations.shape[1] != spec.n_x:
        raise DatasetSpecError(f"Files in {directory} do not match the manifest dimensions")
    model = known_parameters(spec).with_transition(true_A)
    return Dataset(true_A=true_A, model=model, trajectory=trajectory)
