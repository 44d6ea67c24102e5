# graphem/metrics.py
from dataclasses import asdict, dataclass
from typing import Iterable, Mapping, Union

import numpy as np
import pandas as pd
from sklearn.metrics import confusion_matrix

DEFAULT_EDGE_THRESHOLD = 1e-10


@dataclass(frozen=True)
class EdgeScores:
    accuracy: float
    precision: float
    recall: float
    specificity: float
    f1: float
    tp: int
    fp: int
    tn: int
    fn: int

    @classmethod
    def from_counts(cls, tp: int, fp: int, tn: int, fn: int) -> "EdgeScores":
        def ratio(num, den):
            return num / den if den else 0.0

        precision = ratio(tp, tp + fp)
        recall = ratio(tp, tp + fn)
        f1 = ratio(2 * precision * recall, precision + recall)
        return cls(
            accuracy=ratio(tp + tn, tp + fp + tn + fn),
            precision=precision,
            recall=recall,
            specificity=ratio(tn, tn + fp),
            f1=f1,
            tp=int(tp), fp=int(fp), tn=int(tn), fn=int(fn),
        )

    def as_dict(self) -> dict:
        return asdict(self)


def _same_shape(A_hat, A_true):
    A_hat = np.asarray(A_hat, dtype=float)
    A_true = np.asarray(A_true, dtype=float)
    if A_hat.shape != A_true.shape:
        raise ValueError(f"shape mismatch: {A_hat.shape} vs {A_true.shape}")
    return A_hat, A_true


def rmse(A_hat, A_true) -> float:
    """Relative error ||A_hat - A_true||_F / ||A_true||_F."""
    A_hat, A_true = _same_shape(A_hat, A_true)
    denom = np.linalg.norm(A_true)
    if denom == 0.0:
        raise ValueError("A_true is all-zero; relative error is undefined")
    return float(np.linalg.norm(A_hat - A_true) / denom)


def edge_scores(A_hat, A_true, threshold: float = DEFAULT_EDGE_THRESHOLD) -> EdgeScores:
    A_hat, A_true = _same_shape(A_hat, A_true)
    predicted = (np.abs(A_hat) > threshold).ravel()
    actual = (np.abs(A_true) > threshold).ravel()
    (tn, fp), (fn, tp) = confusion_matrix(actual, predicted, labels=[False, True])
    return EdgeScores.from_counts(tp=tp, fp=fp, tn=tn, fn=fn)


def score_row(A_hat, A_true, threshold: float = DEFAULT_EDGE_THRESHOLD) -> dict:
    """RMSE plus edge scores as one flat record."""
    return {"rmse": rmse(A_hat, A_true), **edge_scores(A_hat, A_true, threshold).as_dict()}


def aggregate(rows: Iterable[Union[Mapping, EdgeScores]]) -> pd.DataFrame:
    """Mean and sample standard deviation per metric, indexed by ('mean', 'std')."""
    records = [r.as_dict() if isinstance(r, EdgeScores) else dict(r) for r in rows]
    if not records:
        raise ValueError("aggregate needs at least one row")
    frame = pd.DataFrame.from_records(records).select_dtypes(include="number").astype(float)
    std = frame.std(ddof=1) if len(frame) > 1 else frame.iloc[0] * 0.0
    return pd.DataFrame({"mean": frame.mean(), "std": std}).T
