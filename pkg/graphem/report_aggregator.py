# graphem/report_aggregator.py
"""Per-realization score rows, aggregate rows, and the aligned benchmark table."""
from pathlib import Path
from typing import Iterable, List, Union

import numpy as np
import pandas as pd

from .load_data import write_frame
from .metrics import aggregate

METRIC_COLUMNS = ["rmse", "accuracy", "precision", "recall", "specificity", "f1"]
TABLE_HEADERS = {
    "rmse": "RMSE",
    "accuracy": "accuracy",
    "precision": "precision",
    "recall": "recall",
    "specificity": "specificity",
    "f1": "F1",
}


def realization_frame(outcomes: Iterable, dataset_name: str = "") -> pd.DataFrame:
    return pd.DataFrame([o.row(dataset_name) for o in outcomes])


def scores_frame(realizations: pd.DataFrame) -> pd.DataFrame:
    """Realization rows followed by 'mean' and 'std' rows over the successful ones."""
    ok = realizations[realizations["error"] == ""]
    frame = realizations.astype({"realization": object})
    if ok.empty:
        return frame
    stats = aggregate(ok[METRIC_COLUMNS].to_dict("records"))
    first = realizations.iloc[0]
    extra = []
    for label in ("mean", "std"):
        row = {c: "" for c in realizations.columns}
        row.update(dataset=first["dataset"], method=first["method"], realization=label, gamma=first["gamma"])
        row.update(seed="", iterations="", converged="", stalled="", objective="")
        row.update(stats.loc[label, METRIC_COLUMNS].to_dict())
        extra.append(row)
    return pd.concat([frame, pd.DataFrame(extra, columns=realizations.columns)], ignore_index=True)


def summary_frame(realizations: pd.DataFrame) -> pd.DataFrame:
    """One row per (dataset, method): metric means, sample std (suffix _std), counts."""
    rows = []
    for (dataset, method), group in realizations.groupby(["dataset", "method"], sort=False):
        ok = group[group["error"] == ""]
        row = {"dataset": dataset, "method": method, "gamma": float(group["gamma"].iloc[0]),
               "realizations": len(group), "failed": len(group) - len(ok)}
        if ok.empty:
            row.update({c: np.nan for c in METRIC_COLUMNS})
            row.update({f"{c}_std": np.nan for c in METRIC_COLUMNS})
        else:
            stats = aggregate(ok[METRIC_COLUMNS].to_dict("records"))
            row.update({c: stats.loc["mean", c] for c in METRIC_COLUMNS})
            row.update({f"{c}_std": stats.loc["std", c] for c in METRIC_COLUMNS})
        rows.append(row)
    return pd.DataFrame(rows)


def format_table(summary: pd.DataFrame, digits: int = 4) -> str:
    """Aligned text with the benchmark layout: dataset, method, then the six metrics."""
    headers = ["dataset", "method"] + [TABLE_HEADERS[c] for c in METRIC_COLUMNS]
    body: List[List[str]] = []
    for _, row in summary.iterrows():
        values = ["n/a" if pd.isna(row[c]) else f"{row[c]:.{digits}f}" for c in METRIC_COLUMNS]
        body.append([str(row["dataset"]), str(row["method"])] + values)
    widths = [max(len(h), *(len(r[i]) for r in body)) if body else len(h) for i, h in enumerate(headers)]

    def line(cells):
        return "  ".join(c.ljust(w) if i < 2 else c.rjust(w) for i, (c, w) in enumerate(zip(cells, widths))).rstrip()

    out = [line(headers), line(["-" * w for w in widths])]
    out += [line(r) for r in body]
    return "\n".join(out) + "\n"


def save_report(summary: pd.DataFrame, realizations: pd.DataFrame, out_dir: Union[str, Path]) -> List[Path]:
    out_dir = Path(out_dir)
    written = [
        write_frame(realizations, out_dir / "bench_realizations.csv"),
        write_frame(summary, out_dir / "bench_summary.csv"),
    ]
    text_path = out_dir / "bench_summary.txt"
    text_path.write_text(format_table(summary), encoding="utf-8")
    written.append(text_path)
    return written
