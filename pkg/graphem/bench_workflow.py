# graphem/bench_workflow.py
"""
Benchmark pipeline: GraphEM and MLEM over the requested datasets and
realizations, reported in the layout of the method-comparison table.
"""
import logging
from pathlib import Path
from typing import Any, Dict, List, TypedDict

import pandas as pd
from langgraph.graph import END, StateGraph

from .cli_logger import CLIPrinter
from .config import ExperimentConfig, dump_manifest
from .errors import GraphemError
from .load_data import write_frame
from .model import Dataset, make_dataset
from .report_aggregator import realization_frame, save_report, summary_frame
from .runner import METHODS, gamma_search, parallel_map, run_realization

logger = logging.getLogger(__name__)


class BenchState(TypedDict):
    """State that flows through the benchmark pipeline"""
    config: ExperimentConfig
    progress: bool

    # Stage 1: datasets per preset, realization r at index r
    datasets: Dict[str, List[Dataset]]

    # Stage 2: gamma per preset
    gammas: Dict[str, float]
    gamma_tables: List[pd.DataFrame]

    # Stage 3-4: scores
    realizations: pd.DataFrame
    summary: pd.DataFrame

    # Stage 5
    written: List[str]

    current_stage: str
    errors: List[str]


class BenchWorkflow:
    """
    generate_datasets -> tune_gamma -> fit_methods -> summarize -> write_report
    """

    def __init__(self, cli: CLIPrinter = None):
        self.cli = cli or CLIPrinter(quiet=True)
        self.workflow = StateGraph(BenchState)
        self._build_graph()

    def _build_graph(self):
        self.workflow.add_node("generate_datasets", self.generate_datasets_node)
        self.workflow.add_node("tune_gamma", self.tune_gamma_node)
        self.workflow.add_node("fit_methods", self.fit_methods_node)
        self.workflow.add_node("summarize", self.summarize_node)
        self.workflow.add_node("write_report", self.write_report_node)

        self.workflow.set_entry_point("generate_datasets")
        self.workflow.add_edge("generate_datasets", "tune_gamma")
        self.workflow.add_edge("tune_gamma", "fit_methods")
        self.workflow.add_edge("fit_methods", "summarize")
        self.workflow.add_edge("summarize", "write_report")
        self.workflow.add_edge("write_report", END)

        # numpy arrays and frames live in the state, so no checkpointer
        self.app = self.workflow.compile()

    # ==================== Node Implementations ====================

    def generate_datasets_node(self, state: BenchState) -> BenchState:
        config = state["config"]
        state["current_stage"] = "generating"
        self.cli.section(f"Generating {config.realizations} realization(s) for datasets {', '.join(config.datasets)}...")

        datasets: Dict[str, List[Dataset]] = {}
        for preset in config.datasets:
            try:
                datasets[preset] = [make_dataset(config.dataset_spec(r, preset)) for r in range(config.realizations)]
            except GraphemError as e:
                self.cli.error(f"Dataset {preset}: {e}")
                state["errors"].append(f"Dataset {preset}: {e}")
        state["datasets"] = datasets
        self.cli.success(f"Generated {sum(len(v) for v in datasets.values())} dataset(s)")
        return state

    def tune_gamma_node(self, state: BenchState) -> BenchState:
        config = state["config"]
        state["current_stage"] = "tuning"
        gammas: Dict[str, float] = {}
        tables: List[pd.DataFrame] = []

        for preset, datasets in state["datasets"].items():
            if config.gamma is not None:
                gammas[preset] = float(config.gamma)
                continue
            self.cli.section(f"Tuning gamma on dataset {preset}, realization 0...")
            try:
                result = gamma_search(config, datasets[0], progress=state["progress"])
            except GraphemError as e:
                self.cli.error(f"Gamma search on {preset}: {e}")
                state["errors"].append(f"Gamma search on {preset}: {e}")
                continue
            gammas[preset] = result.best_gamma
            table = result.table.copy()
            table.insert(0, "dataset", preset)
            table["gamma_max"] = result.gamma_max
            table["selected"] = table["gamma"] == result.best_gamma
            tables.append(table)
            self.cli.success(f"{preset}: gamma = {result.best_gamma:.6g} (gamma_max = {result.gamma_max:.6g})")

        state["gammas"] = gammas
        state["gamma_tables"] = tables
        return state

    def fit_methods_node(self, state: BenchState) -> BenchState:
        config = state["config"]
        state["current_stage"] = "fitting"
        frames = []

        for preset, datasets in state["datasets"].items():
            if preset not in state["gammas"]:
                continue
            for method in METHODS:
                gamma = state["gammas"][preset] if method == "graphem" else 0.0
                self.cli.section(f"Fitting {method} on dataset {preset}...")

                def one(r: int, method=method, gamma=gamma, datasets=datasets, preset=preset):
                    return run_realization(config, datasets[r], method, gamma, r, config.dataset_spec(r, preset).seed)

                outcomes = parallel_map(one, range(len(datasets)), config.jobs,
                                        desc=f"{method} {preset}", progress=state["progress"])
                for o in outcomes:
                    if not o.ok:
                        state["errors"].append(f"{method} {preset} realization {o.realization}: {o.error}")
                frames.append(realization_frame(outcomes, preset))
                failed = sum(not o.ok for o in outcomes)
                if failed:
                    self.cli.warn(f"{failed} of {len(outcomes)} {method} fit(s) failed on {preset}")
                else:
                    self.cli.success(f"{len(outcomes)} {method} fit(s) on {preset}")

        state["realizations"] = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame()
        return state

    def summarize_node(self, state: BenchState) -> BenchState:
        state["current_stage"] = "summarizing"
        if state["realizations"].empty:
            state["summary"] = pd.DataFrame()
            state["errors"].append("No fits to summarize")
            return state
        state["summary"] = summary_frame(state["realizations"])
        return state

    def write_report_node(self, state: BenchState) -> BenchState:
        config = state["config"]
        state["current_stage"] = "completed"
        out = Path(config.out)
        written: List[str] = []
        if not state["summary"].empty:
            written += [str(p) for p in save_report(state["summary"], state["realizations"], out)]
            self.cli.table(state["summary"][["dataset", "method", "rmse", "accuracy", "precision", "recall", "specificity", "f1"]],
                           title="Benchmark summary (means)")
        if state["gamma_tables"]:
            written.append(str(write_frame(pd.concat(state["gamma_tables"], ignore_index=True), out / "bench_gamma.csv")))
        manifest = {"command": "bench", "config": config.to_manifest(), "gammas": dict(state["gammas"]),
                    "errors": list(state["errors"])}
        dump_manifest(manifest, out / "manifest.yaml")
        written.append(str(out / "manifest.yaml"))
        for path in written:
            self.cli.save(path)
        state["written"] = written
        return state

    # ==================== Main Execution ====================

    def run(self, config: ExperimentConfig, progress: bool = True) -> Dict[str, Any]:
        initial_state: BenchState = {
            "config": config,
            "progress": progress,
            "datasets": {},
            "gammas": {},
            "gamma_tables": [],
            "realizations": pd.DataFrame(),
            "summary": pd.DataFrame(),
            "written": [],
            "current_stage": "initialized",
            "errors": [],
        }
        final_state = self.app.invoke(initial_state)
        logger.info("bench finished with %d error(s)", len(final_state["errors"]))
        return final_state


def run_bench(config: ExperimentConfig, cli: CLIPrinter = None, progress: bool = True) -> Dict[str, Any]:
    return BenchWorkflow(cli).run(config, progress)
