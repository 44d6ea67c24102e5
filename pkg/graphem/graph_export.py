# graphem/graph_export.py
"""Directed-graph view of a transition matrix: edge m -> n whenever |A[n, m]| > threshold."""
import logging
from pathlib import Path
from typing import Union

import networkx as nx
import numpy as np

from .errors import InputFormatError
from .metrics import DEFAULT_EDGE_THRESHOLD

logger = logging.getLogger(__name__)


def node_name(index: int) -> str:
    return f"x{index + 1}"


def transition_graph(A, threshold: float = DEFAULT_EDGE_THRESHOLD) -> nx.DiGraph:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InputFormatError(f"transition matrix must be square, got shape {A.shape}")
    n = A.shape[0]
    graph = nx.DiGraph()
    graph.add_nodes_from((node_name(i), {"index": i}) for i in range(n))
    rows, cols = np.nonzero(np.abs(A) > threshold)
    for target, source in zip(rows, cols):
        graph.add_edge(node_name(source), node_name(target), weight=float(A[target, source]))
    return graph


def _label(weight: float) -> str:
    # + 0.0 turns -0.0 into 0.0
    return f"{round(weight, 3) + 0.0:.3f}"


def to_dot(graph: nx.DiGraph, name: str = "A") -> str:
    """DOT text with nodes in index order and edges sorted by (source, target) index."""
    index = nx.get_node_attributes(graph, "index")
    nodes = sorted(graph.nodes, key=index.__getitem__)
    edges = sorted(graph.edges(data="weight"), key=lambda e: (index[e[0]], index[e[1]]))
    lines = [f"digraph {name} {{"]
    lines += [f"  {node};" for node in nodes]
    lines += [f'  {u} -> {v} [label="{_label(w)}"];' for u, v, w in edges]
    lines.append("}")
    return "\n".join(lines) + "\n"


def write_dot(A, path: Union[str, Path], threshold: float = DEFAULT_EDGE_THRESHOLD, name: str = "A") -> nx.DiGraph:
    graph = transition_graph(A, threshold)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(to_dot(graph, name), encoding="utf-8")
    logger.info("Wrote %d nodes and %d edges to %s", graph.number_of_nodes(), graph.number_of_edges(), path)
    return graph
