"""Window partitioning and per-window graph construction.

Nodes are log events in window order; edges come from a swappable edge rule.
The default rule combines sequential chain edges (weight 1) with bounded
same-template recurrence edges (weight 1/gap); overlapping contributions add.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, ContractViolation, FormatError
from .encoding import VectorTable
from .parsing import StructuredRecord

UNKEYED = "_unkeyed"

# An edge rule maps a window's records to {(i, j): weight} with i < j.
EdgeRule = Callable[[list[StructuredRecord]], dict[tuple[int, int], float]]


@dataclass
class WindowSpec:
    """How the record stream is cut into windows."""

    mode: str = "count"  # "count" | "session"
    count: int = 100
    session_pattern: str | None = None  # regex with one group, e.g. (blk_-?\d+)

    def __post_init__(self):
        if self.mode not in ("count", "session"):
            raise ConfigError(f"unknown window mode {self.mode!r}")
        if self.mode == "count" and self.count < 2:
            raise ConfigError("count-window size must be >= 2")
        if self.mode == "session" and not self.session_pattern:
            raise ConfigError("session mode needs a session_pattern")


@dataclass
class PartitionStats:
    dropped_windows: int = 0
    dropped_records: int = 0
    unkeyed_records: int = 0


def partition(
    records: list[StructuredRecord],
    spec: WindowSpec,
    session_texts: dict[int, str] | None = None,
) -> tuple[list[list[StructuredRecord]], PartitionStats]:
    """Cut an ordered record stream into windows.

    Count mode yields consecutive chunks; a final partial chunk survives only
    with at least 2 records. Session mode groups by the extracted session key
    (from ``session_texts``, keyed by line_no), order preserved within each
    session and windows ordered by first line_no. Records whose key cannot
    be extracted land in a reserved "_unkeyed" window. Any window smaller
    than 2 records is dropped and counted.
    """
    stats = PartitionStats()
    if spec.mode == "count":
        windows = [records[i : i + spec.count] for i in range(0, len(records), spec.count)]
    else:
        pattern = re.compile(spec.session_pattern)
        groups: dict[str, list[StructuredRecord]] = {}
        for rec in records:
            text = (session_texts or {}).get(rec.line_no, "")
            m = pattern.search(text)
            if m:
                key = m.group(1) if m.groups() else m.group(0)
            else:
                key = UNKEYED
                stats.unkeyed_records += 1
            groups.setdefault(key, []).append(rec)
        windows = sorted(groups.values(), key=lambda w: w[0].line_no)

    kept = []
    for window in windows:
        if len(window) >= 2:
            kept.append(window)
        else:
            stats.dropped_windows += 1
            stats.dropped_records += len(window)
    return kept, stats


def sequential_recurrence_edges(
    records: list[StructuredRecord], recurrence_radius: int = 10
) -> dict[tuple[int, int], float]:
    """Default edge rule: chain edges plus inverse-gap recurrence edges."""
    weights: dict[tuple[int, int], float] = {}
    n = len(records)
    for i in range(n - 1):
        weights[(i, i + 1)] = 1.0
    by_template: dict[int, list[int]] = {}
    for idx, rec in enumerate(records):
        by_template.setdefault(rec.template_id, []).append(idx)
    for positions in by_template.values():
        for a in range(len(positions)):
            for b in range(a + 1, len(positions)):
                i, j = positions[a], positions[b]
                gap = j - i
                if gap > recurrence_radius:
                    break
                weights[(i, j)] = weights.get((i, j), 0.0) + 1.0 / gap
    return weights


@dataclass
class WindowGraph:
    """One window's graph: ordered nodes, features, adjacency and weights."""

    graph_id: int
    nodes: list[tuple[int, int, int]]  # (node_index, line_no, template_id)
    X: np.ndarray  # n x D node features
    A: np.ndarray  # n x n 0/1 symmetric, zero diagonal
    Wg: np.ndarray  # n x n nonnegative, same support as A
    labels: np.ndarray | None = None  # optional per-node 0/1

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def edge_count(self) -> int:
        return int(np.count_nonzero(np.triu(self.A, 1)))


def build_graph(
    graph_id: int,
    window: list[StructuredRecord],
    vectors: VectorTable,
    recurrence_radius: int = 10,
    edge_rule: EdgeRule | None = None,
) -> WindowGraph:
    """Build one WindowGraph; pure per window, safe to run concurrently."""
    n = len(window)
    if n < 2:
        raise ContractViolation("windows must have at least 2 records")
    if edge_rule is None:
        weights = sequential_recurrence_edges(window, recurrence_radius)
    else:
        weights = edge_rule(window)

    Wg = np.zeros((n, n), dtype=np.float64)
    for (i, j), w in weights.items():
        if i == j:
            raise ContractViolation("edge rule produced a self-loop")
        Wg[i, j] += w
        Wg[j, i] += w
    A = (Wg > 0).astype(np.float64)

    X = vectors.matrix_for([rec.template_id for rec in window])
    nodes = [(idx, rec.line_no, rec.template_id) for idx, rec in enumerate(window)]
    labels = None
    if all(rec.label is not None for rec in window):
        labels = np.array([rec.label for rec in window], dtype=np.int64)
    return WindowGraph(graph_id, nodes, X, A, Wg, labels)


@dataclass
class GraphSet:
    """Ordered atlas of window graphs plus partition bookkeeping."""

    graphs: list[WindowGraph] = field(default_factory=list)
    stats: PartitionStats = field(default_factory=PartitionStats)

    def __iter__(self):
        return iter(self.graphs)

    def __len__(self):
        return len(self.graphs)

    @property
    def total_nodes(self) -> int:
        return sum(g.n for g in self.graphs)

    @property
    def total_edges(self) -> int:
        return sum(g.edge_count for g in self.graphs)


def build_graph_set(
    records: list[StructuredRecord],
    spec: WindowSpec,
    vectors: VectorTable,
    recurrence_radius: int = 10,
    session_texts: dict[int, str] | None = None,
    edge_rule: EdgeRule | None = None,
) -> GraphSet:
    windows, stats = partition(records, spec, session_texts)
    graphs = [
        build_graph(gid, window, vectors, recurrence_radius, edge_rule)
        for gid, window in enumerate(windows)
    ]
    return GraphSet(graphs=graphs, stats=stats)


# --- persistence (features reconstructed from the vector table) -----------


def write_graphs_jsonl(graph_set: GraphSet, dim: int, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for g in graph_set:
            nodes = []
            for idx, line_no, tid in g.nodes:
                node = [idx, line_no, tid]
                if g.labels is not None:
                    node.append(int(g.labels[idx]))
                nodes.append(node)
            edges = []
            rows, cols = np.nonzero(np.triu(g.Wg, 1))
            for i, j in zip(rows.tolist(), cols.tolist()):
                edges.append([i, j, float(g.Wg[i, j])])
            fh.write(
                json.dumps(
                    {"graph_id": g.graph_id, "dim": dim, "nodes": nodes, "edges": edges},
                    separators=(",", ":"),
                )
                + "\n"
            )


def read_graphs_jsonl(path, vectors: VectorTable) -> GraphSet:
    graphs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: bad JSON ({exc})") from None
            if obj["dim"] != vectors.dimension:
                raise FormatError(
                    f"{path}:{lineno}: graph dim {obj['dim']} != vector dim {vectors.dimension}"
                )
            node_rows = obj["nodes"]
            n = len(node_rows)
            nodes = [(row[0], row[1], row[2]) for row in node_rows]
            labeled = all(len(row) > 3 for row in node_rows)
            labels = (
                np.array([row[3] for row in node_rows], dtype=np.int64) if labeled else None
            )
            Wg = np.zeros((n, n), dtype=np.float64)
            for i, j, w in obj["edges"]:
                Wg[i, j] = w
                Wg[j, i] = w
            A = (Wg > 0).astype(np.float64)
            X = vectors.matrix_for([tid for _, _, tid in nodes])
            graphs.append(WindowGraph(obj["graph_id"], nodes, X, A, Wg, labels))
    return GraphSet(graphs=graphs)
