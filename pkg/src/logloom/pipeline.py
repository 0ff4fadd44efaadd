"""Stage orchestration: parse -> encode -> graph -> train -> detect -> report.

Each stage reads its upstream artifacts from the output directory, writes its
own artifact plus a small meta sidecar, and is individually re-runnable.
Artifacts are deterministic under a fixed config; wall-times live only in
the sidecars and the report's wall_times object.
"""

from __future__ import annotations

import csv
import json
import os
import shutil
import time
from dataclasses import dataclass, field

import numpy as np

from . import autoencoder, clustering, metrics
from .datasets import DatasetManifest, load_dataset, load_manifest, read_kv_file
from .encoding import VectorTable, build_table, import_vectors, write_vectors
from .errors import ConfigError, DependencyError
from .graphs import WindowSpec, build_graph_set, read_graphs_jsonl, write_graphs_jsonl
from .parsing import (
    ParseTree,
    StructuredRecord,
    read_structured_csv,
    read_template_tsv,
    write_structured_csv,
    write_template_tsv,
)

ARTIFACTS = {
    "templates": "templates.tsv",
    "structured": "structured.csv",
    "vectors": "vectors.vec",
    "graphs": "graphs.jsonl",
    "weights": "weights.dgae",
    "loss_trace": "loss_trace.csv",
    "assignments": "assignments.csv",
    "report": "report.json",
}

STAGE_OF_ARTIFACT = {
    "templates": "parse",
    "structured": "parse",
    "vectors": "encode",
    "graphs": "graph",
    "weights": "train",
    "loss_trace": "train",
    "assignments": "detect",
    "report": "report",
}


@dataclass
class RunConfig:
    manifest_path: str
    out_dir: str = "out"
    seed: int = 0
    encoder: str = "builtin"  # builtin | import
    dim: int = 64
    vectors_path: str | None = None
    recurrence_radius: int = 10
    window_mode: str | None = None  # optional manifest overrides
    window_count: int | None = None
    session_regex: str | None = None
    hidden1: int = 32
    hidden2: int = 16
    reg_weight: float = 0.1
    learning_rate: float = 0.01
    epochs: int = 200
    clusters: int = 2
    knn: int = 10
    sigma: float | None = None
    kmeans_restarts: int = 10
    kmeans_iters: int = 100
    max_cluster_nodes: int = 600  # node budget for the seeded window sampler
    metric_space: str = "embedding"  # embedding | spectral

    def __post_init__(self):
        if self.encoder not in ("builtin", "import"):
            raise ConfigError(f"unknown encoder {self.encoder!r}")
        if self.encoder == "import" and not self.vectors_path:
            raise ConfigError("encoder=import needs vectors=<path>")
        if self.metric_space not in ("embedding", "spectral"):
            raise ConfigError(f"unknown metric_space {self.metric_space!r}")

    # -- config file ------------------------------------------------------

    @classmethod
    def from_file(cls, path, seed_override=None, out_override=None) -> "RunConfig":
        kv = read_kv_file(path)
        base = os.path.dirname(os.path.abspath(path))

        def resolve(p):
            return p if os.path.isabs(p) else os.path.join(base, p)

        if "manifest" not in kv:
            raise ConfigError(f"{path}: missing 'manifest' key")

        def get(key, cast, default):
            if key not in kv:
                return default
            try:
                return cast(kv[key])
            except ValueError:
                raise ConfigError(f"{path}: bad value for {key}: {kv[key]!r}") from None

        sigma_raw = kv.get("sigma", "median")
        sigma = None if sigma_raw == "median" else float(sigma_raw)
        cfg = cls(
            manifest_path=resolve(kv["manifest"]),
            out_dir=resolve(kv.get("out", "out")),
            seed=get("seed", int, 0),
            encoder=kv.get("encoder", "builtin"),
            dim=get("dim", int, 64),
            vectors_path=resolve(kv["vectors"]) if kv.get("vectors") else None,
            recurrence_radius=get("recurrence_radius", int, 10),
            window_mode=kv.get("window_mode"),
            window_count=get("window_count", int, None),
            session_regex=kv.get("session_regex"),
            hidden1=get("hidden1", int, 32),
            hidden2=get("hidden2", int, 16),
            reg_weight=get("lambda", float, get("reg_weight", float, 0.1)),
            learning_rate=get("learning_rate", float, 0.01),
            epochs=get("epochs", int, 200),
            clusters=get("clusters", int, 2),
            knn=get("knn", int, 10),
            sigma=sigma,
            kmeans_restarts=get("kmeans_restarts", int, 10),
            kmeans_iters=get("kmeans_iters", int, 100),
            max_cluster_nodes=get("max_cluster_nodes", int, 600),
            metric_space=kv.get("metric_space", "embedding"),
        )
        if seed_override is not None:
            cfg.seed = seed_override
        if out_override is not None:
            cfg.out_dir = out_override
        return cfg

    def echo(self) -> dict:
        return {
            "manifest": self.manifest_path,
            "seed": self.seed,
            "encoder": self.encoder,
            "dim": self.dim,
            "vectors": self.vectors_path,
            "recurrence_radius": self.recurrence_radius,
            "window_mode": self.window_mode,
            "window_count": self.window_count,
            "hidden1": self.hidden1,
            "hidden2": self.hidden2,
            "reg_weight": self.reg_weight,
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "clusters": self.clusters,
            "knn": self.knn,
            "sigma": self.sigma if self.sigma is not None else "median",
            "kmeans_restarts": self.kmeans_restarts,
            "kmeans_iters": self.kmeans_iters,
            "max_cluster_nodes": self.max_cluster_nodes,
            "metric_space": self.metric_space,
        }


def artifact_path(cfg: RunConfig, name: str) -> str:
    return os.path.join(cfg.out_dir, ARTIFACTS[name])


def _require(cfg: RunConfig, *names: str) -> None:
    for name in names:
        path = artifact_path(cfg, name)
        if not os.path.isfile(path):
            raise DependencyError(
                f"missing {ARTIFACTS[name]}; run 'logloom {STAGE_OF_ARTIFACT[name]}' first"
            )


def _write_meta(cfg: RunConfig, stage: str, payload: dict) -> None:
    meta_dir = os.path.join(cfg.out_dir, "meta")
    os.makedirs(meta_dir, exist_ok=True)
    with open(os.path.join(meta_dir, f"{stage}.json"), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_meta(cfg: RunConfig, stage: str) -> dict:
    path = os.path.join(cfg.out_dir, "meta", f"{stage}.json")
    if not os.path.isfile(path):
        raise DependencyError(f"missing meta/{stage}.json; run 'logloom {stage}' first")
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _window_spec(cfg: RunConfig, manifest: DatasetManifest) -> WindowSpec:
    if cfg.window_mode is None and cfg.window_count is None and cfg.session_regex is None:
        return manifest.window
    return WindowSpec(
        mode=cfg.window_mode or manifest.window.mode,
        count=cfg.window_count or manifest.window.count,
        session_pattern=cfg.session_regex or manifest.window.session_pattern,
    )


# --- stages ----------------------------------------------------------------


def run_parse(cfg: RunConfig) -> dict:
    started = time.perf_counter()
    manifest = load_manifest(cfg.manifest_path)
    loaded = load_dataset(manifest)
    tree = ParseTree()
    structured = []
    for rec in loaded.records:
        tid = tree.parse(rec)
        label = loaded.labels.get(rec.line_no) if loaded.labels is not None else None
        structured.append(StructuredRecord(rec.line_no, tid, label))
    os.makedirs(cfg.out_dir, exist_ok=True)
    write_template_tsv(tree.templates, artifact_path(cfg, "templates"))
    write_structured_csv(structured, artifact_path(cfg, "structured"))
    meta = {
        "dataset": manifest.name,
        "lines_kept": len(structured),
        "lines_malformed": loaded.malformed_count,
        "templates": len(tree.templates),
        "labeled": loaded.labels is not None,
        "wall_sec": time.perf_counter() - started,
    }
    _write_meta(cfg, "parse", meta)
    return meta


def run_encode(cfg: RunConfig) -> dict:
    started = time.perf_counter()
    _require(cfg, "templates")
    templates = read_template_tsv(artifact_path(cfg, "templates"))
    out_path = artifact_path(cfg, "vectors")
    if cfg.encoder == "builtin":
        table = build_table(templates, cfg.dim)
        write_vectors(table, out_path)
        dim = cfg.dim
    else:
        table = import_vectors(cfg.vectors_path)
        table.require_cover(templates.keys())
        shutil.copyfile(cfg.vectors_path, out_path)
        dim = table.dimension
    meta = {
        "encoder": cfg.encoder,
        "dim": dim,
        "vectors": len(table.vectors),
        "wall_sec": time.perf_counter() - started,
    }
    _write_meta(cfg, "encode", meta)
    return meta


def _session_texts(cfg: RunConfig, manifest: DatasetManifest) -> dict[int, str]:
    loaded = load_dataset(
        DatasetManifest(
            name=manifest.name,
            raw_path=manifest.raw_path,
            header_format=manifest.header_format,
            window=manifest.window,
        )
    )
    return {rec.line_no: rec.content for rec in loaded.records}


def run_graph(cfg: RunConfig) -> dict:
    started = time.perf_counter()
    _require(cfg, "structured", "vectors")
    manifest = load_manifest(cfg.manifest_path)
    spec = _window_spec(cfg, manifest)
    records = read_structured_csv(artifact_path(cfg, "structured"))
    vectors = import_vectors(artifact_path(cfg, "vectors"))
    session_texts = _session_texts(cfg, manifest) if spec.mode == "session" else None
    graph_set = build_graph_set(
        records, spec, vectors, cfg.recurrence_radius, session_texts
    )
    write_graphs_jsonl(graph_set, vectors.dimension, artifact_path(cfg, "graphs"))
    meta = {
        "windows": len(graph_set),
        "nodes": graph_set.total_nodes,
        "edges": graph_set.total_edges,
        "dropped_windows": graph_set.stats.dropped_windows,
        "dropped_records": graph_set.stats.dropped_records,
        "unkeyed_records": graph_set.stats.unkeyed_records,
        "wall_sec": time.perf_counter() - started,
    }
    _write_meta(cfg, "graph", meta)
    return meta


def run_train(cfg: RunConfig) -> dict:
    started = time.perf_counter()
    _require(cfg, "graphs", "vectors")
    vectors = import_vectors(artifact_path(cfg, "vectors"))
    graph_set = read_graphs_jsonl(artifact_path(cfg, "graphs"), vectors)
    train_cfg = autoencoder.TrainConfig(
        hidden1=cfg.hidden1,
        hidden2=cfg.hidden2,
        reg_weight=cfg.reg_weight,
        learning_rate=cfg.learning_rate,
        epochs=cfg.epochs,
        seed=cfg.seed,
    )
    result = autoencoder.train(graph_set, train_cfg)
    autoencoder.save_weights(result.weights, artifact_path(cfg, "weights"))
    autoencoder.write_loss_trace(result.loss_trace, artifact_path(cfg, "loss_trace"))
    meta = {
        "epochs": cfg.epochs,
        "first_loss": result.loss_trace[0],
        "final_loss": result.loss_trace[-1],
        "wall_sec": time.perf_counter() - started,
    }
    _write_meta(cfg, "train", meta)
    return meta


def _sample_graphs(graph_set, budget: int, seed: int):
    """Seeded uniform window sample under a node budget (order preserved)."""
    graphs = list(graph_set)
    rng = np.random.default_rng([seed, 202])
    order = rng.permutation(len(graphs))
    chosen = []
    total = 0
    for idx in order.tolist():
        n = graphs[idx].n
        if total + n > budget and chosen:
            continue
        chosen.append(idx)
        total += n
        if total >= budget:
            break
    chosen.sort()
    return [graphs[i] for i in chosen], total


def run_detect(cfg: RunConfig) -> dict:
    started = time.perf_counter()
    _require(cfg, "graphs", "vectors", "weights")
    vectors = import_vectors(artifact_path(cfg, "vectors"))
    graph_set = read_graphs_jsonl(artifact_path(cfg, "graphs"), vectors)
    weights = autoencoder.load_weights(artifact_path(cfg, "weights"))
    embeddings = autoencoder.embed_all(graph_set, weights)

    spectral_cfg = clustering.SpectralConfig(
        clusters=cfg.clusters,
        knn=cfg.knn,
        sigma=cfg.sigma,
        kmeans_restarts=cfg.kmeans_restarts,
        kmeans_iters=cfg.kmeans_iters,
        seed=cfg.seed,
    )

    total_nodes = embeddings.Zcat.shape[0]
    sampled_nodes = None
    if total_nodes > cfg.max_cluster_nodes:
        sampled, sampled_nodes = _sample_graphs(graph_set, cfg.max_cluster_nodes, cfg.seed)
        sample_embeddings = autoencoder.embed_all(sampled, weights)
        sample_assign = clustering.spectral_cluster(sample_embeddings.Zcat, spectral_cfg)
        # Extend to every node: each takes the cluster of its nearest
        # sampled node in embedding space.
        labels = np.empty(embeddings.Zcat.shape[0], dtype=np.int64)
        chunk = 2048
        for lo in range(0, embeddings.Zcat.shape[0], chunk):
            hi = min(lo + chunk, embeddings.Zcat.shape[0])
            d2 = np.sum(
                (embeddings.Zcat[lo:hi, None, :] - sample_embeddings.Zcat[None, :, :]) ** 2,
                axis=2,
            )
            labels[lo:hi] = sample_assign.labels[np.argmin(d2, axis=1)]
    else:
        assign = clustering.spectral_cluster(embeddings.Zcat, spectral_cfg)
        labels = assign.labels

    sizes = [int((labels == c).sum()) for c in range(cfg.clusters)]
    assignment = clustering.ClusterAssignment(
        labels=labels, sizes=sizes, provenance=embeddings.provenance
    )
    verdicts = clustering.label_anomalies(assignment)

    with open(artifact_path(cfg, "assignments"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["line_no", "graph_id", "node_index", "cluster", "verdict"])
        strings = verdicts.verdict_strings()
        for row, (graph_id, node_index, line_no) in enumerate(embeddings.provenance):
            writer.writerow([line_no, graph_id, node_index, int(labels[row]), strings[row]])

    meta = {
        "cluster_sizes": sizes,
        "abnormal_cluster": verdicts.abnormal_cluster,
        "abnormal_rows": int(verdicts.is_abnormal.sum()),
        "sampled_nodes": sampled_nodes,
        "total_nodes": total_nodes,
        "wall_sec": time.perf_counter() - started,
    }
    _write_meta(cfg, "detect", meta)
    return meta


def read_assignments(path) -> list[dict]:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            rows.append(
                {
                    "line_no": int(row["line_no"]),
                    "graph_id": int(row["graph_id"]),
                    "node_index": int(row["node_index"]),
                    "cluster": int(row["cluster"]),
                    "verdict": row["verdict"],
                }
            )
    return rows


def run_report(cfg: RunConfig) -> dict:
    started = time.perf_counter()
    _require(
        cfg, "templates", "structured", "vectors", "graphs",
        "weights", "loss_trace", "assignments",
    )
    manifest = load_manifest(cfg.manifest_path)
    vectors = import_vectors(artifact_path(cfg, "vectors"))
    graph_set = read_graphs_jsonl(artifact_path(cfg, "graphs"), vectors)
    weights = autoencoder.load_weights(artifact_path(cfg, "weights"))
    embeddings = autoencoder.embed_all(graph_set, weights)
    rows = read_assignments(artifact_path(cfg, "assignments"))
    if len(rows) != embeddings.Zcat.shape[0]:
        raise DependencyError("assignments do not match the graph atlas; rerun 'logloom detect'")
    labels = np.array([r["cluster"] for r in rows], dtype=np.int64)
    predicted = np.array(
        [1 if r["verdict"] == clustering.VERDICT_ABNORMAL else 0 for r in rows], dtype=np.int64
    )

    if cfg.metric_space == "embedding":
        points = embeddings.Zcat
    else:
        if embeddings.Zcat.shape[0] > cfg.max_cluster_nodes:
            raise ConfigError(
                "metric_space=spectral needs a full eigendecomposition; "
                f"{embeddings.Zcat.shape[0]} nodes exceed max_cluster_nodes"
            )
        spectral_cfg = clustering.SpectralConfig(
            clusters=cfg.clusters,
            knn=cfg.knn,
            sigma=cfg.sigma,
            kmeans_restarts=cfg.kmeans_restarts,
            kmeans_iters=cfg.kmeans_iters,
            seed=cfg.seed,
        )
        S = clustering.similarity(embeddings.Zcat, spectral_cfg)
        points = clustering.smallest_eigenvectors(clustering.laplacian(S), cfg.clusters)

    truth = None
    if embeddings.labels is not None:
        truth = [int(x) for x in embeddings.labels]
    report_metrics = metrics.metric_report(
        points, labels, predicted if truth is not None else None, truth
    )

    loss_trace = []
    with open(artifact_path(cfg, "loss_trace"), encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            if line.strip():
                loss_trace.append(float(line.split(",")[1]))

    parse_meta = _read_meta(cfg, "parse")
    graph_meta = _read_meta(cfg, "graph")
    detect_meta = _read_meta(cfg, "detect")
    train_meta = _read_meta(cfg, "train")
    encode_meta = _read_meta(cfg, "encode")

    sizes = detect_meta["cluster_sizes"]
    abnormal_rows = detect_meta["abnormal_rows"]
    report = {
        "dataset": manifest.name,
        "counts": {
            "lines_kept": parse_meta["lines_kept"],
            "lines_malformed": parse_meta["lines_malformed"],
            "templates": parse_meta["templates"],
            "windows": graph_meta["windows"],
            "dropped_windows": graph_meta["dropped_windows"],
            "dropped_records": graph_meta["dropped_records"],
            "nodes": graph_meta["nodes"],
            "edges": graph_meta["edges"],
        },
        "loss": {
            "epochs": len(loss_trace),
            "first": loss_trace[0],
            "final": loss_trace[-1],
            "decrease_ratio": 1.0 - loss_trace[-1] / loss_trace[0] if loss_trace[0] else 0.0,
        },
        "clusters": {
            "sizes": sizes,
            "abnormal_cluster": detect_meta["abnormal_cluster"],
            "abnormal_rows": abnormal_rows,
            "abnormal_fraction": abnormal_rows / max(1, sum(sizes)),
            "sampled_nodes": detect_meta["sampled_nodes"],
        },
        "metrics": report_metrics.to_dict(),
        "config": cfg.echo(),
        "wall_times_sec": {
            "parse": parse_meta["wall_sec"],
            "encode": encode_meta["wall_sec"],
            "graph": graph_meta["wall_sec"],
            "train": train_meta["wall_sec"],
            "detect": detect_meta["wall_sec"],
            "report": time.perf_counter() - started,
        },
    }
    with open(artifact_path(cfg, "report"), "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return report


STAGES = {
    "parse": run_parse,
    "encode": run_encode,
    "graph": run_graph,
    "train": run_train,
    "detect": run_detect,
    "report": run_report,
}


def run_all(cfg: RunConfig) -> dict:
    for stage in ("parse", "encode", "graph", "train", "detect"):
        STAGES[stage](cfg)
    return run_report(cfg)
