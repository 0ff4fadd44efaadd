"""Spectral clustering of node embeddings plus the majority-cluster rule.

Pipeline per the flowchart steps: Gaussian kNN similarity, symmetric
normalized Laplacian, bottom-K eigenvectors (Jacobi), row scaling, k-means.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .distance import pairwise_sq_dists
from .eigen import jacobi_eigh
from .errors import ContractViolation, DegenerateEmbedding

VERDICT_NORMAL = "Normal"
VERDICT_ABNORMAL = "Abnormal"


@dataclass
class SpectralConfig:
    clusters: int = 2
    knn: int = 10
    sigma: float | None = None  # None: median pairwise distance heuristic
    kmeans_restarts: int = 10
    kmeans_iters: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.clusters < 2:
            raise ContractViolation("clusters must be >= 2")
        if self.knn < 1:
            raise ContractViolation("knn must be >= 1")


def median_bandwidth(points: np.ndarray) -> float:
    """Median pairwise Euclidean distance; falls back to the smallest
    positive distance when over half of all pairs coincide."""
    d2 = pairwise_sq_dists(points)
    iu = np.triu_indices(points.shape[0], k=1)
    dists = np.sqrt(d2[iu])
    if dists.size == 0:
        raise DegenerateEmbedding("need at least 2 points")
    med = float(np.median(dists))
    if med > 0.0:
        return med
    positive = dists[dists > 0]
    if positive.size == 0:
        raise DegenerateEmbedding("all embedding rows identical")
    return float(positive.min())


def similarity(points: np.ndarray, cfg: SpectralConfig) -> np.ndarray:
    """Gaussian kernel restricted to the union-of-kNN pairs.

    S_ij = exp(-|z_i - z_j|^2 / (2 sigma^2)) kept when j is among i's k
    nearest neighbours or vice versa, zero elsewhere; zero diagonal.
    """
    points = np.asarray(points, dtype=np.float64)
    m = points.shape[0]
    if m < cfg.clusters:
        raise ContractViolation(f"need at least {cfg.clusters} points, got {m}")
    d2 = pairwise_sq_dists(points)
    if m > 1 and float(d2.max()) == 0.0:
        raise DegenerateEmbedding("all embedding rows identical")

    sigma = cfg.sigma if cfg.sigma is not None else median_bandwidth(points)
    if sigma <= 0:
        raise ContractViolation("sigma must be positive")
    kernel = np.exp(-d2 / (2.0 * sigma * sigma))
    np.fill_diagonal(kernel, 0.0)

    k = min(cfg.knn, m - 1)
    order = np.argsort(d2, axis=1, kind="stable")
    keep = np.zeros((m, m), dtype=bool)
    for i in range(m):
        neighbours = [j for j in order[i].tolist() if j != i][:k]
        keep[i, neighbours] = True
    keep |= keep.T
    return np.where(keep, kernel, 0.0)


def laplacian(S: np.ndarray) -> np.ndarray:
    """Symmetric normalized Laplacian I - D^-1/2 S D^-1/2.

    Zero-degree rows degrade to a plain unit diagonal row.
    """
    S = np.asarray(S, dtype=np.float64)
    deg = S.sum(axis=1)
    inv_sqrt = np.where(deg > 0, 1.0 / np.sqrt(np.where(deg > 0, deg, 1.0)), 0.0)
    return np.eye(S.shape[0]) - S * np.outer(inv_sqrt, inv_sqrt)


def smallest_eigenvectors(L: np.ndarray, k: int) -> np.ndarray:
    """Row-normalized eigenvectors of the k smallest eigenvalues."""
    _, vectors = jacobi_eigh(L)
    u = vectors[:, :k].copy()
    norms = np.linalg.norm(u, axis=1)
    nonzero = norms > 0
    u[nonzero] /= norms[nonzero, None]
    return u


@dataclass
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    sse: float
    sse_history: list[float] = field(default_factory=list)


def _kmeans_pp_init(rows: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    m = rows.shape[0]
    chosen = [int(rng.integers(m))]
    d2 = np.sum((rows - rows[chosen[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            idx = int(rng.integers(m))
        else:
            idx = int(rng.choice(m, p=d2 / total))
        chosen.append(idx)
        d2 = np.minimum(d2, np.sum((rows - rows[idx]) ** 2, axis=1))
    return rows[chosen].copy()


def _lloyd(rows: np.ndarray, centroids: np.ndarray, iters: int):
    m, k = rows.shape[0], centroids.shape[0]
    prev_labels = None
    labels = np.zeros(m, dtype=np.int64)
    sse = 0.0
    history: list[float] = []
    for _ in range(iters):
        d2 = np.sum((rows[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
        labels = np.argmin(d2, axis=1)
        sse = float(d2[np.arange(m), labels].sum())
        history.append(sse)
        if prev_labels is not None and np.array_equal(labels, prev_labels):
            break
        prev_labels = labels
        dist_to_own = d2[np.arange(m), labels].copy()
        for c in range(k):
            members = labels == c
            if members.any():
                centroids[c] = rows[members].mean(axis=0)
            else:
                # Empty cluster: re-seed its centroid at the farthest point.
                far = int(np.argmax(dist_to_own))
                centroids[c] = rows[far]
                dist_to_own[far] = -1.0
    return labels, centroids, sse, history


def kmeans(rows: np.ndarray, cfg: SpectralConfig) -> KMeansResult:
    """Lloyd's algorithm, k-means++ seeded, best of ``kmeans_restarts`` by
    SSE; ties go to the lowest restart index."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.shape[0] < cfg.clusters:
        raise ContractViolation("fewer points than clusters")
    best: KMeansResult | None = None
    for restart in range(cfg.kmeans_restarts):
        rng = np.random.default_rng([cfg.seed, restart])
        centroids = _kmeans_pp_init(rows, cfg.clusters, rng)
        labels, centroids, sse, history = _lloyd(rows, centroids, cfg.kmeans_iters)
        if best is None or sse < best.sse:
            best = KMeansResult(labels, centroids, sse, history)
    return best


@dataclass
class ClusterAssignment:
    """Per-row cluster ids with optional provenance back to log lines."""

    labels: np.ndarray
    sizes: list[int]
    provenance: list[tuple[int, int, int]] | None = None  # (graph_id, node_index, line_no)

    @property
    def n_clusters(self) -> int:
        return len(self.sizes)


def spectral_cluster(
    points: np.ndarray,
    cfg: SpectralConfig,
    provenance: list[tuple[int, int, int]] | None = None,
) -> ClusterAssignment:
    """Similarity -> Laplacian -> bottom eigenvectors -> k-means."""
    S = similarity(points, cfg)
    L = laplacian(S)
    u = smallest_eigenvectors(L, cfg.clusters)
    result = kmeans(u, cfg)
    sizes = [int((result.labels == c).sum()) for c in range(cfg.clusters)]
    return ClusterAssignment(labels=result.labels, sizes=sizes, provenance=provenance)


@dataclass
class AnomalyVerdicts:
    abnormal_cluster: int
    is_abnormal: np.ndarray  # bool per row

    def verdict_strings(self) -> list[str]:
        return [VERDICT_ABNORMAL if flag else VERDICT_NORMAL for flag in self.is_abnormal]


def label_anomalies(assignment: ClusterAssignment) -> AnomalyVerdicts:
    """Majority-cluster rule for K = 2: the smaller cluster is Abnormal.

    Exact tie: cluster 0 is Normal. Guarantees |Abnormal| <= |Normal|.
    """
    if assignment.n_clusters != 2:
        raise ContractViolation("label_anomalies requires exactly 2 clusters")
    sizes = assignment.sizes
    abnormal = 0 if sizes[0] < sizes[1] else 1
    return AnomalyVerdicts(
        abnormal_cluster=abnormal,
        is_abnormal=assignment.labels == abnormal,
    )
