"""Clustering quality indices and supervised accuracy.

Silhouette, Davies-Bouldin (q = 2) and Calinski-Harabasz are computed with
Euclidean distances over whichever point set the caller passes (the pipeline
default is the raw embedding rows). Calinski-Harabasz degenerates to the
+inf sentinel when the within-cluster scatter vanishes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distance import pairwise_dists
from .errors import MetricUndefined


def _check_points(points: np.ndarray, labels: np.ndarray):
    points = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels)
    if points.ndim != 2 or points.shape[0] != labels.shape[0]:
        raise MetricUndefined("points and labels must align")
    clusters = np.unique(labels)
    if clusters.size < 2:
        raise MetricUndefined("need at least 2 clusters")
    return points, labels, clusters


def silhouette(points: np.ndarray, labels: np.ndarray) -> float:
    """Mean silhouette score; singleton clusters contribute 0 by convention."""
    points, labels, clusters = _check_points(points, labels)
    m = points.shape[0]
    dist = pairwise_dists(points)

    members = {c: np.flatnonzero(labels == c) for c in clusters}
    scores = np.zeros(m)
    for i in range(m):
        own = members[labels[i]]
        if own.size == 1:
            scores[i] = 0.0
            continue
        a_i = dist[i, own].sum() / (own.size - 1)
        b_i = min(dist[i, members[c]].mean() for c in clusters if c != labels[i])
        denom = max(a_i, b_i)
        scores[i] = 0.0 if denom == 0.0 else (b_i - a_i) / denom
    return float(scores.mean())


def davies_bouldin(points: np.ndarray, labels: np.ndarray, q: int = 2) -> float:
    """Mean over clusters of the worst scatter-to-separation ratio.

    q = 2 uses RMS point-to-centroid distance for scatter and Euclidean
    centroid separation. Coincident centroids make the index undefined.
    """
    points, labels, clusters = _check_points(points, labels)
    centroids = np.stack([points[labels == c].mean(axis=0) for c in clusters])
    scatters = []
    for idx, c in enumerate(clusters):
        pts = points[labels == c]
        dists = np.linalg.norm(pts - centroids[idx], axis=1)
        scatters.append(float(np.mean(dists**q) ** (1.0 / q)))

    k = clusters.size
    worst = np.zeros(k)
    for i in range(k):
        for j in range(k):
            if i == j:
                continue
            sep = float(np.sum(np.abs(centroids[i] - centroids[j]) ** q) ** (1.0 / q))
            if sep == 0.0:
                raise MetricUndefined("coincident centroids")
            ratio = (scatters[i] + scatters[j]) / sep
            worst[i] = max(worst[i], ratio)
    return float(worst.mean())


def calinski_harabasz(points: np.ndarray, labels: np.ndarray) -> float:
    """Between/within dispersion ratio scaled by degrees of freedom.

    Returns math.inf when the within-cluster scatter is exactly zero.
    """
    points, labels, clusters = _check_points(points, labels)
    n, k = points.shape[0], clusters.size
    global_centroid = points.mean(axis=0)
    tr_b = 0.0
    tr_w = 0.0
    for c in clusters:
        pts = points[labels == c]
        centroid = pts.mean(axis=0)
        tr_b += pts.shape[0] * float(np.sum((centroid - global_centroid) ** 2))
        tr_w += float(np.sum((pts - centroid) ** 2))
    if tr_w == 0.0:
        return math.inf
    return (tr_b * (n - k)) / (tr_w * (k - 1))


@dataclass
class AccuracyResult:
    value: float
    scored: int
    skipped: int


def accuracy(predicted: np.ndarray, truth) -> AccuracyResult:
    """Fraction of lines whose 0/1 verdict matches the label.

    ``truth`` entries of None (or negative) are skipped and counted.
    """
    predicted = np.asarray(predicted).astype(int)
    hits = 0
    scored = 0
    skipped = 0
    for pred, label in zip(predicted, truth):
        if label is None or (isinstance(label, (int, np.integer)) and label < 0):
            skipped += 1
            continue
        scored += 1
        if int(label) == int(pred):
            hits += 1
    if scored == 0:
        raise MetricUndefined("no labeled lines to score")
    return AccuracyResult(hits / scored, scored, skipped)


@dataclass
class MetricReport:
    silhouette: float
    davies_bouldin: float
    calinski_harabasz: float
    log_calinski_harabasz: float
    accuracy: float | None = None
    accuracy_scored: int | None = None
    accuracy_skipped: int | None = None

    def to_dict(self) -> dict:
        def clean(x):
            if x is None:
                return None
            if isinstance(x, float) and math.isinf(x):
                return "inf"
            return x

        out = {
            "silhouette": clean(self.silhouette),
            "davies_bouldin": clean(self.davies_bouldin),
            "calinski_harabasz": clean(self.calinski_harabasz),
            "log_calinski_harabasz": clean(self.log_calinski_harabasz),
        }
        if self.accuracy is not None:
            out["accuracy"] = self.accuracy
            out["accuracy_scored"] = self.accuracy_scored
            out["accuracy_skipped"] = self.accuracy_skipped
        return out


def metric_report(
    points: np.ndarray,
    labels: np.ndarray,
    predicted: np.ndarray | None = None,
    truth=None,
) -> MetricReport:
    ch = calinski_harabasz(points, labels)
    report = MetricReport(
        silhouette=silhouette(points, labels),
        davies_bouldin=davies_bouldin(points, labels),
        calinski_harabasz=ch,
        log_calinski_harabasz=math.log(ch) if ch > 0 else -math.inf,
    )
    if predicted is not None and truth is not None:
        acc = accuracy(predicted, truth)
        report.accuracy = acc.value
        report.accuracy_scored = acc.scored
        report.accuracy_skipped = acc.skipped
    return report
