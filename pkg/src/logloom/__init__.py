"""logloom: label-free log anomaly detection.

Parses raw logs into templates (Drain-style tree), encodes templates as
vectors, builds per-window causal graphs, compresses them with a dual GCN
autoencoder, and flags anomalies by spectral clustering of the node
embeddings, scored with three clustering quality indices.
"""

__version__ = "0.1.0"
