"""lm-embed: export language-model template embeddings for the detection
pipeline's vector file contract."""

__version__ = "0.1.0"
