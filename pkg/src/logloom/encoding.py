"""Template vectors: a deterministic feature-hashing encoder plus an import
path for externally produced vectors.

Vector file format (shared contract): first line ``#dim D``, then one row per
template, ``template_id`` followed by D floats, single-space separated.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, MissingVector
from .parsing import WILDCARD, LogTemplate

PROVENANCE_BUILTIN = "builtin-hash"
PROVENANCE_EXTERNAL = "external-import"


def _token_hash(token: str) -> int:
    """Stable 64-bit hash of a token (independent of PYTHONHASHSEED)."""
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def token_slot(token: str, dim: int) -> tuple[int, float]:
    """Hash a token to (index, sign) with index in [0, dim)."""
    h = _token_hash(token)
    return h % dim, 1.0 if (h >> 63) & 1 else -1.0


@dataclass
class TemplateVector:
    template_id: int
    values: np.ndarray


def encode_builtin(template: LogTemplate, dim: int = 64) -> TemplateVector:
    """Signed feature-hashed bag of the template's constant tokens.

    Each constant token adds +-1 at its hashed index; wildcard tokens add
    their count at index 0; the result is L2-normalized. Pure function of
    (tokens, dim).
    """
    if dim < 8:
        raise ValueError("dim must be >= 8")
    v = np.zeros(dim, dtype=np.float64)
    v[0] = template.wildcard_count
    for token in template.constant_tokens:
        idx, sign = token_slot(token, dim)
        v[idx] += sign
    norm = float(np.linalg.norm(v))
    if norm < 1e-12:
        # Exact sign cancellation across all slots; fall back to a fixed
        # basis vector so the unit-norm invariant holds.
        v[0] = 1.0
        norm = 1.0
    return TemplateVector(template.template_id, v / norm)


@dataclass
class VectorTable:
    """Per-run map from template id to its vector, with provenance."""

    dimension: int
    provenance: str
    vectors: dict[int, np.ndarray] = field(default_factory=dict)

    def vector(self, template_id: int) -> np.ndarray:
        try:
            return self.vectors[template_id]
        except KeyError:
            raise MissingVector(template_id) from None

    def require_cover(self, template_ids) -> None:
        """Fail fast when any required template id lacks a vector."""
        for tid in template_ids:
            if tid not in self.vectors:
                raise MissingVector(tid)

    def matrix_for(self, template_ids) -> np.ndarray:
        return np.stack([self.vector(t) for t in template_ids])


def build_table(templates: dict[int, LogTemplate], dim: int = 64) -> VectorTable:
    table = VectorTable(dimension=dim, provenance=PROVENANCE_BUILTIN)
    for tid in sorted(templates):
        table.vectors[tid] = encode_builtin(templates[tid], dim).values
    return table


def write_vectors(table: VectorTable, path) -> None:
    """Serialize a VectorTable in the shared vector file format."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"#dim {table.dimension}\n")
        for tid in sorted(table.vectors):
            row = " ".join(f"{x:.12g}" for x in table.vectors[tid])
            fh.write(f"{tid} {row}\n")


def import_vectors(path) -> VectorTable:
    """Load externally produced vectors.

    Rows must all match the declared dimension and hold finite values.
    Imported vectors are used as-is, without renormalization.
    """
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith("#dim "):
            raise FormatError(f"vector file must start with '#dim D': {path}")
        try:
            dim = int(header.split()[1])
        except (IndexError, ValueError):
            raise FormatError(f"bad dimension header {header!r}") from None
        table = VectorTable(dimension=dim, provenance=PROVENANCE_EXTERNAL)
        for lineno, raw in enumerate(fh, start=2):
            raw = raw.strip()
            if not raw:
                continue
            parts = raw.split()
            if len(parts) != dim + 1:
                raise FormatError(
                    f"{path}:{lineno}: expected {dim} values, got {len(parts) - 1}"
                )
            tid = int(parts[0])
            values = np.array([float(x) for x in parts[1:]], dtype=np.float64)
            if not np.all(np.isfinite(values)):
                raise FormatError(f"{path}:{lineno}: non-finite value")
            if tid in table.vectors:
                raise FormatError(f"{path}:{lineno}: duplicate template_id {tid}")
            table.vectors[tid] = values
    return table
