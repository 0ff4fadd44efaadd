"""Run a pretrained language model over log templates and write the vectors.

Input: the pipeline's template TSV (template_id, support_count, template
string). Output: the shared vector file format, one row per template in TSV
order, `#dim D` header, D taken from the model's hidden size. Deterministic
for fixed model weights (inference mode, no dropout).
"""

from __future__ import annotations

from dataclasses import dataclass


class ExportError(Exception):
    """Unusable input or model; the CLI maps this to a nonzero exit."""


@dataclass
class ExportJob:
    templates_path: str
    out_path: str
    model_id: str
    pooling: str = "mean"  # mean | cls
    normalize: bool = True  # L2 per row; the consumer uses vectors as-is
    batch_size: int = 32
    device: str = "cpu"

    def __post_init__(self):
        if self.pooling not in ("mean", "cls"):
            raise ExportError(f"unknown pooling {self.pooling!r}")
        if self.batch_size < 1:
            raise ExportError("batch_size must be >= 1")


def read_template_table(path: str) -> list[tuple[int, str]]:
    """Rows of (template_id, template string), in file order."""
    rows: list[tuple[int, str]] = []
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise ExportError(f"cannot read template table: {exc}") from None
    with fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.rstrip("\n")
            if not raw:
                continue
            parts = raw.split("\t")
            if len(parts) != 3:
                raise ExportError(f"{path}:{lineno}: expected 3 tab-separated fields")
            rows.append((int(parts[0]), parts[2]))
    if not rows:
        raise ExportError(f"template table {path} is empty")
    return rows


def _load_model(model_id: str, device: str):
    import torch
    from transformers import AutoModel, AutoTokenizer

    try:
        tokenizer = AutoTokenizer.from_pretrained(model_id)
        model = AutoModel.from_pretrained(model_id)
    except Exception as exc:
        raise ExportError(f"cannot load model {model_id!r}: {exc}") from None
    try:
        model = model.to(torch.device(device))
    except Exception as exc:
        raise ExportError(f"cannot move model to device {device!r}: {exc}") from None
    model.eval()
    return tokenizer, model


def embed_texts(
    texts, tokenizer, model, pooling: str, batch_size: int, device: str,
    normalize: bool = True,
):
    """Final-layer vectors for each text: mean pooled over real tokens, or
    the leading-token state for pooling='cls'; L2-normalized per row unless
    disabled (the downstream trainer expects roughly unit-scale inputs and
    never rescales imports)."""
    import torch

    vectors = []
    with torch.no_grad():
        for start in range(0, len(texts), batch_size):
            batch = texts[start : start + batch_size]
            encoded = tokenizer(
                batch, padding=True, truncation=True, return_tensors="pt"
            ).to(device)
            hidden = model(**encoded).last_hidden_state
            if pooling == "cls":
                pooled = hidden[:, 0, :]
            else:
                mask = encoded["attention_mask"].unsqueeze(-1).to(hidden.dtype)
                pooled = (hidden * mask).sum(dim=1) / mask.sum(dim=1).clamp(min=1.0)
            pooled = pooled.double()
            if normalize:
                pooled = pooled / pooled.norm(dim=1, keepdim=True).clamp(min=1e-12)
            vectors.extend(row.cpu().tolist() for row in pooled)
    return vectors


def export(job: ExportJob) -> int:
    """Write the vector file; returns the number of rows written."""
    rows = read_template_table(job.templates_path)
    tokenizer, model = _load_model(job.model_id, job.device)
    texts = [text for _, text in rows]
    vectors = embed_texts(
        texts, tokenizer, model, job.pooling, job.batch_size, job.device,
        normalize=job.normalize,
    )
    dim = len(vectors[0])
    with open(job.out_path, "w", encoding="utf-8") as fh:
        fh.write(f"#dim {dim}\n")
        for (template_id, _), values in zip(rows, vectors):
            fh.write(str(template_id) + " " + " ".join(f"{v:.12g}" for v in values) + "\n")
    return len(rows)
