import os
import subprocess
import sys

import pytest

os.environ.setdefault("HF_HUB_OFFLINE", "1")
os.environ.setdefault("TRANSFORMERS_OFFLINE", "1")

from lm_embed.cli import main as cli_main
from lm_embed.exporter import ExportError, ExportJob, export, read_template_table

TEMPLATES = [
    (0, 4, "PacketResponder <*> for block blk_<*> terminating"),
    (1, 2, "Received block blk_<*> src: <*> dest: <*> of size <*>"),
    (3, 9, "scheduler assigned <*> batch <*>"),
]


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory):
    """A local 768-dim BERT with random (but fixed) weights; no network."""
    import torch
    from transformers import BertConfig, BertModel, BertTokenizerFast

    model_dir = tmp_path_factory.mktemp("tinybert")
    vocab = [
        "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
        "packet", "responder", "for", "block", "blk", "_", "<", "*", ">",
        "terminating", "received", "src", ":", "dest", "of", "size",
        "scheduler", "assigned", "batch", "##s",
    ]
    (model_dir / "vocab.txt").write_text("\n".join(vocab) + "\n")
    tokenizer = BertTokenizerFast(vocab_file=str(model_dir / "vocab.txt"))
    tokenizer.save_pretrained(model_dir)
    config = BertConfig(
        vocab_size=len(vocab),
        hidden_size=768,
        num_hidden_layers=2,
        num_attention_heads=4,
        intermediate_size=256,
        max_position_embeddings=128,
    )
    torch.manual_seed(1234)
    BertModel(config).save_pretrained(model_dir)
    return str(model_dir)


@pytest.fixture()
def template_tsv(tmp_path):
    path = tmp_path / "templates.tsv"
    path.write_text("".join(f"{t}\t{n}\t{s}\n" for t, n, s in TEMPLATES))
    return str(path)


class TestTemplateTable:
    def test_reads_rows_in_order(self, template_tsv):
        rows = read_template_table(template_tsv)
        assert [t for t, _ in rows] == [0, 1, 3]

    def test_empty_table_rejected(self, tmp_path):
        path = tmp_path / "empty.tsv"
        path.write_text("")
        with pytest.raises(ExportError):
            read_template_table(str(path))


class TestExport:
    def test_shape_and_header(self, tiny_model_dir, template_tsv, tmp_path):
        out = tmp_path / "vectors.vec"
        count = export(ExportJob(template_tsv, str(out), tiny_model_dir))
        assert count == 3
        lines = out.read_text().splitlines()
        assert lines[0] == "#dim 768"
        assert len(lines) == 4
        for line, (tid, _, _) in zip(lines[1:], TEMPLATES):
            parts = line.split(" ")
            assert parts[0] == str(tid)
            assert len(parts) == 769

    def test_deterministic(self, tiny_model_dir, template_tsv, tmp_path):
        a = tmp_path / "a.vec"
        b = tmp_path / "b.vec"
        export(ExportJob(template_tsv, str(a), tiny_model_dir))
        export(ExportJob(template_tsv, str(b), tiny_model_dir))
        assert a.read_bytes() == b.read_bytes()

    def test_pooling_modes_differ(self, tiny_model_dir, template_tsv, tmp_path):
        mean_path = tmp_path / "mean.vec"
        cls_path = tmp_path / "cls.vec"
        export(ExportJob(template_tsv, str(mean_path), tiny_model_dir, pooling="mean"))
        export(ExportJob(template_tsv, str(cls_path), tiny_model_dir, pooling="cls"))
        assert mean_path.read_bytes() != cls_path.read_bytes()

    def test_rows_unit_norm_by_default(self, tiny_model_dir, template_tsv, tmp_path):
        import math

        out = tmp_path / "unit.vec"
        raw = tmp_path / "raw.vec"
        export(ExportJob(template_tsv, str(out), tiny_model_dir))
        export(ExportJob(template_tsv, str(raw), tiny_model_dir, normalize=False))
        for line in out.read_text().splitlines()[1:]:
            values = [float(x) for x in line.split()[1:]]
            assert math.isclose(math.hypot(*values), 1.0, abs_tol=1e-9)
        raw_values = [float(x) for x in raw.read_text().splitlines()[1].split()[1:]]
        assert math.hypot(*raw_values) > 1.5

    def test_roundtrip_through_primary_import(self, tiny_model_dir, template_tsv, tmp_path):
        # Cross-component contract: the detection pipeline must accept the file.
        from logloom.encoding import import_vectors

        out = tmp_path / "vectors.vec"
        export(ExportJob(template_tsv, str(out), tiny_model_dir))
        table = import_vectors(str(out))
        assert table.dimension == 768
        assert len(table.vectors) == len(TEMPLATES)
        assert set(table.vectors) == {0, 1, 3}
        table.require_cover([0, 1, 3])


class TestCli:
    def test_success_exit_zero(self, tiny_model_dir, template_tsv, tmp_path):
        out = tmp_path / "v.vec"
        code = cli_main(
            ["--templates", template_tsv, "--out", str(out), "--model", tiny_model_dir]
        )
        assert code == 0
        assert out.exists()

    def test_model_load_failure_nonzero(self, template_tsv, tmp_path):
        code = cli_main(
            [
                "--templates", template_tsv,
                "--out", str(tmp_path / "v.vec"),
                "--model", str(tmp_path / "no-model-here"),
            ]
        )
        assert code == 1

    def test_empty_table_nonzero(self, tiny_model_dir, tmp_path):
        empty = tmp_path / "empty.tsv"
        empty.write_text("")
        code = cli_main(
            [
                "--templates", str(empty),
                "--out", str(tmp_path / "v.vec"),
                "--model", tiny_model_dir,
            ]
        )
        assert code == 1

    def test_console_entrypoint(self, tiny_model_dir, template_tsv, tmp_path):
        out = tmp_path / "v.vec"
        proc = subprocess.run(
            [
                sys.executable, "-m", "lm_embed.cli",
                "--templates", template_tsv,
                "--out", str(out),
                "--model", tiny_model_dir,
            ],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, proc.stderr
        assert out.read_text().startswith("#dim 768\n")
