"""Dataset ingestion (raw logs plus optional label CSVs) and a seeded
synthetic generator with planted anomaly bursts for desk-scale runs."""

from __future__ import annotations

import argparse
import csv
import os
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, IoError, LabelError
from .graphs import WindowSpec
from .parsing import HeaderFormat, MalformedLine, RawLogRecord, split_header

LABEL_ALIASES = {
    "0": 0,
    "1": 1,
    "normal": 0,
    "anomaly": 1,
    "abnormal": 1,
    "-": 0,
}


@dataclass
class DatasetManifest:
    """Flat key-value descriptor for one dataset run."""

    name: str
    raw_path: str
    header_format: str
    window: WindowSpec = field(default_factory=WindowSpec)
    label_source: str = "none"  # none | line_csv | session_csv
    label_path: str | None = None
    seed: int = 0

    def __post_init__(self):
        if self.label_source not in ("none", "line_csv", "session_csv"):
            raise ConfigError(f"unknown label_source {self.label_source!r}")
        if self.label_source != "none" and not self.label_path:
            raise ConfigError("label_source set but label_path missing")
        if self.label_source == "session_csv" and not self.window.session_pattern:
            raise ConfigError("session_csv labels need a session_pattern")


def read_kv_file(path) -> dict[str, str]:
    """Parse a flat ``key = value`` text file, '#' comments allowed."""
    if not os.path.isfile(path):
        raise IoError(f"cannot read {path}")
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"bad line in {path}: {raw!r}")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def load_manifest(path) -> DatasetManifest:
    kv = read_kv_file(path)
    base = os.path.dirname(os.path.abspath(path))

    def resolve(p):
        return p if os.path.isabs(p) else os.path.join(base, p)

    try:
        raw_path = resolve(kv["raw"])
        window = WindowSpec(
            mode=kv.get("window_mode", "count"),
            count=int(kv.get("window_count", "100")),
            session_pattern=kv.get("session_regex") or None,
        )
        manifest = DatasetManifest(
            name=kv.get("name", os.path.basename(path)),
            raw_path=raw_path,
            header_format=kv["header_format"],
            window=window,
            label_source=kv.get("label_source", "none"),
            label_path=resolve(kv["label_path"]) if kv.get("label_path") else None,
            seed=int(kv.get("seed", "0")),
        )
    except KeyError as exc:
        raise ConfigError(f"manifest {path} missing key {exc}") from None
    if not os.path.isfile(manifest.raw_path):
        raise IoError(f"raw log not found: {manifest.raw_path}")
    if manifest.label_path and not os.path.isfile(manifest.label_path):
        raise IoError(f"label file not found: {manifest.label_path}")
    return manifest


def _parse_label(value: str, where: str) -> int:
    key = value.strip().lower()
    if key not in LABEL_ALIASES:
        raise LabelError(f"{where}: unknown label {value!r}")
    return LABEL_ALIASES[key]


def _read_label_csv(path, key_column: str) -> dict:
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != [key_column, "label"]:
            raise LabelError(f"{path}: expected header '{key_column},label'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            key = int(row[0]) if key_column == "line_no" else row[0].strip()
            out[key] = _parse_label(row[1], f"{path}:{lineno}")
    return out


@dataclass
class LoadedDataset:
    records: list[RawLogRecord]
    labels: dict[int, int] | None  # line_no -> 0/1
    malformed_count: int


def load_dataset(manifest: DatasetManifest) -> LoadedDataset:
    """Read and header-split the raw log, attaching labels when configured.

    Malformed lines are skipped and counted. Label misalignment (a kept
    record without a label) raises LabelError naming the first line.
    """
    if not os.path.isfile(manifest.raw_path):
        raise IoError(f"raw log not found: {manifest.raw_path}")
    fmt = HeaderFormat(manifest.header_format)
    records: list[RawLogRecord] = []
    malformed = 0
    with open(manifest.raw_path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh):
            try:
                records.append(split_header(line.rstrip("\n"), fmt, line_no=line_no))
            except MalformedLine:
                malformed += 1

    labels: dict[int, int] | None = None
    if manifest.label_source == "line_csv":
        table = _read_label_csv(manifest.label_path, "line_no")
        labels = {}
        for rec in records:
            if rec.line_no not in table:
                raise LabelError(f"no label for line_no {rec.line_no}")
            labels[rec.line_no] = table[rec.line_no]
    elif manifest.label_source == "session_csv":
        table = _read_label_csv(manifest.label_path, "session_key")
        pattern = re.compile(manifest.window.session_pattern)
        labels = {}
        for rec in records:
            m = pattern.search(rec.content)
            if not m:
                raise LabelError(f"no session key in line_no {rec.line_no}")
            key = m.group(1) if m.groups() else m.group(0)
            if key not in table:
                raise LabelError(f"no label for session {key!r} (line_no {rec.line_no})")
            labels[rec.line_no] = table[key]
    return LoadedDataset(records=records, labels=labels, malformed_count=malformed)


# --- synthetic corpus ------------------------------------------------------

_NORMAL_WORDS = [
    ("scheduler", "assigned", "batch"),
    ("replicator", "synced", "segment"),
    ("heartbeat", "received", "from node"),
    ("cache", "evicted", "entries for shard"),
    ("compactor", "merged", "chunks into level"),
    ("gateway", "routed", "request to backend"),
    ("janitor", "purged", "expired rows from table"),
    ("balancer", "moved", "partition onto rack"),
]

_ANOMALOUS_WORDS = [
    ("kernelfault", "trap vector", "panic code"),
    ("xrmutiny", "breaker opened", "surge value"),
    ("quarantine", "lockdown zone", "threat index"),
    ("meltdown", "thermal spike", "reactor cell"),
]


@dataclass
class SyntheticSpec:
    total_lines: int = 5000
    anomaly_rate: float = 0.03
    n_templates_normal: int = 6
    n_templates_anomalous: int = 3
    burst_length: int = 10
    seed: int = 7

    def __post_init__(self):
        if not 0.0 < self.anomaly_rate < 0.5:
            raise ConfigError("anomaly_rate must be in (0, 0.5)")
        if self.n_templates_normal > len(_NORMAL_WORDS):
            raise ConfigError(f"at most {len(_NORMAL_WORDS)} normal templates")
        if self.n_templates_anomalous > len(_ANOMALOUS_WORDS):
            raise ConfigError(f"at most {len(_ANOMALOUS_WORDS)} anomalous templates")
        if self.total_lines < 10:
            raise ConfigError("total_lines must be >= 10")


SYNTH_HEADER_FORMAT = "<Date> <Time> <Pid> <Level> <Component>: <Content>"


def _normal_content(skeleton: int, rng: np.random.Generator) -> str:
    subject, verb, obj = _NORMAL_WORDS[skeleton]
    return f"{subject} {verb} {rng.integers(1, 100000)} {obj} {rng.integers(1, 512)}"


def _anomalous_content(skeleton: int, rng: np.random.Generator) -> str:
    subject, middle, tail = _ANOMALOUS_WORDS[skeleton]
    return f"{subject} {middle} {rng.integers(1, 100000)} {tail} {rng.integers(1, 64)}"


def generate_synthetic(spec: SyntheticSpec) -> tuple[list[str], list[int]]:
    """Deterministic synthetic corpus with planted anomaly bursts.

    Normal lines follow a fixed Markov chain over the normal skeletons;
    anomalies overwrite contiguous bursts using skeletons with a disjoint
    vocabulary. The anomaly count is round(total * rate), exactly.
    """
    rng = np.random.default_rng(spec.seed)
    total = spec.total_lines
    n_anomalies = int(round(total * spec.anomaly_rate))

    # Markov walk over normal skeletons: sticky, with a preferred successor.
    k = spec.n_templates_normal
    state = 0
    skeleton_seq = []
    for _ in range(total):
        skeleton_seq.append(state)
        u = rng.random()
        if u < 0.2:
            pass  # stay
        elif u < 0.8:
            state = (state + 1) % k
        else:
            state = int(rng.integers(k))

    # Carve non-overlapping bursts out of the normal timeline.
    burst_sizes = []
    remaining = n_anomalies
    while remaining > 0:
        size = min(spec.burst_length, remaining)
        burst_sizes.append(size)
        remaining -= size
    if len(burst_sizes) < spec.n_templates_anomalous:
        raise ConfigError(
            "too few bursts to cover every anomalous template; "
            "raise total_lines or anomaly_rate"
        )
    taken: list[tuple[int, int]] = []
    starts = []
    for size in burst_sizes:
        for _ in range(10000):
            start = int(rng.integers(0, total - size + 1))
            if all(start + size + 1 < s or start > s + ln + 1 for s, ln in taken):
                taken.append((start, size))
                starts.append(start)
                break
        else:
            raise ConfigError("could not place anomaly bursts; corpus too dense")

    labels = [0] * total
    anomalous_skeleton = [0] * total
    for b, (start, size) in enumerate(zip(starts, burst_sizes)):
        # Cycle the anomalous skeletons inside each burst so every burst
        # mixes the whole anomalous vocabulary.
        for offset, pos in enumerate(range(start, start + size)):
            labels[pos] = 1
            anomalous_skeleton[pos] = (b + offset) % spec.n_templates_anomalous

    lines = []
    seen_normal = set()
    seen_anomalous = set()
    for i in range(total):
        if labels[i]:
            content = _anomalous_content(anomalous_skeleton[i], rng)
            seen_anomalous.add(anomalous_skeleton[i])
        else:
            content = _normal_content(skeleton_seq[i], rng)
            seen_normal.add(skeleton_seq[i])
        time_field = f"{100000 + i % 500000:06d}"
        pid = 1000 + i % 37
        lines.append(f"081109 {time_field} {pid} INFO synth.Core: {content}")

    if len(seen_normal) < spec.n_templates_normal or len(
        seen_anomalous
    ) < spec.n_templates_anomalous:
        raise ConfigError("corpus too small to visit every skeleton; raise total_lines")
    return lines, labels


def write_synthetic_dataset(
    out_dir, spec: SyntheticSpec, window_count: int = 100
) -> str:
    """Materialize raw.log, labels.csv and manifest.txt; returns manifest path."""
    os.makedirs(out_dir, exist_ok=True)
    lines, labels = generate_synthetic(spec)
    raw_path = os.path.join(out_dir, "raw.log")
    with open(raw_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    label_path = os.path.join(out_dir, "labels.csv")
    with open(label_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["line_no", "label"])
        for line_no, label in enumerate(labels):
            writer.writerow([line_no, label])
    manifest_path = os.path.join(out_dir, "manifest.txt")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        fh.write(
            "\n".join(
                [
                    "name = synthetic",
                    "raw = raw.log",
                    f"header_format = {SYNTH_HEADER_FORMAT}",
                    "window_mode = count",
                    f"window_count = {window_count}",
                    "label_source = line_csv",
                    "label_path = labels.csv",
                    f"seed = {spec.seed}",
                ]
            )
            + "\n"
        )
    return manifest_path


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="python -m logloom.datasets",
        description="Generate a synthetic labeled log corpus with planted anomaly bursts.",
    )
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--total", type=int, default=5000)
    parser.add_argument("--rate", type=float, default=0.03)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--normal-templates", type=int, default=6)
    parser.add_argument("--anomalous-templates", type=int, default=3)
    parser.add_argument("--burst-length", type=int, default=10)
    parser.add_argument("--window-count", type=int, default=100)
    args = parser.parse_args(argv)
    spec = SyntheticSpec(
        total_lines=args.total,
        anomaly_rate=args.rate,
        n_templates_normal=args.normal_templates,
        n_templates_anomalous=args.anomalous_templates,
        burst_length=args.burst_length,
        seed=args.seed,
    )
    manifest = write_synthetic_dataset(args.out, spec, window_count=args.window_count)
    print(manifest)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
