"""Online Drain-style log parsing.

Raw lines are split into header fields plus a content message, the content is
pre-masked (numbers, block ids, IPv4:port become wildcards) and then matched
against a fixed-depth parse tree that buckets templates by token count and
leading tokens. Lines similar enough to an existing template merge into it,
turning disagreeing positions into the wildcard marker.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field

from .errors import FormatError, MalformedLine

WILDCARD = "<*>"

# Masked before tree lookup: block ids, IPv4[:port] (with optional leading
# slash, so "/10.0.0.1:80" collapses to one wildcard), standalone numbers.
_BLOCK_ID_RE = re.compile(r"(?<=blk_)-?\d+")
_IPV4_PORT_RE = re.compile(r"/?(?:\d{1,3}\.){3}\d{1,3}(?::\d+)?")
_NUMBER_RE = re.compile(r"(?<![A-Za-z0-9])[-+]?\d+(?:\.\d+)?(?![A-Za-z0-9])")


def numeric_premask(content: str) -> str:
    """Replace number-like tokens with the wildcard marker.

    Covers maximal digit runs that parse as numbers, block ids written as
    ``blk_`` plus optional sign and digits (the prefix is kept), and
    IPv4:port tokens. Pure and idempotent.
    """
    content = _BLOCK_ID_RE.sub(WILDCARD, content)
    content = _IPV4_PORT_RE.sub(WILDCARD, content)
    content = _NUMBER_RE.sub(WILDCARD, content)
    return content


@dataclass
class RawLogRecord:
    """One raw log line after header splitting."""

    line_no: int
    header_fields: dict[str, str]
    content: str


@dataclass
class LogTemplate:
    """A mined template: constant tokens with wildcard slots."""

    template_id: int
    tokens: list[str]
    support_count: int = 0

    def render(self) -> str:
        return " ".join(self.tokens)

    @property
    def constant_tokens(self) -> list[str]:
        return [t for t in self.tokens if t != WILDCARD]

    @property
    def wildcard_count(self) -> int:
        return sum(1 for t in self.tokens if t == WILDCARD)


class HeaderFormat:
    """Header-format descriptor: ordered field names plus delimiters.

    Written as a format string such as
    ``"<Date> <Time> <Pid> <Level> <Component>: <Content>"``. Spaces match
    any run of whitespace; everything else is literal. The content field
    (case-insensitive ``<Content>``) holds the free-text message.
    """

    def __init__(self, format_spec: str):
        self.format_spec = format_spec
        fields: list[str] = []
        regex = ""
        for k, part in enumerate(re.split(r"(<[^<>]+>)", format_spec)):
            if k % 2 == 0:
                regex += re.sub(r"\\ +", r"\\s+", re.escape(part))
            else:
                name = part[1:-1]
                fields.append(name)
                if name.lower() == "content":
                    regex += f"(?P<{name}>.*)"
                else:
                    regex += f"(?P<{name}>.*?)"
        content_fields = [f for f in fields if f.lower() == "content"]
        if len(content_fields) != 1:
            raise FormatError(
                f"header format needs exactly one <Content> field: {format_spec!r}"
            )
        self.content_field = content_fields[0]
        self.fields = fields
        self._regex = re.compile("^" + regex + "$")

    def match(self, line: str) -> dict[str, str] | None:
        m = self._regex.match(line.strip())
        return m.groupdict() if m else None


def split_header(line: str, format_spec: HeaderFormat | str, line_no: int = 0) -> RawLogRecord:
    """Split a raw line into header fields and content.

    Raises MalformedLine when the line does not match the format or the
    message part is empty; callers skip and count these, never abort.
    """
    fmt = format_spec if isinstance(format_spec, HeaderFormat) else HeaderFormat(format_spec)
    groups = fmt.match(line)
    if groups is None:
        raise MalformedLine(f"line {line_no} does not match header format")
    content = groups.pop(fmt.content_field).strip()
    if not content:
        raise MalformedLine(f"line {line_no} has empty content")
    return RawLogRecord(line_no=line_no, header_fields=groups, content=content)


class _Node:
    __slots__ = ("children", "leaf")

    def __init__(self):
        self.children: dict = {}
        self.leaf: list[LogTemplate] = []


def _has_digits(token: str) -> bool:
    return any(ch.isdigit() for ch in token)


class ParseTree:
    """Fixed-depth Drain tree. Single writer; owns its templates.

    Root level is keyed by token count, then up to ``max_depth - 2`` levels
    keyed by leading tokens, with candidate templates in the leaves. Internal
    nodes hold at most ``max_children`` children; overflow and digit-bearing
    tokens route through a wildcard child.
    """

    def __init__(
        self,
        similarity_threshold: float = 0.4,
        max_depth: int = 4,
        max_children: int = 100,
    ):
        if not 0.0 < similarity_threshold <= 1.0:
            raise ValueError("similarity_threshold must be in (0, 1]")
        if max_depth < 2:
            raise ValueError("max_depth must be >= 2")
        if max_children < 1:
            raise ValueError("max_children must be >= 1")
        self.similarity_threshold = similarity_threshold
        self.max_depth = max_depth
        self.max_children = max_children
        self._token_levels = max_depth - 2
        self._root: dict[int, _Node] = {}
        self.templates: dict[int, LogTemplate] = {}
        self._next_id = 0
        self.lines_parsed = 0

    # --- similarity -----------------------------------------------------

    @staticmethod
    def _similarity(template_tokens: list[str], tokens: list[str]) -> tuple[float, int]:
        """Fraction of aligned positions whose constant tokens agree.

        Wildcard positions in the template never count toward the numerator;
        the denominator is the full token count. Also returns the wildcard
        count, used as a tie-breaker.
        """
        same = 0
        wildcards = 0
        for a, b in zip(template_tokens, tokens):
            if a == WILDCARD:
                wildcards += 1
            elif a == b:
                same += 1
        return same / len(template_tokens), wildcards

    def _best_candidate(self, leaf: list[LogTemplate], tokens: list[str]) -> LogTemplate | None:
        best = None
        best_key = (-1.0, -1)
        for tpl in leaf:
            sim, wilds = self._similarity(tpl.tokens, tokens)
            key = (sim, wilds)
            if key > best_key:
                best_key = key
                best = tpl
        if best is not None and best_key[0] >= self.similarity_threshold:
            return best
        return None

    # --- tree descent ---------------------------------------------------

    def _descend(self, tokens: list[str]) -> _Node | None:
        node = self._root.get(len(tokens))
        if node is None:
            return None
        for depth in range(min(self._token_levels, len(tokens))):
            token = tokens[depth]
            child = node.children.get(token)
            if child is None:
                child = node.children.get(WILDCARD)
            if child is None:
                return None
            node = child
        return node

    def _insert_path(self, tokens: list[str]) -> _Node:
        node = self._root.setdefault(len(tokens), _Node())
        for depth in range(min(self._token_levels, len(tokens))):
            token = tokens[depth]
            if token in node.children:
                node = node.children[token]
                continue
            if _has_digits(token):
                node = node.children.setdefault(WILDCARD, _Node())
            elif WILDCARD in node.children:
                if len(node.children) < self.max_children:
                    node = node.children.setdefault(token, _Node())
                else:
                    node = node.children[WILDCARD]
            else:
                if len(node.children) + 1 < self.max_children:
                    node = node.children.setdefault(token, _Node())
                elif len(node.children) + 1 == self.max_children:
                    node = node.children.setdefault(WILDCARD, _Node())
                else:
                    node = node.children[WILDCARD]
        return node

    # --- parsing --------------------------------------------------------

    def parse(self, record: RawLogRecord) -> int:
        """Classify one record, updating the tree in place.

        Returns the template id the record was filed under. Total over
        well-formed records: a new template is created whenever no candidate
        clears the similarity threshold.
        """
        tokens = numeric_premask(record.content).split()
        if not tokens or all(t == WILDCARD for t in tokens):
            # Templates must keep at least one constant token; downstream
            # encoding relies on it.
            raise MalformedLine(f"line {record.line_no} has no constant tokens")
        leaf_node = self._descend(tokens)
        match = self._best_candidate(leaf_node.leaf, tokens) if leaf_node else None

        if match is None:
            tpl = LogTemplate(self._next_id, list(tokens), support_count=1)
            self._next_id += 1
            self.templates[tpl.template_id] = tpl
            self._insert_path(tokens).leaf.append(tpl)
            self.lines_parsed += 1
            return tpl.template_id

        merged = [a if a == b else WILDCARD for a, b in zip(match.tokens, tokens)]
        match.tokens = merged
        match.support_count += 1
        self.lines_parsed += 1
        return match.template_id


def parse(record: RawLogRecord, tree: ParseTree) -> int:
    """Module-level alias for ParseTree.parse (tree is updated in place)."""
    return tree.parse(record)


@dataclass
class StructuredRecord:
    """One parsed line: provenance plus template id, optional 0/1 label."""

    line_no: int
    template_id: int
    label: int | None = None


@dataclass
class ParseResult:
    records: list[StructuredRecord]
    tree: ParseTree
    malformed_count: int = 0
    malformed_line_nos: list[int] = field(default_factory=list)


def parse_stream(
    lines,
    header_format: HeaderFormat | str,
    tree: ParseTree | None = None,
    labels: dict[int, int] | None = None,
) -> ParseResult:
    """Parse an ordered stream of raw lines, skipping malformed ones.

    ``labels`` maps raw line ordinals to 0/1 and is attached to the
    structured records when present.
    """
    fmt = header_format if isinstance(header_format, HeaderFormat) else HeaderFormat(header_format)
    tree = tree if tree is not None else ParseTree()
    result = ParseResult(records=[], tree=tree)
    for line_no, line in enumerate(lines):
        try:
            record = split_header(line, fmt, line_no=line_no)
            tid = tree.parse(record)
        except MalformedLine:
            result.malformed_count += 1
            result.malformed_line_nos.append(line_no)
            continue
        label = labels.get(line_no) if labels is not None else None
        result.records.append(StructuredRecord(line_no, tid, label))
    return result


# --- persistence ---------------------------------------------------------


def write_template_tsv(templates: dict[int, LogTemplate], path) -> None:
    """Persist the template table: template_id, support_count, template string."""
    with open(path, "w", encoding="utf-8") as fh:
        for tid in sorted(templates):
            tpl = templates[tid]
            fh.write(f"{tid}\t{tpl.support_count}\t{tpl.render()}\n")


def read_template_tsv(path) -> dict[int, LogTemplate]:
    templates: dict[int, LogTemplate] = {}
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            raw = raw.rstrip("\n")
            if not raw:
                continue
            parts = raw.split("\t")
            if len(parts) != 3:
                raise FormatError(f"bad template row: {raw!r}")
            tid, support, rendered = int(parts[0]), int(parts[1]), parts[2]
            templates[tid] = LogTemplate(tid, rendered.split(), support)
    return templates


def write_structured_csv(records: list[StructuredRecord], path) -> None:
    """Persist structured output; label column only for labeled runs."""
    labeled = any(r.label is not None for r in records)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if labeled:
            writer.writerow(["line_no", "template_id", "label"])
            for r in records:
                writer.writerow([r.line_no, r.template_id, "" if r.label is None else r.label])
        else:
            writer.writerow(["line_no", "template_id"])
            for r in records:
                writer.writerow([r.line_no, r.template_id])


def read_structured_csv(path) -> list[StructuredRecord]:
    records: list[StructuredRecord] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["line_no", "template_id"]:
            raise FormatError(f"bad structured CSV header in {path}")
        labeled = len(header) == 3 and header[2] == "label"
        for row in reader:
            if not row:
                continue
            label = None
            if labeled and len(row) > 2 and row[2] != "":
                label = int(row[2])
            records.append(StructuredRecord(int(row[0]), int(row[1]), label))
    return records
