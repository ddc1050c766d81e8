"""Canonical document model, token accounting, and sharded JSONL corpus I/O.

Every other stage of the pipeline reads and writes corpora through this
module. Documents are immutable after parse; all operations here are safe
to run data-parallel over disjoint shards.
"""

import glob
import json
import os
from dataclasses import dataclass, field
from typing import Iterable, Iterator

DATA_CLASSES = ("agent_doc", "agent_traj", "code", "text")

SHARD_PATTERN = "{corpus}.{index:05d}.jsonl"

_DOC_FIELDS = ("id", "source_id", "data_class", "text", "token_count", "meta")


class CorpusError(Exception):
    """Base class for corpus-level failures."""


class ParseError(CorpusError):
    """A serialized record could not be decoded."""


class ValidationError(CorpusError):
    """A record decoded but violates the document contract."""


class DuplicateIdError(CorpusError):
    """The same document id appeared more than once in a corpus."""


def count_tokens(text: str) -> int:
    """Count tokens as contiguous non-whitespace runs (Unicode whitespace).

    This is the budget-accounting tokenizer: cheap, deterministic, and
    consistent across the whole pipeline. It makes no attempt to match any
    particular LLM's subword vocabulary.
    """
    return len(text.split())


@dataclass(frozen=True)
class Document:
    id: str
    source_id: str
    data_class: str
    text: str
    token_count: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.id:
            raise ValidationError("document id must be non-empty")
        if self.data_class not in DATA_CLASSES:
            raise ValidationError(
                f"unknown data_class {self.data_class!r}; expected one of {DATA_CLASSES}"
            )
        if self.token_count < 0:
            raise ValidationError(f"negative token_count for doc {self.id!r}")

    def with_meta(self, **extra: str) -> "Document":
        merged = dict(self.meta)
        merged.update(extra)
        return Document(self.id, self.source_id, self.data_class, self.text,
                        self.token_count, merged)


def make_document(id: str, source_id: str, data_class: str, text: str,
                  meta: dict | None = None) -> Document:
    """Build a Document with token_count computed from the text."""
    return Document(id, source_id, data_class, text, count_tokens(text),
                    dict(meta or {}))


def parse_document_record(line: str) -> Document:
    """Parse one JSONL record into a Document.

    token_count is recomputed when absent; when present it is trusted as-is
    (validated only for sign) so externally counted corpora round-trip.
    """
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON record: {exc}") from exc
    if not isinstance(obj, dict):
        raise ParseError("record is not a JSON object")

    for name in ("id", "source_id", "data_class", "text"):
        if name not in obj:
            raise ParseError(f"record missing required field {name!r}")
        if not isinstance(obj[name], str):
            raise ParseError(f"field {name!r} must be a string")

    token_count = obj.get("token_count")
    if token_count is None:
        token_count = count_tokens(obj["text"])
    elif not isinstance(token_count, int) or isinstance(token_count, bool):
        raise ParseError("field 'token_count' must be an integer")

    meta = obj.get("meta", {})
    if not isinstance(meta, dict) or not all(
            isinstance(k, str) and isinstance(v, str) for k, v in meta.items()):
        raise ParseError("field 'meta' must be a string-to-string map")

    return Document(obj["id"], obj["source_id"], obj["data_class"],
                    obj["text"], token_count, meta)


def serialize_document(doc: Document) -> str:
    obj = {
        "id": doc.id,
        "source_id": doc.source_id,
        "data_class": doc.data_class,
        "text": doc.text,
        "token_count": doc.token_count,
        "meta": doc.meta,
    }
    return json.dumps(obj, ensure_ascii=False, sort_keys=True)


@dataclass
class CorpusStats:
    tokens_by_class: dict
    docs_by_class: dict
    total_tokens: int = 0
    total_docs: int = 0

    @classmethod
    def empty(cls) -> "CorpusStats":
        return cls({c: 0 for c in DATA_CLASSES}, {c: 0 for c in DATA_CLASSES}, 0, 0)

    def add(self, doc: Document) -> None:
        self.tokens_by_class[doc.data_class] += doc.token_count
        self.docs_by_class[doc.data_class] += 1
        self.total_tokens += doc.token_count
        self.total_docs += 1

    def merge(self, other: "CorpusStats") -> "CorpusStats":
        """Associative merge of per-shard partial stats."""
        return CorpusStats(
            {c: self.tokens_by_class[c] + other.tokens_by_class[c] for c in DATA_CLASSES},
            {c: self.docs_by_class[c] + other.docs_by_class[c] for c in DATA_CLASSES},
            self.total_tokens + other.total_tokens,
            self.total_docs + other.total_docs,
        )

    def to_json(self) -> dict:
        return {
            "tokens_by_class": dict(self.tokens_by_class),
            "docs_by_class": dict(self.docs_by_class),
            "total_tokens": self.total_tokens,
            "total_docs": self.total_docs,
        }


def compute_stats(docs: Iterable[Document]) -> CorpusStats:
    """Single-pass, order-independent corpus statistics.

    Duplicate ids are a hard error: silently double counting a document
    would corrupt every downstream token budget.
    """
    stats = CorpusStats.empty()
    seen = set()
    for doc in docs:
        if doc.id in seen:
            raise DuplicateIdError(f"duplicate document id {doc.id!r}")
        seen.add(doc.id)
        stats.add(doc)
    return stats


def read_jsonl(path: str) -> Iterator[Document]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield parse_document_record(line)
            except CorpusError as exc:
                raise type(exc)(f"{path}:{lineno}: {exc}") from exc


def shard_paths(corpus_prefix: str) -> list:
    """All shard files for a corpus prefix, in shard order."""
    paths = sorted(glob.glob(f"{corpus_prefix}.*.jsonl"))
    if paths:
        return paths
    if os.path.isdir(corpus_prefix):
        return sorted(glob.glob(os.path.join(corpus_prefix, "*.jsonl")))
    if os.path.isfile(corpus_prefix):
        return [corpus_prefix]
    return []


def read_corpus(corpus_prefix: str) -> Iterator[Document]:
    """Stream documents from every shard of a corpus, in shard order.

    Accepts a shard prefix, a directory of .jsonl files, or a single file.
    """
    paths = shard_paths(corpus_prefix)
    if not paths:
        raise CorpusError(f"no corpus shards found at {corpus_prefix!r}")
    for path in paths:
        yield from read_jsonl(path)


def write_corpus(docs: Iterable[Document], corpus_prefix: str,
                 docs_per_shard: int = 10000) -> list:
    """Write documents into zero-padded shard files; returns shard paths."""
    parent = os.path.dirname(corpus_prefix)
    if parent:
        os.makedirs(parent, exist_ok=True)
    paths = []
    buf = []

    def flush():
        index = len(paths)
        path = SHARD_PATTERN.format(corpus=corpus_prefix, index=index)
        with open(path, "w", encoding="utf-8") as fh:
            for doc in buf:
                fh.write(serialize_document(doc))
                fh.write("\n")
        paths.append(path)
        buf.clear()

    for doc in docs:
        buf.append(doc)
        if len(buf) >= docs_per_shard:
            flush()
    if buf or not paths:
        flush()
    return paths
