"""Seed-source registry, class assignment, and URL-frontier expansion.

The pipeline never fetches the network: it consumes a source manifest, a
set of already-fetched seed URLs, and a link graph file, and expands the
frontier breadth-first with an optional documentation-keyword filter.
"""

import json
from dataclasses import dataclass
from urllib.parse import urlparse

SOURCE_KINDS = ("documentation", "trajectory", "code", "text")
SOURCE_FORMATS = ("dialog", "react", "nl_plan", "api_seq", "json", "qa",
                  "plain_text", "code")

KIND_TO_CLASS = {
    "documentation": "agent_doc",
    "trajectory": "agent_traj",
    "code": "code",
    "text": "text",
}

DEFAULT_DOC_KEYWORDS = ("doc", "guide", "reference")


class IngestError(Exception):
    pass


@dataclass(frozen=True)
class SourceSpec:
    name: str
    kind: str
    format: str
    declared_tokens: int = 0
    origin: str = ""

    def __post_init__(self):
        if not self.name:
            raise IngestError("source name must be non-empty")
        if self.kind not in SOURCE_KINDS:
            raise IngestError(f"unknown source kind {self.kind!r}")
        if self.format not in SOURCE_FORMATS:
            raise IngestError(f"unknown source format {self.format!r}")
        if self.declared_tokens < 0:
            raise IngestError("declared_tokens must be non-negative")


def assign_data_class(spec: SourceSpec) -> str:
    return KIND_TO_CLASS[spec.kind]


class SourceRegistry:
    """Name-keyed registry of seed sources. Single-writer by contract."""

    def __init__(self):
        self._specs = {}

    def register(self, spec: SourceSpec) -> None:
        if spec.name in self._specs:
            raise IngestError(f"source {spec.name!r} already registered")
        self._specs[spec.name] = spec

    def get(self, name: str) -> SourceSpec:
        return self._specs[name]

    def __len__(self):
        return len(self._specs)

    def __iter__(self):
        return iter(self._specs.values())

    @classmethod
    def from_manifest(cls, path: str) -> "SourceRegistry":
        """Load a JSON array of SourceSpec objects."""
        with open(path, encoding="utf-8") as fh:
            entries = json.load(fh)
        if not isinstance(entries, list):
            raise IngestError(f"{path}: manifest must be a JSON array")
        registry = cls()
        for entry in entries:
            registry.register(SourceSpec(
                name=entry["name"],
                kind=entry["kind"],
                format=entry["format"],
                declared_tokens=int(entry.get("declared_tokens", 0)),
                origin=entry.get("origin", ""),
            ))
        return registry


def is_valid_url(url: str) -> bool:
    """Absolute http/https URL with a host."""
    try:
        parts = urlparse(url)
    except ValueError:
        return False
    return parts.scheme in ("http", "https") and bool(parts.netloc)


@dataclass
class UrlFrontier:
    levels: list
    rejected_seeds: int = 0

    def all_urls(self) -> set:
        out = set()
        for level in self.levels:
            out |= level
        return out


def expand_url_frontier(seed_urls, link_graph: dict, max_level: int) -> UrlFrontier:
    """Level-synchronous breadth-first expansion over a pre-fetched link graph.

    Level 1 holds the valid seeds; level k+1 holds the previously unseen,
    valid out-links of level k. Malformed seeds are counted and dropped,
    not fatal. Levels are pairwise disjoint by construction.
    """
    if max_level < 1:
        raise IngestError("max_level must be >= 1")
    valid_seeds = {u for u in seed_urls if is_valid_url(u)}
    rejected = len(set(seed_urls)) - len(valid_seeds)

    levels = [valid_seeds]
    seen = set(valid_seeds)
    for _ in range(max_level - 1):
        frontier = set()
        for url in levels[-1]:
            for out in link_graph.get(url, ()):
                if out not in seen and is_valid_url(out):
                    frontier.add(out)
                    seen.add(out)
        if not frontier:
            break
        levels.append(frontier)
    return UrlFrontier(levels=levels, rejected_seeds=rejected)


def filter_doc_urls(urls, keywords) -> set:
    """Keep URLs containing at least one keyword, case-insensitive substring."""
    kws = [k.lower() for k in keywords]
    if not kws:
        raise IngestError("keyword set must be non-empty")
    return {u for u in urls if any(k in u.lower() for k in kws)}


def load_link_graph(path: str) -> dict:
    """Read a JSONL link graph: one {"url": ..., "out": [...]} per line."""
    graph = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                graph[obj["url"]] = list(obj["out"])
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise IngestError(f"{path}:{lineno}: bad link-graph record: {exc}")
    return graph
