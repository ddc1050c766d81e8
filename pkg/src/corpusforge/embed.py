"""Deterministic document embeddings and exact cosine similarity.

The built-in embedder hashes character n-grams into a fixed number of
buckets with signed hashing and L2-normalizes the bucket counts. It is a
dependency-free, reproducible stand-in for an external dense encoder;
real deployments load precomputed vectors with load_external_embeddings.
"""

import hashlib
import json
from dataclasses import dataclass

import numpy as np

NORM_TOL = 1e-9


class EmbedError(Exception):
    pass


def stable_hash64(data: bytes, seed: int) -> int:
    """Seeded 64-bit hash, stable across processes and platforms."""
    key = (seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little")
    digest = hashlib.blake2b(data, digest_size=8, key=key).digest()
    return int.from_bytes(digest, "little")


@dataclass(frozen=True)
class EmbedderConfig:
    dims: int = 256
    ngram_min: int = 3
    ngram_max: int = 5
    hash_seed: int = 0

    def __post_init__(self):
        if self.dims < 2:
            raise EmbedError("dims must be >= 2")
        if not (1 <= self.ngram_min <= self.ngram_max):
            raise EmbedError("ngram range must satisfy 1 <= min <= max")


@dataclass
class EmbeddingVector:
    values: np.ndarray
    norm: float

    @property
    def dims(self) -> int:
        return len(self.values)

    @classmethod
    def from_values(cls, values) -> "EmbeddingVector":
        arr = np.asarray(values, dtype=np.float64)
        return cls(arr, float(np.linalg.norm(arr)))

    @property
    def is_zero(self) -> bool:
        return self.norm == 0.0


def embed_text(text: str, cfg: EmbedderConfig) -> EmbeddingVector:
    """Signed-hashing character n-gram TF vector, L2-normalized.

    Empty or whitespace-only text has no n-grams and maps to the zero
    vector; downstream retrieval excludes zero vectors instead of erroring.
    """
    vec = np.zeros(cfg.dims, dtype=np.float64)
    data = text.encode("utf-8")
    for n in range(cfg.ngram_min, cfg.ngram_max + 1):
        if len(data) < n:
            break
        for i in range(len(data) - n + 1):
            h = stable_hash64(data[i:i + n], cfg.hash_seed)
            bucket = h % cfg.dims
            sign = 1.0 if (h >> 63) & 1 == 0 else -1.0
            vec[bucket] += sign
    norm = float(np.linalg.norm(vec))
    if norm > 0.0:
        vec /= norm
        norm = 1.0
    return EmbeddingVector(vec, norm)


def embed_document(doc, cfg: EmbedderConfig) -> EmbeddingVector:
    return embed_text(doc.text, cfg)


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Exact cosine, clamped to [-1, 1] against floating-point rounding."""
    if a.dims != b.dims:
        raise EmbedError(f"dimension mismatch: {a.dims} vs {b.dims}")
    if a.is_zero or b.is_zero:
        raise EmbedError("cosine similarity of a zero vector is undefined")
    if a.values is b.values or np.array_equal(a.values, b.values):
        return 1.0  # identity holds exactly, not just within rounding
    value = float(np.dot(a.values, b.values)) / (a.norm * b.norm)
    return max(-1.0, min(1.0, value))


def load_external_embeddings(path: str) -> dict:
    """Load a JSONL embedding file: {"id": ..., "v": [floats]} per line.

    Dims are inferred from the first record and enforced for the rest;
    norms are recomputed on load.
    """
    vectors = {}
    dims = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                doc_id, values = obj["id"], obj["v"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise EmbedError(f"{path}:{lineno}: bad embedding record: {exc}")
            if doc_id in vectors:
                raise EmbedError(f"{path}:{lineno}: duplicate id {doc_id!r}")
            vec = EmbeddingVector.from_values(values)
            if dims is None:
                dims = vec.dims
            elif vec.dims != dims:
                raise EmbedError(
                    f"{path}:{lineno}: dims {vec.dims} != expected {dims}")
            vectors[doc_id] = vec
    return vectors


def save_embeddings(vectors: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc_id in sorted(vectors):
            vec = vectors[doc_id]
            fh.write(json.dumps({"id": doc_id, "v": vec.values.tolist()}))
            fh.write("\n")
