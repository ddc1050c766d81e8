"""Exact top-K retrieval against seed vectors and greedy redundancy pruning.

Brute-force exact search is the contract: any accelerated index must
reproduce this module's output bit for bit on the acceptance suite.
"""

import json
from dataclasses import dataclass

import numpy as np

from .embed import EmbedError


class RetrieveError(Exception):
    pass


@dataclass(frozen=True)
class RetrievalHit:
    candidate_id: str
    best_seed_id: str
    score: float

    def to_json(self) -> dict:
        return {"candidate_id": self.candidate_id,
                "best_seed_id": self.best_seed_id,
                "score": self.score}


@dataclass
class PruneReport:
    retained_ids: list
    removed_pairs: list  # (kept_id, removed_id, similarity)
    threshold: float

    def to_json(self) -> dict:
        return {
            "retained_ids": list(self.retained_ids),
            "removed_pairs": [list(p) for p in self.removed_pairs],
            "threshold": self.threshold,
        }


def _unit_matrix(vecs: dict, label: str):
    """Stack unit-normalized vectors in ascending id order, dropping zeros."""
    ids = sorted(vecs)
    rows = []
    kept = []
    dims = None
    for vid in ids:
        vec = vecs[vid]
        if dims is None:
            dims = vec.dims
        elif vec.dims != dims:
            raise EmbedError(f"{label} vector {vid!r}: dims {vec.dims} != {dims}")
        if vec.is_zero:
            continue
        rows.append(vec.values / vec.norm)
        kept.append(vid)
    if not rows:
        raise RetrieveError(f"no nonzero {label} vectors")
    return kept, np.vstack(rows)


def retrieve_top_k(seed_vecs: dict, cand_vecs: dict, k: int) -> list:
    """Top-K candidates by max-over-seeds cosine similarity.

    Output is sorted by (score desc, candidate_id asc); ties among seeds
    resolve to the lexicographically smallest seed id. Exact by
    construction: a full seeds-by-candidates similarity matrix.
    """
    if k < 1:
        raise RetrieveError("k must be >= 1")
    if not seed_vecs:
        raise RetrieveError("seed vector map is empty")
    if not cand_vecs:
        return []

    seed_ids, seeds = _unit_matrix(seed_vecs, "seed")
    cand_ids, cands = _unit_matrix(cand_vecs, "candidate")

    if seeds.shape[1] != cands.shape[1]:
        raise EmbedError(
            f"dimension mismatch: seeds {seeds.shape[1]} vs candidates {cands.shape[1]}")

    sims = np.clip(cands @ seeds.T, -1.0, 1.0)
    best = sims.max(axis=1)
    # argmax returns the first maximal column; seed_ids is sorted ascending,
    # so ties already resolve to the smallest seed id.
    best_seed = sims.argmax(axis=1)

    hits = [RetrievalHit(cand_ids[i], seed_ids[best_seed[i]], float(best[i]))
            for i in range(len(cand_ids))]
    hits.sort(key=lambda h: (-h.score, h.candidate_id))
    return hits[:k]


def prune_redundant(vecs: dict, threshold: float) -> PruneReport:
    """Greedy redundancy pruning in ascending id order.

    A document is removed iff its cosine to some already-retained document
    reaches the threshold; the recorded kept_id is the most similar
    retained document (earliest retained on ties). Sequential by contract:
    the greedy scan order defines the result.
    """
    if not 0.0 < threshold <= 1.0:
        raise RetrieveError(f"threshold must be in (0, 1], got {threshold}")

    ids = sorted(vecs)
    retained_ids = []
    retained_rows = []
    removed_pairs = []
    zero_ids = []
    for vid in ids:
        vec = vecs[vid]
        if vec.is_zero:
            zero_ids.append(vid)
            continue
        unit = vec.values / vec.norm
        if retained_rows:
            sims = np.clip(np.vstack(retained_rows) @ unit, -1.0, 1.0)
            best = int(sims.argmax())
            if sims[best] >= threshold:
                removed_pairs.append((retained_ids[best], vid, float(sims[best])))
                continue
        retained_ids.append(vid)
        retained_rows.append(unit)

    # Zero vectors carry no semantic content; retain them untouched.
    return PruneReport(retained_ids + zero_ids, removed_pairs, threshold)


def save_hits(hits, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for hit in hits:
            fh.write(json.dumps(hit.to_json()))
            fh.write("\n")


def load_hits(path: str) -> list:
    hits = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                obj = json.loads(line)
                hits.append(RetrievalHit(obj["candidate_id"],
                                         obj["best_seed_id"], obj["score"]))
    return hits
