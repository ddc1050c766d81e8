"""Compose training mixtures from per-class pools at target token ratios.

Targets are token-budgeted: the total budget is apportioned across
classes by largest remainder, each class is sampled by a seeded uniform
shuffle without replacement, and the output interleaves classes
deterministically by token share. Identical pools + spec always produce
byte-identical shards and manifest.
"""

import hashlib
import json
import os
from dataclasses import dataclass

import numpy as np

from . import corpus as corpus_mod
from .corpus import Document, write_corpus


class MixError(Exception):
    pass


@dataclass(frozen=True)
class MixSpec:
    ratios: dict  # pool name -> non-negative weight, normalized on use
    total_token_budget: int
    rng_seed: int = 0

    def __post_init__(self):
        if self.total_token_budget <= 0:
            raise MixError("total_token_budget must be positive")
        if not self.ratios or all(r == 0 for r in self.ratios.values()):
            raise MixError("at least one ratio must be positive")
        if any(r < 0 for r in self.ratios.values()):
            raise MixError("ratios must be non-negative")

    def normalized_ratios(self) -> dict:
        total = sum(self.ratios.values())
        return {name: r / total for name, r in self.ratios.items()}

    def spec_hash(self) -> str:
        canonical = json.dumps(
            {"ratios": self.ratios, "total_token_budget": self.total_token_budget,
             "rng_seed": self.rng_seed}, sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    @classmethod
    def from_file(cls, path: str) -> "MixSpec":
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
        return cls(ratios=dict(obj["ratios"]),
                   total_token_budget=int(obj["total_token_budget"]),
                   rng_seed=int(obj.get("rng_seed", 0)))


@dataclass
class MixManifest:
    per_class: dict  # name -> {target_tokens, realized_tokens, doc_ids}
    rng_seed: int
    spec_hash: str

    def to_json(self) -> dict:
        return {"per_class": self.per_class, "rng_seed": self.rng_seed,
                "spec_hash": self.spec_hash}

    @classmethod
    def from_file(cls, path: str) -> "MixManifest":
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
        return cls(obj["per_class"], obj["rng_seed"], obj["spec_hash"])


def apportion_budget(budget: int, ratios: dict) -> dict:
    """Largest-remainder apportionment: integer targets summing to budget."""
    shares = {name: budget * r for name, r in ratios.items()}
    targets = {name: int(s) for name, s in shares.items()}
    leftover = budget - sum(targets.values())
    order = sorted(ratios, key=lambda n: (-(shares[n] - targets[n]), n))
    for name in order[:leftover]:
        targets[name] += 1
    return targets


def _sample_pool(docs, target: int, rng: np.random.Generator, name: str):
    """Seeded shuffle without replacement; stop before exceeding the target."""
    docs = sorted(docs, key=lambda d: d.id)  # pool order independence
    order = rng.permutation(len(docs))
    selected = []
    cumulative = 0
    stopped = False
    for idx in order:
        doc = docs[idx]
        if cumulative + doc.token_count > target:
            stopped = True
            break
        selected.append(doc)
        cumulative += doc.token_count
    if not stopped and cumulative < target:
        raise MixError(
            f"pool {name!r} exhausted before target: short {target - cumulative} tokens")
    return selected, cumulative


def compose_mixture(pools: dict, spec: MixSpec):
    """Draw from each pool to its token target and interleave by share.

    pools maps class name -> iterable of Documents. Returns (manifest,
    docs) with docs in the deterministic interleaved output order.
    """
    ratios = spec.normalized_ratios()
    active = {name for name, r in ratios.items() if r > 0}
    missing = active - set(pools)
    if missing:
        raise MixError(f"no pool supplied for classes: {sorted(missing)}")

    targets = apportion_budget(spec.total_token_budget,
                               {n: r for n, r in ratios.items() if r > 0})

    per_class = {}
    queues = {}
    for name in sorted(targets):
        pool_rng = np.random.default_rng(
            [spec.rng_seed & 0xFFFFFFFFFFFFFFFF,
             int.from_bytes(hashlib.sha256(name.encode()).digest()[:8], "little")])
        selected, realized = _sample_pool(list(pools[name]), targets[name],
                                          pool_rng, name)
        per_class[name] = {
            "target_tokens": targets[name],
            "realized_tokens": realized,
            "doc_ids": [d.id for d in selected],
        }
        queues[name] = list(selected)

    # Deterministic interleave: always emit from the class furthest below
    # its target token share, ties broken by class name.
    emitted = {name: 0 for name in queues}
    output = []
    while any(queues.values()):
        candidates = [n for n in sorted(queues) if queues[n]]
        name = min(candidates,
                   key=lambda n: (emitted[n] / max(targets[n], 1), n))
        doc = queues[name].pop(0)
        emitted[name] += doc.token_count
        output.append(doc)

    seen = set()
    for doc in output:
        if doc.id in seen:
            raise MixError(f"document {doc.id!r} drawn twice across pools")
        seen.add(doc.id)

    manifest = MixManifest(per_class, spec.rng_seed, spec.spec_hash())
    return manifest, output


def compose_to_dir(pools: dict, spec: MixSpec, out_dir: str,
                   docs_per_shard: int = 10000):
    """Compose and write shards plus manifest.json into out_dir."""
    manifest, docs = compose_mixture(pools, spec)
    os.makedirs(out_dir, exist_ok=True)
    paths = write_corpus(docs, os.path.join(out_dir, "mix"),
                         docs_per_shard=docs_per_shard)
    manifest_path = os.path.join(out_dir, "manifest.json")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest.to_json(), fh, sort_keys=True, indent=2)
        fh.write("\n")
    return manifest, paths


def verify_manifest(manifest: MixManifest, corpus_prefix: str) -> dict:
    """Recount shard tokens per class and compare against the manifest."""
    by_id = {}
    for doc in corpus_mod.read_corpus(corpus_prefix):
        by_id[doc.id] = doc

    deviations = {}
    for name, entry in manifest.per_class.items():
        recount = 0
        for doc_id in entry["doc_ids"]:
            doc = by_id.get(doc_id)
            if doc is None:
                raise MixError(f"manifest doc {doc_id!r} missing from shards")
            recount += doc.token_count
        deviations[name] = abs(recount - entry["realized_tokens"])
    return {
        "per_class_deviation": deviations,
        "max_deviation": max(deviations.values()) if deviations else 0,
        "ok": all(d == 0 for d in deviations.values()),
    }
