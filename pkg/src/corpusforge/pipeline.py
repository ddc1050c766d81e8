"""Declarative pipeline runner: one JSON config drives every stage.

Stages run sequentially in config order; each stage reads and writes
config-declared paths under the workspace. The run report records
per-stage input/output SHA-256 hashes, durations, and key stats so the
full provenance chain from the final mix back to the raw inputs is
reconstructible from the report alone.
"""

import hashlib
import json
import os
import sys
import time

from . import corpus as corpus_mod
from . import embed as embed_mod
from . import ingest as ingest_mod
from . import mix as mix_mod
from . import quality as quality_mod
from . import retrieve as retrieve_mod
from . import scaling as scaling_mod
from .classifier import FilterHyperparams, load_model, save_model, train_filter
from .corpus import compute_stats, make_document, read_corpus, write_corpus


class ConfigError(Exception):
    """Config schema violation; maps to exit code 2."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class StageError(Exception):
    """A stage failed at run time; maps to exit code 1."""


def log_event(**fields):
    print(json.dumps(fields, sort_keys=True), file=sys.stderr)


def worker_count(config: dict) -> int:
    env = os.environ.get("FORGE_WORKERS")
    if env is not None:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError("FORGE_WORKERS", f"not an integer: {env!r}")
    return int(config.get("workers", 1))


def sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _hash_outputs(paths):
    out = {}
    for path in sorted(paths):
        if os.path.isdir(path):
            for root, _, files in os.walk(path):
                for name in sorted(files):
                    p = os.path.join(root, name)
                    out[p] = sha256_file(p)
        elif os.path.isfile(path):
            out[path] = sha256_file(path)
    return out


def _resolve(workspace: str, path: str) -> str:
    return path if os.path.isabs(path) else os.path.join(workspace, path)


def _require(stage: dict, field: str, stage_name: str):
    if field not in stage:
        raise ConfigError(f"stages[{stage_name}].{field}", "missing required field")
    return stage[field]


def _input_corpus_paths(prefix: str):
    return corpus_mod.shard_paths(prefix)


def _check_input(path_or_prefix: str, field: str):
    if os.path.exists(path_or_prefix):
        return
    if corpus_mod.shard_paths(path_or_prefix):
        return
    raise ConfigError(field, f"input does not exist: {path_or_prefix}")


# ----------------------------------------------------------------------
# Stage implementations. Each returns (input_paths, output_paths, stats).


def _stage_stats(stage, ctx):
    prefix = _resolve(ctx["workspace"], _require(stage, "corpus", "stats"))
    _check_input(prefix, "stages[stats].corpus")
    out = _resolve(ctx["workspace"], _require(stage, "out", "stats"))
    stats = compute_stats(read_corpus(prefix))
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(stats.to_json(), fh, sort_keys=True, indent=2)
        fh.write("\n")
    return _input_corpus_paths(prefix), [out], stats.to_json()


def _stage_ingest(stage, ctx):
    manifest_path = _resolve(ctx["workspace"], _require(stage, "manifest", "ingest"))
    _check_input(manifest_path, "stages[ingest].manifest")
    out = _resolve(ctx["workspace"], _require(stage, "out", "ingest"))
    registry = ingest_mod.SourceRegistry.from_manifest(manifest_path)

    def docs():
        for spec in sorted(registry, key=lambda s: s.name):
            if not spec.origin:
                continue
            origin = _resolve(ctx["workspace"], spec.origin)
            data_class = ingest_mod.assign_data_class(spec)
            with open(origin, encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, start=1):
                    line = line.strip()
                    if not line:
                        continue
                    obj = json.loads(line)
                    yield make_document(
                        id=obj.get("id", f"{spec.name}:{lineno}"),
                        source_id=spec.name,
                        data_class=data_class,
                        text=obj["text"],
                        meta={"origin": spec.origin},
                    )

    paths = write_corpus(docs(), out)
    inputs = [manifest_path] + [
        _resolve(ctx["workspace"], s.origin) for s in registry if s.origin]
    return inputs, paths, {"sources": len(registry), "shards": len(paths)}


def _stage_frontier(stage, ctx):
    seeds_path = _resolve(ctx["workspace"], _require(stage, "seeds", "frontier"))
    graph_path = _resolve(ctx["workspace"], _require(stage, "graph", "frontier"))
    for field, p in (("seeds", seeds_path), ("graph", graph_path)):
        _check_input(p, f"stages[frontier].{field}")
    out = _resolve(ctx["workspace"], _require(stage, "out", "frontier"))
    levels = int(stage.get("levels", 3))
    keywords = stage.get("keywords", list(ingest_mod.DEFAULT_DOC_KEYWORDS))
    if isinstance(keywords, str):
        keywords = [k for k in keywords.split(",") if k]
    filter_final = bool(stage.get("filter_final", True))

    with open(seeds_path, encoding="utf-8") as fh:
        seeds = {line.strip() for line in fh if line.strip()}
    graph = ingest_mod.load_link_graph(graph_path)
    frontier = ingest_mod.expand_url_frontier(seeds, graph, levels)
    all_urls = frontier.all_urls()
    kept = (ingest_mod.filter_doc_urls(all_urls, keywords)
            if filter_final else all_urls)
    payload = {
        "levels": [sorted(level) for level in frontier.levels],
        "rejected_seeds": frontier.rejected_seeds,
        "doc_urls": sorted(kept),
    }
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")
    level_sizes = [len(level) for level in frontier.levels]
    return [seeds_path, graph_path], [out], {"level_sizes": level_sizes,
                                             "doc_urls": len(kept)}


def _stage_embed(stage, ctx):
    prefix = _resolve(ctx["workspace"], _require(stage, "corpus", "embed"))
    _check_input(prefix, "stages[embed].corpus")
    out = _resolve(ctx["workspace"], _require(stage, "out", "embed"))
    cfg = embed_mod.EmbedderConfig(
        dims=int(stage.get("dims", 256)),
        ngram_min=int(stage.get("ngram_min", 3)),
        ngram_max=int(stage.get("ngram_max", 5)),
        hash_seed=int(stage.get("seed", ctx["rng_seed"])),
    )
    vectors = {}
    for doc in read_corpus(prefix):
        vectors[doc.id] = embed_mod.embed_document(doc, cfg)
    embed_mod.save_embeddings(vectors, out)
    return _input_corpus_paths(prefix), [out], {"vectors": len(vectors)}


def _stage_retrieve(stage, ctx):
    seeds_path = _resolve(ctx["workspace"], _require(stage, "seeds", "retrieve"))
    cands_path = _resolve(ctx["workspace"], _require(stage, "candidates", "retrieve"))
    for field, p in (("seeds", seeds_path), ("candidates", cands_path)):
        _check_input(p, f"stages[retrieve].{field}")
    out = _resolve(ctx["workspace"], _require(stage, "out", "retrieve"))
    k = int(_require(stage, "k", "retrieve"))
    hits = retrieve_mod.retrieve_top_k(
        embed_mod.load_external_embeddings(seeds_path),
        embed_mod.load_external_embeddings(cands_path), k)
    retrieve_mod.save_hits(hits, out)
    return [seeds_path, cands_path], [out], {"hits": len(hits)}


def _stage_prune(stage, ctx):
    vecs_path = _resolve(ctx["workspace"], _require(stage, "vecs", "prune"))
    _check_input(vecs_path, "stages[prune].vecs")
    out = _resolve(ctx["workspace"], _require(stage, "report", "prune"))
    threshold = float(stage.get("threshold", 0.95))
    report = retrieve_mod.prune_redundant(
        embed_mod.load_external_embeddings(vecs_path), threshold)
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(report.to_json(), fh, sort_keys=True, indent=2)
        fh.write("\n")
    return [vecs_path], [out], {"retained": len(report.retained_ids),
                                "removed": len(report.removed_pairs)}


def _stage_annotate(stage, ctx):
    prefix = _resolve(ctx["workspace"], _require(stage, "corpus", "annotate"))
    _check_input(prefix, "stages[annotate].corpus")
    out = _resolve(ctx["workspace"], _require(stage, "out", "annotate"))
    backend_cfg = _require(stage, "backend", "annotate")
    kind = backend_cfg.get("kind")
    if kind == "file":
        labels_path = _resolve(ctx["workspace"], backend_cfg["labels"])
        _check_input(labels_path, "stages[annotate].backend.labels")
        backend = quality_mod.FileLabelBackend(labels_path)
        inputs = [labels_path]
    elif kind == "http":
        backend = quality_mod.HttpAnnotationBackend(
            backend_cfg["url"],
            timeout=float(backend_cfg.get("timeout", 30.0)),
            retries=int(backend_cfg.get("retries", 2)))
        inputs = []
    else:
        raise ConfigError("stages[annotate].backend.kind",
                          f"must be 'file' or 'http', got {kind!r}")
    samples, errors = quality_mod.annotate_batch(read_corpus(prefix), backend)
    quality_mod.save_labels(samples, out)
    return (_input_corpus_paths(prefix) + inputs, [out],
            {"labeled": len(samples), "errors": len(errors)})


def _filter_hyperparams(stage, ctx) -> FilterHyperparams:
    return FilterHyperparams(
        dims=int(stage.get("dims", 256)),
        learning_rate=float(stage.get("learning_rate", 0.1)),
        word_ngram_max=int(stage.get("word_ngram_max", 3)),
        min_count=int(stage.get("min_count", 3)),
        epochs=int(stage.get("epochs", 3)),
        bucket_count=int(stage.get("bucket_count", 2_000_000)),
        rng_seed=int(stage.get("seed", ctx["rng_seed"])),
    )


def _stage_train_filter(stage, ctx):
    prefix = _resolve(ctx["workspace"], _require(stage, "corpus", "train-filter"))
    labels_path = _resolve(ctx["workspace"], _require(stage, "labels", "train-filter"))
    _check_input(prefix, "stages[train-filter].corpus")
    _check_input(labels_path, "stages[train-filter].labels")
    out = _resolve(ctx["workspace"], _require(stage, "out", "train-filter"))
    backend = quality_mod.FileLabelBackend(labels_path)
    samples = []
    for doc in read_corpus(prefix):
        label = backend.labels.get(doc.id)
        if label is not None:
            samples.append((doc.text, label))
    model = train_filter(samples, _filter_hyperparams(stage, ctx))
    save_model(model, out)
    return (_input_corpus_paths(prefix) + [labels_path], [out],
            {"samples": len(samples), "epoch_losses": model.epoch_losses})


def _stage_score(stage, ctx):
    prefix = _resolve(ctx["workspace"], _require(stage, "corpus", "score"))
    model_path = _resolve(ctx["workspace"], _require(stage, "model", "score"))
    _check_input(prefix, "stages[score].corpus")
    _check_input(model_path, "stages[score].model")
    out = _resolve(ctx["workspace"], _require(stage, "out", "score"))
    model = load_model(model_path)
    n = 0
    with open(out, "w", encoding="utf-8") as fh:
        for doc in read_corpus(prefix):
            fh.write(json.dumps({"id": doc.id,
                                 "score": model.predict_score(doc.text)}))
            fh.write("\n")
            n += 1
    return _input_corpus_paths(prefix) + [model_path], [out], {"scored": n}


def _stage_filter(stage, ctx):
    prefix = _resolve(ctx["workspace"], _require(stage, "corpus", "filter"))
    scores_path = _resolve(ctx["workspace"], _require(stage, "scores", "filter"))
    _check_input(prefix, "stages[filter].corpus")
    _check_input(scores_path, "stages[filter].scores")
    out = _resolve(ctx["workspace"], _require(stage, "out", "filter"))
    fraction = float(_require(stage, "keep_fraction", "filter"))
    scores = {}
    with open(scores_path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                obj = json.loads(line)
                scores[obj["id"]] = float(obj["score"])
    scored = [(doc, scores[doc.id]) for doc in read_corpus(prefix)
              if doc.id in scores]
    kept = quality_mod.filter_by_rank(scored, fraction)
    paths = write_corpus(kept, out)
    kept_tokens = sum(d.token_count for d in kept)
    return (_input_corpus_paths(prefix) + [scores_path], paths,
            {"kept_docs": len(kept), "kept_tokens": kept_tokens})


def _stage_fit(stage, ctx):
    obs_path = _resolve(ctx["workspace"], _require(stage, "obs", "fit"))
    _check_input(obs_path, "stages[fit].obs")
    out = _resolve(ctx["workspace"], _require(stage, "out", "fit"))
    benchmark = stage.get("benchmark")
    obs = scaling_mod.load_observations(obs_path)
    curve = scaling_mod.fit_power_law(obs, benchmark)
    payload = curve.to_json()
    payload["n_obs"] = len([o for o in obs
                            if benchmark is None or o.benchmark == benchmark])
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return [obs_path], [out], payload


def _stage_optimize(stage, ctx):
    fit_paths = [_resolve(ctx["workspace"], p)
                 for p in _require(stage, "fits", "optimize")]
    for p in fit_paths:
        _check_input(p, "stages[optimize].fits")
    out = _resolve(ctx["workspace"], _require(stage, "out", "optimize"))
    curves = []
    for p in fit_paths:
        with open(p, encoding="utf-8") as fh:
            obj = json.load(fh)
        curves.append(scaling_mod.ScalingCurve(
            obj["c"], obj["k"], obj["alpha"], obj.get("rmse", 0.0),
            obj.get("benchmark", "")))
    weights = stage.get("weights", [1.0] * len(curves))
    if isinstance(weights, str):
        weights = [float(w) for w in weights.split(",")]
    domain = stage.get("domain", "0.05:0.6")
    if isinstance(domain, str):
        lo, hi = (float(v) for v in domain.split(":"))
    else:
        lo, hi = float(domain[0]), float(domain[1])
    step = float(stage.get("step", 1e-3))
    x_star, loss = scaling_mod.optimal_mix_ratio(curves, weights, (lo, hi), step)
    payload = {"x_star": x_star, "aggregate_loss": loss,
               "weights": weights, "domain": [lo, hi], "step": step}
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return fit_paths, [out], payload


def _stage_mix(stage, ctx):
    spec_path = _resolve(ctx["workspace"], _require(stage, "spec", "mix"))
    _check_input(spec_path, "stages[mix].spec")
    out_dir = _resolve(ctx["workspace"], _require(stage, "out", "mix"))
    pool_cfg = _require(stage, "pools", "mix")
    pools = {}
    inputs = [spec_path]
    for name, prefix in pool_cfg.items():
        prefix = _resolve(ctx["workspace"], prefix)
        _check_input(prefix, f"stages[mix].pools.{name}")
        pools[name] = list(read_corpus(prefix))
        inputs.extend(_input_corpus_paths(prefix))
    spec = mix_mod.MixSpec.from_file(spec_path)
    manifest, paths = mix_mod.compose_to_dir(pools, spec, out_dir)
    realized = {n: e["realized_tokens"] for n, e in manifest.per_class.items()}
    return inputs, [out_dir], {"realized_tokens": realized}


STAGES = {
    "stats": _stage_stats,
    "ingest": _stage_ingest,
    "frontier": _stage_frontier,
    "embed": _stage_embed,
    "retrieve": _stage_retrieve,
    "prune": _stage_prune,
    "annotate": _stage_annotate,
    "train-filter": _stage_train_filter,
    "score": _stage_score,
    "filter": _stage_filter,
    "fit": _stage_fit,
    "optimize": _stage_optimize,
    "mix": _stage_mix,
}


def validate_config(config: dict) -> dict:
    if not isinstance(config, dict):
        raise ConfigError("(root)", "config must be a JSON object")
    stages = config.get("stages")
    if not isinstance(stages, list) or not stages:
        raise ConfigError("stages", "must be a non-empty array")
    for i, stage in enumerate(stages):
        if not isinstance(stage, dict) or "name" not in stage:
            raise ConfigError(f"stages[{i}]", "each stage needs a 'name'")
        if stage["name"] not in STAGES:
            raise ConfigError(f"stages[{i}].name",
                              f"unknown stage {stage['name']!r}")
    return config


def run_pipeline(config: dict, workspace: str | None = None) -> dict:
    """Run every configured stage in order; returns the run report.

    Raises ConfigError for schema/path problems and StageError when a
    stage fails at run time; in both cases the report written so far is
    attached to the exception as `.report` when available.
    """
    validate_config(config)
    workspace = workspace or config.get("workspace", ".")
    os.makedirs(workspace, exist_ok=True)
    ctx = {"workspace": workspace,
           "rng_seed": int(config.get("rng_seed", 0)),
           "workers": worker_count(config)}

    report = {"rng_seed": ctx["rng_seed"], "workspace": workspace, "stages": []}
    report_path = os.path.join(workspace, config.get("report", "run_report.json"))

    def write_report():
        with open(report_path, "w", encoding="utf-8") as fh:
            json.dump(report, fh, sort_keys=True, indent=2)
            fh.write("\n")

    for stage in config["stages"]:
        name = stage["name"]
        log_event(event="stage_start", stage=name)
        started = time.time()
        try:
            inputs, outputs, stats = STAGES[name](stage, ctx)
        except ConfigError:
            write_report()
            raise
        except Exception as exc:
            report["stages"].append({"name": name, "status": "failed",
                                     "error": str(exc)})
            write_report()
            err = StageError(f"stage {name!r} failed: {exc}")
            err.report = report
            raise err from exc
        entry = {
            "name": name,
            "status": "ok",
            "duration_s": round(time.time() - started, 6),
            "inputs": _hash_outputs(inputs),
            "outputs": _hash_outputs(outputs),
            "stats": stats,
        }
        report["stages"].append(entry)
        log_event(event="stage_done", stage=name,
                  duration_s=entry["duration_s"])
    write_report()
    return report
