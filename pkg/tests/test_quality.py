import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from corpusforge.classifier import FilterHyperparams, train_filter
from corpusforge.corpus import make_document
from corpusforge.quality import (
    FileLabelBackend,
    HttpAnnotationBackend,
    LabeledSample,
    QualityError,
    annotate_batch,
    evaluate_filter,
    filter_by_rank,
    load_prompt_asset,
    metrics_from_confusion,
    parse_verdict,
    render_prompt,
    save_labels,
)

from conftest import make_separable_samples


class StubAnnotationServer:
    """Local HTTP endpoint returning a fixed completion for every prompt."""

    def __init__(self, completion):
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers["Content-Length"])
                body = json.loads(self.rfile.read(length))
                outer.prompts.append(body["prompt"])
                payload = json.dumps({"completion": outer.completion}).encode()
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

            def log_message(self, *args):
                pass

        self.completion = completion
        self.prompts = []
        self.server = HTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.server.serve_forever,
                                       daemon=True)

    def __enter__(self):
        self.thread.start()
        return f"http://127.0.0.1:{self.server.server_address[1]}/"

    def __exit__(self, *exc):
        self.server.shutdown()
        self.server.server_close()


class TestVerdictParsing:
    @pytest.mark.parametrize("completion,expected", [
        ("agent", "agent"),
        ("Agent.", "agent"),
        ("This is GENERAL text", "general"),
        ("Verdict: agent", "agent"),
        ("no verdict here", None),
        ("", None),
    ])
    def test_first_classification_word(self, completion, expected):
        assert parse_verdict(completion) == expected


class TestPromptAssets:
    def test_annotator_template_loads_and_renders(self):
        template = load_prompt_asset()
        assert "{document}" in template
        rendered = render_prompt(template, "sample text")
        assert "sample text" in rendered
        assert "{document}" not in rendered

    def test_code_to_text_template_exists(self):
        assert load_prompt_asset("code_to_text.txt")


class TestAnnotateBatch:
    def _docs(self, n=3):
        return [make_document(f"d{i}", "s", "text", f"doc number {i}")
                for i in range(n)]

    def test_file_backend_lookup(self, tmp_path):
        labels_path = tmp_path / "labels.jsonl"
        lines = [{"doc_id": "d0", "label": "agent", "annotator": "human"},
                 {"doc_id": "d1", "label": "general", "annotator": "human"},
                 {"doc_id": "d2", "label": "agent", "annotator": "human"}]
        labels_path.write_text("\n".join(json.dumps(x) for x in lines) + "\n")
        backend = FileLabelBackend(str(labels_path))
        samples, errors = annotate_batch(self._docs(), backend)
        assert errors == []
        assert [(s.doc_id, s.label) for s in samples] == [
            ("d0", "agent"), ("d1", "general"), ("d2", "agent")]

    def test_file_backend_missing_doc_excluded(self, tmp_path):
        labels_path = tmp_path / "labels.jsonl"
        labels_path.write_text(json.dumps(
            {"doc_id": "d0", "label": "agent"}) + "\n")
        samples, errors = annotate_batch(self._docs(2),
                                         FileLabelBackend(str(labels_path)))
        assert [s.doc_id for s in samples] == ["d0"]
        assert [e[0] for e in errors] == ["d1"]

    def test_http_backend_all_agent(self):
        with StubAnnotationServer("agent") as url:
            backend = HttpAnnotationBackend(url, timeout=5.0, retries=0)
            samples, errors = annotate_batch(self._docs(), backend)
        assert errors == []
        assert all(s.label == "agent" for s in samples)

    def test_http_backend_substitutes_document(self):
        server = StubAnnotationServer("general")
        with server as url:
            backend = HttpAnnotationBackend(url, timeout=5.0, retries=0)
            annotate_batch(self._docs(1), backend)
        assert "doc number 0" in server.prompts[0]

    def test_http_unparseable_verdict_excluded(self):
        with StubAnnotationServer("no idea") as url:
            backend = HttpAnnotationBackend(url, timeout=5.0, retries=0)
            samples, errors = annotate_batch(self._docs(2), backend)
        assert samples == []
        assert len(errors) == 2

    def test_unreachable_backend_recorded_per_doc(self):
        backend = HttpAnnotationBackend("http://127.0.0.1:1/", timeout=0.2,
                                        retries=0)
        samples, errors = annotate_batch(self._docs(2), backend)
        assert samples == []
        assert len(errors) == 2

    def test_labels_file_round_trip(self, tmp_path):
        samples = [LabeledSample("d0", "agent", "test")]
        path = tmp_path / "out.jsonl"
        save_labels(samples, str(path))
        backend = FileLabelBackend(str(path))
        assert backend.labels == {"d0": "agent"}

    def test_invalid_label_rejected(self):
        with pytest.raises(QualityError):
            LabeledSample("d0", "maybe", "test")


@pytest.fixture(scope="module")
def model():
    samples = make_separable_samples(400, seed=5)
    return train_filter(samples, FilterHyperparams(rng_seed=3))


class TestEvaluateFilter:
    def test_perfect_predictor_all_ones(self, model):
        labeled = make_separable_samples(200, seed=6)
        metrics = evaluate_filter(model, labeled)
        assert metrics.accuracy == 1.0
        assert metrics.f1 == 1.0
        assert metrics.precision == 1.0
        assert metrics.recall == 1.0
        (tp, fn), (fp, tn) = metrics.confusion
        assert fn == 0 and fp == 0

    def test_matches_independent_tally(self, model):
        labeled = make_separable_samples(20000, seed=44)
        metrics = evaluate_filter(model, labeled)
        # Independent tally: separate pass, separate counting code.
        tp = fn = fp = tn = 0
        for text, label in labeled:
            pred = "agent" if model.predict_score(text) >= 0.5 else "general"
            if label == "agent" and pred == "agent":
                tp += 1
            elif label == "agent":
                fn += 1
            elif pred == "agent":
                fp += 1
            else:
                tn += 1
        assert metrics.confusion == [[tp, fn], [fp, tn]]
        assert abs(metrics.accuracy - (tp + tn) / 20000) < 1e-12

    def test_metrics_recomputable_from_confusion(self, model):
        labeled = make_separable_samples(500, seed=13)
        m = evaluate_filter(model, labeled)
        (tp, fn), (fp, tn) = m.confusion
        again = metrics_from_confusion(tp, fn, fp, tn)
        assert again.accuracy == m.accuracy
        assert again.f1 == m.f1
        assert again.precision == m.precision
        assert again.recall == m.recall

    def test_zero_division_conventions(self):
        m = metrics_from_confusion(0, 0, 0, 5)
        assert m.precision == 0.0 and m.recall == 0.0 and m.f1 == 0.0

    def test_empty_set_rejected(self, model):
        with pytest.raises(QualityError):
            evaluate_filter(model, [])


class TestFilterByRank:
    def _scored(self, n, seed=17):
        import numpy as np
        rng = np.random.default_rng(seed)
        docs = []
        for i in range(n):
            length = int(rng.integers(1, 50))
            docs.append((make_document(f"d{i:05d}", "s", "text",
                                       " ".join(["w"] * length)),
                         float(rng.random())))
        return docs

    def test_keep_all(self):
        scored = self._scored(10)
        kept = filter_by_rank(scored, 1.0)
        assert len(kept) == 10
        scores = [float(d.meta["filter_score"]) for d in kept]
        assert scores == sorted(scores, reverse=True)

    def test_forty_percent_equal_lengths(self):
        docs = [(make_document(f"d{i:03d}", "s", "text", "a b c d e"),
                 i / 100) for i in range(100)]
        kept = filter_by_rank(docs, 0.4)
        assert len(kept) == 40
        assert all(float(d.meta["filter_score"]) >= 0.60 for d in kept)

    def test_matches_sort_and_scan_oracle(self):
        scored = self._scored(1000)
        kept = filter_by_rank(scored, 0.4)
        ranked = sorted(scored, key=lambda p: (-p[1], p[0].id))
        total = sum(d.token_count for d, _ in scored)
        cum, expected = 0, []
        for doc, _ in ranked:
            if cum >= 0.4 * total:
                break
            expected.append(doc.id)
            cum += doc.token_count
        assert [d.id for d in kept] == expected

    def test_kept_tokens_within_one_doc_of_target(self):
        scored = self._scored(1000, seed=23)
        total = sum(d.token_count for d, _ in scored)
        kept = filter_by_rank(scored, 0.4)
        kept_tokens = sum(d.token_count for d in kept)
        max_doc = max(d.token_count for d, _ in scored)
        assert kept_tokens >= 0.4 * total
        assert kept_tokens - 0.4 * total <= max_doc

    def test_monotone_in_fraction(self):
        scored = self._scored(300, seed=29)
        small = {d.id for d in filter_by_rank(scored, 0.2)}
        large = {d.id for d in filter_by_rank(scored, 0.6)}
        assert small <= large

    def test_bad_fraction(self):
        with pytest.raises(QualityError):
            filter_by_rank(self._scored(5), 0.0)
        with pytest.raises(QualityError):
            filter_by_rank(self._scored(5), 1.5)

    def test_bad_score(self):
        doc = make_document("d", "s", "text", "x")
        with pytest.raises(QualityError):
            filter_by_rank([(doc, 1.5)], 0.5)
