import json

import pytest
from hypothesis import given, strategies as st

from corpusforge.corpus import (
    CorpusStats,
    DuplicateIdError,
    ParseError,
    ValidationError,
    compute_stats,
    count_tokens,
    make_document,
    parse_document_record,
    read_corpus,
    serialize_document,
    write_corpus,
)

from conftest import make_random_docs


class TestCountTokens:
    def test_empty(self):
        assert count_tokens("") == 0

    def test_whitespace_split(self):
        assert count_tokens("call the weather API") == 4

    def test_unicode_whitespace(self):
        assert count_tokens("a b\tc\nd") == 4

    def test_corpus_total_matches_brute_force(self):
        # Independent one-pass counter: manual scan for runs of
        # non-whitespace characters.
        docs = make_random_docs(10000, seed=11)

        def brute(text):
            count, in_run = 0, False
            for ch in text:
                if ch.isspace():
                    in_run = False
                elif not in_run:
                    count += 1
                    in_run = True
            return count

        assert sum(d.token_count for d in docs) == sum(brute(d.text) for d in docs)

    @given(st.text(min_size=1).filter(lambda s: s.strip()),
           st.text(min_size=1).filter(lambda s: s.strip()))
    def test_concatenation_additive(self, a, b):
        assert count_tokens(a + " " + b) == count_tokens(a) + count_tokens(b)


class TestParseDocumentRecord:
    def test_round_trip(self):
        doc = make_document("d1", "s1", "agent_doc", "call the api",
                            meta={"url": "https://x"})
        assert parse_document_record(serialize_document(doc)) == doc

    def test_token_count_recomputed_when_absent(self):
        line = json.dumps({"id": "d1", "source_id": "s", "data_class": "text",
                           "text": "a b c"})
        assert parse_document_record(line).token_count == 3

    def test_unknown_data_class(self):
        doc = {"id": "d1", "source_id": "s", "data_class": "video", "text": "x"}
        with pytest.raises(ValidationError):
            parse_document_record(json.dumps(doc))

    def test_missing_id(self):
        with pytest.raises(ParseError, match="id"):
            parse_document_record(json.dumps(
                {"source_id": "s", "data_class": "text", "text": "x"}))

    def test_malformed_json(self):
        with pytest.raises(ParseError):
            parse_document_record("{not json")

    def test_bad_meta(self):
        doc = {"id": "d", "source_id": "s", "data_class": "text", "text": "x",
               "meta": {"k": 1}}
        with pytest.raises(ParseError, match="meta"):
            parse_document_record(json.dumps(doc))

    @given(st.text(alphabet=st.characters(blacklist_categories=("Cs",))))
    def test_round_trip_any_text(self, text):
        doc = make_document("d", "s", "code", text)
        assert parse_document_record(serialize_document(doc)) == doc


class TestComputeStats:
    def test_empty_stream(self):
        stats = compute_stats([])
        assert stats.total_tokens == 0
        assert all(v == 0 for v in stats.tokens_by_class.values())

    def test_small_arithmetic(self):
        docs = [make_document(f"d{i}", "s", cls, "t1 t2 t3 t4 t5")
                for i, cls in enumerate(["agent_doc", "code", "text"])]
        stats = compute_stats(docs)
        assert stats.tokens_by_class == {"agent_doc": 5, "agent_traj": 0,
                                         "code": 5, "text": 5}
        assert stats.total_tokens == 15

    def test_matches_brute_force_recount(self):
        docs = make_random_docs(1000, seed=3)
        stats = compute_stats(docs)
        expected = {}
        for d in docs:
            expected[d.data_class] = expected.get(d.data_class, 0) + d.token_count
        for cls, tok in expected.items():
            assert stats.tokens_by_class[cls] == tok
        assert stats.total_tokens == sum(expected.values())

    def test_duplicate_id_error(self):
        doc = make_document("dup", "s", "text", "x")
        with pytest.raises(DuplicateIdError, match="dup"):
            compute_stats([doc, doc])

    def test_permutation_invariant(self):
        docs = make_random_docs(200, seed=5)
        forward = compute_stats(docs)
        backward = compute_stats(list(reversed(docs)))
        assert forward.to_json() == backward.to_json()

    def test_shard_merge_associative(self):
        docs = make_random_docs(300, seed=9)
        whole = compute_stats(docs)
        merged = CorpusStats.empty()
        for i in range(0, 300, 100):
            merged = merged.merge(compute_stats(docs[i:i + 100]))
        assert whole.to_json() == merged.to_json()


class TestShardIO:
    def test_write_read_round_trip(self, tmp_path):
        docs = make_random_docs(250, seed=1)
        prefix = str(tmp_path / "corpus")
        paths = write_corpus(docs, prefix, docs_per_shard=100)
        assert [p.split("/")[-1] for p in paths] == [
            "corpus.00000.jsonl", "corpus.00001.jsonl", "corpus.00002.jsonl"]
        assert list(read_corpus(prefix)) == docs

    def test_empty_corpus_still_writes_one_shard(self, tmp_path):
        paths = write_corpus([], str(tmp_path / "empty"), docs_per_shard=10)
        assert len(paths) == 1
