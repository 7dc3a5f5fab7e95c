"""Ingestion, scrubbing, label parsing, and majority aggregation."""

import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from claimmatch.corpus import (
    AnnotatedPair,
    ClaimLabel,
    Corpus,
    CorpusError,
    FactCheckReport,
    MajorityLabel,
    Message,
    SimilarityLabel,
    Source,
    has_content,
    label_distribution,
    load_annotated_pairs,
    load_claim_labels,
    load_parallel_pairs,
    majority_label,
    normalize_whitespace,
    parse_claim_label,
    parse_similarity_label,
    scrub_pii,
)

import datetime


class TestScrubPii:
    def test_phone_email_plate(self):
        out = scrub_pii("call 98765 43210 or mail a.b@x.co from KA01AB1234")
        assert out == "call <PHONE> or mail <EMAIL> from <PLATE>"

    def test_short_digit_runs_survive(self):
        assert scrub_pii("pin 1234 year 2024") == "pin 1234 year 2024"

    def test_formatted_phone(self):
        assert scrub_pii("ring +91 (11) 2345-6789 now") == "ring <PHONE> now"

    def test_plate_with_separators(self):
        assert scrub_pii("seen near KA-01-AB-1234 yesterday") == "seen near <PLATE> yesterday"

    def test_plate_not_inside_longer_run(self):
        text = "code XKA01AB1234Y stays"
        assert scrub_pii(text) == text

    def test_email_digits_not_phone(self):
        assert scrub_pii("write to user12345678@mail.com") == "write to <EMAIL>"

    @given(st.text(max_size=200))
    def test_idempotent(self, text):
        once = scrub_pii(text)
        assert scrub_pii(once) == once

    @given(st.text(max_size=200))
    def test_no_digit_run_of_seven_survives(self, text):
        out = scrub_pii(text)
        run = 0
        for ch in out:
            run = run + 1 if ch.isdigit() else 0
            assert run < 7


class TestHasContent:
    def test_placeholders_only_is_empty(self):
        assert not has_content("<PHONE> <EMAIL>")

    def test_real_words_count(self):
        assert has_content("call <PHONE> tomorrow")


def test_normalize_whitespace():
    assert normalize_whitespace("  a\t\tb\n\nc  ") == "a b c"


class TestLabelParsing:
    @pytest.mark.parametrize(
        "raw,expected",
        [
            ("Very Similar", SimilarityLabel.VERY_SIMILAR),
            ("somewhat_dissimilar", SimilarityLabel.SOMEWHAT_DISSIMILAR),
            ("VD", SimilarityLabel.VERY_DISSIMILAR),
            ("N/A - can't read the language", SimilarityLabel.NA),
        ],
    )
    def test_similarity_aliases(self, raw, expected):
        assert parse_similarity_label(raw) == expected

    def test_similarity_unknown(self):
        with pytest.raises(CorpusError):
            parse_similarity_label("kind of similar")

    @pytest.mark.parametrize(
        "raw,expected",
        [
            ("Yes", ClaimLabel.YES),
            ("probably", ClaimLabel.PROBABLY),
            ("Wrong Language", ClaimLabel.WRONG_LANGUAGE),
            ("N/A", ClaimLabel.WRONG_LANGUAGE),
        ],
    )
    def test_claim_aliases(self, raw, expected):
        assert parse_claim_label(raw) == expected


class TestMajorityLabel:
    def test_strict_majority(self):
        labels = (SimilarityLabel.VERY_SIMILAR,) * 2 + (SimilarityLabel.NA,)
        assert majority_label(labels) == MajorityLabel.VERY_SIMILAR

    def test_plurality_is_not_majority(self):
        labels = (
            SimilarityLabel.VERY_SIMILAR,
            SimilarityLabel.VERY_SIMILAR,
            SimilarityLabel.NA,
            SimilarityLabel.SOMEWHAT_SIMILAR,
        )
        assert majority_label(labels) == MajorityLabel.NO_MAJORITY

    def test_even_split(self):
        labels = (SimilarityLabel.VERY_SIMILAR, SimilarityLabel.NA)
        assert majority_label(labels) == MajorityLabel.NO_MAJORITY

    def test_requires_two(self):
        with pytest.raises(ValueError):
            majority_label((SimilarityLabel.VERY_SIMILAR,))

    @given(
        st.lists(st.sampled_from(list(SimilarityLabel)), min_size=2, max_size=9),
        st.randoms(),
    )
    def test_permutation_invariant(self, labels, rnd):
        shuffled = list(labels)
        rnd.shuffle(shuffled)
        assert majority_label(labels) == majority_label(shuffled)


class TestCorpusIngest:
    def test_round_trip(self, raw_jsonl, tmp_path):
        corpus = Corpus()
        report = corpus.ingest_messages(raw_jsonl)
        assert report.loaded == 12 and not report.skipped_empty
        out = tmp_path / "out.jsonl"
        corpus.export(out)
        again = Corpus()
        again.ingest_messages(out)
        assert [m.to_record() for m in again] == [m.to_record() for m in corpus]

    def test_scrubs_on_ingest(self, tmp_path):
        path = tmp_path / "msgs.jsonl"
        path.write_text('{"id": "x", "text": "call 98765432100 now"}\n')
        corpus = Corpus()
        corpus.ingest_messages(path)
        assert corpus.get("x").text == "call <PHONE> now"

    def test_skips_empty_after_scrub(self, tmp_path):
        path = tmp_path / "msgs.jsonl"
        path.write_text('{"id": "a", "text": "98765432100"}\n{"id": "b", "text": "hello"}\n')
        corpus = Corpus()
        report = corpus.ingest_messages(path)
        assert report.skipped_empty == ["a"]
        assert "a" not in corpus and "b" in corpus

    def test_duplicate_id_rejected(self, tmp_path):
        path = tmp_path / "msgs.jsonl"
        path.write_text('{"id": "a", "text": "one"}\n{"id": "a", "text": "two"}\n')
        with pytest.raises(CorpusError, match="duplicate"):
            Corpus().ingest_messages(path)

    def test_error_leaves_corpus_unchanged(self, tmp_path):
        good = tmp_path / "good.jsonl"
        good.write_text('{"id": "a", "text": "one"}\n')
        bad = tmp_path / "bad.jsonl"
        bad.write_text('{"id": "b", "text": "two"}\nnot json\n')
        corpus = Corpus()
        corpus.ingest_messages(good)
        with pytest.raises(CorpusError):
            corpus.ingest_messages(bad)
        assert "b" not in corpus and len(corpus) == 1

    def test_missing_fields(self, tmp_path):
        path = tmp_path / "msgs.jsonl"
        path.write_text('{"id": "a"}\n')
        with pytest.raises(CorpusError, match="'id' and 'text'"):
            Corpus().ingest_messages(path)

    def test_timestamp_parsed(self, tmp_path):
        path = tmp_path / "msgs.jsonl"
        path.write_text('{"id": "a", "text": "hi", "submitted_at": "2024-03-01T10:00:00Z"}\n')
        corpus = Corpus()
        corpus.ingest_messages(path)
        ts = corpus.get("a").submitted_at
        assert ts is not None and ts.year == 2024

    def test_bad_timestamp(self, tmp_path):
        path = tmp_path / "msgs.jsonl"
        path.write_text('{"id": "a", "text": "hi", "submitted_at": "yesterday"}\n')
        with pytest.raises(CorpusError, match="submitted_at"):
            Corpus().ingest_messages(path)


def test_fact_check_to_message():
    report = FactCheckReport(
        id="fc1",
        headline="No, the grid is   not failing",
        publish_date=datetime.date(2024, 1, 5),
        lead="Officials confirm supply is stable.",
    )
    assert report.to_message().text == "No, the grid is not failing"
    both = report.to_message(include_lead=True)
    assert both.text.endswith("stable.") and both.source == Source.FACT_CHECK


class TestAnnotationLoaders:
    def test_annotated_pairs(self, tmp_path):
        path = tmp_path / "pairs.jsonl"
        rec = {"id_a": "x", "id_b": "y", "labels": ["VS", "Very Similar", "NA"], "language": "hi"}
        path.write_text(json.dumps(rec) + "\n")
        (pair,) = load_annotated_pairs(path)
        assert pair.majority == MajorityLabel.VERY_SIMILAR
        assert pair.language == "hi"

    def test_self_pair_rejected(self, tmp_path):
        path = tmp_path / "pairs.jsonl"
        path.write_text('{"id_a": "x", "id_b": "x", "labels": ["VS", "VS"]}\n')
        with pytest.raises(CorpusError, match="same id"):
            load_annotated_pairs(path)

    def test_claim_labels(self, tmp_path):
        path = tmp_path / "labels.jsonl"
        path.write_text('{"message_id": "m", "labels": ["Yes", "No", "Probably"]}\n')
        (rec,) = load_claim_labels(path)
        assert rec.annotator_labels == (ClaimLabel.YES, ClaimLabel.NO, ClaimLabel.PROBABLY)

    def test_parallel_pairs(self, tmp_path):
        path = tmp_path / "pairs.tsv"
        path.write_text("hello world\tbonjour monde\n\nsecond\tdeuxieme\n")
        pairs = load_parallel_pairs(path)
        assert len(pairs) == 2 and pairs[0].target_text == "bonjour monde"

    def test_parallel_pairs_malformed(self, tmp_path):
        path = tmp_path / "pairs.tsv"
        path.write_text("only one column\n")
        with pytest.raises(CorpusError, match="TAB"):
            load_parallel_pairs(path)


def test_label_distribution():
    vs = (SimilarityLabel.VERY_SIMILAR,) * 3
    na = (SimilarityLabel.NA,) * 3
    pairs = [
        AnnotatedPair("a", "b", vs),
        AnnotatedPair("a", "c", vs),
        AnnotatedPair("b", "c", na),
    ]
    counts = label_distribution(pairs)
    assert counts[MajorityLabel.VERY_SIMILAR] == 2
    assert counts[MajorityLabel.NA] == 1
    assert counts[MajorityLabel.NO_MAJORITY] == 0
