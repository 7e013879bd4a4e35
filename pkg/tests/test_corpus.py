import json

import pytest
from hypothesis import given, strategies as st

from elicit.corpus import (
    ChatMessage,
    Corpus,
    Document,
    Span,
    context_window,
    dump_corpus,
    ingest_documents,
    load_chat_messages,
    segment_chat_instances,
)
from elicit.errors import FormatError, InvalidSpan, IoError, UnknownDocument, UnsortedInput


def _messages(timestamps):
    return [ChatMessage(sender="offender", timestamp=t, text=f"msg {t}") for t in timestamps]


class TestIngest:
    def test_directory_of_text_files(self, tmp_path):
        for i in range(20):
            (tmp_path / f"remarks-{i:02d}.txt").write_text(f"Sentencing remarks {i}.")
        corpus = ingest_documents(tmp_path)
        assert len(corpus) == 20
        assert corpus.doc_ids[0] == "remarks-00"
        assert corpus.get("remarks-07").text == "Sentencing remarks 7."

    def test_empty_directory_is_empty_corpus(self, tmp_path):
        assert len(ingest_documents(tmp_path)) == 0

    def test_missing_directory_raises(self, tmp_path):
        with pytest.raises(IoError):
            ingest_documents(tmp_path / "nope")

    def test_jsonl_missing_text_field_names_line(self, tmp_path):
        path = tmp_path / "docs.jsonl"
        path.write_text(
            json.dumps({"id": "a", "text": "one"}) + "\n"
            + json.dumps({"id": "b", "text": "two"}) + "\n"
            + json.dumps({"id": "c"}) + "\n"
        )
        with pytest.raises(FormatError) as err:
            ingest_documents(path, format="jsonl")
        assert err.value.record_index == 3

    def test_newlines_normalized(self, tmp_path):
        (tmp_path / "a.txt").write_bytes(b"line one\r\nline two\rline three")
        corpus = ingest_documents(tmp_path)
        assert corpus.get("a").text == "line one\nline two\nline three"

    def test_duplicate_ids_rejected(self):
        with pytest.raises(FormatError):
            Corpus([Document("x", "a"), Document("x", "b")])

    def test_round_trip_via_jsonl(self, tmp_path, small_corpus):
        dump_corpus(small_corpus, tmp_path / "c.jsonl")
        again = ingest_documents(tmp_path / "c.jsonl", format="jsonl")
        assert [d.doc_id for d in again] == [d.doc_id for d in small_corpus]
        assert [d.text for d in again] == [d.text for d in small_corpus]


class TestSegmentation:
    def test_gap_over_one_hour_splits(self):
        docs = segment_chat_instances(_messages([0, 1800, 5401]))
        assert len(docs) == 2
        assert docs[0].metadata["message_count"] == "2"
        assert docs[1].metadata["message_count"] == "1"

    def test_exactly_one_hour_does_not_split(self):
        assert len(segment_chat_instances(_messages([0, 3600]))) == 1

    def test_boundary_gaps(self):
        # gaps 3599, 3600, 3601: only the last one splits
        docs = segment_chat_instances(_messages([0, 3599, 7199, 10800]))
        assert [d.metadata["message_count"] for d in docs] == ["3", "1"]

    def test_empty_messages(self):
        assert segment_chat_instances([]) == []

    def test_unsorted_raises(self):
        with pytest.raises(UnsortedInput):
            segment_chat_instances(_messages([100, 50]))

    def test_instance_text_and_offsets(self):
        messages = [
            ChatMessage("offender", 0, "hi there"),
            ChatMessage("decoy", 60, "hello"),
        ]
        doc = segment_chat_instances(messages)[0]
        assert doc.text == "offender: hi there\ndecoy: hello\n"
        offsets = json.loads(doc.metadata["message_spans"])
        assert [doc.text[s:e] for s, e in offsets] == ["hi there", "hello"]
        assert doc.source_kind == "chat_instance"

    def test_message_invariants(self):
        with pytest.raises(FormatError):
            ChatMessage("offender", -1, "x")
        with pytest.raises(FormatError):
            ChatMessage("offender", 0, "")

    @given(
        gaps=st.lists(st.integers(min_value=0, max_value=8000), min_size=0, max_size=30),
        gap_seconds=st.integers(min_value=1, max_value=7200),
    )
    def test_segmentation_properties(self, gaps, gap_seconds):
        timestamps = [0]
        for gap in gaps:
            timestamps.append(timestamps[-1] + gap)
        messages = _messages(timestamps)
        docs = segment_chat_instances(messages, gap_seconds=gap_seconds)

        counts = [int(d.metadata["message_count"]) for d in docs]
        assert sum(counts) == len(messages)  # union preserved

        # within-instance gaps <= gap_seconds; between-instance gaps > gap_seconds
        i = 0
        boundaries = []
        for count in counts:
            chunk = timestamps[i:i + count]
            assert all(b - a <= gap_seconds for a, b in zip(chunk, chunk[1:]))
            boundaries.append((chunk[0], chunk[-1]))
            i += count
        for (_, last), (first, _) in zip(boundaries, boundaries[1:]):
            assert first - last > gap_seconds

    def test_chat_jsonl_loader(self, tmp_path):
        path = tmp_path / "chat.jsonl"
        path.write_text(
            json.dumps({"sender": "offender", "timestamp": 0, "text": "hi"}) + "\n"
            + json.dumps({"sender": "decoy", "timestamp": 10}) + "\n"
        )
        with pytest.raises(FormatError) as err:
            load_chat_messages(path)
        assert err.value.record_index == 2


class TestContextWindow:
    def _fixture_doc(self):
        # 40 sentences of 50 chars each: "Sentence 000 pads out to fifty chars ......... X."
        sentences = []
        for i in range(40):
            body = f"Sentence {i:03d} " + "x" * 35
            sentences.append(body[:48] + "Y.")
        return Document("ctx", " ".join(sentences))

    def test_window_snaps_to_sentence_bounds(self):
        doc = self._fixture_doc()
        corpus = Corpus([doc])
        span = Span("ctx", 600, 650)
        excerpt, window = context_window(corpus, span, radius=500)
        # raw cut is [100, 1150); snapping moves the edges to sentence bounds
        assert window.start <= 600 and window.end >= 650
        assert abs(window.start - 100) <= 100 and abs(window.end - 1150) <= 100
        assert excerpt == doc.text[window.start:window.end]
        # the left edge starts a sentence, the right edge ends one
        assert doc.text[window.start:window.start + 8] == "Sentence"
        assert excerpt.endswith("Y.")
        assert doc.text[600:650] in excerpt

    def test_whole_document_span_clamps(self, small_corpus):
        doc = next(iter(small_corpus))
        excerpt, window = context_window(small_corpus, Span(doc.doc_id, 0, doc.char_count))
        assert excerpt == doc.text
        assert (window.start, window.end) == (0, doc.char_count)

    def test_radius_zero_returns_exact_span(self, small_corpus):
        excerpt, window = context_window(small_corpus, Span("doc-1", 4, 7), radius=0)
        assert excerpt == "man"
        assert (window.start, window.end) == (4, 7)

    def test_unknown_document(self, small_corpus):
        with pytest.raises(UnknownDocument):
            context_window(small_corpus, Span("ghost", 0, 1))

    def test_invalid_span(self, small_corpus):
        with pytest.raises(InvalidSpan):
            context_window(small_corpus, Span("doc-1", 0, 10_000))
        with pytest.raises(InvalidSpan):
            Span("doc-1", 5, 5)

    @given(start=st.integers(0, 60), length=st.integers(1, 5), radius=st.integers(0, 80))
    def test_window_always_contains_span(self, start, length, radius):
        doc = Document("d", "alpha beta. gamma delta! epsilon zeta? eta theta. iota kappa.")
        corpus = Corpus([doc])
        end = min(start + length, doc.char_count)
        if start >= end:
            return
        excerpt, window = context_window(corpus, Span("d", start, end), radius=radius)
        assert doc.text[start:end] in excerpt
        assert window.start <= start and window.end >= end
