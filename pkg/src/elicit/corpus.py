"""Document ingestion, chat segmentation, and context windows.

Documents are pre-extracted UTF-8 text; PDF/OCR handling stays outside the
core. Chat transcripts are segmented into conversational instances: maximal
runs of messages where no consecutive gap exceeds one hour (strictly more
than gap_seconds splits).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .errors import FormatError, InvalidSpan, IoError, UnknownDocument, UnsortedInput

LONG_DOCUMENT = "long_document"
CHAT_INSTANCE = "chat_instance"

DEFAULT_GAP_SECONDS = 3600
DEFAULT_CONTEXT_RADIUS = 500
SENTENCE_SNAP_REACH = 100

_SENTENCE_END = re.compile(r"[.!?](?=\s|$)")


@dataclass(frozen=True)
class Span:
    """Half-open character range [start, end) within one document."""

    doc_id: str
    start: int
    end: int

    def __post_init__(self):
        if not (0 <= self.start < self.end):
            raise InvalidSpan(f"bad span [{self.start}, {self.end}) in {self.doc_id!r}")

    def length(self) -> int:
        return self.end - self.start

    def overlaps(self, other: "Span") -> bool:
        return self.doc_id == other.doc_id and self.start < other.end and other.start < self.end

    def jaccard(self, other: "Span") -> float:
        inter = min(self.end, other.end) - max(self.start, other.start)
        if inter <= 0:
            return 0.0
        union = max(self.end, other.end) - min(self.start, other.start)
        return inter / union


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str
    source_kind: str = LONG_DOCUMENT
    metadata: dict[str, str] = field(default_factory=dict)

    @property
    def char_count(self) -> int:
        return len(self.text)

    def check_span(self, span: Span) -> None:
        if span.doc_id != self.doc_id:
            raise InvalidSpan(f"span belongs to {span.doc_id!r}, not {self.doc_id!r}")
        if span.end > self.char_count:
            raise InvalidSpan(
                f"span [{span.start}, {span.end}) exceeds document length {self.char_count}"
            )


@dataclass(frozen=True)
class ChatMessage:
    sender: str  # "offender" | "decoy"
    timestamp: float  # seconds since epoch
    text: str

    def __post_init__(self):
        if self.timestamp < 0:
            raise FormatError("message timestamp must be non-negative")
        if not self.text:
            raise FormatError("message text must be non-empty")


class Corpus:
    """Immutable, order-stable collection of documents."""

    def __init__(self, documents: Iterable[Document]):
        self._docs: dict[str, Document] = {}
        for doc in documents:
            if doc.doc_id in self._docs:
                raise FormatError(f"duplicate doc_id {doc.doc_id!r}")
            self._docs[doc.doc_id] = doc

    def __len__(self) -> int:
        return len(self._docs)

    def __iter__(self) -> Iterator[Document]:
        return iter(self._docs.values())

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._docs

    @property
    def doc_ids(self) -> list[str]:
        return list(self._docs)

    def get(self, doc_id: str) -> Document:
        try:
            return self._docs[doc_id]
        except KeyError:
            raise UnknownDocument(doc_id) from None

    def text_for(self, span: Span) -> str:
        doc = self.get(span.doc_id)
        doc.check_span(span)
        return doc.text[span.start:span.end]


def _normalize(text: str) -> str:
    return text.replace("\r\n", "\n").replace("\r", "\n")


def ingest_documents(path: str | Path, format: str = "plain_text_dir") -> Corpus:
    """Build a corpus from a directory of .txt files or a JSONL file.

    plain_text_dir: each *.txt file becomes one document, doc_id = file stem,
    files in name order. jsonl: records {id, text, metadata?}, doc_id from the
    record id, line order preserved.
    """
    path = Path(path)
    if format == "plain_text_dir":
        if not path.is_dir():
            raise IoError(f"not a directory: {path}")
        docs = []
        for file in sorted(path.glob("*.txt")):
            try:
                text = file.read_text(encoding="utf-8")
            except OSError as exc:
                raise IoError(f"cannot read {file}: {exc}") from exc
            docs.append(
                Document(
                    doc_id=file.stem,
                    text=_normalize(text),
                    metadata={"source": str(file)},
                )
            )
        return Corpus(docs)
    if format == "jsonl":
        try:
            lines = path.read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise IoError(f"cannot read {path}: {exc}") from exc
        docs = []
        for i, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"invalid JSON: {exc}", record_index=i) from exc
            if not isinstance(record, dict) or "text" not in record:
                raise FormatError("record missing 'text' field", record_index=i)
            if "id" not in record:
                raise FormatError("record missing 'id' field", record_index=i)
            metadata = {str(k): str(v) for k, v in (record.get("metadata") or {}).items()}
            docs.append(
                Document(
                    doc_id=str(record["id"]),
                    text=_normalize(str(record["text"])),
                    source_kind=record.get("source_kind", LONG_DOCUMENT),
                    metadata=metadata,
                )
            )
        return Corpus(docs)
    raise FormatError(f"unknown ingest format {format!r}")


def load_chat_messages(path: str | Path) -> list[ChatMessage]:
    """Read chat messages from JSONL records {sender, timestamp, text}."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    messages = []
    for i, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"invalid JSON: {exc}", record_index=i) from exc
        for key in ("sender", "timestamp", "text"):
            if key not in record:
                raise FormatError(f"record missing {key!r} field", record_index=i)
        messages.append(
            ChatMessage(
                sender=str(record["sender"]),
                timestamp=float(record["timestamp"]),
                text=_normalize(str(record["text"])),
            )
        )
    return messages


def segment_chat_instances(
    messages: list[ChatMessage],
    gap_seconds: float = DEFAULT_GAP_SECONDS,
    id_prefix: str = "chat",
) -> list[Document]:
    """Partition time-ordered messages into conversational instances.

    A new instance starts when the gap to the previous message is strictly
    greater than gap_seconds (a gap of exactly one hour does not split).
    Instance text is one "sender: body" line per message; per-message offsets
    are recorded in metadata["message_spans"] as JSON [[start, end], ...] so
    message-level candidates can cite offsets in the instance document.
    """
    for prev, cur in zip(messages, messages[1:]):
        if cur.timestamp < prev.timestamp:
            raise UnsortedInput("messages must be sorted by timestamp")

    runs: list[list[ChatMessage]] = []
    for msg in messages:
        if runs and msg.timestamp - runs[-1][-1].timestamp <= gap_seconds:
            runs[-1].append(msg)
        else:
            runs.append([msg])

    documents = []
    for i, run in enumerate(runs):
        parts = []
        offsets = []
        cursor = 0
        for msg in run:
            line = f"{msg.sender}: {msg.text}\n"
            body_start = cursor + len(msg.sender) + 2
            offsets.append([body_start, body_start + len(msg.text)])
            parts.append(line)
            cursor += len(line)
        documents.append(
            Document(
                doc_id=f"{id_prefix}-{i:04d}",
                text="".join(parts),
                source_kind=CHAT_INSTANCE,
                metadata={
                    "message_spans": json.dumps(offsets),
                    "start_timestamp": repr(run[0].timestamp),
                    "message_count": str(len(run)),
                },
            )
        )
    return documents


def context_window(
    corpus: Corpus, span: Span, radius: int = DEFAULT_CONTEXT_RADIUS
) -> tuple[str, Span]:
    """Cut a window of +-radius characters around a span, snapped outward to
    sentence boundaries when a terminator lies within 100 characters of the
    raw cut. radius=0 returns exactly the span's text (no snapping).

    Returns (excerpt text, excerpt span); the excerpt always contains the
    input span's text verbatim.
    """
    doc = corpus.get(span.doc_id)
    doc.check_span(span)
    if radius == 0:
        return doc.text[span.start:span.end], span

    lo = max(0, span.start - radius)
    hi = min(doc.char_count, span.end + radius)

    if lo > 0:
        # Look back (up to the snap reach) for the end of the previous sentence.
        back = doc.text[max(0, lo - SENTENCE_SNAP_REACH):lo]
        matches = list(_SENTENCE_END.finditer(back))
        if matches:
            lo = max(0, lo - SENTENCE_SNAP_REACH) + matches[-1].end()
            while lo < span.start and doc.text[lo].isspace():
                lo += 1
            lo = min(lo, span.start)
    if hi < doc.char_count:
        ahead = doc.text[hi:hi + SENTENCE_SNAP_REACH]
        match = _SENTENCE_END.search(ahead)
        if match:
            hi = hi + match.end()

    window = Span(span.doc_id, lo, hi)
    return doc.text[lo:hi], window


def dump_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write a corpus as JSONL, re-loadable with ingest_documents(format='jsonl')."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for doc in corpus:
            fh.write(
                json.dumps(
                    {
                        "id": doc.doc_id,
                        "text": doc.text,
                        "source_kind": doc.source_kind,
                        "metadata": doc.metadata,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
