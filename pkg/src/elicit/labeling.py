"""Labeling functions, top-K candidate selection, and explanation merging.

Each labeling function nominates candidate tuples (label value, confidence,
explanation span) for a document, or abstains. Candidates of the same value
whose spans significantly overlap are merged into explanation groups - the
unit the human validates and the row unit of the vote matrix.

A failing labeling function degrades to abstention for that document: weak
supervision tolerates missing votes, and a crashed LF must not block a
session.
"""

from __future__ import annotations

import hashlib
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import httpx
import numpy as np

from . import protocol
from .corpus import Corpus, Document, Span
from .embedding import cosine, embed
from .errors import ProtocolError, TransportError, ValidationError
from .schema import LfConfig, ProjectConfig, VariableSchema

logger = logging.getLogger("elicit.labeling")

# Rule-based candidates carry a nominal score of 1.0 but are flagged
# uncalibrated: there is no principled per-match score, so ranking relies on
# label-model agreement instead.
NOMINAL_RULE_CONFIDENCE = 1.0

DEFAULT_MIN_CONFIDENCE = 0.4
DEFAULT_EXTERNAL_RETRIES = 2
DEFAULT_EXTERNAL_TIMEOUT = 10.0

_SENTENCE_SPLIT = re.compile(r"[.!?]+(?=\s|$)|\n+")


@dataclass(frozen=True)
class Candidate:
    """One labeling-function nomination."""

    lf_id: str
    variable_id: str
    value: str
    confidence: float
    span: Span
    raw_score: float
    uncalibrated: bool = False

    def __post_init__(self):
        if not (0.0 <= self.confidence <= 1.0):
            raise ValidationError(
                f"candidate confidence {self.confidence} outside [0, 1]", self.lf_id
            )


@dataclass
class ExplanationGroup:
    """Merged same-value candidates with significantly overlapping spans."""

    group_id: str
    variable_id: str
    value: str
    members: tuple[Candidate, ...]
    merged_span: Span
    group_confidence: float = 0.5

    @property
    def doc_id(self) -> str:
        return self.merged_span.doc_id

    @property
    def agreement(self) -> int:
        return len({m.lf_id for m in self.members})


def candidate_sort_key(c: Candidate):
    return (c.variable_id, c.value, -c.confidence, c.span.start, c.span.end, c.lf_id)


def split_sentences(text: str) -> list[tuple[int, int]]:
    """Offsets of non-empty sentences; terminators stay with their sentence."""
    spans = []
    start = 0
    for match in _SENTENCE_SPLIT.finditer(text):
        end = match.end() if match.group().strip() else match.start()
        if end > start and text[start:end].strip():
            lo, hi = _strip_offsets(text, start, end)
            spans.append((lo, hi))
        start = match.end()
    if start < len(text) and text[start:].strip():
        spans.append(_strip_offsets(text, start, len(text)))
    return spans


def _strip_offsets(text: str, lo: int, hi: int) -> tuple[int, int]:
    while lo < hi and text[lo].isspace():
        lo += 1
    while hi > lo and text[hi - 1].isspace():
        hi -= 1
    return lo, hi


def run_keyword_lf(
    doc: Document, schema: VariableSchema, keywords: dict[str, Sequence[str]], lf_id: str = "keyword"
) -> list[Candidate]:
    """Case-insensitive whole-word keyword matches, one candidate per match.

    Keyword candidates are exempt from top-K trimming (no meaningful score),
    hence the uncalibrated flag.
    """
    out = []
    for value, kws in keywords.items():
        if value not in schema.label_values:
            raise ValidationError(
                f"keyword map for {schema.variable_id!r} references unknown value", value
            )
        for kw in kws:
            pattern = re.compile(r"(?<!\w)" + re.escape(kw) + r"(?!\w)", re.IGNORECASE)
            for match in pattern.finditer(doc.text):
                out.append(
                    Candidate(
                        lf_id=lf_id,
                        variable_id=schema.variable_id,
                        value=value,
                        confidence=NOMINAL_RULE_CONFIDENCE,
                        span=Span(doc.doc_id, match.start(), match.end()),
                        raw_score=NOMINAL_RULE_CONFIDENCE,
                        uncalibrated=True,
                    )
                )
    out.sort(key=candidate_sort_key)
    return out


def run_regex_lf(
    doc: Document, schema: VariableSchema, patterns: dict[str, str], lf_id: str = "regex"
) -> list[Candidate]:
    """User-supplied regex per value; behaves like keyword search with patterns."""
    out = []
    for value, pattern in patterns.items():
        if value not in schema.label_values:
            raise ValidationError(
                f"regex map for {schema.variable_id!r} references unknown value", value
            )
        for match in re.finditer(pattern, doc.text, re.IGNORECASE):
            if match.end() <= match.start():
                continue
            out.append(
                Candidate(
                    lf_id=lf_id,
                    variable_id=schema.variable_id,
                    value=value,
                    confidence=NOMINAL_RULE_CONFIDENCE,
                    span=Span(doc.doc_id, match.start(), match.end()),
                    raw_score=NOMINAL_RULE_CONFIDENCE,
                    uncalibrated=True,
                )
            )
    out.sort(key=candidate_sort_key)
    return out


def run_similarity_lf(
    doc: Document,
    schema: VariableSchema,
    threshold: float,
    k: int,
    embedder: Callable[[str], np.ndarray] = embed,
    lf_id: str = "similarity",
) -> list[Candidate]:
    """Sentence-level similarity against each label value.

    The value embedding combines the value's display text with its keywords;
    the k most similar sentences at or above the threshold become candidates,
    ties broken by earlier span start. raw_score is the cosine similarity;
    confidence starts as the raw score until a calibration map exists.
    """
    sentences = split_sentences(doc.text)
    if not sentences:
        return []
    sentence_vecs = [embedder(doc.text[lo:hi]) for lo, hi in sentences]

    out = []
    for value in schema.label_values:
        phrase = " ".join([value, *schema.keywords.get(value, ())])
        value_vec = embedder(phrase)
        scored = []
        for (lo, hi), vec in zip(sentences, sentence_vecs):
            sim = cosine(vec, value_vec)
            if sim >= threshold:
                scored.append((sim, lo, hi))
        scored.sort(key=lambda item: (-item[0], item[1]))
        for sim, lo, hi in scored[:k]:
            out.append(
                Candidate(
                    lf_id=lf_id,
                    variable_id=schema.variable_id,
                    value=value,
                    confidence=min(1.0, sim),
                    span=Span(doc.doc_id, lo, hi),
                    raw_score=sim,
                )
            )
    out.sort(key=candidate_sort_key)
    return out


class ExternalLfClient:
    """HTTP client for the external-LF wire protocol (see elicit.protocol).

    Transport errors are retried, then surfaced as TransportError; responses
    that violate the protocol schema raise ProtocolError. Callers treat both
    as an abstention for the document.
    """

    def __init__(
        self,
        endpoint: str,
        min_confidence: float = DEFAULT_MIN_CONFIDENCE,
        retries: int = DEFAULT_EXTERNAL_RETRIES,
        timeout: float = DEFAULT_EXTERNAL_TIMEOUT,
        transport: httpx.BaseTransport | None = None,
    ):
        self.endpoint = endpoint
        self.min_confidence = min_confidence
        self.retries = retries
        self._client = httpx.Client(transport=transport, timeout=timeout)

    def close(self) -> None:
        self._client.close()

    def _post(self, payload: dict) -> dict:
        last_exc: Exception | None = None
        for _ in range(self.retries + 1):
            try:
                response = self._client.post(self.endpoint, json=payload)
                break
            except httpx.HTTPError as exc:
                last_exc = exc
        else:
            raise TransportError(f"endpoint {self.endpoint} unreachable: {last_exc}")
        if response.status_code // 100 != 2:
            raise ProtocolError(f"endpoint returned HTTP {response.status_code}")
        try:
            body = response.json()
        except ValueError as exc:
            raise ProtocolError(f"response is not JSON: {exc}") from exc
        return protocol.validate_response(body)

    def score(
        self, doc: Document, schema: VariableSchema, k: int, lf_id: str = "external"
    ) -> list[Candidate]:
        """One protocol round-trip for (document, variable).

        Scores below min_confidence are dropped; the k highest survivors per
        value are kept. When nothing survives and the schema defines a
        negative value, a single whole-document candidate for it is emitted
        with confidence 1 - max received score (1.0 for an empty response).
        """
        if doc.char_count == 0:
            return []
        request = protocol.build_request(
            doc_id=doc.doc_id,
            text=doc.text,
            variable_id=schema.variable_id,
            label_values=list(schema.label_values),
            questions=list(schema.questions),
            max_candidates=k * len(schema.label_values),
        )
        body = self._post(request)

        received = []
        for i, entry in enumerate(body["candidates"]):
            if entry["value"] not in schema.label_values:
                raise ProtocolError(
                    f"candidate #{i} value {entry['value']!r} not in schema"
                )
            if not (0 <= entry["start"] < entry["end"] <= doc.char_count):
                raise ProtocolError(
                    f"candidate #{i} span [{entry['start']}, {entry['end']}) invalid "
                    f"for document of length {doc.char_count}"
                )
            received.append(entry)

        survivors = [e for e in received if e["score"] >= self.min_confidence]
        per_value: dict[str, list[dict]] = {}
        for entry in survivors:
            per_value.setdefault(entry["value"], []).append(entry)
        out = []
        for value, entries in per_value.items():
            entries.sort(key=lambda e: (-e["score"], e["start"]))
            for entry in entries[:k]:
                out.append(
                    Candidate(
                        lf_id=lf_id,
                        variable_id=schema.variable_id,
                        value=value,
                        confidence=float(entry["score"]),
                        span=Span(doc.doc_id, entry["start"], entry["end"]),
                        raw_score=float(entry["score"]),
                    )
                )

        if not out and schema.negative_value is not None:
            top = max((e["score"] for e in received), default=0.0)
            out.append(
                Candidate(
                    lf_id=lf_id,
                    variable_id=schema.variable_id,
                    value=schema.negative_value,
                    confidence=1.0 - top,
                    span=Span(doc.doc_id, 0, doc.char_count),
                    raw_score=1.0 - top,
                )
            )
        out.sort(key=candidate_sort_key)
        return out


def call_external_lf(
    doc: Document,
    schema: VariableSchema,
    endpoint: str,
    k: int,
    min_confidence: float = DEFAULT_MIN_CONFIDENCE,
    transport: httpx.BaseTransport | None = None,
    lf_id: str = "external",
) -> list[Candidate]:
    client = ExternalLfClient(endpoint, min_confidence=min_confidence, transport=transport)
    try:
        return client.score(doc, schema, k, lf_id=lf_id)
    finally:
        client.close()


def select_top_k(candidates: Sequence[Candidate], k: int) -> list[Candidate]:
    """Keep the k highest-confidence candidates per (LF, variable, value)
    within each document.

    Uncalibrated (keyword/regex) candidates pass through untrimmed. Equal
    confidences are broken by earlier span start. Idempotent; never grows.
    """
    if k < 1:
        raise ValidationError("k must be >= 1", "k")
    exempt = [c for c in candidates if c.uncalibrated]
    buckets: dict[tuple[str, str, str, str], list[Candidate]] = {}
    for c in candidates:
        if c.uncalibrated:
            continue
        buckets.setdefault((c.span.doc_id, c.lf_id, c.variable_id, c.value), []).append(c)
    kept = list(exempt)
    for bucket in buckets.values():
        bucket.sort(key=lambda c: (-c.confidence, c.span.start, c.span.end))
        kept.extend(bucket[:k])
    kept.sort(key=candidate_sort_key)
    return kept


def _group_id(doc_id: str, variable_id: str, value: str, members: Sequence[Candidate]) -> str:
    payload = "|".join(
        [doc_id, variable_id, value]
        + sorted(f"{m.lf_id}:{m.span.start}:{m.span.end}" for m in members)
    )
    return hashlib.sha1(payload.encode("utf-8")).hexdigest()[:12]


def merge_candidates(
    candidates: Sequence[Candidate], overlap_threshold: float
) -> list[ExplanationGroup]:
    """Merge same-value candidates whose spans significantly overlap.

    Within each (variable, value): candidates are nodes, an edge joins two
    when the Jaccard overlap of their character spans is >= the threshold,
    and groups are the connected components (so merging is transitive).
    Components are ordered by smallest member span start. The output is a
    partition of the input and re-merging it is a fixed point.
    """
    if not candidates:
        return []
    doc_ids = {c.span.doc_id for c in candidates}
    if len(doc_ids) != 1:
        raise ValidationError(
            "merge_candidates expects candidates of a single document",
            ",".join(sorted(doc_ids)),
        )
    doc_id = doc_ids.pop()

    by_key: dict[tuple[str, str], list[Candidate]] = {}
    for c in candidates:
        by_key.setdefault((c.variable_id, c.value), []).append(c)

    groups = []
    for (variable_id, value), bucket in sorted(by_key.items()):
        bucket.sort(key=lambda c: (c.span.start, c.span.end, c.lf_id))
        parent = list(range(len(bucket)))

        def find(i: int) -> int:
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for i in range(len(bucket)):
            for j in range(i + 1, len(bucket)):
                if bucket[i].span.jaccard(bucket[j].span) >= overlap_threshold:
                    parent[find(i)] = find(j)

        components: dict[int, list[Candidate]] = {}
        for i, c in enumerate(bucket):
            components.setdefault(find(i), []).append(c)

        for members in components.values():
            members.sort(key=lambda c: (c.span.start, c.span.end, c.lf_id))
            merged = Span(
                doc_id,
                min(m.span.start for m in members),
                max(m.span.end for m in members),
            )
            groups.append(
                ExplanationGroup(
                    group_id=_group_id(doc_id, variable_id, value, members),
                    variable_id=variable_id,
                    value=value,
                    members=tuple(members),
                    merged_span=merged,
                )
            )
    groups.sort(key=lambda g: (g.variable_id, g.merged_span.start, g.merged_span.end, g.value))
    return groups


def run_labeling_functions(
    config: ProjectConfig,
    corpus: Corpus,
    transport: httpx.BaseTransport | None = None,
    max_in_flight: int = 1,
) -> list[Candidate]:
    """Run the configured ensemble over the whole corpus.

    Pure per (document, config): re-running yields identical candidates.
    External LFs may run concurrently across documents (max_in_flight > 1);
    results are gathered in document order either way. External failures are
    logged and degrade to abstention for that document.
    """
    docs = list(corpus)
    out: list[Candidate] = []
    for lf in config.lf_configs:
        if lf.kind == "external":
            out.extend(_run_external(lf, config, docs, transport, max_in_flight))
            continue
        for doc in docs:
            for schema in config.variables:
                if lf.kind == "keyword":
                    if schema.keywords:
                        out.extend(run_keyword_lf(doc, schema, schema.keywords, lf_id=lf.lf_id))
                elif lf.kind == "regex":
                    patterns = {
                        v: p for v, p in lf.patterns.items() if v in schema.label_values
                    }
                    if patterns:
                        out.extend(run_regex_lf(doc, schema, patterns, lf_id=lf.lf_id))
                elif lf.kind == "similarity":
                    out.extend(
                        run_similarity_lf(
                            doc, schema, threshold=lf.threshold, k=config.k, lf_id=lf.lf_id
                        )
                    )
    out.sort(key=lambda c: (c.span.doc_id, candidate_sort_key(c), c.lf_id))
    return out


def _run_external(
    lf: LfConfig,
    config: ProjectConfig,
    docs: list[Document],
    transport: httpx.BaseTransport | None,
    max_in_flight: int,
) -> list[Candidate]:
    client = ExternalLfClient(
        lf.endpoint,
        min_confidence=lf.min_confidence if lf.min_confidence is not None else DEFAULT_MIN_CONFIDENCE,
        transport=transport,
    )

    def score_doc(doc: Document) -> list[Candidate]:
        collected = []
        for schema in config.variables:
            try:
                collected.extend(client.score(doc, schema, config.k, lf_id=lf.lf_id))
            except (TransportError, ProtocolError) as exc:
                logger.warning(
                    "external LF %s abstained on (%s, %s): %s",
                    lf.lf_id, doc.doc_id, schema.variable_id, exc,
                )
        return collected

    try:
        if max_in_flight > 1:
            with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
                per_doc = list(pool.map(score_doc, docs))
        else:
            per_doc = [score_doc(doc) for doc in docs]
    finally:
        client.close()
    return [c for chunk in per_doc for c in chunk]


def apply_confidences(
    candidates: Sequence[Candidate], update: Callable[[Candidate], float]
) -> list[Candidate]:
    """Return candidates with confidence recomputed (used by calibration)."""
    return [replace(c, confidence=update(c)) for c in candidates]
