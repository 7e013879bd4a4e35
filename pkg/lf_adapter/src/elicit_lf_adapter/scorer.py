"""Scorer plugins: text in, scored spans out.

The stub scorer is a keyword-window heuristic chosen for byte-stable golden
files: sentence spans are scored by token overlap with the label value
(plus a small bonus for question-token overlap), with no randomness and no
model downloads.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Protocol, Sequence

_TOKEN = re.compile(r"[a-z0-9']+")
_SENTENCE_SPLIT = re.compile(r"[.!?]+(?=\s|$)|\n+")


@dataclass(frozen=True)
class ScoredSpan:
    start: int
    end: int
    value: str
    score: float


class ScorerPlugin(Protocol):
    name: str

    def score(
        self, text: str, questions: Sequence[str], values: Sequence[str]
    ) -> list[ScoredSpan]:
        ...


def _tokens(text: str) -> set[str]:
    return set(_TOKEN.findall(text.lower()))


def sentence_offsets(text: str) -> list[tuple[int, int]]:
    spans = []
    start = 0
    for match in _SENTENCE_SPLIT.finditer(text):
        end = match.end() if match.group().strip() else match.start()
        if end > start and text[start:end].strip():
            spans.append(_strip(text, start, end))
        start = match.end()
    if start < len(text) and text[start:].strip():
        spans.append(_strip(text, start, len(text)))
    return spans


def _strip(text: str, lo: int, hi: int) -> tuple[int, int]:
    while lo < hi and text[lo].isspace():
        lo += 1
    while hi > lo and text[hi - 1].isspace():
        hi -= 1
    return lo, hi


class StubScorer:
    """Deterministic keyword-window heuristic.

    A sentence scores for a value when it shares tokens with the value name:
    0.3 base + 0.6 * (overlap fraction with the value tokens) + 0.1 * 1 if it
    also shares a token with any question. Scores are exact rationals of
    small integers, so serialisation is stable.
    """

    name = "stub"

    def score(
        self, text: str, questions: Sequence[str], values: Sequence[str]
    ) -> list[ScoredSpan]:
        question_tokens: set[str] = set()
        for q in questions:
            question_tokens |= _tokens(q)
        out = []
        for lo, hi in sentence_offsets(text):
            sentence_tokens = _tokens(text[lo:hi])
            for value in values:
                value_tokens = _tokens(value)
                if not value_tokens:
                    continue
                overlap = len(value_tokens & sentence_tokens) / len(value_tokens)
                if overlap == 0.0:
                    continue
                bonus = 0.1 if sentence_tokens & question_tokens else 0.0
                score = round(min(1.0, 0.3 + 0.6 * overlap + bonus), 6)
                out.append(ScoredSpan(lo, hi, value, score))
        out.sort(key=lambda s: (-s.score, s.start, s.value))
        return out
