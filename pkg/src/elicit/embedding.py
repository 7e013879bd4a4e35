"""Deterministic text embedding for the built-in similarity LF.

Hashed bag-of-tokens: each lowercase token is hashed (blake2b, stable across
runs and platforms) into one of DIM buckets; the count vector is then
L2-normalised. No learned weights, no model downloads; real sentence encoders
attach through the external-LF protocol instead.
"""

from __future__ import annotations

import hashlib
import re

import numpy as np

from .errors import EmbedderFailure

DIM = 256
_TOKEN = re.compile(r"[a-z0-9']+")


def _bucket(token: str) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") % DIM


def embed(text: str) -> np.ndarray:
    """Map text to a unit-norm vector; the zero vector for token-free text."""
    if not isinstance(text, str):
        raise EmbedderFailure(f"expected str, got {type(text).__name__}")
    vec = np.zeros(DIM)
    for token in _TOKEN.findall(text.lower()):
        vec[_bucket(token)] += 1.0
    norm = np.linalg.norm(vec)
    if norm > 0:
        vec /= norm
    return vec


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity of two embeddings; 0.0 if either is the zero vector."""
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))
