"""Scorer implementations behind the rerank endpoint.

A scorer takes one query plus a batch of document texts and returns one
float per document.  Real models load through sentence-transformers;
``builtin:`` identifiers resolve to dependency-free deterministic
scorers used for tests and offline runs.
"""

from __future__ import annotations

import math
import re
from typing import Protocol, Sequence


class Scorer(Protocol):
    def score(self, query: str, texts: Sequence[str]) -> list[float]: ...


_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


class OverlapScorer:
    """Jointly scores each (query, document) pair by token overlap.

    Scores depend only on the pair, never on batch composition, so
    internal chunking cannot change them.  A mild length penalty keeps
    padded documents from winning.  Deterministic and dependency-free.
    """

    def score(self, query: str, texts: Sequence[str]) -> list[float]:
        query_tokens = _TOKEN_RE.findall(query.lower())
        scores = []
        for text in texts:
            tokens = set(_TOKEN_RE.findall(text.lower()))
            hits = sum(1 for term in query_tokens if term in tokens)
            scores.append(hits / (1.0 + math.log1p(len(tokens))))
        return scores


class ConstantScorer:
    """Returns a fixed score for every document; conformance-test helper."""

    def __init__(self, value: float = 0.5):
        self.value = value

    def score(self, query: str, texts: Sequence[str]) -> list[float]:
        return [self.value for _ in texts]


class CrossEncoderScorer:
    """sentence-transformers cross-encoder; documents beyond the model's
    max length are truncated by its tokenizer."""

    def __init__(self, model_identifier: str, device: str = "cpu"):
        from sentence_transformers import CrossEncoder

        self._model = CrossEncoder(model_identifier, device=device, trust_remote_code=True)

    def score(self, query: str, texts: Sequence[str]) -> list[float]:
        pairs = [(query, text) for text in texts]
        return [float(s) for s in self._model.predict(pairs)]


class ModelLoadError(RuntimeError):
    """A registry entry could not be turned into a working scorer."""


def load_scorer(model_identifier: str, device: str = "cpu") -> Scorer:
    if model_identifier == "builtin:overlap":
        return OverlapScorer()
    if model_identifier.startswith("builtin:constant"):
        _, _, raw = model_identifier.partition("=")
        return ConstantScorer(float(raw) if raw else 0.5)
    if model_identifier.startswith("builtin:"):
        raise ModelLoadError(f"unknown builtin scorer '{model_identifier}'")
    try:
        return CrossEncoderScorer(model_identifier, device=device)
    except Exception as e:
        raise ModelLoadError(f"failed to load model '{model_identifier}': {e}") from e
