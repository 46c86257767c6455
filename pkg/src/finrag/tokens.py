"""Pluggable token counters for context budgeting."""

from __future__ import annotations

from typing import Protocol

from finrag.errors import ConfigError


class TokenCounter(Protocol):
    def count(self, text: str) -> int: ...


class ApproxTokenCounter:
    """Byte-length heuristic: ceil(utf8_bytes / 4).

    Offline stand-in for a real BPE tokenizer; additive up to one token
    across concatenation boundaries.
    """

    def count(self, text: str) -> int:
        n = len(text.encode("utf-8"))
        return (n + 3) // 4


class BpeTokenCounter:
    """Counts with a real byte-pair encoding via tiktoken, when installed."""

    def __init__(self, encoding_name: str = "o200k_base"):
        try:
            import tiktoken
        except ImportError as e:
            raise ConfigError("tokenizer 'bpe' requires the tiktoken package") from e
        self._encoding = tiktoken.get_encoding(encoding_name)

    def count(self, text: str) -> int:
        return len(self._encoding.encode(text))


def get_counter(tokenizer_id: str) -> TokenCounter:
    """Resolve a tokenizer id ('approx' or 'bpe[:encoding]') to a counter."""
    if tokenizer_id == "approx":
        return ApproxTokenCounter()
    if tokenizer_id == "bpe":
        return BpeTokenCounter()
    if tokenizer_id.startswith("bpe:"):
        return BpeTokenCounter(tokenizer_id.split(":", 1)[1])
    raise ConfigError(f"unknown tokenizer id '{tokenizer_id}'")
