"""Sidecar configuration: the model registry and serving knobs."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml


@dataclass
class SidecarConfig:
    """Registry maps a backend id to the model identifier it serves.

    Identifiers starting with ``builtin:`` resolve to the deterministic
    built-in scorers; anything else loads as a sentence-transformers
    cross-encoder.
    """

    registry: dict[str, str] = field(
        default_factory=lambda: {
            "jina": "jinaai/jina-reranker-v2-base-multilingual",
            "gte": "Alibaba-NLP/gte-multilingual-reranker-base",
            "bge": "BAAI/bge-reranker-v2-m3",
        }
    )
    device: str = "cpu"
    max_batch: int = 32
    port: int = 8878
    host: str = "127.0.0.1"  # loopback only by default; no auth layer

    def __post_init__(self):
        if not self.registry:
            raise ValueError("model registry must not be empty")
        if self.max_batch < 1:
            raise ValueError(f"max_batch must be >= 1, got {self.max_batch}")

    @classmethod
    def from_file(cls, path: str | Path) -> "SidecarConfig":
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        kwargs = {}
        if "registry" in raw:
            kwargs["registry"] = {str(k): str(v) for k, v in raw["registry"].items()}
        for key in ("device", "host"):
            if key in raw:
                kwargs[key] = str(raw[key])
        for key in ("max_batch", "port"):
            if key in raw:
                kwargs[key] = int(raw[key])
        return cls(**kwargs)
