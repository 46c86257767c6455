"""Wire-protocol conformance suite for the sidecar."""

import math

import pytest
from fastapi.testclient import TestClient

from rerank_sidecar.app import create_app
from rerank_sidecar.config import SidecarConfig
from rerank_sidecar.scorers import ModelLoadError, OverlapScorer, load_scorer

MAX_BATCH = 4


@pytest.fixture
def client() -> TestClient:
    config = SidecarConfig(
        registry={"overlap": "builtin:overlap", "flat": "builtin:constant=0.25"},
        max_batch=MAX_BATCH,
    )
    return TestClient(create_app(config))


def rerank(client, model="overlap", query="acme revenue", documents=None):
    documents = documents if documents is not None else [{"id": "d1", "text": "acme revenue was $10M"}]
    return client.post("/rerank", json={"model": model, "query": query, "documents": documents})


def test_health_lists_registry(client):
    response = client.get("/health")
    assert response.status_code == 200
    body = response.json()
    assert body["ready"] is True
    assert body["models"] == {"overlap": "builtin:overlap", "flat": "builtin:constant=0.25"}


def test_single_document(client):
    response = rerank(client)
    assert response.status_code == 200
    scores = response.json()["scores"]
    assert len(scores) == 1
    assert math.isfinite(scores[0])


def test_empty_documents_rejected(client):
    response = rerank(client, documents=[])
    assert response.status_code == 422


def test_unregistered_model_is_404(client):
    response = rerank(client, model="ghost")
    assert response.status_code == 404
    assert "ghost" in response.json()["detail"]


def test_score_count_matches_documents_over_max_batch(client):
    documents = [{"id": f"d{i}", "text": f"doc {i} about revenue" * (i % 3 + 1)} for i in range(MAX_BATCH + 1)]
    response = rerank(client, documents=documents)
    assert response.status_code == 200
    scores = response.json()["scores"]
    assert len(scores) == MAX_BATCH + 1
    assert all(math.isfinite(s) for s in scores)


def test_chunking_preserves_order(client):
    # scores must line up with documents regardless of internal chunking:
    # compare against unchunked scoring of the same pairs
    documents = [{"id": f"d{i}", "text": f"unique{i} filler revenue" if i % 2 else f"unique{i} filler"} for i in range(11)]
    response = rerank(client, query="revenue", documents=documents)
    expected = OverlapScorer().score("revenue", [d["text"] for d in documents])
    assert response.json()["scores"] == expected


def test_identical_pairs_get_identical_scores(client):
    documents = [{"id": "a", "text": "acme revenue"}, {"id": "b", "text": "acme revenue"}]
    scores = rerank(client, documents=documents).json()["scores"]
    assert scores[0] == scores[1]


def test_long_document_still_scores(client):
    documents = [{"id": "long", "text": "revenue " * 50_000}]
    response = rerank(client, documents=documents)
    assert response.status_code == 200
    assert math.isfinite(response.json()["scores"][0])


def test_nan_from_model_is_server_error():
    from fastapi import HTTPException

    from rerank_sidecar.app import _ModelEntry, score_batch

    class NaNScorer:
        def score(self, query, texts):
            return [float("nan") for _ in texts]

    entry = _ModelEntry("nan-model", NaNScorer())
    with pytest.raises(HTTPException) as excinfo:
        score_batch(entry, "q", ["text"], max_batch=8)
    assert excinfo.value.status_code == 500
    assert "non-finite" in excinfo.value.detail


def test_wrong_count_from_model_is_server_error():
    from fastapi import HTTPException

    from rerank_sidecar.app import _ModelEntry, score_batch

    class ShortScorer:
        def score(self, query, texts):
            return [0.5]

    entry = _ModelEntry("short-model", ShortScorer())
    with pytest.raises(HTTPException) as excinfo:
        score_batch(entry, "q", ["a", "b", "c"], max_batch=8)
    assert excinfo.value.status_code == 500


def test_config_validation():
    with pytest.raises(ValueError):
        SidecarConfig(registry={})
    with pytest.raises(ValueError):
        SidecarConfig(max_batch=0)


def test_unknown_builtin_refuses_to_load():
    with pytest.raises(ModelLoadError):
        load_scorer("builtin:mystery")


def test_constant_scorer_value(client):
    scores = rerank(client, model="flat").json()["scores"]
    assert scores == [0.25]
