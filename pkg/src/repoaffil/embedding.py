"""Embeddings-service client with store-backed caching.

Vectors are cached keyed by (repo_id, model_tag, text hash), so an unchanged
corpus re-embeds for free. Any service speaking the POST /v1/embeddings
{model, input} -> {data: [{index, embedding}]} shape works.
"""

from __future__ import annotations

import hashlib
import logging
import time
from typing import Optional, Sequence

import requests

from .errors import EmbeddingError, ProtocolError
from .store import Store
from .svm import EmbeddingVector
from .textprep import AssembledText

logger = logging.getLogger(__name__)

DEFAULT_BATCH_SIZE = 100


def text_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class EmbeddingClient:
    """Batched client for one embeddings endpoint + model."""

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: Optional[str] = None,
        session: Optional[requests.Session] = None,
        batch_size: int = DEFAULT_BATCH_SIZE,
        timeout: float = 60.0,
        max_retries: int = 5,
        backoff_base: float = 2.0,
        sleep=time.sleep,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self._headers = {"Content-Type": "application/json"}
        if api_key:
            self._headers["Authorization"] = f"Bearer {api_key}"
        self._session = session or requests.Session()
        self.batch_size = batch_size
        self._timeout = timeout
        self._max_retries = max_retries
        self._backoff_base = backoff_base
        self._sleep = sleep

    def embed_batch(self, texts: Sequence[str]) -> list[list[float]]:
        """One POST per call; order-preserving via the response index field."""
        if not texts:
            raise ValueError("embedding batch must be non-empty")
        body = {"model": self.model, "input": list(texts)}
        last_error: Optional[Exception] = None
        for attempt in range(self._max_retries):
            try:
                response = self._session.post(
                    f"{self.base_url}/v1/embeddings",
                    json=body,
                    headers=self._headers,
                    timeout=self._timeout,
                )
            except requests.RequestException as exc:
                last_error = exc
                self._sleep(self._backoff_base * (2**attempt))
                continue
            if response.status_code in (429, 500, 502, 503):
                last_error = EmbeddingError(f"embedding endpoint returned {response.status_code}")
                self._sleep(self._backoff_base * (2**attempt))
                continue
            if response.status_code != 200:
                raise EmbeddingError(
                    f"embedding endpoint returned {response.status_code}: {response.text[:200]}"
                )
            payload = response.json()
            data = payload.get("data")
            if not isinstance(data, list) or len(data) != len(texts):
                raise ProtocolError(
                    f"embedding response has {len(data) if isinstance(data, list) else 'no'} "
                    f"items for {len(texts)} inputs"
                )
            vectors: list[Optional[list[float]]] = [None] * len(texts)
            for item in data:
                vectors[int(item["index"])] = [float(v) for v in item["embedding"]]
            if any(v is None for v in vectors):
                raise ProtocolError("embedding response indices do not cover the batch")
            dims = {len(v) for v in vectors}
            if len(dims) != 1:
                raise ProtocolError(f"mixed embedding dimensions in one batch: {sorted(dims)}")
            return vectors  # type: ignore[return-value]
        raise EmbeddingError(f"embedding endpoint unreachable after retries: {last_error}")


def embed(
    assembled: Sequence[AssembledText],
    client: EmbeddingClient,
    store: Optional[Store] = None,
) -> list[EmbeddingVector]:
    """Embed a batch of assembled texts, hitting the cache where possible.

    Output order matches input order. On service failure the error names the
    repo_ids that never got vectors.
    """
    if not assembled:
        raise ValueError("embedding batch must be non-empty")

    hashes = [text_hash(item.text) for item in assembled]
    results: list[Optional[EmbeddingVector]] = [None] * len(assembled)
    pending: list[int] = []
    for i, (item, digest) in enumerate(zip(assembled, hashes)):
        cached = (
            store.cached_embedding(item.repo_id, client.model, digest)
            if store is not None
            else None
        )
        if cached is not None:
            results[i] = EmbeddingVector(item.repo_id, tuple(cached), client.model)
        else:
            pending.append(i)

    for start in range(0, len(pending), client.batch_size):
        chunk = pending[start : start + client.batch_size]
        texts = [assembled[i].text for i in chunk]
        try:
            vectors = client.embed_batch(texts)
        except (EmbeddingError, ProtocolError) as exc:
            failed = tuple(assembled[i].repo_id for i in pending[start:])
            raise EmbeddingError(
                f"embedding failed for {len(failed)} repos: {exc}", failed_repo_ids=failed
            ) from exc
        for i, values in zip(chunk, vectors):
            results[i] = EmbeddingVector(assembled[i].repo_id, tuple(values), client.model)
            if store is not None:
                store.cache_embedding(assembled[i].repo_id, client.model, hashes[i], values)

    dims = {v.dim for v in results if v is not None}
    if len(dims) > 1:
        raise ProtocolError(f"mixed embedding dimensions across run: {sorted(dims)}")
    assert all(v is not None for v in results)
    return results  # type: ignore[return-value]
