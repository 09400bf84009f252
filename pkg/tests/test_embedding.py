import pytest

from repoaffil.embedding import EmbeddingClient, embed, text_hash
from repoaffil.errors import EmbeddingError, ProtocolError
from repoaffil.mockapi import MockCorpus, MockInferenceServer
from repoaffil.textprep import AssembledText


@pytest.fixture()
def inference(ucsc):
    with MockInferenceServer(MockCorpus(profiles=[ucsc]), embedding_dim=8) as server:
        yield server


def assembled(repo_id, text):
    return AssembledText(repo_id=repo_id, text=text, field_limit=10_000)


def client_for(server, **kwargs):
    kwargs.setdefault("sleep", lambda s: None)
    return EmbeddingClient(base_url=server.base_url, model="mock-embed-1", **kwargs)


class TestEmbed:
    def test_fixed_dim_vectors_stored(self, inference, store):
        client = client_for(inference)
        vectors = embed([assembled("o/a", "alpha"), assembled("o/b", "beta")], client, store)
        assert [v.repo_id for v in vectors] == ["o/a", "o/b"]
        assert all(v.dim == 8 for v in vectors)
        assert store.cached_embedding("o/a", "mock-embed-1", text_hash("alpha")) is not None

    def test_cache_prevents_network_calls(self, inference, store):
        client = client_for(inference)
        batch = [assembled("o/a", "alpha"), assembled("o/b", "beta")]
        first = embed(batch, client, store)
        calls_after_first = inference.count_matching("/v1/embeddings")
        second = embed(batch, client, store)
        assert inference.count_matching("/v1/embeddings") == calls_after_first
        assert second == first

    def test_changed_text_misses_cache(self, inference, store):
        client = client_for(inference)
        embed([assembled("o/a", "alpha")], client, store)
        before = inference.count_matching("/v1/embeddings")
        embed([assembled("o/a", "alpha v2")], client, store)
        assert inference.count_matching("/v1/embeddings") == before + 1

    def test_empty_batch_rejected(self, inference, store):
        with pytest.raises(ValueError):
            embed([], client_for(inference), store)

    def test_order_preserved_with_partial_cache(self, inference, store):
        client = client_for(inference)
        embed([assembled("o/b", "beta")], client, store)
        vectors = embed(
            [assembled("o/a", "alpha"), assembled("o/b", "beta"), assembled("o/c", "c")],
            client,
            store,
        )
        assert [v.repo_id for v in vectors] == ["o/a", "o/b", "o/c"]

    def test_deterministic_service(self, inference, store):
        client = client_for(inference)
        a = embed([assembled("o/a", "same text")], client, None)
        b = embed([assembled("o/a", "same text")], client, None)
        assert a == b

    def test_service_failure_names_failed_repos(self, inference, store):
        inference.script_statuses("/v1/embeddings", [500] * 5)
        client = client_for(inference, max_retries=5)
        with pytest.raises(EmbeddingError) as excinfo:
            embed([assembled("o/x", "x"), assembled("o/y", "y")], client, store)
        assert set(excinfo.value.failed_repo_ids) == {"o/x", "o/y"}

    def test_batching_splits_large_inputs(self, inference, store):
        client = client_for(inference, batch_size=2)
        before = inference.count_matching("/v1/embeddings")
        embed([assembled(f"o/r{i}", f"text {i}") for i in range(5)], client, store)
        assert inference.count_matching("/v1/embeddings") == before + 3


class FakeResponse:
    def __init__(self, status_code, payload):
        self.status_code = status_code
        self._payload = payload
        self.text = str(payload)

    def json(self):
        return self._payload


class FakeSession:
    def __init__(self, payload):
        self.payload = payload

    def post(self, url, json=None, headers=None, timeout=None):
        return FakeResponse(200, self.payload)


class TestProtocolErrors:
    def test_mixed_dims_in_batch(self):
        session = FakeSession(
            {
                "data": [
                    {"index": 0, "embedding": [1.0, 2.0]},
                    {"index": 1, "embedding": [1.0, 2.0, 3.0]},
                ]
            }
        )
        client = EmbeddingClient("http://unused", "m", session=session)
        with pytest.raises(ProtocolError, match="dimension"):
            client.embed_batch(["a", "b"])

    def test_count_mismatch(self):
        session = FakeSession({"data": [{"index": 0, "embedding": [1.0]}]})
        client = EmbeddingClient("http://unused", "m", session=session)
        with pytest.raises(ProtocolError):
            client.embed_batch(["a", "b"])

    def test_empty_direct_batch(self):
        client = EmbeddingClient("http://unused", "m", session=FakeSession({}))
        with pytest.raises(ValueError):
            client.embed_batch([])
