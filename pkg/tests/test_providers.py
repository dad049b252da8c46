"""Tests for providers.py and embeddings.py"""

import json

import httpx
import numpy as np
import pytest

from config import ProviderConfig
from embeddings import HashedBagEncoder, HttpEmbeddingEncoder, cosine_similarity, cosine_to_rows
from errors import ConfigError, ParameterError, ProviderError, UnscriptedPromptError
from prompts import PRODUCT_CLASSIFIER, TOPIC_EXISTENCE, TOPIC_INSERTION, TOPIC_RETRIEVER, load_prompt
from providers import (
    ChatRequest,
    HttpChatProvider,
    MockScript,
    chat_text,
    load_mock_script,
    mock_configure,
    prompt_hash,
)

HTTP_CONFIG = ProviderConfig(kind="http", endpoint_url="https://llm.test/v1", max_retries=2, retry_backoff=0.5)


def chat_body(text="hi"):
    return {"choices": [{"message": {"content": text}}], "model": "test-model", "usage": {"total_tokens": 3}}


def scripted_transport(responses, calls):
    """Replies with the given (status, body) pairs in order and records each request"""
    replies = iter(responses)

    def handler(request: httpx.Request) -> httpx.Response:
        calls.append(json.loads(request.content))
        status, body = next(replies)
        return httpx.Response(status, json=body)

    return httpx.MockTransport(handler)


class TestMockRetriever:
    def test_keyword_rules_give_sentence_excerpts(self, default_mock):
        paragraph = "We are cutting costs across the supply chain. Guidance for the year is unchanged."
        drafts = json.loads(chat_text(default_mock, load_prompt(TOPIC_RETRIEVER), paragraph))
        assert drafts == [
            {"topic_name": "Supply Chain", "excerpts": ["We are cutting costs across the supply chain."]},
            {"topic_name": "Guidance", "excerpts": ["Guidance for the year is unchanged."]},
            {"topic_name": "Cost Reduction", "excerpts": ["We are cutting costs across the supply chain."]},
        ]

    def test_no_keyword_gives_empty_list(self, default_mock):
        assert chat_text(default_mock, load_prompt(TOPIC_RETRIEVER), "Thank you, operator.") == "[]"

    def test_same_request_same_reply(self, default_mock):
        paragraph = "Data center pricing improved."
        first = chat_text(default_mock, load_prompt(TOPIC_RETRIEVER), paragraph)
        assert all(chat_text(default_mock, load_prompt(TOPIC_RETRIEVER), paragraph) == first for _ in range(3))


class TestMockRules:
    def test_matcher_rule(self):
        mock = mock_configure({"matcher": {"M&A": [{"topic": "Mergers & Acquisitions", "similarity": 95}]}})
        reply = chat_text(mock, load_prompt(TOPIC_EXISTENCE), "Reference topics:\n- Mergers & Acquisitions\n\nQuery topic: m&a")
        assert reply.startswith("<structured_output>")
        body = json.loads(reply.split("<structured_output>")[1].split("</structured_output>")[0])
        assert body["matches"] == [{"topic": "Mergers & Acquisitions", "similarity": 95}]

    def test_matcher_default_no_match(self):
        mock = mock_configure({"matcher_default": "no_match"})
        reply = chat_text(mock, load_prompt(TOPIC_EXISTENCE), "Reference topics:\n- Pricing\n\nQuery topic: Lidar")
        assert '"matches": []' in reply

    def test_unscripted_matcher(self):
        mock = mock_configure({})
        with pytest.raises(UnscriptedPromptError):
            chat_text(mock, load_prompt(TOPIC_EXISTENCE), "Reference topics:\n- Pricing\n\nQuery topic: Lidar")

    def test_ontologist_answers_deepest_offered_label(self):
        mock = mock_configure({"ontologist": {"Roboadvisor": ["Financial Technology", "Fintech"]}})
        message = "Input:\n- Given Topic: \"Roboadvisor\"\n- Topic Tree: {'Financial Technology': ['Fintech']}"
        assert '"parent": "Fintech"' in chat_text(mock, load_prompt(TOPIC_INSERTION), message)

    def test_ontologist_default_root(self):
        mock = mock_configure({"ontologist_default": "root"})
        message = "Input:\n- Given Topic: \"Lidar\"\n- Topic Tree: {'Automotive': []}"
        assert '"parent": null' in chat_text(mock, load_prompt(TOPIC_INSERTION), message)

    def test_product_classifier(self):
        mock = mock_configure({"product_names": ["Cybertruck"]})
        assert chat_text(mock, load_prompt(PRODUCT_CLASSIFIER), "cybertruck") == "yes"
        assert chat_text(mock, load_prompt(PRODUCT_CLASSIFIER), "Supply Chain") == "no"

    def test_responses_take_precedence(self):
        mock = mock_configure({"keyword_rules": "default", "responses": {"Supply chain is tight.": "[]"}})
        assert chat_text(mock, load_prompt(TOPIC_RETRIEVER), "Supply chain is tight.") == "[]"

    def test_response_by_prompt_hash(self):
        request = ChatRequest(load_prompt(TOPIC_RETRIEVER), "Anything at all.")
        mock = mock_configure({"responses": {prompt_hash(request): "[]"}})
        assert mock.chat(request).text == "[]"

    def test_unknown_script_key(self):
        with pytest.raises(ConfigError, match="Unknown mock script keys"):
            MockScript.from_dict({"keywords": {}})

    def test_load_mock_script(self, tmp_path):
        path = tmp_path / "script.json"
        path.write_text(json.dumps({"keyword_rules": {"lidar": "Lidar"}}), encoding="utf-8")
        mock = mock_configure(load_mock_script(path))
        assert "Lidar" in chat_text(mock, load_prompt(TOPIC_RETRIEVER), "Our lidar costs fell.")


class TestChatRequest:
    def test_rejects_empty_prompt(self):
        with pytest.raises(ValueError):
            ChatRequest("system", "   ")

    def test_rejects_temperature(self):
        with pytest.raises(ValueError):
            ChatRequest("system", "user", temperature=3.0)


class TestHttpChatProvider:
    def test_success(self):
        calls = []
        client = httpx.Client(transport=scripted_transport([(200, chat_body("hello"))], calls))
        response = HttpChatProvider(HTTP_CONFIG, client).chat(ChatRequest("system", "user"))
        assert response.text == "hello"
        assert response.provider_meta["usage"] == {"total_tokens": 3}
        assert calls[0]["messages"] == [{"role": "system", "content": "system"}, {"role": "user", "content": "user"}]
        assert calls[0]["temperature"] == 0.0

    def test_retries_then_succeeds(self):
        calls, sleeps = [], []
        client = httpx.Client(transport=scripted_transport([(503, {}), (429, {}), (200, chat_body())], calls))
        provider = HttpChatProvider(HTTP_CONFIG, client, sleep=sleeps.append)
        assert provider.chat(ChatRequest("system", "user")).text == "hi"
        assert len(calls) == 3
        assert sleeps == [0.5, 1.0]

    def test_client_error_is_terminal(self):
        calls = []
        client = httpx.Client(transport=scripted_transport([(400, {"error": "bad"})], calls))
        with pytest.raises(ProviderError) as info:
            HttpChatProvider(HTTP_CONFIG, client, sleep=lambda _: None).chat(ChatRequest("system", "user"))
        assert info.value.status == 400
        assert not info.value.retryable
        assert len(calls) == 1

    def test_retries_exhausted(self):
        calls = []
        client = httpx.Client(transport=scripted_transport([(500, {})] * 3, calls))
        with pytest.raises(ProviderError) as info:
            HttpChatProvider(HTTP_CONFIG, client, sleep=lambda _: None).chat(ChatRequest("system", "user"))
        assert info.value.retryable
        assert len(calls) == 3

    def test_transport_error_is_retried(self):
        attempts = []

        def handler(request):
            attempts.append(request)
            if len(attempts) == 1:
                raise httpx.ConnectError("boom", request=request)
            return httpx.Response(200, json=chat_body("ok"))

        client = httpx.Client(transport=httpx.MockTransport(handler))
        provider = HttpChatProvider(HTTP_CONFIG, client, sleep=lambda _: None)
        assert provider.chat(ChatRequest("system", "user")).text == "ok"
        assert len(attempts) == 2

    def test_missing_content(self):
        client = httpx.Client(transport=scripted_transport([(200, {"choices": []})], []))
        with pytest.raises(ProviderError, match="missing"):
            HttpChatProvider(HTTP_CONFIG, client).chat(ChatRequest("system", "user"))

    @pytest.mark.parametrize("content", [["a", "list"], {"text": "hi"}, 7, None])
    def test_non_text_content(self, content):
        client = httpx.Client(transport=scripted_transport([(200, chat_body(content))], []))
        with pytest.raises(ProviderError, match="not text"):
            HttpChatProvider(HTTP_CONFIG, client).chat(ChatRequest("system", "user"))

    def test_missing_api_key(self, monkeypatch):
        monkeypatch.delenv("CALLTOPICS_TEST_KEY", raising=False)
        config = ProviderConfig(kind="http", api_key_env_var="CALLTOPICS_TEST_KEY")
        with pytest.raises(ConfigError, match="CALLTOPICS_TEST_KEY"):
            HttpChatProvider(config)


class TestEmbeddings:
    def test_http_embeddings_sorted_by_index(self):
        body = {"data": [{"index": 1, "embedding": [0.0, 1.0]}, {"index": 0, "embedding": [1.0, 0.0]}]}
        client = httpx.Client(transport=scripted_transport([(200, body)], []))
        encoder = HttpEmbeddingEncoder(HTTP_CONFIG, client)
        matrix = encoder.embed_matrix(["first", "second"])
        assert matrix.tolist() == [[1.0, 0.0], [0.0, 1.0]]
        assert encoder.dimension == 2

    def test_http_dimension_change(self):
        bodies = [
            (200, {"data": [{"index": 0, "embedding": [1.0, 0.0]}]}),
            (200, {"data": [{"index": 0, "embedding": [1.0, 0.0, 0.0]}]}),
        ]
        encoder = HttpEmbeddingEncoder(HTTP_CONFIG, httpx.Client(transport=scripted_transport(bodies, [])))
        encoder.embed(["a"])
        with pytest.raises(ProviderError, match="dimension changed"):
            encoder.embed(["b"])

    @pytest.mark.parametrize("value", ["NaN", "Infinity"])
    def test_http_non_finite_embedding(self, value):
        body = '{"data": [{"index": 0, "embedding": [1.0, ' + value + ']}]}'
        transport = httpx.MockTransport(lambda request: httpx.Response(200, content=body.encode()))
        encoder = HttpEmbeddingEncoder(HTTP_CONFIG, httpx.Client(transport=transport))
        with pytest.raises(ProviderError, match="non-finite"):
            encoder.embed(["a"])

    def test_hashed_encoder_is_deterministic(self, embedder):
        first = embedder.embed_matrix(["Supply Chain", "Generative AI"])
        second = HashedBagEncoder(256).embed_matrix(["Supply Chain", "Generative AI"])
        assert np.array_equal(first, second)
        assert first.shape == (2, 256)
        assert np.allclose(np.linalg.norm(first, axis=1), 1.0)

    def test_shared_tokens_are_closer(self, embedder):
        query, near, far = embedder.embed_matrix(["supply chain", "Supply Chain Risk", "Dividends"])
        assert cosine_similarity(query, near) > cosine_similarity(query, far)

    def test_embed_edge_cases(self, embedder):
        assert embedder.embed([]) == []
        with pytest.raises(ParameterError):
            embedder.embed(["ok", "  "])

    def test_cosine_zero_vector(self):
        assert cosine_similarity([0.0, 0.0], [1.0, 0.0]) == 0.0
        assert cosine_to_rows(np.array([1.0, 0.0]), np.array([[2.0, 0.0], [0.0, 0.0]])).tolist() == [1.0, 0.0]
