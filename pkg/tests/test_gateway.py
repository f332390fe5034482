import json
import socket
import threading
import time

import httpx
import numpy as np
import pytest

from deprofile_forge import gateway
from deprofile_forge.gateway import (
    BackendAuthError,
    BackendConfig,
    BackendTimeout,
    ChatExtractor,
    EmbeddingError,
    FileEmbedder,
    HashEmbedder,
    HttpChat,
    HttpEmbedder,
    MalformedResponse,
    ScriptedChat,
    TransportError,
    build_client,
    parse_extraction,
)

URL = "http://backend.test/v1/chat/completions"


def chat_reply(text):
    return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": text}}]})


def http_chat(handler, sleeps=None, **kw):
    cfg = BackendConfig("remote", "chat", provider="http", endpoint=URL, model="m", **kw)
    sleep = sleeps.append if sleeps is not None else (lambda s: None)
    return HttpChat(cfg, transport=httpx.MockTransport(handler), sleep=sleep)


def test_http_chat_payload():
    seen = {}

    def handler(request):
        seen.update(json.loads(request.content))
        return chat_reply("fine")

    client = http_chat(handler)
    history = [{"role": "user", "content": "hi"}, {"role": "assistant", "content": "hello"}]
    assert client.chat("sys", history, "how are you?") == "fine"
    assert seen["model"] == "m"
    assert [m["role"] for m in seen["messages"]] == ["system", "user", "assistant", "user"]
    assert seen["messages"][-1]["content"] == "how are you?"


def test_retry_with_exponential_backoff():
    statuses = iter([503, 429, 200])

    def handler(request):
        code = next(statuses)
        return chat_reply("ok") if code == 200 else httpx.Response(code)

    sleeps = []
    client = http_chat(handler, sleeps, backoff_base=0.5)
    assert client.chat("", [], "q") == "ok"
    assert sleeps == [0.5, 1.0]
    assert client.metrics.get("retries") == 2 and client.metrics.get("requests") == 3


def test_retries_exhausted_raises_last_error():
    client = http_chat(lambda r: httpx.Response(500), max_retries=2)
    with pytest.raises(TransportError, match="HTTP 500"):
        client.chat("", [], "q")
    assert client.metrics.get("requests") == 3 and client.metrics.get("failures") == 1


def test_timeout_is_typed():
    def handler(request):
        raise httpx.ReadTimeout("slow", request=request)

    with pytest.raises(BackendTimeout):
        http_chat(handler, max_retries=1).chat("", [], "q")


def test_auth_failure_not_retried():
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(401)

    with pytest.raises(BackendAuthError):
        http_chat(handler).chat("", [], "q")
    assert len(calls) == 1


def test_missing_auth_env(monkeypatch):
    monkeypatch.delenv("FORGE_TEST_TOKEN", raising=False)
    client = http_chat(lambda r: chat_reply("x"), auth_env="FORGE_TEST_TOKEN")
    with pytest.raises(BackendAuthError, match="FORGE_TEST_TOKEN"):
        client.chat("", [], "q")


def test_bearer_token_sent(monkeypatch):
    monkeypatch.setenv("FORGE_TEST_TOKEN", "s3cret")
    seen = {}

    def handler(request):
        seen["auth"] = request.headers.get("authorization")
        return chat_reply("x")

    http_chat(handler, auth_env="FORGE_TEST_TOKEN").chat("", [], "q")
    assert seen["auth"] == "Bearer s3cret"


@pytest.mark.parametrize(
    "response",
    [
        httpx.Response(200, json={"choices": []}),
        httpx.Response(200, json={"choices": [{"message": {"content": 5}}]}),
        httpx.Response(200, text="<html>"),
    ],
)
def test_malformed_responses(response):
    with pytest.raises(MalformedResponse):
        http_chat(lambda r: response).chat("", [], "q")


def test_client_error_4xx_not_retried():
    with pytest.raises(TransportError, match="HTTP 400"):
        http_chat(lambda r: httpx.Response(400, text="bad")).chat("", [], "q")


def test_in_flight_bound():
    lock = threading.Lock()
    state = {"now": 0, "peak": 0}

    def handler(request):
        with lock:
            state["now"] += 1
            state["peak"] = max(state["peak"], state["now"])
        time.sleep(0.02)
        with lock:
            state["now"] -= 1
        return chat_reply("x")

    client = http_chat(handler, max_in_flight=2)
    threads = [threading.Thread(target=client.chat, args=("", [], "q")) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert state["peak"] == 2
    assert client.metrics.get("requests") == 8


def test_backend_config_validation():
    with pytest.raises(ValueError):
        BackendConfig("x", "speak")
    with pytest.raises(ValueError):
        BackendConfig("x", "chat", max_in_flight=0)
    cfg = BackendConfig.from_dict("x", {"kind": "chat", "provider": "http", "decoding": {"temperature": 0}})
    assert cfg.options == {"decoding": {"temperature": 0}}
    with pytest.raises(TransportError, match="no endpoint"):
        HttpChat(BackendConfig("x", "chat", provider="http"))


# --- mocks ------------------------------------------------------------------------


def test_scripted_chat_lookup_order():
    chat = ScriptedChat({"q1": "by id", "Where?": "by text"}, default="dunno")
    assert chat.chat("", [], "Where?", question_id="q1") == "by id"
    assert chat.chat("", [], "Where?", question_id="q9") == "by text"
    assert chat.chat("", [], "What?") == "dunno"
    with pytest.raises(MalformedResponse):
        ScriptedChat({}).chat("", [], "What?")


def test_prompt_fields_default_unknown():
    assert gateway.prompt_fields("nothing")["age"] == "unknown"
    assert gateway.prompt_fields("Age: 26-35\n")["age"] == "26-35"


def test_mock_judge_replies_in_sequence():
    judge = gateway.MockJudge(["a", "b"])
    assert [judge.chat("", [], "x") for _ in range(3)] == ["a", "b", "b"]
    assert json.loads(gateway.MockJudge().chat("", [], "x"))["event_richness"] == 4


# --- extraction -------------------------------------------------------------------


def test_parse_extraction_valid():
    reply = 'Sure.\n```json\n{"triple": {"actor": "I", "action": "lost job", "impact": "stress"}, "summary": "s"}\n```'
    ext = parse_extraction(reply, "LifeEvent")
    assert ext.triple == {"actor": "I", "action": "lost job", "impact": "stress"} and ext.summary == "s"
    assert parse_extraction("None", "Symptom") is None


@pytest.mark.parametrize(
    "reply",
    [
        "no block",
        '```json\n{"triple": {"actor": "I"}}\n```',
        '```json\n{"triple": {"actor": "I", "action": "a", "impact": 3}}\n```',
        '```json\n{"triple": {"actor": "I", "action": "a", "impact": "b"}}\n```\n```json\n{}\n```',
    ],
)
def test_parse_extraction_rejects(reply):
    with pytest.raises(ValueError):
        parse_extraction(reply, "LifeEvent")


def test_chat_extractor_degrades_to_none():
    ext = ChatExtractor(ScriptedChat({}, default="garbage"))
    assert ext.extract("Symptom", "Pessimism", "text") is None
    assert ext.metrics.get("unparseable") == 1


# --- embeddings -------------------------------------------------------------------


def test_hash_embedder_deterministic_unit():
    a, b = HashEmbedder(16).embed(["x", "x"])
    assert np.array_equal(a.vector, b.vector)
    assert abs(np.linalg.norm(a.vector) - 1.0) < 1e-12
    assert a.text_hash == gateway.text_hash("x")


def test_file_embedder_round_trip(tmp_path):
    path = tmp_path / "emb.jsonl"
    gateway.write_embedding_file(path, ["a", "b", "a"], HashEmbedder(8), "hash-8")
    fe = FileEmbedder(path)
    assert fe.dim == 8 and fe.model_id == "hash-8" and len(fe.vectors) == 2
    assert np.allclose(fe.embed(["b"])[0].vector, HashEmbedder(8).embed(["b"])[0].vector)
    with pytest.raises(EmbeddingError, match="no precomputed vector"):
        fe.embed(["c"])


def test_file_embedder_dimension_mismatch(tmp_path):
    path = tmp_path / "emb.jsonl"
    path.write_text('{"dim": 3}\n{"text_hash": "h", "vector": [1, 2]}\n')
    with pytest.raises(EmbeddingError, match="shape"):
        FileEmbedder(path)


def test_file_mode_makes_no_network_calls(tmp_path, monkeypatch):
    path = tmp_path / "emb.jsonl"
    gateway.write_embedding_file(path, ["a"], HashEmbedder(4), "h")

    def refuse(*args, **kwargs):
        raise AssertionError("network access attempted")

    monkeypatch.setattr(socket, "create_connection", refuse)
    monkeypatch.setattr(socket.socket, "connect", refuse)
    client = build_client(BackendConfig("f", "embed", provider="file", options={"path": str(path)}))
    assert client.embed(["a"])[0].vector.shape == (4,)


def test_http_embedder_checks_dimension():
    dims = iter([3, 4])

    def handler(request):
        n = next(dims)
        return httpx.Response(200, json={"data": [{"embedding": [0.1] * n}]})

    cfg = BackendConfig("e", "embed", provider="http", endpoint="http://backend.test/v1/embeddings")
    emb = HttpEmbedder(cfg, transport=httpx.MockTransport(handler))
    assert emb.embed(["a"])[0].vector.shape == (3,)
    with pytest.raises(EmbeddingError, match="differs"):
        emb.embed(["b"])


def test_embedding_rejects_non_finite():
    with pytest.raises(ValueError):
        gateway.Embedding(np.array([1.0, np.nan]), "h")


# --- factory ----------------------------------------------------------------------


@pytest.mark.parametrize(
    "kind, provider, cls",
    [
        ("chat", "echo", gateway.EchoChat),
        ("judge", "mock", gateway.MockJudge),
        ("extract", "mock", gateway.EchoExtractor),
        ("extract", "echo", ChatExtractor),
        ("embed", "hash", HashEmbedder),
    ],
)
def test_build_client(kind, provider, cls):
    assert isinstance(build_client(BackendConfig("b", kind, provider=provider)), cls)


def test_build_client_unknown_provider():
    with pytest.raises(gateway.GatewayError, match="not available"):
        build_client(BackendConfig("b", "chat", provider="carrier-pigeon"))
