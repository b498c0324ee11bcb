import json

import httpx
import numpy as np
import pytest

from pandora import llm
from pandora.errors import ModelUnavailable, TranscriptExhausted
from pandora.llm import (
    FunctionClient,
    HashingEmbedder,
    OpenAIClient,
    RateLimiter,
    RecordingClient,
    ScriptedClient,
    cosine_scores,
    request_hash,
)


def test_scripted_client_hash_then_sequence():
    c = ScriptedClient([
        {"request_hash": request_hash("hello"), "response_text": "A"},
        {"request_hash": None, "response_text": "B"},
        {"request_hash": None, "response_text": "C"},
    ])
    assert c.generate("other") == "B"
    assert c.generate("hello") == "A"
    assert c.generate("hello") == "C"
    with pytest.raises(TranscriptExhausted):
        c.generate("hello")
    assert c.calls == 4


def test_scripted_client_from_file_and_recording(tmp_path):
    path = tmp_path / "t.jsonl"
    rec = RecordingClient(FunctionClient(lambda p: p.upper()), path)
    assert rec.generate("abc") == "ABC"
    rec.generate("x y")
    replay = ScriptedClient.from_file(path)
    assert replay.generate("x y") == "X Y"
    assert replay.generate("abc") == "ABC"
    (tmp_path / "bad.jsonl").write_text("{oops\n", encoding="utf-8")
    with pytest.raises(ModelUnavailable, match="bad.jsonl:1"):
        ScriptedClient.from_file(tmp_path / "bad.jsonl")


def test_cosine_scores():
    m = np.array([[1.0, 0.0], [0.0, 0.0], [3.0, 3.0]])
    np.testing.assert_allclose(cosine_scores(m, np.array([2.0, 0.0])), [1.0, 0.0, np.sqrt(0.5)], atol=1e-12)
    assert cosine_scores(np.zeros((0, 2)), np.ones(2)).shape == (0,)


def test_hashing_embedder_is_deterministic():
    e = HashingEmbedder(32)
    a, b = e.embed(["Who wrote it?", "who WROTE it"])
    np.testing.assert_array_equal(a, b)
    assert a.sum() == 3
    with pytest.raises(ValueError):
        HashingEmbedder(0)


def test_rate_limiter_waits_between_tokens(monkeypatch):
    now = [0.0]
    slept = []
    monkeypatch.setattr(llm.time, "sleep", lambda s: (slept.append(s), now.__setitem__(0, now[0] + s)))
    limiter = RateLimiter(60, clock=lambda: now[0])
    limiter.acquire()
    limiter.acquire()
    assert slept == [pytest.approx(1.0)]


class FakeResponse:
    def __init__(self, status, payload):
        self.status_code = status
        self._payload = payload
        self.text = json.dumps(payload)
        self.request = httpx.Request("POST", "http://x")

    def json(self):
        return self._payload

    def raise_for_status(self):
        if self.status_code >= 400:
            raise httpx.HTTPStatusError("bad", request=self.request, response=self)


def test_openai_client_retries_then_succeeds(monkeypatch):
    monkeypatch.setenv("PANDORA_API_KEY", "secret")
    seen = []
    responses = [FakeResponse(503, {}), FakeResponse(200, {"choices": [{"message": {"content": "hi"}}]})]

    def post(url, json, headers, timeout):
        seen.append((url, headers))
        return responses.pop(0)

    monkeypatch.setattr(httpx, "post", post)
    monkeypatch.setattr(llm.time, "sleep", lambda s: None)
    client = OpenAIClient("http://api.test/v1", backoff=0)
    assert client.generate("q") == "hi"
    assert seen[0] == ("http://api.test/v1/chat/completions", {"Authorization": "Bearer secret"})
    assert len(seen) == 2


def test_openai_client_gives_up(monkeypatch):
    monkeypatch.setattr(httpx, "post", lambda *a, **k: FakeResponse(401, {"error": "nope"}))
    with pytest.raises(ModelUnavailable, match="401"):
        OpenAIClient("http://api.test/v1").generate("q")

    def broken(*a, **k):
        raise httpx.ConnectError("down")

    monkeypatch.setattr(httpx, "post", broken)
    monkeypatch.setattr(llm.time, "sleep", lambda s: None)
    with pytest.raises(ModelUnavailable, match="giving up"):
        OpenAIClient("http://api.test/v1", max_retries=2).generate("q")
