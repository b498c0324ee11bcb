"""Generation and embedding service clients.

Every client exposes ``generate(prompt) -> str`` (generation) or
``embed(texts) -> ndarray`` (embedding). The remote clients speak the
OpenAI-compatible HTTP API; the scripted client replays a transcript file so
whole runs are reproducible offline.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from collections import defaultdict, deque
from pathlib import Path
from typing import Callable, Iterable, Optional, Protocol, Sequence

import numpy as np

from .errors import EmbeddingUnavailable, ModelUnavailable, TranscriptExhausted

logger = logging.getLogger(__name__)

DEFAULT_API_KEY_ENV = "PANDORA_API_KEY"


class ModelClient(Protocol):
    def generate(self, prompt: str) -> str: ...


class EmbeddingClient(Protocol):
    dim: int
    embedder_id: str

    def embed(self, texts: Sequence[str]) -> np.ndarray: ...


def request_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def cosine_scores(matrix: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Row-wise cosine similarity; zero vectors score 0.

    Scores are rounded to 12 decimals so mathematically equal similarities
    (duplicated or rescaled vectors) compare equal.
    """
    matrix = np.asarray(matrix, dtype=float)
    query = np.asarray(query, dtype=float)
    if len(matrix) == 0:
        return np.zeros(0)
    norms = np.linalg.norm(matrix, axis=1) * np.linalg.norm(query)
    safe = np.where(norms > 0, norms, 1.0)
    return np.round(np.where(norms > 0, (matrix @ query) / safe, 0.0), 12)


class RateLimiter:
    """Token bucket allowing ``per_minute`` acquisitions per minute."""

    def __init__(self, per_minute: float, clock: Callable[[], float] = time.monotonic):
        self.rate = per_minute / 60.0
        self.capacity = max(1.0, per_minute / 60.0)
        self.tokens = self.capacity
        self.clock = clock
        self.updated = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self.clock()
                self.tokens = min(self.capacity, self.tokens + (now - self.updated) * self.rate)
                self.updated = now
                if self.tokens >= 1:
                    self.tokens -= 1
                    return
                wait = (1 - self.tokens) / self.rate
            time.sleep(wait)


class _HTTPService:
    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key_env: str = DEFAULT_API_KEY_ENV,
        max_retries: int = 3,
        timeout: float = 60.0,
        requests_per_minute: Optional[float] = None,
        backoff: float = 1.0,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self.max_retries = max_retries
        self.timeout = timeout
        self.backoff = backoff
        self.limiter = RateLimiter(requests_per_minute) if requests_per_minute else None

    def _post(self, route: str, payload: dict, error_cls) -> dict:
        import httpx

        key = os.environ.get(self.api_key_env)
        headers = {"Authorization": f"Bearer {key}"} if key else {}
        last: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if self.limiter:
                self.limiter.acquire()
            try:
                resp = httpx.post(f"{self.endpoint}/{route}", json=payload, headers=headers, timeout=self.timeout)
                if resp.status_code == 429 or resp.status_code >= 500:
                    raise httpx.HTTPStatusError(f"status {resp.status_code}", request=resp.request, response=resp)
                resp.raise_for_status()
                return resp.json()
            except httpx.HTTPStatusError as exc:
                code = exc.response.status_code
                if code != 429 and code < 500:
                    raise error_cls(f"{route}: HTTP {code}: {exc.response.text[:200]}") from exc
                last = exc
            except (httpx.TransportError, ValueError) as exc:
                last = exc
            if attempt < self.max_retries:
                delay = self.backoff * 2**attempt
                logger.warning("%s request failed (%s); retrying in %.1fs", route, last, delay)
                time.sleep(delay)
        raise error_cls(f"{route}: giving up after {self.max_retries + 1} attempts: {last}")


class OpenAIClient(_HTTPService):
    """Chat-completions client for any OpenAI-compatible endpoint."""

    def __init__(self, endpoint: str = "https://api.openai.com/v1", model: str = "gpt-4o-mini-2024-07-18",
                 temperature: float = 0.0, **kwargs):
        super().__init__(endpoint, model, **kwargs)
        self.temperature = temperature

    def generate(self, prompt: str) -> str:
        payload = {
            "model": self.model,
            "temperature": self.temperature,
            "messages": [{"role": "user", "content": prompt}],
        }
        data = self._post("chat/completions", payload, ModelUnavailable)
        try:
            return data["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise ModelUnavailable(f"unexpected completion payload: {exc}") from None


class ScriptedClient:
    """Replays responses from a transcript of ``{request_hash, response_text}``.

    Entries with a hash answer exactly that prompt (in order, if repeated);
    entries whose hash is null are consumed in order by any prompt without a
    hashed match.
    """

    def __init__(self, entries: Iterable[dict]):
        self._by_hash: dict[str, deque] = defaultdict(deque)
        self._queue: deque = deque()
        for e in entries:
            if e.get("request_hash"):
                self._by_hash[e["request_hash"]].append(e["response_text"])
            else:
                self._queue.append(e["response_text"])
        self._lock = threading.Lock()
        self.calls = 0

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedClient":
        entries = []
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").split("\n"), 1):
            if line.strip():
                try:
                    entries.append(json.loads(line))
                except ValueError as exc:
                    raise ModelUnavailable(f"{path}:{lineno}: bad transcript line ({exc})") from None
        return cls(entries)

    @classmethod
    def sequence(cls, responses: Iterable[str]) -> "ScriptedClient":
        return cls({"request_hash": None, "response_text": r} for r in responses)

    def generate(self, prompt: str) -> str:
        with self._lock:
            self.calls += 1
            h = request_hash(prompt)
            if self._by_hash.get(h):
                return self._by_hash[h].popleft()
            if self._queue:
                return self._queue.popleft()
        raise TranscriptExhausted(f"no scripted response for request {h[:12]}")


class FunctionClient:
    """Wraps a plain ``prompt -> text`` callable."""

    def __init__(self, fn: Callable[[str], str]):
        self.fn = fn
        self.calls = 0

    def generate(self, prompt: str) -> str:
        self.calls += 1
        return self.fn(prompt)


class RecordingClient:
    """Passes calls through to ``inner`` and appends them to a transcript file."""

    def __init__(self, inner: ModelClient, path: str | Path):
        self.inner = inner
        self.path = Path(path)
        self._lock = threading.Lock()

    def generate(self, prompt: str) -> str:
        text = self.inner.generate(prompt)
        record = {"request_hash": request_hash(prompt), "response_text": text}
        with self._lock, self.path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
        return text


# -- embedders ----------------------------------------------------------------

_TOKEN = re.compile(r"\w+")


class HashingEmbedder:
    """Deterministic local stub: hashed bag of lowercase word counts."""

    def __init__(self, dim: int = 256):
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.dim = dim
        self.embedder_id = f"hashing-bow-{dim}"

    def _bucket(self, token: str) -> int:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little") % self.dim

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim))
        for i, text in enumerate(texts):
            for tok in _TOKEN.findall(text.lower()):
                out[i, self._bucket(tok)] += 1.0
        return out


class OpenAIEmbedder(_HTTPService):
    def __init__(self, endpoint: str = "https://api.openai.com/v1", model: str = "text-embedding-3-small",
                 dim: int = 1536, **kwargs):
        super().__init__(endpoint, model, **kwargs)
        self.dim = dim
        self.embedder_id = f"openai:{model}"

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        data = self._post("embeddings", {"model": self.model, "input": list(texts)}, EmbeddingUnavailable)
        try:
            vecs = np.array([d["embedding"] for d in sorted(data["data"], key=lambda d: d["index"])], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise EmbeddingUnavailable(f"unexpected embedding payload: {exc}") from None
        if vecs.shape != (len(texts), self.dim):
            raise EmbeddingUnavailable(f"expected {self.dim}-d vectors, got shape {vecs.shape}")
        return vecs


class SentenceTransformerEmbedder:
    """Local encoder (e.g. ``BAAI/bge-large-en-v1.5``), loaded on first use."""

    def __init__(self, model_name: str = "BAAI/bge-large-en-v1.5", device: Optional[str] = None):
        self.model_name = model_name
        self.device = device
        self.embedder_id = f"st:{model_name}"
        self._model = None
        self._dim: Optional[int] = None

    def _load(self):
        if self._model is None:
            try:
                from sentence_transformers import SentenceTransformer

                self._model = SentenceTransformer(self.model_name, device=self.device)
            except Exception as exc:
                raise EmbeddingUnavailable(f"cannot load {self.model_name}: {exc}") from exc
            self._dim = int(self._model.get_sentence_embedding_dimension())
        return self._model

    @property
    def dim(self) -> int:
        self._load()
        return self._dim

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        model = self._load()
        return np.asarray(model.encode(list(texts), normalize_embeddings=True), dtype=float)
