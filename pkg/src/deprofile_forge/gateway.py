"""Clients for chat completion, structured extraction and text embedding.

Every capability has a deterministic mock so the whole pipeline can run
offline. The HTTP clients speak the common chat-completions / embeddings
wire format and share one retry and in-flight policy.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Protocol, Sequence

import httpx
import numpy as np

from .coc import EVENT_TRIPLE_FIELDS, SYMPTOM_TRIPLE_FIELDS, Extraction

log = logging.getLogger(__name__)

BACKEND_KINDS = ("chat", "extract", "embed", "judge")
MOCK_PROVIDERS = ("echo", "scripted", "mock", "hash", "file")


class GatewayError(RuntimeError):
    """Base class; carries the backend name."""

    def __init__(self, backend: str, message: str):
        self.backend = backend
        super().__init__(f"backend {backend!r}: {message}")


class BackendAuthError(GatewayError):
    pass


class BackendTimeout(GatewayError):
    pass


class TransportError(GatewayError):
    pass


class MalformedResponse(GatewayError):
    pass


class EmbeddingError(GatewayError):
    pass


@dataclass(frozen=True)
class BackendConfig:
    name: str
    kind: str
    provider: str = "echo"
    endpoint: str | None = None
    model: str | None = None
    auth_env: str | None = None
    timeout: float = 60.0
    max_retries: int = 3
    max_in_flight: int = 4
    backoff_base: float = 0.5
    options: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in BACKEND_KINDS:
            raise ValueError(f"backend {self.name!r}: kind {self.kind!r} not in {BACKEND_KINDS}")
        if self.max_in_flight < 1:
            raise ValueError(f"backend {self.name!r}: max_in_flight must be >= 1")
        if self.timeout <= 0:
            raise ValueError(f"backend {self.name!r}: timeout must be positive")
        if self.max_retries < 0:
            raise ValueError(f"backend {self.name!r}: max_retries must be >= 0")

    @property
    def is_mock(self) -> bool:
        return self.provider in MOCK_PROVIDERS

    @classmethod
    def from_dict(cls, name: str, raw: dict) -> BackendConfig:
        known = {f for f in cls.__dataclass_fields__ if f not in ("name", "options")}
        options = {k: v for k, v in raw.items() if k not in known}
        return cls(name=name, options=options, **{k: v for k, v in raw.items() if k in known})


class Metrics:
    """Thread-safe counters shared by a client's callers."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._counts: dict[str, int] = {}

    def incr(self, key: str, n: int = 1) -> None:
        with self._lock:
            self._counts[key] = self._counts.get(key, 0) + n

    def get(self, key: str) -> int:
        with self._lock:
            return self._counts.get(key, 0)

    def snapshot(self) -> dict[str, int]:
        with self._lock:
            return dict(self._counts)


Message = dict  # {"role": ..., "content": ...}


class ChatClient(Protocol):
    name: str

    def chat(self, system_prompt: str, history: Sequence[Message], user_turn: str, **context: Any) -> str: ...


# ---------------------------------------------------------------------------
# mock chat backends
# ---------------------------------------------------------------------------


class EchoChat:
    """Returns the user turn verbatim."""

    def __init__(self, name: str = "echo") -> None:
        self.name = name
        self.metrics = Metrics()

    def chat(self, system_prompt: str, history: Sequence[Message], user_turn: str, **context: Any) -> str:
        self.metrics.incr("requests")
        return user_turn


_PROMPT_FIELDS = {
    "age": re.compile(r"^Age: (.+)$", re.MULTILINE),
    "gender": re.compile(r"^Gender: (.+)$", re.MULTILINE),
    "employment": re.compile(r"^Employment status: (.+)$", re.MULTILINE),
    "marital": re.compile(r"^Marital status: (.+)$", re.MULTILINE),
    "first_card_time": re.compile(r"^represent_time: (.+) \(\d+\)$", re.MULTILINE),
}


def prompt_fields(system_prompt: str) -> dict[str, str]:
    """Values a scripted answer template may reference, read from the system prompt."""
    out = {}
    for key, pattern in _PROMPT_FIELDS.items():
        m = pattern.search(system_prompt)
        out[key] = m.group(1).strip() if m else "unknown"
    return out


class ScriptedChat:
    """Canned answers keyed by question id (or question text).

    Answers are ``str.format`` templates over :func:`prompt_fields`, so one
    table can cite a card time that actually exists in each profile's prompt.
    """

    def __init__(self, answers: dict[str, str], default: str | None = None, name: str = "scripted") -> None:
        self.name = name
        self.answers = dict(answers)
        self.default = default
        self.metrics = Metrics()

    @classmethod
    def from_file(cls, path: str | Path, name: str = "scripted") -> ScriptedChat:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(raw["answers"], raw.get("default"), name=name)

    def chat(self, system_prompt: str, history: Sequence[Message], user_turn: str, **context: Any) -> str:
        self.metrics.incr("requests")
        qid = context.get("question_id")
        template = self.answers.get(qid) if qid is not None else None
        if template is None:
            template = self.answers.get(user_turn, self.default)
        if template is None:
            raise MalformedResponse(self.name, f"no scripted answer for {qid or user_turn!r}")
        return template.format(**prompt_fields(system_prompt))


class FailingChat:
    """Wraps a client and raises a transport error on chosen call numbers (1-based)."""

    def __init__(self, inner: ChatClient, fail_on: set[int], name: str = "failing") -> None:
        self.inner = inner
        self.fail_on = set(fail_on)
        self.name = name
        self.calls = 0

    def chat(self, system_prompt: str, history: Sequence[Message], user_turn: str, **context: Any) -> str:
        self.calls += 1
        if self.calls in self.fail_on:
            raise TransportError(self.name, f"injected failure on call {self.calls}")
        return self.inner.chat(system_prompt, history, user_turn, **context)


# ---------------------------------------------------------------------------
# HTTP chat backend
# ---------------------------------------------------------------------------


class _HttpBase:
    def __init__(
        self,
        config: BackendConfig,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        if not config.endpoint:
            raise TransportError(config.name, "no endpoint configured")
        self.config = config
        self.name = config.name
        self.metrics = Metrics()
        self._slots = threading.BoundedSemaphore(config.max_in_flight)
        self._sleep = sleep
        self._client = httpx.Client(timeout=config.timeout, transport=transport)

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.config.auth_env:
            token = os.environ.get(self.config.auth_env)
            if not token:
                raise BackendAuthError(self.name, f"environment variable {self.config.auth_env} is not set")
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def _post(self, payload: dict) -> dict:
        """POST with exponential backoff on timeouts, connection errors, 429 and 5xx."""
        headers = self._headers()
        attempts = self.config.max_retries + 1
        last: Exception | None = None
        for attempt in range(attempts):
            if attempt:
                self.metrics.incr("retries")
                self._sleep(self.config.backoff_base * 2 ** (attempt - 1))
            with self._slots:
                self.metrics.incr("requests")
                try:
                    resp = self._client.post(self.config.endpoint, json=payload, headers=headers)  # type: ignore[arg-type]
                except httpx.TimeoutException as exc:
                    last = BackendTimeout(self.name, f"timed out after {self.config.timeout}s ({exc})")
                    continue
                except httpx.TransportError as exc:
                    last = TransportError(self.name, f"{type(exc).__name__}: {exc}")
                    continue
            if resp.status_code in (401, 403):
                raise BackendAuthError(self.name, f"HTTP {resp.status_code}")
            if resp.status_code == 429 or resp.status_code >= 500:
                last = TransportError(self.name, f"HTTP {resp.status_code}")
                continue
            if resp.status_code >= 400:
                raise TransportError(self.name, f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json()
            except ValueError as exc:
                raise MalformedResponse(self.name, f"response is not JSON: {exc}") from None
        self.metrics.incr("failures")
        assert last is not None
        raise last

    def close(self) -> None:
        self._client.close()


class HttpChat(_HttpBase):
    """Chat-completions style endpoint (system/user/assistant roles)."""

    def chat(self, system_prompt: str, history: Sequence[Message], user_turn: str, **context: Any) -> str:
        messages = [{"role": "system", "content": system_prompt}] if system_prompt else []
        messages += [*history, {"role": "user", "content": user_turn}]
        payload: dict[str, Any] = {"model": self.config.model, "messages": messages}
        payload.update(self.config.options.get("decoding", {}))
        data = self._post(payload)
        try:
            content = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise MalformedResponse(self.name, "missing choices[0].message.content") from None
        if not isinstance(content, str):
            raise MalformedResponse(self.name, "message content is not a string")
        return content


# ---------------------------------------------------------------------------
# extraction
# ---------------------------------------------------------------------------

EXTRACT_SYSTEM = """You extract structured memory from a single social-media post.
Return None if the post does not describe a meaningful first-person experience.
Otherwise return exactly one fenced JSON block:
```json
{{"triple": {{{fields}}}, "summary": "<one short sentence>"}}
```
The triple must stay consistent with the given label. Do not add facts that are not in the post."""

_FENCE = re.compile(r"```(?:json)?\s*(\{.*?\})\s*```", re.DOTALL)


def parse_extraction(reply: str, kind: str) -> Extraction | None:
    """Parse one fenced JSON block; raises ValueError on anything unusable."""
    if reply.strip().strip("`").strip() in ("None", "null"):
        return None
    blocks = _FENCE.findall(reply)
    if len(blocks) != 1:
        raise ValueError(f"expected one fenced JSON block, found {len(blocks)}")
    data = json.loads(blocks[0])
    fields = SYMPTOM_TRIPLE_FIELDS if kind == "Symptom" else EVENT_TRIPLE_FIELDS
    triple = data.get("triple")
    if not isinstance(triple, dict) or set(triple) != set(fields):
        raise ValueError(f"triple must have fields {fields}")
    if not all(isinstance(v, str) for v in triple.values()):
        raise ValueError("triple values must be strings")
    summary = data.get("summary", "")
    if not isinstance(summary, str):
        raise ValueError("summary must be a string")
    return Extraction({f: triple[f] for f in fields}, summary)


class ChatExtractor:
    """Structured extraction over any chat client; bad replies degrade to None."""

    def __init__(self, chat_client: ChatClient, name: str | None = None) -> None:
        self.chat_client = chat_client
        self.name = name or getattr(chat_client, "name", "extract")
        self.metrics = Metrics()

    def extract(self, kind: str, label: str, text: str) -> Extraction | None:
        fields = SYMPTOM_TRIPLE_FIELDS if kind == "Symptom" else EVENT_TRIPLE_FIELDS
        system = EXTRACT_SYSTEM.format(fields=", ".join(f'"{f}": "..."' for f in fields))
        reply = self.chat_client.chat(system, [], f"Type: {kind}\nLabel: {label}\nPost: {text}")
        try:
            return parse_extraction(reply, kind)
        except (ValueError, json.JSONDecodeError) as exc:
            self.metrics.incr("unparseable")
            log.warning("%s: unparseable extraction reply (%s); treating as None", self.name, exc)
            return None


class EchoExtractor:
    """Mock: triple built from the label and the head of the text."""

    name = "mock-extract"

    def __init__(self, head: int = 40) -> None:
        self.head = head

    def extract(self, kind: str, label: str, text: str) -> Extraction | None:
        head = text[: self.head]
        if kind == "Symptom":
            return Extraction({"subject": label, "experience": head, "severity_frequency": "unspecified"}, "")
        return Extraction({"actor": label, "action": head, "impact": "unspecified"}, "")


# ---------------------------------------------------------------------------
# embeddings
# ---------------------------------------------------------------------------


def text_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class Embedding:
    vector: np.ndarray
    text_hash: str

    def __post_init__(self) -> None:
        if self.vector.ndim != 1 or not np.all(np.isfinite(self.vector)):
            raise ValueError("embedding must be a finite 1-d vector")


class Embedder(Protocol):
    name: str

    def embed(self, texts: Sequence[str]) -> list[Embedding]: ...


class _DimCheck:
    dim: int | None = None

    def _check(self, name: str, vec: np.ndarray, h: str) -> None:
        if self.dim is None:
            self.dim = vec.shape[0]
        elif vec.shape[0] != self.dim:
            raise EmbeddingError(name, f"dimension {vec.shape[0]} for {h[:12]} differs from run dimension {self.dim}")


class HashEmbedder(_DimCheck):
    """Mock: sha256 of the text seeds a Gaussian draw, normalized to unit length."""

    def __init__(self, dim: int = 64, name: str = "hash") -> None:
        self.dim = dim
        self.name = name

    def embed(self, texts: Sequence[str]) -> list[Embedding]:
        out = []
        for text in texts:
            h = text_hash(text)
            rng = np.random.default_rng(int(h[:16], 16))
            v = rng.standard_normal(self.dim)
            out.append(Embedding(v / np.linalg.norm(v), h))
        return out


class FileEmbedder(_DimCheck):
    """Precomputed vectors: a header line ``{dim, model_id}`` then ``{text_hash, vector}`` lines."""

    def __init__(self, path: str | Path, name: str = "file") -> None:
        self.name = name
        self.path = Path(path)
        self.vectors: dict[str, np.ndarray] = {}
        try:
            lines = self.path.read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise EmbeddingError(name, f"cannot read {path}: {exc}") from exc
        lines = [ln for ln in lines if ln.strip()]
        if not lines:
            raise EmbeddingError(name, f"{path} is empty")
        header = json.loads(lines[0])
        self.dim = int(header["dim"])
        self.model_id = header.get("model_id")
        for lineno, line in enumerate(lines[1:], start=2):
            rec = json.loads(line)
            vec = np.asarray(rec["vector"], dtype=float)
            if vec.shape != (self.dim,):
                raise EmbeddingError(name, f"{path}:{lineno}: vector has shape {vec.shape}, header says {self.dim}")
            self.vectors[rec["text_hash"]] = vec

    def embed(self, texts: Sequence[str]) -> list[Embedding]:
        out = []
        for text in texts:
            h = text_hash(text)
            if h not in self.vectors:
                raise EmbeddingError(self.name, f"no precomputed vector for text hash {h}")
            out.append(Embedding(self.vectors[h], h))
        return out


def write_embedding_file(path: str | Path, texts: Sequence[str], embedder: Embedder, model_id: str) -> None:
    embs = embedder.embed(list(dict.fromkeys(texts)))
    dim = embs[0].vector.shape[0] if embs else 0
    lines = [json.dumps({"dim": dim, "model_id": model_id})]
    lines += [json.dumps({"text_hash": e.text_hash, "vector": e.vector.tolist()}) for e in embs]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


class HttpEmbedder(_HttpBase, _DimCheck):
    """Embeddings endpoint: ``{"model", "input": [...]}`` -> ``{"data": [{"embedding": [...]}]}``."""

    def __init__(self, config: BackendConfig, transport: httpx.BaseTransport | None = None, **kw: Any) -> None:
        super().__init__(config, transport, **kw)
        self.dim = None

    def embed(self, texts: Sequence[str]) -> list[Embedding]:
        data = self._post({"model": self.config.model, "input": list(texts)})
        try:
            rows = [np.asarray(d["embedding"], dtype=float) for d in data["data"]]
        except (KeyError, TypeError):
            raise MalformedResponse(self.name, "missing data[].embedding") from None
        if len(rows) != len(texts):
            raise MalformedResponse(self.name, f"{len(rows)} vectors for {len(texts)} texts")
        out = []
        for text, vec in zip(texts, rows):
            h = text_hash(text)
            self._check(self.name, vec, h)
            out.append(Embedding(vec, h))
        return out


# ---------------------------------------------------------------------------
# judge mock
# ---------------------------------------------------------------------------

DEFAULT_MOCK_VERDICT = {
    "persona_faithfulness": 4,
    "event_richness": 4,
    "symptom_consistency": 4,
    "reasons": {
        "persona_faithfulness": "mock verdict",
        "event_richness": "mock verdict",
        "symptom_consistency": "mock verdict",
    },
    "extracted_events": [],
}


class MockJudge:
    """Returns a fixed verdict JSON, or successive replies from a list."""

    def __init__(self, replies: Sequence[str] | None = None, name: str = "mock-judge") -> None:
        self.name = name
        self.replies = list(replies) if replies else None
        self.calls = 0
        self.metrics = Metrics()

    def chat(self, system_prompt: str, history: Sequence[Message], user_turn: str, **context: Any) -> str:
        self.metrics.incr("requests")
        self.calls += 1
        if self.replies is None:
            return json.dumps(DEFAULT_MOCK_VERDICT, sort_keys=True)
        return self.replies[min(self.calls, len(self.replies)) - 1]


# ---------------------------------------------------------------------------
# factory
# ---------------------------------------------------------------------------


def build_client(config: BackendConfig, resolve: Callable[[str], Path] = Path) -> Any:
    """Instantiate the client for a backend section; ``resolve`` maps option paths to files."""

    provider = config.provider
    if config.kind in ("chat", "judge", "extract"):
        if provider == "echo":
            client: Any = EchoChat(config.name)
        elif provider == "scripted":
            client = ScriptedChat.from_file(resolve(config.options["answers"]), name=config.name)
        elif provider == "mock" and config.kind == "judge":
            client = MockJudge(name=config.name)
        elif provider == "mock" and config.kind == "extract":
            return EchoExtractor()
        elif provider in ("openai", "http"):
            client = HttpChat(config)
        else:
            raise GatewayError(config.name, f"provider {provider!r} not available for kind {config.kind!r}")
        return ChatExtractor(client, config.name) if config.kind == "extract" else client
    if provider in ("hash", "mock"):
        return HashEmbedder(int(config.options.get("dim", 64)), name=config.name)
    if provider == "file":
        return FileEmbedder(resolve(config.options["path"]), name=config.name)
    if provider in ("openai", "http"):
        return HttpEmbedder(config)
    raise GatewayError(config.name, f"provider {provider!r} not available for kind {config.kind!r}")
