"""The LLM client boundary: remote, replay, and recording clients.

A client maps an ordered chat message list to (reply text, input token
count, output token count).  The replay client serves recorded
transcripts keyed by a content hash of the request, making full design
runs byte-deterministic; unmatched requests are hard errors.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import httpx

from .errors import ProviderError, ReplayMismatch


@dataclass(frozen=True)
class ChatMessage:
    role: str  # system | user | assistant
    content: str

    def to_dict(self) -> dict:
        return {"role": self.role, "content": self.content}


@dataclass(frozen=True)
class ChatResult:
    text: str
    input_tokens: int
    output_tokens: int


class LLMClient(Protocol):
    model_id: str

    def chat(self, messages: list[ChatMessage]) -> ChatResult: ...


def request_key(model_id: str, messages: list[ChatMessage]) -> str:
    payload = json.dumps({"model": model_id, "messages": [m.to_dict() for m in messages]},
                         sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()


def approx_tokens(text: str) -> int:
    # whitespace token count; only used where the provider reports none
    return len(text.split())


class RemoteClient:
    """OpenAI-compatible chat-completions endpoint client."""

    def __init__(self, endpoint: str, model_id: str = "gpt-4o",
                 api_key_env: str = "ARCHENG_API_KEY", timeout: float = 120.0):
        self.endpoint = endpoint
        self.model_id = model_id
        self._headers = {}
        key = os.environ.get(api_key_env)
        if key:
            self._headers["Authorization"] = f"Bearer {key}"
        self._client = httpx.Client(timeout=timeout)

    def chat(self, messages: list[ChatMessage]) -> ChatResult:
        try:
            resp = self._client.post(self.endpoint, headers=self._headers, json={
                "model": self.model_id,
                "messages": [m.to_dict() for m in messages],
            })
            resp.raise_for_status()
            data = resp.json()
        except Exception as exc:
            raise ProviderError(f"chat request failed: {exc}") from exc
        text = data["choices"][0]["message"]["content"]
        usage = data.get("usage", {})
        return ChatResult(text,
                          int(usage.get("prompt_tokens", approx_tokens(
                              " ".join(m.content for m in messages)))),
                          int(usage.get("completion_tokens", approx_tokens(text))))


class ReplayClient:
    """Serves recorded responses from a JSON-lines transcript.

    The same request always maps to the same response, so interrupted
    runs can resume and replay identically.
    """

    def __init__(self, path: Path, model_id: str = "replay"):
        self.model_id = model_id
        self._responses: dict[str, ChatResult] = {}
        for line in Path(path).read_text().splitlines():
            if not line.strip():
                continue
            raw = json.loads(line)
            self._responses[raw["key"]] = ChatResult(
                raw["response"], raw["input_tokens"], raw["output_tokens"])

    def __len__(self) -> int:
        return len(self._responses)

    def chat(self, messages: list[ChatMessage]) -> ChatResult:
        key = request_key(self.model_id, messages)
        if key not in self._responses:
            preview = messages[-1].content[:200] if messages else ""
            raise ReplayMismatch(f"no transcript entry for request {key} (last message: {preview!r})")
        return self._responses[key]


class RecordingClient:
    """Wraps any client and appends request/response pairs to a transcript.

    Records under the given replay model id so the transcript replays
    against a ReplayClient with that id.
    """

    def __init__(self, inner: LLMClient, path: Path, replay_model_id: str = "replay"):
        self.inner = inner
        self.path = Path(path)
        self.model_id = replay_model_id

    def chat(self, messages: list[ChatMessage]) -> ChatResult:
        result = self.inner.chat(messages)
        entry = {
            "key": request_key(self.model_id, messages),
            "messages": [m.to_dict() for m in messages],
            "response": result.text,
            "input_tokens": result.input_tokens,
            "output_tokens": result.output_tokens,
        }
        with self.path.open("a") as fh:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
        return result
