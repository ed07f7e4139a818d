"""LLM access with an append-only fixture store for offline replay."""
from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import urllib.request
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping, Protocol

log = logging.getLogger(__name__)

TEMPLATES = {
    "global_v1": "global_v1.txt",
    "instance_v1": "instance_v1.txt",
    "annotation_v1": "annotation_v1.txt",
}
API_KEY_ENV = "TAGCBM_LLM_API_KEY"


class FixtureMissingError(LookupError):
    """Replay lookup failed; no recorded response for the request."""


class LiveCallRefused(RuntimeError):
    pass


def load_template(template_id: str) -> str:
    try:
        name = TEMPLATES[template_id]
    except KeyError:
        raise KeyError(f"unknown prompt template {template_id!r}") from None
    return resources.files(__package__).joinpath("templates", name).read_text(encoding="utf-8")


def render(template_id: str, payload: Mapping[str, str]) -> str:
    return load_template(template_id).format(**payload)


def _canonical(value):
    if isinstance(value, str):
        return " ".join(value.split())
    if isinstance(value, Mapping):
        return {str(k): _canonical(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_canonical(v) for v in value]
    return value


def request_digest(template_id: str, payload: Mapping) -> str:
    """sha256 over the template id and the whitespace-normalized, key-sorted payload."""
    blob = json.dumps({"template": template_id, "payload": _canonical(payload)}, sort_keys=True,
                      ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class FixtureStore:
    """JSONL file of ``{"digest", "template", "response"}`` rows."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._rows: dict[str, list[str]] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, 1):
                    if not line.strip():
                        continue
                    row = json.loads(line)
                    if row["digest"] in self._rows and self._rows[row["digest"]] != row["response"]:
                        raise ValueError(f"{self.path}:{lineno}: conflicting response for {row['digest']}")
                    self._rows[row["digest"]] = list(row["response"])

    def __contains__(self, digest: str) -> bool:
        return digest in self._rows

    def __len__(self) -> int:
        return len(self._rows)

    def get(self, digest: str) -> list[str] | None:
        hit = self._rows.get(digest)
        return None if hit is None else list(hit)

    def append(self, digest: str, template_id: str, response: list[str]) -> None:
        with self._lock:
            old = self._rows.get(digest)
            if old is not None:
                if old != list(response):
                    raise ValueError(f"fixture {digest} already recorded with a different response")
                return
            self._rows[digest] = list(response)
            if self.path is not None:
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps({"digest": digest, "template": template_id, "response": list(response)},
                                        ensure_ascii=False) + "\n")


class LlmClient(Protocol):
    def query(self, template_id: str, payload: Mapping[str, str]) -> list[str]: ...


class ReplayClient:
    """Answers only from the fixture store; never touches the network."""

    def __init__(self, store: FixtureStore):
        self.store = store

    def query(self, template_id, payload):
        digest = request_digest(template_id, payload)
        hit = self.store.get(digest)
        if hit is None:
            raise FixtureMissingError(f"no fixture for {template_id} request {digest[:16]}")
        return hit


class RecordingClient:
    """Serves from the store, falling through to ``inner`` and recording on a miss."""

    def __init__(self, inner: LlmClient, store: FixtureStore):
        self.inner = inner
        self.store = store

    def query(self, template_id, payload):
        digest = request_digest(template_id, payload)
        hit = self.store.get(digest)
        if hit is not None:
            return hit
        response = list(self.inner.query(template_id, payload))
        self.store.append(digest, template_id, response)
        return response


class RefusingClient:
    """Fails on every call; stands in wherever a live call would be a bug."""

    def query(self, template_id, payload):
        raise LiveCallRefused(f"live LLM call attempted ({template_id})")


def parse_concept_list(text: str) -> list[str]:
    """Best-effort extraction of a concept list from free-form model output.

    When the reply has a numbered second section, only that section is read.
    Items are split on newlines and commas; bullets and numbering are removed.
    """
    section = re.split(r"(?m)^\s*2[.)]\s*", text, maxsplit=1)
    body = section[1] if len(section) == 2 else text
    items = []
    for line in body.splitlines():
        line = re.sub(r"^\s*(?:[-*•]|\d+[.)])\s*", "", line)
        for part in line.split(","):
            part = part.strip().strip(".").strip()
            if part and not part.endswith(":"):
                items.append(part)
    return list(dict.fromkeys(items))


def _http_post_json(url: str, body: dict, headers: dict, timeout: float = 60.0) -> dict:
    req = urllib.request.Request(url, data=json.dumps(body).encode("utf-8"), headers=headers, method="POST")
    with urllib.request.urlopen(req, timeout=timeout) as resp:
        return json.loads(resp.read().decode("utf-8"))


class LiveClient:
    """Single chat-completions endpoint at temperature 0; every response is recorded.

    Requests are serialized unless ``max_concurrency`` > 1.
    """

    def __init__(self, store: FixtureStore, model: str = "gpt-3.5-turbo",
                 endpoint: str = "https://api.openai.com/v1/chat/completions",
                 transport: Callable[[str, dict, dict], dict] | None = None, max_concurrency: int = 1):
        self.store = store
        self.model = model
        self.endpoint = endpoint
        self.transport = transport or _http_post_json
        self._sem = threading.BoundedSemaphore(max(1, max_concurrency))

    def query(self, template_id, payload):
        digest = request_digest(template_id, payload)
        hit = self.store.get(digest)
        if hit is not None:
            return hit
        key = os.environ.get(API_KEY_ENV)
        if not key:
            raise LiveCallRefused(f"live mode needs ${API_KEY_ENV}")
        body = {"model": self.model, "temperature": 0,
                "messages": [{"role": "user", "content": render(template_id, payload)}]}
        headers = {"Content-Type": "application/json", "Authorization": f"Bearer {key}"}
        with self._sem:
            reply = self.transport(self.endpoint, body, headers)
        text = reply["choices"][0]["message"]["content"]
        concepts = parse_concept_list(text)
        self.store.append(digest, template_id, concepts)
        return concepts
