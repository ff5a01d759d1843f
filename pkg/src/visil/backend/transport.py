"""Request transports: live HTTP with retries, and record/replay fixtures.

A transport turns a chat-completions request payload into a response
JSON object. Fixtures are keyed by a stable content hash so replayed
pipelines are bit-identical across runs and never touch the network.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from pathlib import Path
from typing import Callable, Protocol

import httpx

from ..errors import BackendUnavailable, FixtureMiss

logger = logging.getLogger(__name__)

API_KEY_ENV = "VISIL_API_KEY"

MAX_RETRIES = 3
BACKOFF_BASE_S = 1.0


class Transport(Protocol):
    def send(self, payload: dict) -> dict: ...


def canonical_json(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def fixture_key(model_id: str, payload: dict, seed: int | None) -> str:
    """Stable content hash identifying one request."""
    body = canonical_json({"model_id": model_id, "payload": payload, "seed": seed})
    return hashlib.sha256(body.encode("utf-8")).hexdigest()


def request_key(payload: dict) -> str:
    return fixture_key(payload.get("model", ""), payload, payload.get("seed"))


class HttpTransport:
    """POSTs payloads to a chat-completions endpoint.

    Transport failures, 429s, and 5xx responses are retried up to
    MAX_RETRIES times with exponential backoff (1s, 2s, 4s); exhaustion
    raises BackendUnavailable. 4xx responses other than 429 fail fast.
    """

    def __init__(
        self,
        endpoint: str,
        api_key: str | None = None,
        timeout_s: float = 120.0,
        max_retries: int = MAX_RETRIES,
        sleep_fn: Callable[[float], None] = time.sleep,
    ):
        self.endpoint = endpoint
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        if not self.api_key:
            raise BackendUnavailable(
                f"no API key: pass api_key or set {API_KEY_ENV}")
        self.max_retries = max_retries
        self._sleep = sleep_fn
        self._client = httpx.Client(
            timeout=timeout_s,
            headers={"Authorization": f"Bearer {self.api_key}"},
        )

    def send(self, payload: dict) -> dict:
        last_error = None
        for attempt in range(self.max_retries):
            try:
                response = self._client.post(self.endpoint, json=payload)
            except httpx.HTTPError as exc:
                last_error = f"transport error: {exc}"
            else:
                if response.status_code == 200:
                    return response.json()
                if response.status_code == 429 or response.status_code >= 500:
                    last_error = f"HTTP {response.status_code}: {response.text[:200]}"
                else:
                    raise BackendUnavailable(
                        f"HTTP {response.status_code}: {response.text[:500]}")
            if attempt < self.max_retries - 1:
                delay = BACKOFF_BASE_S * (2 ** attempt)
                logger.warning("retrying in %.0fs after %s", delay, last_error)
                self._sleep(delay)
        raise BackendUnavailable(f"gave up after {self.max_retries} attempts: {last_error}")

    def close(self) -> None:
        self._client.close()


class ReplayTransport:
    """Serves responses from a fixture directory.

    Replay mode never touches the network and raises FixtureMiss, naming
    the request hash, when no fixture exists. Record mode forwards to the
    inner transport and persists one JSON file per request hash.
    """

    def __init__(self, fixtures_dir: str | Path, mode: str = "replay",
                 inner: Transport | None = None):
        if mode not in ("replay", "record"):
            raise ValueError(f"mode must be replay or record, got {mode!r}")
        if mode == "record" and inner is None:
            raise ValueError("record mode needs an inner transport")
        self.fixtures_dir = Path(fixtures_dir)
        self.mode = mode
        self.inner = inner
        if mode == "record":
            self.fixtures_dir.mkdir(parents=True, exist_ok=True)
        elif not self.fixtures_dir.is_dir():
            raise FileNotFoundError(f"fixture directory {self.fixtures_dir} does not exist")

    def _path(self, key: str) -> Path:
        return self.fixtures_dir / f"{key}.json"

    def send(self, payload: dict) -> dict:
        key = request_key(payload)
        path = self._path(key)
        if path.is_file():
            return json.loads(path.read_text(encoding="utf-8"))["response"]
        if self.mode == "replay":
            raise FixtureMiss(key)
        response = self.inner.send(payload)
        record = {"request": payload, "response": response}
        path.write_text(
            json.dumps(record, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
            encoding="utf-8")
        return response
