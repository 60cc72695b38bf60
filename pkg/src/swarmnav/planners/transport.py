"""Model transports: live HTTP endpoint, deterministic replay store, and a
recording wrapper.

Replay keys are fingerprints of the full prompt bundle. Coordinates inside
prompts are already rounded to two decimals when the text is built, so
fingerprints are stable against sub-millimeter state jitter.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from .base import PlannerQueryLog


class TransportError(RuntimeError):
    """Network or protocol failure after retries."""


class ReplayMissError(TransportError):
    """No recorded response for the request fingerprint."""

    def __init__(self, fingerprint: str):
        super().__init__(f"no replay record for fingerprint {fingerprint}")
        self.fingerprint = fingerprint


@dataclass
class PromptBundle:
    """One complete model request: fixed task text, online environment text,
    optional base64 image."""

    task_text: str
    env_text: str
    image_b64: Optional[str] = None
    model: str = ""


@dataclass
class TransportResult:
    text: str
    latency_s: float
    input_tokens: int = 0
    output_tokens: int = 0
    tokens_estimated: bool = False


def request_fingerprint(bundle: PromptBundle) -> str:
    h = hashlib.sha256()
    h.update(bundle.model.encode())
    h.update(b"\x00")
    h.update(bundle.task_text.encode())
    h.update(b"\x00")
    h.update(bundle.env_text.encode())
    h.update(b"\x00")
    if bundle.image_b64:
        h.update(bundle.image_b64.encode())
    return h.hexdigest()


def _estimate_tokens(text: str) -> int:
    return max(1, len(text) // 4) if text else 0


@dataclass
class LiveTransport:
    """Chat-completion style HTTPS endpoint. The API key is read from an
    environment variable, never from config files."""

    endpoint: str
    model: str
    key_env: str = "SWARMNAV_API_KEY"
    temperature: float = 0.0
    timeout_s: float = 60.0
    max_retries: int = 2

    def send(self, bundle: PromptBundle) -> TransportResult:
        import requests

        key = os.environ.get(self.key_env)
        if not key:
            raise TransportError(f"environment variable {self.key_env} not set")
        if bundle.image_b64:
            content = [
                {"type": "text", "text": bundle.task_text + "\n\n" + bundle.env_text},
                {"type": "image_url", "image_url": {
                    "url": f"data:image/jpeg;base64,{bundle.image_b64}"}},
            ]
        else:
            content = bundle.task_text + "\n\n" + bundle.env_text
        payload = {
            "model": self.model,
            "temperature": self.temperature,
            "messages": [{"role": "user", "content": content}],
        }
        headers = {"Authorization": f"Bearer {key}",
                   "Content-Type": "application/json"}
        last_exc = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(0.5 * 2 ** (attempt - 1))
            start = time.perf_counter()
            try:
                resp = requests.post(self.endpoint, json=payload,
                                     headers=headers, timeout=self.timeout_s)
                resp.raise_for_status()
                doc = resp.json()
                latency = time.perf_counter() - start
                text = doc["choices"][0]["message"]["content"]
                usage = doc.get("usage", {})
                in_tok = int(usage.get("prompt_tokens", 0))
                out_tok = int(usage.get("completion_tokens", 0))
                estimated = not usage
                if estimated:
                    in_tok = _estimate_tokens(bundle.task_text + bundle.env_text)
                    out_tok = _estimate_tokens(text)
                return TransportResult(text=text, latency_s=latency,
                                       input_tokens=in_tok,
                                       output_tokens=out_tok,
                                       tokens_estimated=estimated)
            except Exception as exc:  # noqa: BLE001 - wrapped as typed error
                last_exc = exc
        raise TransportError(f"live query failed after retries: {last_exc}")


@dataclass
class ReplayTransport:
    """Read-only store of recorded responses, one JSON file per fingerprint."""

    store_dir: Path

    def send(self, bundle: PromptBundle) -> TransportResult:
        fp = request_fingerprint(bundle)
        path = Path(self.store_dir) / f"{fp}.json"
        if not path.exists():
            raise ReplayMissError(fp)
        doc = json.loads(path.read_text())
        return TransportResult(
            text=doc["response"],
            latency_s=float(doc["latency_s"]),
            input_tokens=int(doc.get("input_tokens", 0)),
            output_tokens=int(doc.get("output_tokens", 0)),
            tokens_estimated=bool(doc.get("tokens_estimated", False)),
        )


def write_replay_record(store_dir, bundle: PromptBundle,
                        result: TransportResult) -> Path:
    fp = request_fingerprint(bundle)
    store = Path(store_dir)
    store.mkdir(parents=True, exist_ok=True)
    path = store / f"{fp}.json"
    path.write_text(json.dumps({
        "fingerprint": fp,
        "model": bundle.model,
        "response": result.text,
        "latency_s": result.latency_s,
        "input_tokens": result.input_tokens,
        "output_tokens": result.output_tokens,
        "tokens_estimated": result.tokens_estimated,
    }, indent=1))
    return path


@dataclass
class RecordingTransport:
    """Send through an inner transport and append every response to a store."""

    inner: object
    store_dir: Path

    def send(self, bundle: PromptBundle) -> TransportResult:
        result = self.inner.send(bundle)
        write_replay_record(self.store_dir, bundle, result)
        return result


@dataclass
class ScriptedTransport:
    """Deterministic in-process transport for tests and offline runs: a
    callable maps the bundle to response text."""

    script: Callable[[PromptBundle], str]
    latency_s: float = 0.01
    calls: int = field(default=0)

    def send(self, bundle: PromptBundle) -> TransportResult:
        text = self.script(bundle)
        self.calls += 1
        return TransportResult(
            text=text, latency_s=self.latency_s,
            input_tokens=_estimate_tokens(bundle.task_text + bundle.env_text),
            output_tokens=_estimate_tokens(text),
            tokens_estimated=True)


def model_query(bundle: PromptBundle, transport) -> tuple[str, PlannerQueryLog]:
    """Send one prompt bundle and log what it cost."""
    result = transport.send(bundle)
    qlog = PlannerQueryLog(
        planner="model",
        latency_s=result.latency_s,
        input_tokens=result.input_tokens,
        output_tokens=result.output_tokens,
        model_name=bundle.model,
        prompt_text=bundle.env_text,
        raw_response=result.text,
        image_bytes=len(bundle.image_b64 or "") * 3 // 4,
        tokens_estimated=result.tokens_estimated,
    )
    return result.text, qlog
