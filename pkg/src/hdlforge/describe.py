"""Module description and classification clients.

``TemplateDescriber`` is deterministic and offline; ``ExternalDescriber``
talks to an OpenAI-compatible chat-completions endpoint and is the only
shared stateful component in extraction, so it serializes its requests.
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from typing import Optional, Sequence

from .errors import ClientUnavailable
from .lexical import mask
from .model import MAX_DESCRIPTION_WORDS, PortSpec

log = logging.getLogger(__name__)

DESCRIPTION_PROMPT = (
    "Describe what the following Verilog code does in 40 words or less, "
    "ending with a period: \n\n{verilog_code}\n\nFocus on the module's core function."
)

_SEQUENTIAL = re.compile(r"\b(?:posedge|negedge)\b")


def _plural(n: int, word: str) -> str:
    return f"{n} {word}" if n == 1 else f"{n} {word}s"


def enforce_sentence(text: str, limit: int = MAX_DESCRIPTION_WORDS) -> str:
    """Collapse whitespace, trim to ``limit`` words and end with a period."""
    words = text.split()
    if len(words) > limit:
        words = words[:limit]
    sentence = " ".join(words).rstrip(" ,;:!?-")
    if not sentence:
        return ""
    if not sentence.endswith("."):
        sentence += "."
    return sentence


def first_sentence(text: str) -> str:
    m = re.search(r"[.!?](?:\s|$)", text.strip())
    return text.strip()[: m.end()].strip() if m else text.strip()


class TemplateDescriber:
    kind = "fallback"

    def describe(self, name: str, ports: Sequence[PortSpec], code: str) -> str:
        counts = {d: sum(1 for p in ports if p.direction == d) for d in ("input", "output", "inout")}
        logic = "sequential" if _SEQUENTIAL.search(mask(code)) else "combinational"
        if not ports:
            io = "no ports"
        else:
            parts = [_plural(counts["input"], "input"), _plural(counts["output"], "output")]
            if counts["inout"]:
                parts.append(_plural(counts["inout"], "inout"))
            io = ", ".join(parts[:-1]) + " and " + parts[-1]
        return enforce_sentence(f"Module {name} with {io} implementing {logic} logic.")

    def classify(self, code: str, rubric: str) -> int:
        raise ClientUnavailable("template client cannot classify")


@dataclass
class EndpointConfig:
    url: str
    model: str = "o3-mini"
    api_key_env: str = "OPENAI_API_KEY"
    timeout: float = 60.0
    retries: int = 2
    backoff: float = 1.0
    min_interval: float = 0.0


class ExternalDescriber:
    kind = "external"

    def __init__(self, config: EndpointConfig) -> None:
        self.config = config
        self._lock = threading.Lock()
        self._last_call = 0.0

    def _post(self, prompt: str) -> str:
        cfg = self.config
        payload = json.dumps(
            {"model": cfg.model, "messages": [{"role": "user", "content": prompt}]}
        ).encode()
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(cfg.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        delay = cfg.backoff
        last_error: Optional[Exception] = None
        with self._lock:
            for attempt in range(cfg.retries + 1):
                wait = self._last_call + cfg.min_interval - time.monotonic()
                if wait > 0:
                    time.sleep(wait)
                self._last_call = time.monotonic()
                try:
                    req = urllib.request.Request(cfg.url, data=payload, headers=headers)
                    with urllib.request.urlopen(req, timeout=cfg.timeout) as resp:
                        body = json.load(resp)
                    return body["choices"][0]["message"]["content"]
                except (urllib.error.URLError, OSError, KeyError, IndexError, ValueError) as exc:
                    last_error = exc
                    log.warning("description request failed (attempt %d): %s", attempt + 1, exc)
                    if attempt < cfg.retries:
                        time.sleep(delay)
                        delay *= 2
        raise ClientUnavailable(str(last_error))

    def describe(self, name: str, ports: Sequence[PortSpec], code: str) -> str:
        prompt = DESCRIPTION_PROMPT.format(verilog_code=code)
        reply = " ".join(self._post(prompt).split())
        if len(reply.split()) > MAX_DESCRIPTION_WORDS:
            head = first_sentence(reply)
            if len(head.split()) <= MAX_DESCRIPTION_WORDS:
                reply = head
            else:
                reply = " ".join(self._post(prompt).split())
        return enforce_sentence(reply)

    def classify(self, code: str, rubric: str) -> int:
        reply = self._post(f"{rubric}\n\n{code}")
        m = re.search(r"\b(1[0-3]|[1-9])\b", reply)
        if not m:
            raise ClientUnavailable(f"unusable classification reply: {reply[:60]!r}")
        return int(m.group(1))


def describe_with_fallback(client, name: str, ports: Sequence[PortSpec], code: str) -> tuple[str, str]:
    """Return (description, provenance). Falls back to the template offline."""
    if client is not None and client.kind != "fallback":
        try:
            text = client.describe(name, ports, code)
            if text:
                return text, client.kind
        except ClientUnavailable as exc:
            log.warning("falling back to template description for %s: %s", name, exc)
        return TemplateDescriber().describe(name, ports, code), "fallback-after-error"
    return TemplateDescriber().describe(name, ports, code), "fallback"
