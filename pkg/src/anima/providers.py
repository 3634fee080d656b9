"""Text-generation provider contract and its two implementations.

``ScriptedProvider`` resolves requests against a registry of canned entries
and is the workhorse for desk-scale verification: identical requests always
yield identical text. ``RemoteProvider`` talks to an OpenAI-style HTTP
endpoint with a timeout and bounded retry.
"""

from __future__ import annotations

import asyncio
import json
import logging
import os
import time
from dataclasses import dataclass
from enum import Enum

import httpx

from .errors import NoScriptMatch, ProviderRejected, ProviderTimeout, ValidationError

logger = logging.getLogger(__name__)


class ModuleTag(str, Enum):
    SELF_AWARENESS = "self_awareness"
    OTHER_AWARENESS = "other_awareness"
    MEMORY_EXTRACT = "memory_extract"
    QUERY_REWRITE = "query_rewrite"
    KNOWLEDGE_SUMMARIZE = "knowledge_summarize"
    QUICK_RESPONSE = "quick_response"
    ANALYTIC_RESPONSE = "analytic_response"
    RETHINK = "rethink"


# Analysis tags run cool for stable structure; expression tags run warm.
DEFAULT_TEMPERATURES: dict[ModuleTag, float] = {
    ModuleTag.SELF_AWARENESS: 0.2,
    ModuleTag.OTHER_AWARENESS: 0.2,
    ModuleTag.MEMORY_EXTRACT: 0.2,
    ModuleTag.QUERY_REWRITE: 0.2,
    ModuleTag.KNOWLEDGE_SUMMARIZE: 0.2,
    ModuleTag.RETHINK: 0.2,
    ModuleTag.QUICK_RESPONSE: 0.8,
    ModuleTag.ANALYTIC_RESPONSE: 0.8,
}

# Tag -> structured-output schema id. Free-text tags map to None.
TAG_SCHEMAS: dict[ModuleTag, str | None] = {
    ModuleTag.SELF_AWARENESS: "self_state.v1",
    ModuleTag.OTHER_AWARENESS: "other_state.v1",
    ModuleTag.MEMORY_EXTRACT: "memory_pieces.v1",
    ModuleTag.QUERY_REWRITE: "query_list.v1",
    ModuleTag.KNOWLEDGE_SUMMARIZE: None,
    ModuleTag.QUICK_RESPONSE: None,
    ModuleTag.ANALYTIC_RESPONSE: None,
    ModuleTag.RETHINK: "rethink_verdict.v1",
}

USER_INPUT_LABEL = "user_input"


@dataclass(frozen=True)
class GenerationRequest:
    module_tag: ModuleTag
    system_instructions: str
    context_blocks: tuple[tuple[str, str], ...] = ()
    expected_schema: str | None = None
    max_output_units: int = 512
    temperature_hint: float | None = None

    def __post_init__(self):
        if self.max_output_units < 1:
            raise ValidationError("max_output_units must be positive")
        temp = self.temperature_hint
        if temp is None:
            temp = DEFAULT_TEMPERATURES[self.module_tag]
            object.__setattr__(self, "temperature_hint", temp)
        if not 0.0 <= temp <= 2.0:
            raise ValidationError("temperature_hint must be within [0, 2]")
        expected = TAG_SCHEMAS[self.module_tag]
        if self.expected_schema is None and expected is not None:
            object.__setattr__(self, "expected_schema", expected)

    def block(self, label: str) -> str | None:
        for name, text in self.context_blocks:
            if name == label:
                return text
        return None

    def block_labels(self) -> list[str]:
        return [name for name, _ in self.context_blocks]

    def match_subject(self) -> str:
        """Text the scripted provider matches entries against.

        The current user input when the request carries one, otherwise the
        concatenated context.
        """
        subject = self.block(USER_INPUT_LABEL)
        if subject is not None:
            return subject
        return "\n".join(text for _, text in self.context_blocks)


@dataclass(frozen=True)
class GenerationResult:
    text: str
    latency_ms: int
    provider_id: str
    truncated: bool = False


class Matcher(str, Enum):
    EXACT = "exact"
    SUBSTRING = "substring"
    DEFAULT = "default"


@dataclass(frozen=True)
class ScriptEntry:
    module_tag: ModuleTag
    matcher: Matcher
    response: str
    pattern: str = ""
    latency_stub_ms: int = 0

    def __post_init__(self):
        if self.latency_stub_ms < 0:
            raise ValidationError("latency_stub_ms must be non-negative")
        if self.matcher is not Matcher.DEFAULT and not self.pattern:
            raise ValidationError(f"{self.matcher.value} matcher requires a pattern")

    def to_dict(self) -> dict:
        return {
            "module_tag": self.module_tag.value,
            "matcher": self.matcher.value,
            "pattern": self.pattern,
            "response": self.response,
            "latency_stub_ms": self.latency_stub_ms,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScriptEntry":
        return cls(
            module_tag=ModuleTag(data["module_tag"]),
            matcher=Matcher(data.get("matcher", "default")),
            pattern=data.get("pattern", ""),
            response=data["response"],
            latency_stub_ms=int(data.get("latency_stub_ms", 0)),
        )


def load_script_file(text: str) -> list[ScriptEntry]:
    """Parse a script file: one ScriptEntry JSON object per line."""
    entries = []
    for line in text.splitlines():
        if line.strip():
            entries.append(ScriptEntry.from_dict(json.loads(line)))
    return entries


class ScriptedProvider:
    """Deterministic provider backed by a registry of script entries.

    Resolution picks the most specific match for ``(module_tag, subject)``:
    exact beats substring beats default; among substring hits the longest
    pattern wins, first registered on a tie. The registry is immutable once
    the provider starts serving; ``generate`` is safe to call concurrently.
    """

    provider_id = "scripted"

    def __init__(self, entries: list[ScriptEntry] | None = None, clock=None):
        self._exact: dict[tuple[ModuleTag, str], ScriptEntry] = {}
        self._substring: dict[ModuleTag, list[ScriptEntry]] = {}
        self._default: dict[ModuleTag, ScriptEntry] = {}
        self._clock = clock
        self.requests: list[GenerationRequest] = []
        for entry in entries or []:
            self.register(entry)

    def register(self, entry: ScriptEntry) -> None:
        if entry.matcher is Matcher.EXACT:
            self._exact[(entry.module_tag, entry.pattern)] = entry
        elif entry.matcher is Matcher.SUBSTRING:
            self._substring.setdefault(entry.module_tag, []).append(entry)
        else:
            if entry.module_tag in self._default:
                raise ValidationError(
                    f"duplicate default entry for tag {entry.module_tag.value}")
            self._default[entry.module_tag] = entry

    def resolve(self, req: GenerationRequest) -> ScriptEntry:
        subject = req.match_subject()
        entry = self._exact.get((req.module_tag, subject))
        if entry is not None:
            return entry
        best: ScriptEntry | None = None
        for candidate in self._substring.get(req.module_tag, []):
            if candidate.pattern in subject:
                if best is None or len(candidate.pattern) > len(best.pattern):
                    best = candidate
        if best is not None:
            return best
        entry = self._default.get(req.module_tag)
        if entry is None:
            raise NoScriptMatch(
                f"no script entry for tag {req.module_tag.value} (subject={subject[:80]!r})")
        return entry

    async def generate(self, req: GenerationRequest) -> GenerationResult:
        self.requests.append(req)
        monotonic = self._clock.monotonic if self._clock is not None else time.monotonic
        start = monotonic()
        entry = self.resolve(req)
        if entry.latency_stub_ms:
            await asyncio.sleep(entry.latency_stub_ms / 1000.0)
        return GenerationResult(
            text=entry.response,
            latency_ms=max(int((monotonic() - start) * 1000), 0),
            provider_id=self.provider_id,
        )


@dataclass
class RemoteConfig:
    endpoint: str
    model: str
    auth_token_env: str = "ANIMA_PROVIDER_TOKEN"
    timeout_ms: int = 10000
    max_retries: int = 2
    # Exponential backoff between retries; response time is user experience,
    # so fail fast rather than wait long.
    backoff_ms: tuple[int, ...] = (250, 1000)
    max_in_flight: int = 8

    @classmethod
    def from_dict(cls, data: dict) -> "RemoteConfig":
        return cls(
            endpoint=data["endpoint"],
            model=data["model"],
            auth_token_env=data.get("auth_token_env", "ANIMA_PROVIDER_TOKEN"),
            timeout_ms=int(data.get("timeout_ms", 10000)),
            max_retries=int(data.get("max_retries", 2)),
        )


class RemoteProvider:
    """HTTP provider speaking the chat-completions wire format.

    Performs at most ``1 + max_retries`` calls per generate; retries only on
    timeouts and 5xx-class responses. A semaphore caps concurrent in-flight
    requests.
    """

    provider_id = "remote"

    def __init__(self, config: RemoteConfig, transport: httpx.AsyncBaseTransport | None = None):
        self.config = config
        self.requests: list[GenerationRequest] = []
        self._semaphore = asyncio.Semaphore(config.max_in_flight)
        self._client = httpx.AsyncClient(
            transport=transport,
            timeout=config.timeout_ms / 1000.0,
        )

    async def aclose(self) -> None:
        await self._client.aclose()

    def _build_payload(self, req: GenerationRequest) -> dict:
        context = "\n\n".join(f"[{label}]\n{text}" for label, text in req.context_blocks)
        return {
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": req.system_instructions},
                {"role": "user", "content": context},
            ],
            "temperature": req.temperature_hint,
            "max_tokens": req.max_output_units,
        }

    async def generate(self, req: GenerationRequest) -> GenerationResult:
        self.requests.append(req)
        headers = {}
        token = os.environ.get(self.config.auth_token_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        payload = self._build_payload(req)
        start = time.monotonic()
        attempts = 1 + self.config.max_retries
        last_error: Exception | None = None
        async with self._semaphore:
            for attempt in range(attempts):
                if attempt > 0:
                    backoff = self.config.backoff_ms[min(attempt - 1, len(self.config.backoff_ms) - 1)]
                    await asyncio.sleep(backoff / 1000.0)
                try:
                    response = await self._client.post(
                        self.config.endpoint, json=payload, headers=headers)
                except httpx.TimeoutException as exc:
                    last_error = ProviderTimeout(f"provider timed out: {exc}")
                    continue
                if response.status_code >= 500:
                    last_error = ProviderRejected(
                        f"provider returned {response.status_code}",
                        status=response.status_code)
                    continue
                if response.status_code >= 300:
                    raise ProviderRejected(
                        f"provider returned {response.status_code}",
                        status=response.status_code)
                body = response.json()
                choice = body["choices"][0]
                latency = int((time.monotonic() - start) * 1000)
                return GenerationResult(
                    text=choice["message"]["content"],
                    latency_ms=latency,
                    provider_id=self.provider_id,
                    truncated=choice.get("finish_reason") == "length",
                )
        assert last_error is not None
        raise last_error
