"""External knowledge pipeline: query rewrite, multi-source retrieval, summarization.

Sources are pluggable; the built-in offline source searches a directory of
plain-text documents with the same lexical score memory uses. Online sources
are disabled by default and plug in behind the same ``search`` contract.
Failures never fail a turn: each stage degrades and the degradation is
reported so the orchestrator can trace it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

from .conversation import Message
from .errors import AnimaError, SchemaViolation
from .memory import jaccard, render_window, tokenize
from .providers import GenerationRequest, ModuleTag, USER_INPUT_LABEL
from .structured import parse_structured

logger = logging.getLogger(__name__)

MAX_QUERIES = 3
SNIPPET_CHARS = 500
DEGRADED_SUMMARY_CHARS = 512


@dataclass(frozen=True)
class Snippet:
    source_id: str
    text: str
    score: float

    def to_dict(self) -> dict:
        return {"source_id": self.source_id, "text": self.text, "score": self.score}


@dataclass(frozen=True)
class KnowledgeBrief:
    queries_used: tuple[str, ...] = ()
    snippets: tuple[Snippet, ...] = ()
    summary: str = ""

    def __post_init__(self):
        if bool(self.summary) != bool(self.snippets):
            raise AnimaError("summary must be empty iff snippets are empty")

    def to_dict(self) -> dict:
        return {
            "queries_used": list(self.queries_used),
            "snippets": [s.to_dict() for s in self.snippets],
            "summary": self.summary,
        }


class KnowledgeSource(Protocol):
    source_id: str

    def search(self, query: str) -> list[Snippet]: ...


class OfflineDirectorySource:
    """Plain-text files in a directory, ranked by lexical overlap with the query."""

    def __init__(self, directory: Path, source_id: str = "offline"):
        self.source_id = source_id
        self._docs: list[tuple[str, str, set[str]]] = []
        for doc_path in sorted(directory.glob("*.txt")):
            text = doc_path.read_text(encoding="utf-8")
            self._docs.append((doc_path.stem, text, tokenize(text)))

    def search(self, query: str) -> list[Snippet]:
        query_tokens = tokenize(query)
        hits = []
        for name, text, doc_tokens in self._docs:
            s = jaccard(query_tokens, doc_tokens)
            if s > 0.0:
                hits.append(Snippet(
                    source_id=f"{self.source_id}:{name}",
                    text=text[:SNIPPET_CHARS],
                    score=s,
                ))
        hits.sort(key=lambda sn: (-sn.score, sn.source_id))
        return hits


@dataclass
class RewriteOutcome:
    queries: list[str]
    degraded: bool = False


async def rewrite_query(provider, templates, user_input: str,
                        window: list[Message]) -> RewriteOutcome:
    """Reformulate the user input into 1..3 retrieval queries.

    Never raises: any provider or parse failure falls back to the raw input.
    """
    if not user_input:
        raise AnimaError("user_input must be non-empty")
    req = GenerationRequest(
        module_tag=ModuleTag.QUERY_REWRITE,
        system_instructions=templates.render(ModuleTag.QUERY_REWRITE),
        context_blocks=(
            ("dialog_window", render_window(window)),
            (USER_INPUT_LABEL, user_input),
        ),
    )
    try:
        result = await provider.generate(req)
        queries = parse_structured(result.text, "query_list.v1")
    except (AnimaError, SchemaViolation) as exc:
        logger.debug("query rewrite degraded: %s", exc)
        return RewriteOutcome(queries=[user_input], degraded=True)
    return RewriteOutcome(queries=queries[:MAX_QUERIES])


def fetch_knowledge(queries: list[str], sources: list[KnowledgeSource]) -> list[Snippet]:
    """Union of per-source lookups; a failing source is skipped, never fatal."""
    best: dict[str, Snippet] = {}
    for source in sources:
        for query in queries:
            try:
                hits = source.search(query)
            except Exception:
                logger.warning("knowledge source %s failed for %r",
                               getattr(source, "source_id", source), query, exc_info=True)
                break
            for snippet in hits:
                current = best.get(snippet.source_id)
                if current is None or snippet.score > current.score:
                    best[snippet.source_id] = snippet
    merged = sorted(best.values(), key=lambda sn: (-sn.score, sn.source_id))
    return merged


@dataclass
class SummarizeOutcome:
    brief: KnowledgeBrief
    degraded: bool = False


async def summarize_knowledge(provider, templates, queries: list[str],
                              snippets: list[Snippet]) -> SummarizeOutcome:
    """Produce the KnowledgeBrief; empty snippets cost zero provider calls."""
    if not snippets:
        return SummarizeOutcome(KnowledgeBrief(queries_used=tuple(queries)))
    req = GenerationRequest(
        module_tag=ModuleTag.KNOWLEDGE_SUMMARIZE,
        system_instructions=templates.render(ModuleTag.KNOWLEDGE_SUMMARIZE),
        context_blocks=(
            ("snippets", "\n---\n".join(f"[{s.source_id}] {s.text}" for s in snippets)),
            (USER_INPUT_LABEL, " ".join(queries)),
        ),
    )
    try:
        result = await provider.generate(req)
        summary = result.text.strip()
    except AnimaError as exc:
        logger.debug("summarization degraded: %s", exc)
        fallback = " ".join(s.text for s in snippets[:2])[:DEGRADED_SUMMARY_CHARS]
        return SummarizeOutcome(
            KnowledgeBrief(tuple(queries), tuple(snippets), fallback), degraded=True)
    if not summary:
        summary = " ".join(s.text for s in snippets[:2])[:DEGRADED_SUMMARY_CHARS]
    return SummarizeOutcome(KnowledgeBrief(tuple(queries), tuple(snippets), summary))


@dataclass
class PipelineOutcome:
    brief: KnowledgeBrief
    degradations: list[str] = field(default_factory=list)


async def run_pipeline(provider, templates, user_input: str, window: list[Message],
                       sources: list[KnowledgeSource]) -> PipelineOutcome:
    """rewrite -> fetch -> summarize, collecting degradation notes."""
    degradations = []
    rewrite = await rewrite_query(provider, templates, user_input, window)
    if rewrite.degraded:
        degradations.append("query_rewrite_fallback")
    snippets = fetch_knowledge(rewrite.queries, sources) if sources else []
    summarized = await summarize_knowledge(provider, templates, rewrite.queries, snippets)
    if summarized.degraded:
        degradations.append("summary_fallback")
    return PipelineOutcome(brief=summarized.brief, degradations=degradations)
