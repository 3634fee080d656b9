"""Internal memory: extraction, storage, relevance retrieval, consolidation.

Pieces are normalized declarative statements extracted from the dialog (or
seeded for the agent's own character). Relevance is lexical Jaccard by
default; an embedding scorer can be plugged in behind the same ``score``
contract. The store supports concurrent reads with a single writer per
session; extraction and consolidation run outside the user-visible response
path.
"""

from __future__ import annotations

import asyncio
import json
import logging
import re
from dataclasses import dataclass, replace
from datetime import datetime
from pathlib import Path
from typing import Callable, Iterable

from .clock import SystemClock, format_ts, parse_ts
from .conversation import Message, Persona
from .errors import DuplicateId, ValidationError
from .providers import GenerationRequest, ModuleTag, USER_INPUT_LABEL
from .states import PieceDraft
from .structured import parse_structured

logger = logging.getLogger(__name__)

_WORD_RE = re.compile(r"\w+")

OWNERS = ("user", "agent")
CATEGORIES = ("event", "relationship", "preference", "fact", "other")
CONFIGURED = "configured"  # source_turn marker for seeded agent memory


def tokenize(text: str) -> set[str]:
    return set(_WORD_RE.findall(text.lower()))


def jaccard(a: set[str], b: set[str]) -> float:
    if not a or not b:
        return 0.0
    union = len(a | b)
    return len(a & b) / union if union else 0.0


@dataclass(frozen=True)
class MemoryPiece:
    id: str
    owner: str
    category: str
    statement: str
    source_turn: int | str
    created_at: datetime
    superseded_by: str | None = None

    def __post_init__(self):
        if not self.statement:
            raise ValidationError("memory statement must be non-empty")
        if self.owner not in OWNERS:
            raise ValidationError(f"owner must be one of {OWNERS}")
        if self.category not in CATEGORIES:
            raise ValidationError(f"category must be one of {CATEGORIES}")
        if isinstance(self.source_turn, str) and self.source_turn != CONFIGURED:
            raise ValidationError("source_turn must be an integer or 'configured'")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "owner": self.owner,
            "category": self.category,
            "statement": self.statement,
            "source_turn": self.source_turn,
            "created_at": format_ts(self.created_at),
            "superseded_by": self.superseded_by,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MemoryPiece":
        return cls(
            id=data["id"],
            owner=data["owner"],
            category=data["category"],
            statement=data["statement"],
            source_turn=data["source_turn"],
            created_at=parse_ts(data["created_at"]),
            superseded_by=data.get("superseded_by"),
        )


def normalize_statement(statement: str) -> str:
    """Normalization used for duplicate detection: case, whitespace, end punctuation."""
    text = " ".join(statement.lower().split())
    return text.rstrip(".!?? ")


def score(query: str, piece: MemoryPiece) -> float:
    """Jaccard similarity of lower-cased token sets, in [0, 1]."""
    return jaccard(tokenize(query), tokenize(piece.statement))


@dataclass
class ConsolidationReport:
    merged: int = 0
    conflicts_resolved: int = 0

    def to_dict(self) -> dict:
        return {"merged": self.merged, "conflicts_resolved": self.conflicts_resolved}


class MemoryStore:
    """In-memory piece store with JSONL persistence.

    ``path`` points at the session's ``memory/<session_id>.jsonl`` file; every
    mutation rewrites it so the file always reflects current state.
    ``lookup_delay_ms`` simulates backend latency for the async retrieval
    path; the parallelism benchmarks use it to stand in for a slow store.
    """

    def __init__(self, path: Path | None = None, clock=None,
                 scorer: Callable[[str, MemoryPiece], float] = score,
                 lookup_delay_ms: int = 0):
        self.path = path
        self.clock = clock or SystemClock()
        self.scorer = scorer
        self.lookup_delay_ms = lookup_delay_ms
        self._pieces: dict[str, MemoryPiece] = {}
        self._counter = 0
        if path is not None and path.exists():
            for line in path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    piece = MemoryPiece.from_dict(json.loads(line))
                    self._pieces[piece.id] = piece
            # Resume the id counter past every id ever issued; consolidation
            # may have deleted pieces, so the count alone is not safe.
            for piece_id in self._pieces:
                match = re.search(r"(\d+)$", piece_id)
                if match:
                    self._counter = max(self._counter, int(match.group(1)))

    def __len__(self) -> int:
        return len(self._pieces)

    @property
    def id_counter(self) -> int:
        return self._counter

    def ensure_counter(self, floor: int) -> None:
        """Never reissue an id below ``floor`` (persisted counter on restore)."""
        self._counter = max(self._counter, floor)

    def next_id(self) -> str:
        self._counter += 1
        return f"p{self._counter:06d}"

    def store(self, piece: MemoryPiece) -> str:
        if piece.id in self._pieces:
            raise DuplicateId(f"memory piece {piece.id!r} already stored")
        if piece.superseded_by is not None and piece.superseded_by not in self._pieces:
            raise ValidationError(f"superseded_by {piece.superseded_by!r} does not exist")
        self._pieces[piece.id] = piece
        self._persist()
        return piece.id

    def get(self, piece_id: str) -> MemoryPiece | None:
        return self._pieces.get(piece_id)

    def all_pieces(self) -> list[MemoryPiece]:
        return list(self._pieces.values())

    def live_pieces(self) -> list[MemoryPiece]:
        return [p for p in self._pieces.values() if p.superseded_by is None]

    def retrieve(self, query: str, k: int) -> list[tuple[MemoryPiece, float]]:
        """Top-k live pieces by score desc, ties newest-first then by id.

        Zero-score pieces never appear in results.
        """
        if k < 1:
            raise ValidationError("k must be >= 1")
        scored = []
        for piece in self._pieces.values():
            if piece.superseded_by is not None:
                continue
            s = self.scorer(query, piece)
            if s > 0.0:
                scored.append((piece, s))
        scored.sort(key=lambda item: (-item[1], _newest_key(item[0])))
        return scored[:k]

    async def aretrieve(self, query: str, k: int) -> list[tuple[MemoryPiece, float]]:
        if self.lookup_delay_ms:
            await asyncio.sleep(self.lookup_delay_ms / 1000.0)
        return self.retrieve(query, k)

    def seed_agent_memory(self, statements: Iterable[tuple[str, str]]) -> list[MemoryPiece]:
        """Load configured agent-character facts as (category, statement) pairs."""
        seeded = []
        for category, statement in statements:
            piece = MemoryPiece(
                id=self.next_id(),
                owner="agent",
                category=category,
                statement=statement,
                source_turn=CONFIGURED,
                created_at=self.clock.now(),
            )
            self.store(piece)
            seeded.append(piece)
        return seeded

    def consolidate(self) -> ConsolidationReport:
        """Merge duplicates and resolve conflicts among live pieces. Idempotent.

        Duplicates share (owner, category, normalized statement); the oldest
        id survives. A conflict is two live preference/fact pieces of the same
        owner and category whose statements differ only in the final token
        ("X is Y" with the same X, different Y); the older one is marked
        superseded by the newer.
        """
        report = ConsolidationReport()
        by_key: dict[tuple, list[MemoryPiece]] = {}
        for piece in self.live_pieces():
            key = (piece.owner, piece.category, normalize_statement(piece.statement))
            by_key.setdefault(key, []).append(piece)
        for group in by_key.values():
            if len(group) < 2:
                continue
            group.sort(key=_oldest_key)
            survivor = group[0]
            for duplicate in group[1:]:
                del self._pieces[duplicate.id]
                report.merged += 1
                # Supersession pointers into the merged piece move to the
                # survivor so the graph never dangles.
                for other in list(self._pieces.values()):
                    if other.superseded_by == duplicate.id:
                        self._pieces[other.id] = replace(
                            other, superseded_by=survivor.id)

        conflict_groups: dict[tuple, list[MemoryPiece]] = {}
        for piece in self.live_pieces():
            if piece.category not in ("preference", "fact"):
                continue
            tokens = normalize_statement(piece.statement).split()
            if len(tokens) < 2:
                continue
            key = (piece.owner, piece.category, tuple(tokens[:-1]))
            conflict_groups.setdefault(key, []).append(piece)
        for group in conflict_groups.values():
            if len(group) < 2:
                continue
            group.sort(key=_oldest_key)
            newest = group[-1]
            for older in group[:-1]:
                self._pieces[older.id] = replace(older, superseded_by=newest.id)
                report.conflicts_resolved += 1

        if report.merged or report.conflicts_resolved:
            self._persist()
        return report

    def _persist(self) -> None:
        if self.path is None:
            return
        self.path.parent.mkdir(parents=True, exist_ok=True)
        lines = "".join(
            json.dumps(p.to_dict(), separators=(",", ":")) + "\n"
            for p in self._pieces.values())
        self.path.write_text(lines, encoding="utf-8")


def _newest_key(piece: MemoryPiece) -> tuple:
    # Sort helper: newer created_at first, then id ascending.
    return (-piece.created_at.timestamp(), piece.id)


def _oldest_key(piece: MemoryPiece) -> tuple:
    return (piece.created_at, piece.id)


async def extract_pieces(provider, window: list[Message], persona: Persona,
                         templates, user_input: str = "") -> list[PieceDraft]:
    """One provider call turning the recent dialog into piece drafts.

    Returns drafts only; the orchestrator assigns ids and stores them. May be
    empty. Provider and schema errors propagate to the caller, which treats
    extraction as a degradable post-turn step.
    """
    if not window:
        raise ValidationError("extraction window must be non-empty")
    blocks = [
        ("persona", persona.name),
        ("dialog_window", render_window(window)),
    ]
    if user_input:
        blocks.append((USER_INPUT_LABEL, user_input))
    req = GenerationRequest(
        module_tag=ModuleTag.MEMORY_EXTRACT,
        system_instructions=templates.render(ModuleTag.MEMORY_EXTRACT, persona=persona),
        context_blocks=tuple(blocks),
    )
    result = await provider.generate(req)
    return parse_structured(result.text, "memory_pieces.v1")


def render_window(window: list[Message]) -> str:
    return "\n".join(f"{m.role.value}: {m.text}" for m in window)
