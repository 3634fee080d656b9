"""Typed trace events and the per-turn grammar they must satisfy.

Every internal step of a turn is reified as a TraceEvent, streamed to
clients and persisted to ``traces/<session_id>.jsonl``. The persisted file
is the substrate for later human labeling, so the event stream has a strict
shape: the grammar below is checked in tests over every persisted trace.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum

from .errors import ValidationError


class EventKind(str, Enum):
    TURN_STARTED = "turn_started"
    MEMORY_RETRIEVED = "memory_retrieved"
    KNOWLEDGE_BRIEF = "knowledge_brief"
    OTHER_STATE = "other_state"
    QUICK_EMITTED = "quick_emitted"
    ANALYTICAL_EMITTED = "analytical_emitted"
    RETHINK_VERDICT = "rethink_verdict"
    LOOP_DECISION = "loop_decision"
    TURN_CONCLUDED = "turn_concluded"
    SELF_STATE_UPDATED = "self_state_updated"
    MEMORY_EXTRACTED = "memory_extracted"
    DEGRADED = "degraded"


@dataclass(frozen=True)
class TraceEvent:
    seq: int
    turn_index: int
    kind: EventKind
    payload: dict
    wall_ms: int

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "turn_index": self.turn_index,
            "kind": self.kind.value,
            "payload": self.payload,
            "wall_ms": self.wall_ms,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TraceEvent":
        return cls(
            seq=int(data["seq"]),
            turn_index=int(data["turn_index"]),
            kind=EventKind(data["kind"]),
            payload=data.get("payload", {}),
            wall_ms=int(data["wall_ms"]),
        )


def events_to_jsonl(events: list[TraceEvent]) -> str:
    return "".join(json.dumps(e.to_dict(), separators=(",", ":")) + "\n" for e in events)


def events_from_jsonl(text: str) -> list[TraceEvent]:
    return [TraceEvent.from_dict(json.loads(line))
            for line in text.splitlines() if line.strip()]


# Single-character alphabet for the regex form of the grammar.
_KIND_CHARS = {
    EventKind.TURN_STARTED: "T",
    EventKind.QUICK_EMITTED: "q",
    EventKind.OTHER_STATE: "o",
    EventKind.MEMORY_RETRIEVED: "m",
    EventKind.KNOWLEDGE_BRIEF: "k",
    EventKind.ANALYTICAL_EMITTED: "A",
    EventKind.RETHINK_VERDICT: "R",
    EventKind.LOOP_DECISION: "L",
    EventKind.TURN_CONCLUDED: "C",
    EventKind.SELF_STATE_UPDATED: "S",
    EventKind.MEMORY_EXTRACTED: "E",
}

# Loop blocks, conclusion and post-turn phase; the dispatch phase is checked
# as a permutation separately since regexes express interleavings poorly.
_TAIL_RE = re.compile(r"^(AR?L)*CSE$")

SESSION_EPILOGUE_REASON = "session_concluded"


def check_turn_events(events: list[TraceEvent]) -> None:
    """Validate one completed turn's event kinds against the turn grammar.

    Shape: ``turn_started``, then the parallel-dispatch results
    (``other_state``, ``memory_retrieved``, ``knowledge_brief`` and optionally
    ``quick_emitted``) in any interleaving, then zero or more
    ``analytical_emitted [rethink_verdict] loop_decision`` blocks, then
    ``turn_concluded``, ``self_state_updated``, ``memory_extracted``.

    ``degraded`` events are annotations and may appear anywhere; they are
    filtered before matching. Raises ``ValidationError`` with the offending
    position on mismatch.
    """
    kinds = [e.kind for e in events if e.kind is not EventKind.DEGRADED]
    if not kinds:
        raise ValidationError("empty turn")
    text = "".join(_KIND_CHARS[k] for k in kinds)
    if text[0] != "T":
        raise ValidationError(f"turn does not open with turn_started: {text}")
    dispatch_end = 1
    while dispatch_end < len(text) and text[dispatch_end] in "qomk":
        dispatch_end += 1
    dispatch = sorted(text[1:dispatch_end])
    if dispatch not in (sorted("omk"), sorted("qomk")):
        raise ValidationError(
            f"dispatch phase is not a permutation of (quick?) other/memory/knowledge: {text}")
    if not _TAIL_RE.match(text[dispatch_end:]):
        raise ValidationError(f"loop/conclusion phase malformed: {text}")


def check_session_trace(events: list[TraceEvent], allow_inflight_tail: bool = False) -> int:
    """Validate a whole session's persisted trace; returns the turn count.

    Checks the global invariants (gap-free seq, wall offsets non-decreasing
    within a turn) and the per-turn grammar for every completed turn. A
    trailing single ``memory_extracted`` carrying the session-close
    consolidation is accepted as the session epilogue.
    """
    for i, event in enumerate(events):
        if event.seq != i:
            raise ValidationError(f"seq gap at index {i}: expected {i}, got {event.seq}")

    # The session-close consolidation rides as one final memory_extracted
    # event outside any turn; peel it off before segmenting into turns.
    body = list(events)
    if (body and body[-1].kind is EventKind.MEMORY_EXTRACTED
            and body[-1].payload.get("reason") == SESSION_EPILOGUE_REASON):
        body = body[:-1]

    groups: list[list[TraceEvent]] = []
    for event in body:
        if event.kind is EventKind.TURN_STARTED or not groups:
            groups.append([])
        groups[-1].append(event)

    turns = 0
    for gi, group in enumerate(groups):
        is_last = gi == len(groups) - 1
        wall = [e.wall_ms for e in group]
        if any(b < a for a, b in zip(wall, wall[1:])):
            raise ValidationError(f"wall_ms regressed within turn group {gi}")
        if group[0].kind is not EventKind.TURN_STARTED:
            raise ValidationError(f"trace group {gi} does not start a turn")
        if is_last and allow_inflight_tail:
            try:
                check_turn_events(group)
            except ValidationError:
                continue
            turns += 1
            continue
        check_turn_events(group)
        turns += 1
    return turns
