"""Core conversation data model.

Messages, turns, sessions and persona configuration shared by every other
module. All types here are immutable values; history mutation is owned by a
single session writer (the orchestrator), reads happen against snapshots.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum

from .clock import format_ts, parse_ts, truncate_ms
from .errors import DuplicateId, OrderViolation, ParseError, ValidationError


class Role(str, Enum):
    USER = "user"
    AGENT = "agent"


class MessageKind(str, Enum):
    QUICK = "quick"
    ANALYTICAL = "analytical"
    PLAIN = "plain"


class Emotion(str, Enum):
    """Fixed eight-label emotion taxonomy used everywhere states carry emotion."""

    JOY = "joy"
    INTEREST = "interest"
    NEUTRAL = "neutral"
    SURPRISE = "surprise"
    SADNESS = "sadness"
    ANGER = "anger"
    FEAR = "fear"
    DISGUST = "disgust"


MAX_NUANCE_LEN = 120


@dataclass(frozen=True)
class EmotionLabel:
    value: Emotion = Emotion.NEUTRAL
    nuance: str = ""

    def __post_init__(self):
        if len(self.nuance) > MAX_NUANCE_LEN:
            object.__setattr__(self, "nuance", self.nuance[:MAX_NUANCE_LEN])

    def to_dict(self) -> dict:
        return {"value": self.value.value, "nuance": self.nuance}

    @classmethod
    def from_dict(cls, data: dict | str) -> "EmotionLabel":
        # Case coercion here is the one enum-repair pass structured parsing gets.
        if isinstance(data, str):
            return cls(value=Emotion(data.strip().lower()))
        return cls(value=Emotion(str(data["value"]).strip().lower()),
                   nuance=str(data.get("nuance", "")))


@dataclass(frozen=True)
class Trait:
    name: str
    description: str = ""


@dataclass(frozen=True)
class Persona:
    """The personality-and-identity configuration that conditions every module."""

    id: str
    name: str
    identity: str = ""
    thinking_mode: str = ""
    language_style: str = ""
    traits: tuple[Trait, ...] = ()
    interests: tuple[str, ...] = ()
    humor_notes: str = ""
    default_emotion: EmotionLabel = field(default_factory=EmotionLabel)

    def __post_init__(self):
        if not self.id:
            raise ValidationError("persona id must be non-empty")
        if not self.name:
            raise ValidationError("persona name must be non-empty")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "name": self.name,
            "identity": self.identity,
            "thinking_mode": self.thinking_mode,
            "language_style": self.language_style,
            "traits": [{"name": t.name, "description": t.description} for t in self.traits],
            "interests": list(self.interests),
            "humor_notes": self.humor_notes,
            "default_emotion": self.default_emotion.to_dict(),
        }


def serialize_persona(persona: Persona) -> str:
    return json.dumps(persona.to_dict(), indent=2)


def load_persona(source: str) -> Persona:
    """Parse a persona document (UTF-8 JSON object).

    Applies defaults for absent optional keys (``default_emotion`` falls back
    to neutral). Raises ``ParseError`` with line diagnostics for malformed
    JSON and ``ValidationError`` for empty id/name.
    """
    try:
        data = json.loads(source)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid persona document: {exc.msg}", line=exc.lineno) from exc
    if not isinstance(data, dict):
        raise ParseError("persona document must be a JSON object")
    for key in ("id", "name"):
        if key not in data:
            raise ValidationError(f"persona document missing required field '{key}'")
    traits = []
    for i, raw in enumerate(data.get("traits", []) or []):
        if isinstance(raw, dict):
            if "name" not in raw:
                raise ParseError("trait entry missing 'name'", field=f"traits[{i}]")
            traits.append(Trait(name=str(raw["name"]), description=str(raw.get("description", ""))))
        elif isinstance(raw, (list, tuple)) and len(raw) == 2:
            traits.append(Trait(name=str(raw[0]), description=str(raw[1])))
        else:
            raise ParseError("trait entry must be an object or a [name, description] pair",
                             field=f"traits[{i}]")
    raw_emotion = data.get("default_emotion")
    if raw_emotion is None:
        emotion = EmotionLabel()
    else:
        try:
            emotion = EmotionLabel.from_dict(raw_emotion)
        except (ValueError, KeyError) as exc:
            raise ParseError(f"unknown default_emotion: {raw_emotion!r}",
                             field="default_emotion") from exc
    return Persona(
        id=str(data["id"]),
        name=str(data["name"]),
        identity=str(data.get("identity", "")),
        thinking_mode=str(data.get("thinking_mode", "")),
        language_style=str(data.get("language_style", "")),
        traits=tuple(traits),
        interests=tuple(str(x) for x in data.get("interests", []) or []),
        humor_notes=str(data.get("humor_notes", "")),
        default_emotion=emotion,
    )


@dataclass(frozen=True)
class Message:
    id: str
    session_id: str
    turn_index: int
    role: Role
    kind: MessageKind
    text: str
    created_at: datetime

    def __post_init__(self):
        if self.turn_index < 0:
            raise ValidationError("turn_index must be non-negative")
        if self.role is Role.USER and self.kind is not MessageKind.PLAIN:
            raise ValidationError("user messages must have kind 'plain'")
        if self.role is Role.AGENT and self.kind is MessageKind.PLAIN:
            raise ValidationError("agent messages must be 'quick' or 'analytical'")
        object.__setattr__(self, "created_at", truncate_ms(self.created_at))

    def order_key(self) -> tuple:
        # Total order within a session: turn, then timestamp, ties by id.
        return (self.turn_index, self.created_at, self.id)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "session_id": self.session_id,
            "turn_index": self.turn_index,
            "role": self.role.value,
            "kind": self.kind.value,
            "text": self.text,
            "created_at": format_ts(self.created_at),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Message":
        return cls(
            id=data["id"],
            session_id=data["session_id"],
            turn_index=int(data["turn_index"]),
            role=Role(data["role"]),
            kind=MessageKind(data["kind"]),
            text=data["text"],
            created_at=parse_ts(data["created_at"]),
        )


@dataclass(frozen=True)
class DialogHistory:
    """Ordered conversation record for one session."""

    session_id: str
    messages: tuple[Message, ...] = ()

    def __len__(self) -> int:
        return len(self.messages)


def append_message(history: DialogHistory, msg: Message) -> DialogHistory:
    """Return a new history with ``msg`` appended.

    Raises ``OrderViolation`` if the message would regress the turn index or
    sort before the current tail, ``DuplicateId`` if its id already exists.
    """
    if msg.session_id != history.session_id:
        raise ValidationError(
            f"message session {msg.session_id!r} does not match history {history.session_id!r}")
    if any(m.id == msg.id for m in history.messages):
        raise DuplicateId(f"message id {msg.id!r} already present")
    if history.messages:
        last = history.messages[-1]
        if msg.turn_index < last.turn_index:
            raise OrderViolation(
                f"turn_index {msg.turn_index} precedes current turn {last.turn_index}")
        if msg.order_key() < last.order_key():
            raise OrderViolation(f"message {msg.id!r} sorts before the history tail")
    return DialogHistory(history.session_id, history.messages + (msg,))


def window(history: DialogHistory, n: int) -> list[Message]:
    """Last ``min(n, len)`` messages, order preserved."""
    if n < 1:
        raise ValidationError("window size must be >= 1")
    return list(history.messages[-n:])


class SessionStatus(str, Enum):
    ACTIVE = "active"
    CONCLUDED = "concluded"


@dataclass
class Session:
    id: str
    persona_id: str
    created_at: datetime
    status: SessionStatus = SessionStatus.ACTIVE
    # Current awareness states live on the session; the orchestrator swaps
    # them atomically at turn boundaries. Stored as plain dicts here to keep
    # this module free of an awareness dependency.
    self_state: dict | None = None
    other_state: dict | None = None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "persona_id": self.persona_id,
            "created_at": format_ts(self.created_at),
            "status": self.status.value,
            "self_state": self.self_state,
            "other_state": self.other_state,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Session":
        return cls(
            id=data["id"],
            persona_id=data["persona_id"],
            created_at=parse_ts(data["created_at"]),
            status=SessionStatus(data["status"]),
            self_state=data.get("self_state"),
            other_state=data.get("other_state"),
        )


def messages_to_jsonl(messages: list[Message] | tuple[Message, ...]) -> str:
    """One compact JSON object per line, the persisted transcript format."""
    return "".join(json.dumps(m.to_dict(), separators=(",", ":")) + "\n" for m in messages)


def messages_from_jsonl(text: str) -> list[Message]:
    out = []
    for i, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            out.append(Message.from_dict(json.loads(line)))
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise ParseError(f"bad transcript line: {exc}", line=i) from exc
    return out


def check_turn_grammar(messages: list[Message], quick_enabled: bool = True,
                       allow_inflight_tail: bool = False) -> None:
    """Validate the role/kind shape of every completed turn.

    Each turn must be one user message followed by either a quick message and
    any number of analytical ones, or (when the quick responder is disabled)
    at least one analytical message. Raises ``ValidationError`` on the first
    offending turn.
    """
    turns: dict[int, list[Message]] = {}
    for m in messages:
        turns.setdefault(m.turn_index, []).append(m)
    if not turns:
        return
    last_turn = max(turns)
    for turn_index in sorted(turns):
        group = turns[turn_index]
        in_flight = allow_inflight_tail and turn_index == last_turn
        if group[0].role is not Role.USER:
            raise ValidationError(f"turn {turn_index} does not start with a user message")
        if any(m.role is Role.USER for m in group[1:]):
            raise ValidationError(f"turn {turn_index} contains more than one user message")
        agent = group[1:]
        if not agent:
            if in_flight:
                continue
            raise ValidationError(f"turn {turn_index} has no agent messages")
        kinds = [m.kind for m in agent]
        if quick_enabled:
            ok = kinds[0] is MessageKind.QUICK and all(
                k is MessageKind.ANALYTICAL for k in kinds[1:])
        else:
            ok = all(k is MessageKind.ANALYTICAL for k in kinds)
        if not ok:
            raise ValidationError(
                f"turn {turn_index} violates the turn grammar: {[k.value for k in kinds]}")


def render_transcript_text(messages: list[Message], persona_name: str = "Agent") -> str:
    """Human-readable transcript rendering for the text export format."""
    lines = []
    for m in messages:
        if m.role is Role.USER:
            lines.append(f"[turn {m.turn_index}] User: {m.text}")
        else:
            lines.append(f"[turn {m.turn_index}] {persona_name} ({m.kind.value}): {m.text}")
    return "\n".join(lines) + ("\n" if lines else "")
