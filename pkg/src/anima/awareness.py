"""Self- and other-awareness assessments.

Each manager is one provider call per turn (two when ``split_perspectives``
is on, for ablation) producing a structured state. The managers are
deliberately independent: a self request never sees the other-state and vice
versa, so the two analyses cannot contaminate each other. Parse failures
degrade to the prior state rather than failing the turn.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

from .conversation import Message, Persona, Role
from .errors import ProviderError, SchemaViolation, ValidationError
from .memory import MemoryPiece, render_window
from .providers import GenerationRequest, ModuleTag, USER_INPUT_LABEL
from .states import OtherState, SelfState
from .structured import parse_structured

logger = logging.getLogger(__name__)

# Field split used when perspectives run as separate calls.
SELF_CONVERSATIONAL = ("satisfaction", "opinion", "interesting_topic", "plan")
SELF_SOCIAL = ("current_emotion", "next_emotion", "tone_style")
OTHER_CONVERSATIONAL = ("meta_topic", "user_satisfaction", "candidate_topics",
                        "task_oriented", "strategy")
OTHER_SOCIAL = ("user_emotion", "natural_response_emotion")


@dataclass
class AssessOutcome:
    state: SelfState | OtherState
    degraded: bool = False
    context_labels: tuple[str, ...] = ()


def _persona_block(persona: Persona) -> tuple[str, str]:
    parts = [persona.name]
    if persona.identity:
        parts.append(persona.identity)
    if persona.interests:
        parts.append("interests: " + ", ".join(persona.interests))
    return ("persona", "\n".join(parts))


def _last_user_text(window: list[Message]) -> str:
    for msg in reversed(window):
        if msg.role is Role.USER:
            return msg.text
    return ""


async def _call(provider, tag: ModuleTag, instructions: str,
                blocks: list[tuple[str, str]], schema_id: str,
                perspective: str | None = None):
    if perspective is not None:
        blocks = blocks + [("perspective", perspective)]
    req = GenerationRequest(
        module_tag=tag,
        system_instructions=instructions,
        context_blocks=tuple(blocks),
    )
    result = await provider.generate(req)
    return parse_structured(result.text, schema_id), req.block_labels()


async def assess_other(provider, templates, persona: Persona, window: list[Message],
                       prior: OtherState, turn_index: int,
                       split_perspectives: bool = False) -> AssessOutcome:
    """Analyze the dialog from the user's perspective.

    The window must end with the user's message for this turn. On any
    provider or schema failure the prior state is returned with its turn
    bumped, flagged as degraded.
    """
    if not window or window[-1].role is not Role.USER:
        raise ValidationError("other-awareness runs on a window ending with a user message")
    blocks = [
        _persona_block(persona),
        ("dialog_window", render_window(window)),
        ("other_state", _dict_text(prior.to_dict())),
        (USER_INPUT_LABEL, window[-1].text),
    ]
    instructions = templates.render(ModuleTag.OTHER_AWARENESS, persona=persona)
    try:
        if split_perspectives:
            conv, labels = await _call(provider, ModuleTag.OTHER_AWARENESS, instructions,
                                       blocks, "other_state.v1", "conversational")
            social, _ = await _call(provider, ModuleTag.OTHER_AWARENESS, instructions,
                                    blocks, "other_state.v1", "social")
            merged = _merge(conv.to_dict(), social.to_dict(), OTHER_SOCIAL)
            state = OtherState.from_dict(merged)
        else:
            state, labels = await _call(provider, ModuleTag.OTHER_AWARENESS, instructions,
                                        blocks, "other_state.v1")
    except (ProviderError, SchemaViolation, ValidationError) as exc:
        logger.debug("other-awareness degraded at turn %d: %s", turn_index, exc)
        return AssessOutcome(prior.at_turn(turn_index), degraded=True,
                             context_labels=tuple(label for label, _ in blocks))
    return AssessOutcome(state.at_turn(turn_index), context_labels=tuple(labels))


async def assess_self(provider, templates, persona: Persona, window: list[Message],
                      prior: SelfState, turn_index: int,
                      memory_hits: list[tuple[MemoryPiece, float]] | None = None,
                      split_perspectives: bool = False) -> AssessOutcome:
    """Analyze the agent's own stance. Same degrade contract as assess_other."""
    if not window:
        raise ValidationError("self-awareness needs a non-empty window")
    blocks = [
        _persona_block(persona),
        ("dialog_window", render_window(window)),
        ("self_state", _dict_text(prior.to_dict())),
    ]
    if memory_hits:
        blocks.append(("memory", "\n".join(p.statement for p, _ in memory_hits)))
    user_text = _last_user_text(window)
    if user_text:
        blocks.append((USER_INPUT_LABEL, user_text))
    instructions = templates.render(ModuleTag.SELF_AWARENESS, persona=persona)
    try:
        if split_perspectives:
            conv, labels = await _call(provider, ModuleTag.SELF_AWARENESS, instructions,
                                       blocks, "self_state.v1", "conversational")
            social, _ = await _call(provider, ModuleTag.SELF_AWARENESS, instructions,
                                    blocks, "self_state.v1", "social")
            merged = _merge(conv.to_dict(), social.to_dict(), SELF_SOCIAL)
            state = SelfState.from_dict(merged)
        else:
            state, labels = await _call(provider, ModuleTag.SELF_AWARENESS, instructions,
                                        blocks, "self_state.v1")
    except (ProviderError, SchemaViolation, ValidationError) as exc:
        logger.debug("self-awareness degraded at turn %d: %s", turn_index, exc)
        return AssessOutcome(prior.at_turn(turn_index), degraded=True,
                             context_labels=tuple(label for label, _ in blocks))
    return AssessOutcome(state.at_turn(turn_index), context_labels=tuple(labels))


async def rethink_self(provider, templates, persona: Persona, window: list[Message],
                       current: SelfState, turn_index: int,
                       memory_hits: list[tuple[MemoryPiece, float]] | None = None,
                       split_perspectives: bool = False) -> AssessOutcome:
    """Post-turn self re-assessment, run after all responses are out.

    The result becomes the session's SelfState and is what the next turn's
    quick responder sees, carrying the agent's mood across turns.
    """
    if not window or window[-1].role is not Role.AGENT:
        raise ValidationError("re-think runs on a window ending with an agent message")
    return await assess_self(provider, templates, persona, window, current, turn_index,
                             memory_hits=memory_hits, split_perspectives=split_perspectives)


def _merge(conversational: dict, social: dict, social_fields: tuple[str, ...]) -> dict:
    merged = dict(conversational)
    for name in social_fields:
        if name in social:
            merged[name] = social[name]
    return merged


def _dict_text(data: dict) -> str:
    return json.dumps(data, separators=(",", ":"))
