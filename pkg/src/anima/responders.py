"""Response generation: the reflexive reply and the analytical loop.

A turn opens with a quick, low-latency message produced from persona,
history and self-state alone, then the analytical generator runs in a loop.
Exit combines two components: a coverage check that all requirements are
addressed, and a stochastic draw; a hard cap guarantees termination. The
precedence is cap over uncovered requirements over randomness, so
requirements drive continuation before chance does.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from enum import Enum

from .conversation import Message, Persona, Role
from .errors import ProviderError, SchemaViolation, ValidationError
from .knowledge import KnowledgeBrief
from .memory import MemoryPiece, render_window
from .providers import GenerationRequest, ModuleTag, USER_INPUT_LABEL
from .states import OtherState, Plan, SelfState
from .structured import parse_structured

logger = logging.getLogger(__name__)

FALLBACK_ACKNOWLEDGEMENTS = (
    "Hmm, give me a moment with that one.",
    "Okay, let me think about that for a second.",
)


class RequirementSource(str, Enum):
    OTHER_AWARENESS_PLAN = "other_awareness_plan"
    TASK_STRATEGY_NEXT = "task_strategy_next"
    PROACTIVITY_SUGGESTION = "proactivity_suggestion"
    USER_QUESTION = "user_question"


@dataclass
class RequirementItem:
    id: str
    text: str
    source: RequirementSource
    covered: bool = False

    def to_dict(self) -> dict:
        return {"id": self.id, "text": self.text, "source": self.source.value,
                "covered": self.covered}


@dataclass
class RequirementSet:
    items: list[RequirementItem] = field(default_factory=list)

    def __post_init__(self):
        ids = [item.id for item in self.items]
        if len(set(ids)) != len(ids):
            raise ValidationError("requirement ids must be unique")

    def all_covered(self) -> bool:
        return all(item.covered for item in self.items)

    def to_dict(self) -> dict:
        return {"items": [item.to_dict() for item in self.items]}


@dataclass(frozen=True)
class RethinkVerdict:
    coverage: dict[str, bool]
    all_covered: bool
    missing_summary: str = ""

    def to_dict(self) -> dict:
        return {"coverage": dict(self.coverage), "all_covered": self.all_covered,
                "missing_summary": self.missing_summary}


@dataclass(frozen=True)
class LoopConfig:
    continuation_probability: float = 0.5
    max_analytical_messages: int = 3
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.continuation_probability <= 1.0:
            raise ValidationError("continuation_probability must be in [0,1]")
        if self.max_analytical_messages < 1:
            raise ValidationError("max_analytical_messages must be positive")


class LoopDecision(str, Enum):
    CONTINUE = "continue"
    CONCLUDE = "conclude"


def build_requirements(other: OtherState, self_state: SelfState,
                       user_msg: Message) -> RequirementSet:
    """Deterministically assemble what this turn's responses must address."""
    items: list[RequirementItem] = []
    if user_msg.text.rstrip().endswith("?"):
        items.append(RequirementItem(
            id="user_question",
            text=f"Answer the user's question: {user_msg.text.strip()}",
            source=RequirementSource.USER_QUESTION,
        ))
    if other.task_oriented and other.strategy is not None:
        items.append(RequirementItem(
            id="task_next",
            text=f"Advance the task: {other.strategy.next_action}",
            source=RequirementSource.TASK_STRATEGY_NEXT,
        ))
    if other.user_satisfaction <= 2:
        items.append(RequirementItem(
            id="reengage_user",
            text="The user seems dissatisfied; acknowledge it and re-engage them.",
            source=RequirementSource.OTHER_AWARENESS_PLAN,
        ))
    items.append(RequirementItem(
        id="proactivity",
        text=_proactivity_text(self_state.plan, other),
        source=RequirementSource.PROACTIVITY_SUGGESTION,
    ))
    return RequirementSet(items=items)


def _proactivity_text(plan: Plan, other: OtherState) -> str:
    if plan is Plan.SWITCH_TOPIC:
        target = other.candidate_topics[0] if other.candidate_topics else "a new topic"
        return f"Pivot to {target}."
    if plan is Plan.CONCLUDE:
        return "Wind down politely."
    return "Deepen the current topic."


@dataclass
class ResponseOutcome:
    text: str
    degraded: bool = False
    context_labels: tuple[str, ...] = ()


async def quick_respond(provider, templates, persona: Persona, window: list[Message],
                        self_state: SelfState) -> ResponseOutcome:
    """Reflexive reply from persona + history + self-state only.

    Never consults other-awareness, memory retrieval or knowledge: it must
    not wait on them. Provider failure falls back to a canned acknowledgement
    in the persona's voice, flagged degraded.
    """
    if not window or window[-1].role is not Role.USER:
        raise ValidationError("quick response runs on a window ending with a user message")
    req = GenerationRequest(
        module_tag=ModuleTag.QUICK_RESPONSE,
        system_instructions=templates.render(ModuleTag.QUICK_RESPONSE, persona=persona),
        context_blocks=(
            ("persona", persona.name),
            ("dialog_window", render_window(window)),
            ("self_state", _json(self_state.to_dict())),
            (USER_INPUT_LABEL, window[-1].text),
        ),
    )
    try:
        result = await provider.generate(req)
        return ResponseOutcome(result.text, context_labels=tuple(req.block_labels()))
    except ProviderError as exc:
        logger.debug("quick responder degraded: %s", exc)
        text = FALLBACK_ACKNOWLEDGEMENTS[0]
        if persona.language_style:
            text = f"{text[:-1]} — {persona.language_style.split('.')[0].lower()}."
        return ResponseOutcome(text, degraded=True, context_labels=tuple(req.block_labels()))


async def analytic_step(provider, templates, persona: Persona, window: list[Message],
                        other: OtherState, brief: KnowledgeBrief,
                        memory_hits: list[tuple[MemoryPiece, float]],
                        turn_messages: list[Message],
                        user_input: str) -> ResponseOutcome:
    """One in-depth message that builds on everything said so far this turn.

    ``turn_messages`` holds the turn's earlier output (the quick reply and
    prior analytical steps); it is empty only for the turn-opening analytical
    when the quick responder is disabled. Provider failures propagate; the
    loop driver concludes the turn with the messages already emitted.
    """
    blocks = [
        ("persona", persona.name),
        ("dialog_window", render_window(window)),
        ("turn_messages", "\n".join(m.text for m in turn_messages)),
        ("other_state", _json(other.to_dict())),
        ("knowledge_brief", _json(brief.to_dict())),
        ("memory", "\n".join(f"{p.statement} ({s:.2f})" for p, s in memory_hits)),
        (USER_INPUT_LABEL, user_input),
    ]
    req = GenerationRequest(
        module_tag=ModuleTag.ANALYTIC_RESPONSE,
        system_instructions=templates.render(ModuleTag.ANALYTIC_RESPONSE, persona=persona),
        context_blocks=tuple(blocks),
    )
    result = await provider.generate(req)
    return ResponseOutcome(result.text, context_labels=tuple(req.block_labels()))


async def assess_coverage(provider, templates, reqs: RequirementSet,
                          turn_messages: list[Message],
                          user_input: str = "") -> RethinkVerdict:
    """Ask whether the turn's messages address every requirement.

    An empty requirement set is vacuously covered at zero provider calls.
    Parse or provider failure is conservative: uncovered items stay uncovered.
    """
    if not reqs.items:
        return RethinkVerdict(coverage={}, all_covered=True)
    if not turn_messages:
        raise ValidationError("coverage check requires at least one turn message")
    req = GenerationRequest(
        module_tag=ModuleTag.RETHINK,
        system_instructions=templates.render(ModuleTag.RETHINK),
        context_blocks=(
            ("requirements", "\n".join(f"{i.id}: {i.text}" for i in reqs.items)),
            ("turn_messages", "\n".join(m.text for m in turn_messages)),
            (USER_INPUT_LABEL, user_input),
        ),
    )
    try:
        result = await provider.generate(req)
        parsed = parse_structured(result.text, "rethink_verdict.v1")
        raw_coverage = parsed["coverage"]
        missing_summary = parsed["missing_summary"]
    except (ProviderError, SchemaViolation) as exc:
        logger.debug("coverage check degraded: %s", exc)
        raw_coverage = {}
        missing_summary = ""
    coverage = {}
    for item in reqs.items:
        # Monotone: once covered, never unmarked.
        coverage[item.id] = item.covered or bool(raw_coverage.get(item.id, False))
        item.covered = coverage[item.id]
    all_covered = all(coverage.values())
    if not all_covered and not missing_summary:
        missing = [item.text for item in reqs.items if not coverage[item.id]]
        missing_summary = "Still unaddressed: " + "; ".join(missing)
    if all_covered:
        missing_summary = ""
    return RethinkVerdict(coverage=coverage, all_covered=all_covered,
                          missing_summary=missing_summary)


def should_continue(verdict: RethinkVerdict, emitted_analytical: int,
                    cfg: LoopConfig, rng_draw: float) -> LoopDecision:
    """Loop-exit rule: cap, then uncovered requirements, then the random draw."""
    if emitted_analytical >= cfg.max_analytical_messages:
        return LoopDecision.CONCLUDE
    if not verdict.all_covered:
        return LoopDecision.CONTINUE
    if rng_draw < cfg.continuation_probability:
        return LoopDecision.CONTINUE
    return LoopDecision.CONCLUDE


def simulate_analytical_counts(cfg: LoopConfig, turns: int,
                               rng: random.Random | None = None) -> list[int]:
    """Drive the exit rule alone for ``turns`` turns with covered requirements.

    Mirrors the orchestrator's loop gating exactly (a draw before each
    analytical step, including the first), so the returned counts follow the
    truncated-geometric law the exit rule implies.
    """
    rng = rng or random.Random(cfg.rng_seed)
    vacuous = RethinkVerdict(coverage={}, all_covered=True)
    counts = []
    for _ in range(turns):
        emitted = 0
        while should_continue(vacuous, emitted, cfg, rng.random()) is LoopDecision.CONTINUE:
            emitted += 1
        counts.append(emitted)
    return counts


def _json(data: dict) -> str:
    return json.dumps(data, separators=(",", ":"))
