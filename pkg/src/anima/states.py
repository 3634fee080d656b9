"""Structured awareness state types.

These are the typed payloads the awareness managers produce and the schema
registry validates. Kept separate from the awareness operations so the
parsing layer can build them without import cycles.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .conversation import EmotionLabel, Persona
from .errors import ValidationError

MAX_STRATEGY_STEPS = 8
MAX_CANDIDATE_TOPICS = 3


class Plan(str, Enum):
    EXPLORE_FURTHER = "explore_further"
    SWITCH_TOPIC = "switch_topic"
    CONCLUDE = "conclude"


def _check_satisfaction(value: int, name: str) -> None:
    if not 1 <= value <= 5:
        raise ValidationError(f"{name} must be within 1..5, got {value}")


@dataclass(frozen=True)
class TaskStrategy:
    """Step-by-step plan for a task-oriented conversation."""

    goal: str
    steps: tuple[str, ...]
    current_step_index: int
    next_action: str

    def __post_init__(self):
        if not 1 <= len(self.steps) <= MAX_STRATEGY_STEPS:
            raise ValidationError(f"strategy must have 1..{MAX_STRATEGY_STEPS} steps")
        if not 0 <= self.current_step_index < len(self.steps):
            raise ValidationError("current_step_index out of bounds")
        if not self.next_action:
            raise ValidationError("next_action must be non-empty")

    def to_dict(self) -> dict:
        return {
            "goal": self.goal,
            "steps": list(self.steps),
            "current_step_index": self.current_step_index,
            "next_action": self.next_action,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TaskStrategy":
        return cls(
            goal=str(data.get("goal", "")),
            steps=tuple(str(s) for s in data.get("steps", [])),
            current_step_index=int(data.get("current_step_index", 0)),
            next_action=str(data.get("next_action", "")),
        )


@dataclass(frozen=True)
class SelfState:
    """The agent's own awareness: opinions, plan and emotional posture."""

    satisfaction: int
    opinion: str
    interesting_topic: str
    plan: Plan
    current_emotion: EmotionLabel
    next_emotion: EmotionLabel
    tone_style: str
    updated_at_turn: int

    def __post_init__(self):
        _check_satisfaction(self.satisfaction, "satisfaction")
        if self.plan is Plan.CONCLUDE and not self.tone_style:
            raise ValidationError("plan=conclude requires a closing tone_style")

    def to_dict(self) -> dict:
        return {
            "satisfaction": self.satisfaction,
            "opinion": self.opinion,
            "interesting_topic": self.interesting_topic,
            "plan": self.plan.value,
            "current_emotion": self.current_emotion.to_dict(),
            "next_emotion": self.next_emotion.to_dict(),
            "tone_style": self.tone_style,
            "updated_at_turn": self.updated_at_turn,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SelfState":
        return cls(
            satisfaction=int(data["satisfaction"]),
            opinion=str(data.get("opinion", "")),
            interesting_topic=str(data.get("interesting_topic", "")),
            plan=Plan(str(data["plan"]).lower()),
            current_emotion=EmotionLabel.from_dict(data["current_emotion"]),
            next_emotion=EmotionLabel.from_dict(data["next_emotion"]),
            tone_style=str(data.get("tone_style", "")),
            updated_at_turn=int(data.get("updated_at_turn", 0)),
        )

    def at_turn(self, turn_index: int) -> "SelfState":
        return SelfState(**{**self.__dict__, "updated_at_turn": turn_index})


@dataclass(frozen=True)
class OtherState:
    """The agent's model of the user: topic, satisfaction, task and emotion."""

    meta_topic: str
    user_satisfaction: int
    candidate_topics: tuple[str, ...]
    task_oriented: bool
    strategy: TaskStrategy | None
    user_emotion: EmotionLabel
    natural_response_emotion: EmotionLabel
    updated_at_turn: int

    def __post_init__(self):
        _check_satisfaction(self.user_satisfaction, "user_satisfaction")
        if len(self.candidate_topics) > MAX_CANDIDATE_TOPICS:
            object.__setattr__(self, "candidate_topics",
                               self.candidate_topics[:MAX_CANDIDATE_TOPICS])
        if self.task_oriented and self.strategy is None:
            raise ValidationError("task_oriented state requires a strategy")
        if not self.task_oriented and self.strategy is not None:
            raise ValidationError("strategy present but state is not task_oriented")

    def to_dict(self) -> dict:
        return {
            "meta_topic": self.meta_topic,
            "user_satisfaction": self.user_satisfaction,
            "candidate_topics": list(self.candidate_topics),
            "task_oriented": self.task_oriented,
            "strategy": self.strategy.to_dict() if self.strategy else None,
            "user_emotion": self.user_emotion.to_dict(),
            "natural_response_emotion": self.natural_response_emotion.to_dict(),
            "updated_at_turn": self.updated_at_turn,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "OtherState":
        raw_strategy = data.get("strategy")
        return cls(
            meta_topic=str(data.get("meta_topic", "")),
            user_satisfaction=int(data["user_satisfaction"]),
            candidate_topics=tuple(str(t) for t in data.get("candidate_topics", [])),
            task_oriented=bool(data["task_oriented"]),
            strategy=TaskStrategy.from_dict(raw_strategy) if raw_strategy else None,
            user_emotion=EmotionLabel.from_dict(data["user_emotion"]),
            natural_response_emotion=EmotionLabel.from_dict(data["natural_response_emotion"]),
            updated_at_turn=int(data.get("updated_at_turn", 0)),
        )

    def at_turn(self, turn_index: int) -> "OtherState":
        return OtherState(**{**self.__dict__, "updated_at_turn": turn_index})


@dataclass(frozen=True)
class PieceDraft:
    """A memory piece as extracted, before the store assigns identity."""

    owner: str
    category: str
    statement: str

    def to_dict(self) -> dict:
        return {"owner": self.owner, "category": self.category, "statement": self.statement}


def default_self_state(persona: Persona, turn_index: int = 0) -> SelfState:
    """Session-start self state: neutral posture, middling satisfaction."""
    topic = persona.interests[0] if persona.interests else ""
    return SelfState(
        satisfaction=3,
        opinion="",
        interesting_topic=topic,
        plan=Plan.EXPLORE_FURTHER,
        current_emotion=persona.default_emotion,
        next_emotion=persona.default_emotion,
        tone_style=persona.language_style,
        updated_at_turn=turn_index,
    )


def default_other_state(turn_index: int = 0) -> OtherState:
    return OtherState(
        meta_topic="unknown",
        user_satisfaction=3,
        candidate_topics=(),
        task_oriented=False,
        strategy=None,
        user_emotion=EmotionLabel(),
        natural_response_emotion=EmotionLabel(),
        updated_at_turn=turn_index,
    )
