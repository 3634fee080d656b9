import asyncio
import json
from datetime import datetime, timedelta, timezone

import pytest

from anima.clock import FixedClock
from anima.config import EngineConfig
from anima.conversation import Message, MessageKind, Persona, Role, Trait
from anima.orchestrator import Engine
from anima.providers import Matcher, ModuleTag, ScriptEntry, ScriptedProvider
from anima.states import default_other_state, default_self_state

EPOCH = datetime(2026, 1, 1, tzinfo=timezone.utc)


def run(coro):
    return asyncio.run(coro)


@pytest.fixture
def persona():
    return Persona(
        id="mira",
        name="Mira",
        identity="A retired astronomer who now hosts a small radio show.",
        thinking_mode="curious, methodical",
        language_style="warm, plain-spoken, a little wry",
        traits=(Trait("patient", "rarely rushes an answer"),),
        interests=("stargazing", "jazz"),
    )


def make_message(i=1, session_id="s1", turn=0, role=Role.USER,
                 kind=MessageKind.PLAIN, text="hello", at=None):
    return Message(
        id=f"m{i:06d}",
        session_id=session_id,
        turn_index=turn,
        role=role,
        kind=kind,
        text=text,
        created_at=at or (EPOCH + timedelta(milliseconds=i)),
    )


def self_state_json(plan="explore_further", tone="warm", emotion="joy", **over):
    data = {
        "satisfaction": 4,
        "opinion": "this is going well",
        "interesting_topic": "stargazing",
        "plan": plan,
        "current_emotion": {"value": emotion, "nuance": ""},
        "next_emotion": {"value": "interest", "nuance": ""},
        "tone_style": tone,
    }
    data.update(over)
    return json.dumps(data)


def other_state_json(task=False, strategy=None, satisfaction=4, topics=("jazz",), **over):
    data = {
        "meta_topic": "music",
        "user_satisfaction": satisfaction,
        "candidate_topics": list(topics),
        "task_oriented": task,
        "strategy": strategy,
        "user_emotion": {"value": "joy", "nuance": ""},
        "natural_response_emotion": {"value": "interest", "nuance": ""},
    }
    data.update(over)
    return json.dumps(data)


ALL_COVERED = json.dumps({
    "coverage": {"user_question": True, "task_next": True,
                 "reengage_user": True, "proactivity": True},
    "missing_summary": "",
})


def default_script_bank(latency_ms=0, rethink_response=ALL_COVERED):
    """One default entry per tag, producing valid structured output."""
    mk = lambda tag, response: ScriptEntry(  # noqa: E731
        module_tag=tag, matcher=Matcher.DEFAULT, response=response,
        latency_stub_ms=latency_ms)
    return [
        mk(ModuleTag.SELF_AWARENESS, self_state_json()),
        mk(ModuleTag.OTHER_AWARENESS, other_state_json()),
        mk(ModuleTag.MEMORY_EXTRACT, "[]"),
        mk(ModuleTag.QUERY_REWRITE, '["background on the topic"]'),
        mk(ModuleTag.KNOWLEDGE_SUMMARIZE, "A short brief of what was found."),
        mk(ModuleTag.QUICK_RESPONSE, "Oh, nice - tell me more!"),
        mk(ModuleTag.ANALYTIC_RESPONSE, "Thinking it through, here is the longer view."),
        mk(ModuleTag.RETHINK, rethink_response),
    ]


def make_engine(tmp_path, persona, entries=None, config=None, clock=None,
                sources=None, seed_memory=None):
    provider = ScriptedProvider(entries if entries is not None else default_script_bank())
    engine = Engine(
        provider=provider,
        personas={persona.id: persona},
        data_dir=tmp_path / "data",
        config=config or EngineConfig(),
        clock=clock or FixedClock(EPOCH),
        sources=sources,
        seed_memory=seed_memory,
    )
    return engine


@pytest.fixture
def default_self(persona):
    return default_self_state(persona)


@pytest.fixture
def default_other():
    return default_other_state()
