"""anima: an anthropomorphic conversation engine.

A multi-module turn pipeline (awareness, memory, knowledge, quick and
analytical responders) over a pluggable text-generation provider, with a
streaming session service and evaluation tooling.
"""

from .config import EngineConfig
from .conversation import (DialogHistory, EmotionLabel, Message, MessageKind, Persona,
                           Role, Session, SessionStatus, load_persona)
from .orchestrator import Engine, TurnResult
from .providers import (GenerationRequest, GenerationResult, ModuleTag, RemoteConfig,
                        RemoteProvider, ScriptEntry, ScriptedProvider)
from .states import OtherState, Plan, SelfState, TaskStrategy
from .trace import EventKind, TraceEvent

__version__ = "0.1.0"

__all__ = [
    "DialogHistory",
    "EmotionLabel",
    "Engine",
    "EngineConfig",
    "EventKind",
    "GenerationRequest",
    "GenerationResult",
    "Message",
    "MessageKind",
    "ModuleTag",
    "OtherState",
    "Persona",
    "Plan",
    "RemoteConfig",
    "RemoteProvider",
    "Role",
    "ScriptEntry",
    "ScriptedProvider",
    "SelfState",
    "Session",
    "SessionStatus",
    "TaskStrategy",
    "TraceEvent",
    "TurnResult",
    "load_persona",
]
