"""Turn orchestration.

One turn runs in three phases:

  A (parallel dispatch): other-awareness, memory retrieval, the knowledge
    pipeline and the quick responder all start together; the quick message
    streams out the moment it is ready without waiting for the rest.
  B (sequential loop): requirements are assembled, then the analytical
    generator runs with a coverage-check + stochastic exit after each step.
  C (post-turn, off the response path): the self-awareness re-think and
    memory extraction; their results feed the *next* turn, and the next turn
    cannot start before they finish (turn-boundary barrier).

Every step emits a TraceEvent; the event stream is both what clients watch
live and what lands in ``traces/<session_id>.jsonl``.
"""

from __future__ import annotations

import asyncio
import logging
import random
import re
from dataclasses import dataclass, field
from pathlib import Path

from . import awareness, knowledge, memory, responders
from .clock import SystemClock
from .config import EngineConfig
from .conversation import (DialogHistory, Message, MessageKind, Persona, Role, Session,
                           SessionStatus, append_message, messages_from_jsonl)
from .conversation import window as history_window
from .errors import (ProviderError, SchemaViolation, SessionClosed, TurnFailed,
                     ValidationError)
from .knowledge import KnowledgeBrief, KnowledgeSource
from .memory import MemoryStore
from .persistence import Storage
from .responders import LoopDecision, RethinkVerdict
from .states import default_other_state, default_self_state, OtherState, SelfState
from .templates import TemplateLibrary
from .trace import SESSION_EPILOGUE_REASON, EventKind, TraceEvent

logger = logging.getLogger(__name__)

_ID_NUM_RE = re.compile(r"(\d+)$")


@dataclass
class TurnResult:
    messages: list[Message] = field(default_factory=list)
    events: list[TraceEvent] = field(default_factory=list)
    concluded_session: bool = False

    def to_summary(self) -> dict:
        return {
            "turn_index": self.events[0].turn_index if self.events else None,
            "message_count": len(self.messages),
            "message_ids": [m.id for m in self.messages],
            "concluded_session": self.concluded_session,
            "final_seq": self.events[-1].seq if self.events else None,
        }


class SessionRuntime:
    """Everything the engine holds for one live session."""

    def __init__(self, session: Session, persona: Persona, store: MemoryStore,
                 engine: "Engine"):
        self.session = session
        self.persona = persona
        self.store = store
        self.engine = engine
        self.history = DialogHistory(session_id=session.id)
        self.self_state: SelfState = default_self_state(persona)
        self.other_state: OtherState = default_other_state()
        self.lock = asyncio.Lock()
        self.pending = 0
        self.seq = 0
        self.msg_counter = 0
        self.next_turn = 0
        cfg = engine.config
        if cfg.seed_mode == "per_session":
            self.rng = random.Random(f"{cfg.loop.rng_seed}:{session.id}")
        else:
            self.rng = random.Random(cfg.loop.rng_seed)

    def new_message(self, turn_index: int, role: Role, kind: MessageKind,
                    text: str) -> Message:
        self.msg_counter += 1
        return Message(
            id=f"m{self.msg_counter:06d}",
            session_id=self.session.id,
            turn_index=turn_index,
            role=role,
            kind=kind,
            text=text,
            created_at=self.engine.clock.now(),
        )

    def append(self, msg: Message) -> None:
        self.history = append_message(self.history, msg)
        self.engine.storage.append_message(msg)

    def window(self) -> list[Message]:
        return history_window(self.history, self.engine.config.window_size)

    def snapshot(self) -> None:
        self.session.self_state = self.self_state.to_dict()
        self.session.other_state = self.other_state.to_dict()
        self.engine.storage.save_session(self.session, extra={
            "next_turn": self.next_turn,
            "msg_counter": self.msg_counter,
            "seq": self.seq,
            "piece_counter": self.store.id_counter,
        })


class _Emitter:
    """Assigns seq/wall offsets, persists and forwards each event."""

    def __init__(self, runtime: SessionRuntime, turn_index: int, sink):
        self.runtime = runtime
        self.turn_index = turn_index
        self.sink = sink
        self.clock = runtime.engine.clock
        self.t0 = self.clock.monotonic()
        self.events: list[TraceEvent] = []

    def emit(self, kind: EventKind, payload: dict) -> TraceEvent:
        event = TraceEvent(
            seq=self.runtime.seq,
            turn_index=self.turn_index,
            kind=kind,
            payload=payload,
            wall_ms=max(int((self.clock.monotonic() - self.t0) * 1000), 0),
        )
        self.runtime.seq += 1
        self.events.append(event)
        self.runtime.engine.storage.append_event(self.runtime.session.id, event)
        if self.sink is not None:
            self.sink(event)
        return event


class TurnStream:
    """Live view of one turn: iterate the events, then read ``result``.

    The turn itself runs as an independent task; abandoning the iterator
    never aborts the turn, it still completes and persists.
    """

    _END = object()

    def __init__(self):
        self._queue: asyncio.Queue = asyncio.Queue()
        self.result: TurnResult | None = None
        self.error: BaseException | None = None
        self._task: asyncio.Task | None = None

    def _push(self, event: TraceEvent) -> None:
        self._queue.put_nowait(event)

    def _finish(self, result: TurnResult | None, error: BaseException | None) -> None:
        self.result = result
        self.error = error
        self._queue.put_nowait(self._END)

    def __aiter__(self):
        return self

    async def __anext__(self) -> TraceEvent:
        item = await self._queue.get()
        if item is self._END:
            if self.error is not None:
                raise self.error
            raise StopAsyncIteration
        return item

    async def wait(self) -> TurnResult:
        if self._task is not None:
            await asyncio.shield(self._task)
        if self.error is not None:
            raise self.error
        assert self.result is not None
        return self.result


class Engine:
    """Owns sessions, providers and persistence; runs turns."""

    def __init__(self, provider, personas: dict[str, Persona], data_dir: Path,
                 config: EngineConfig | None = None, clock=None,
                 sources: list[KnowledgeSource] | None = None,
                 templates: TemplateLibrary | None = None,
                 seed_memory: dict[str, list[tuple[str, str]]] | None = None):
        self.provider = provider
        self.personas = dict(personas)
        self.storage = Storage(Path(data_dir))
        self.config = config or EngineConfig()
        self.clock = clock or SystemClock()
        self.sources = list(sources or [])
        self.templates = templates or TemplateLibrary()
        self.seed_memory = dict(seed_memory or {})
        self._runtimes: dict[str, SessionRuntime] = {}
        self._session_counter = 0

    # -- session lifecycle -------------------------------------------------

    def create_session(self, persona_id: str, session_id: str | None = None) -> Session:
        if persona_id not in self.personas:
            raise KeyError(f"unknown persona {persona_id!r}")
        persona = self.personas[persona_id]
        if session_id is None:
            self._session_counter += 1
            session_id = f"s{self._session_counter:04d}-{persona_id}"
        if session_id in self._runtimes or self.storage.session_path(session_id).exists():
            raise ValidationError(f"session {session_id!r} already exists")
        session = Session(id=session_id, persona_id=persona_id,
                          created_at=self.clock.now())
        store = MemoryStore(path=self.storage.memory_path(session_id), clock=self.clock)
        for category, statement in self.seed_memory.get(persona_id, []):
            store.seed_agent_memory([(category, statement)])
        runtime = SessionRuntime(session, persona, store, self)
        self._runtimes[session_id] = runtime
        runtime.snapshot()
        return session

    def list_sessions(self) -> list[Session]:
        sessions = []
        for session_id in self.storage.list_session_ids():
            runtime = self._runtimes.get(session_id)
            if runtime is not None:
                sessions.append(runtime.session)
            else:
                loaded = self.storage.load_session(session_id)
                if loaded is not None:
                    sessions.append(loaded[0])
        return sessions

    def get_session(self, session_id: str) -> Session | None:
        runtime = self._runtimes.get(session_id)
        if runtime is not None:
            return runtime.session
        loaded = self.storage.load_session(session_id)
        return loaded[0] if loaded else None

    def runtime(self, session_id: str) -> SessionRuntime:
        if session_id not in self._runtimes:
            restored = self._restore(session_id)
            if restored is None:
                raise KeyError(f"unknown session {session_id!r}")
            self._runtimes[session_id] = restored
        return self._runtimes[session_id]

    def _restore(self, session_id: str) -> SessionRuntime | None:
        loaded = self.storage.load_session(session_id)
        if loaded is None:
            return None
        session, extra = loaded
        persona = self.personas.get(session.persona_id)
        if persona is None:
            raise KeyError(f"persona {session.persona_id!r} for session "
                           f"{session_id!r} is not loaded")
        store = MemoryStore(path=self.storage.memory_path(session_id), clock=self.clock)
        runtime = SessionRuntime(session, persona, store, self)
        messages = messages_from_jsonl(self.storage.read_transcript(session_id))
        for msg in messages:
            runtime.history = append_message(runtime.history, msg)
        runtime.msg_counter = _max_id_number(m.id for m in messages)
        # The snapshot lags the append-only files by up to one in-flight turn
        # (crash mid-turn), so counters resume from whichever is further.
        tail_turn = messages[-1].turn_index + 1 if messages else 0
        runtime.next_turn = max(int(extra.get("next_turn", 0)), tail_turn)
        trace_lines = len(self.storage.read_trace(session_id).splitlines())
        runtime.seq = max(int(extra.get("seq", 0)), trace_lines)
        store.ensure_counter(int(extra.get("piece_counter", 0)))
        if session.self_state:
            runtime.self_state = SelfState.from_dict(session.self_state)
        if session.other_state:
            runtime.other_state = OtherState.from_dict(session.other_state)
        return runtime

    # -- turns ---------------------------------------------------------------

    def stream_turn(self, session_id: str, user_text: str) -> TurnStream:
        """Start one turn; returns a live event stream (see TurnStream)."""
        runtime = self.runtime(session_id)
        stream = TurnStream()
        # Counted before the task runs so a burst of submissions sees the
        # queue depth it is about to join.
        runtime.pending += 1
        stream._task = asyncio.create_task(self._turn_task(runtime, user_text, stream))
        return stream

    async def run_turn(self, session_id: str, user_text: str) -> TurnResult:
        stream = self.stream_turn(session_id, user_text)
        return await stream.wait()

    async def _turn_task(self, runtime: SessionRuntime, user_text: str,
                         stream: TurnStream) -> None:
        try:
            async with runtime.lock:
                runtime.pending -= 1
                try:
                    result = await self._run_turn_locked(runtime, user_text, stream._push)
                except BaseException as exc:
                    stream._finish(None, exc)
                    return
                stream._finish(result, None)
        except BaseException as exc:  # lock acquisition failure/cancellation
            runtime.pending -= 1
            stream._finish(None, exc)

    async def _run_turn_locked(self, runtime: SessionRuntime, user_text: str,
                               sink) -> TurnResult:
        if runtime.session.status is SessionStatus.CONCLUDED:
            raise SessionClosed(f"session {runtime.session.id} is concluded")
        turn_index = runtime.next_turn
        emitter = _Emitter(runtime, turn_index, sink)
        result = TurnResult(events=emitter.events)
        try:
            return await self._run_phases(runtime, user_text, emitter, result, turn_index)
        except TurnFailed:
            # The aborted turn keeps its index; its partial trace stays on
            # record as the labeling substrate for what went wrong.
            runtime.next_turn = turn_index + 1
            runtime.snapshot()
            raise

    async def _run_phases(self, runtime: SessionRuntime, user_text: str,
                          emitter: "_Emitter", result: TurnResult,
                          turn_index: int) -> TurnResult:
        cfg = self.config
        user_msg = runtime.new_message(turn_index, Role.USER, MessageKind.PLAIN, user_text)
        runtime.append(user_msg)
        emitter.emit(EventKind.TURN_STARTED, {"user_message": user_msg.to_dict()})

        dialog_window = runtime.window()
        prior_self = runtime.self_state

        # ---- Phase A: parallel dispatch ----------------------------------
        async def run_other():
            return await awareness.assess_other(
                self.provider, self.templates, runtime.persona, dialog_window,
                runtime.other_state, turn_index,
                split_perspectives=cfg.split_perspectives)

        async def run_retrieval():
            return await runtime.store.aretrieve(user_text, cfg.retrieval_k_responders)

        async def run_knowledge():
            return await knowledge.run_pipeline(
                self.provider, self.templates, user_text, dialog_window, self.sources)

        async def run_quick():
            if not cfg.always_quick:
                return None
            return await responders.quick_respond(
                self.provider, self.templates, runtime.persona, dialog_window, prior_self)

        phase_a = [("other", run_other), ("retrieval", run_retrieval),
                   ("knowledge", run_knowledge), ("quick", run_quick)]
        outcomes: dict[str, object] = {}
        failures: dict[str, BaseException] = {}
        quick_msg: Message | None = None

        def handle(name: str, value) -> None:
            nonlocal quick_msg
            outcomes[name] = value
            if name == "other":
                runtime.other_state = value.state
                emitter.emit(EventKind.OTHER_STATE, {
                    "state": value.state.to_dict(),
                    "context_labels": list(value.context_labels),
                    "degraded": value.degraded,
                })
                if value.degraded:
                    emitter.emit(EventKind.DEGRADED, {"stage": "other_awareness"})
            elif name == "retrieval":
                emitter.emit(EventKind.MEMORY_RETRIEVED, {
                    "query": user_text,
                    "hits": [{"piece": p.to_dict(), "score": s} for p, s in value],
                })
            elif name == "knowledge":
                emitter.emit(EventKind.KNOWLEDGE_BRIEF, {
                    "brief": value.brief.to_dict(),
                    "degradations": list(value.degradations),
                })
                for note in value.degradations:
                    emitter.emit(EventKind.DEGRADED, {"stage": note})
            elif name == "quick" and value is not None:
                quick_msg = runtime.new_message(
                    turn_index, Role.AGENT, MessageKind.QUICK, value.text)
                runtime.append(quick_msg)
                result.messages.append(quick_msg)
                emitter.emit(EventKind.QUICK_EMITTED, {
                    "message": quick_msg.to_dict(),
                    "context_labels": list(value.context_labels),
                    "degraded": value.degraded,
                })
                if value.degraded:
                    emitter.emit(EventKind.DEGRADED, {"stage": "quick_response"})

        if cfg.phase_a_serial:
            for name, factory in phase_a:
                try:
                    handle(name, await factory())
                except Exception as exc:
                    failures[name] = exc
                    emitter.emit(EventKind.DEGRADED,
                                 {"stage": name, "error": str(exc)})
        else:
            order = {name: i for i, (name, _) in enumerate(phase_a)}
            tasks = {asyncio.create_task(factory(), name=name): name
                     for name, factory in phase_a}
            pending = set(tasks)
            while pending:
                done, pending = await asyncio.wait(
                    pending, return_when=asyncio.FIRST_COMPLETED)
                for task in sorted(done, key=lambda t: order[tasks[t]]):
                    name = tasks[task]
                    exc = task.exception()
                    if exc is not None:
                        failures[name] = exc
                        emitter.emit(EventKind.DEGRADED,
                                     {"stage": name, "error": str(exc)})
                    else:
                        handle(name, task.result())

        if "other" in failures and "quick" in failures:
            raise TurnFailed(
                f"awareness and quick responder both failed: {sorted(failures)}")

        if "other" in failures:
            runtime.other_state = runtime.other_state.at_turn(turn_index)
        memory_hits = outcomes.get("retrieval") or []
        brief = (outcomes["knowledge"].brief if "knowledge" in outcomes
                 else KnowledgeBrief())

        # ---- Phase B: the analytical loop ---------------------------------
        reqs = responders.build_requirements(runtime.other_state, prior_self, user_msg)
        turn_messages: list[Message] = [quick_msg] if quick_msg else []
        emitted = 0
        loop_cfg = cfg.loop

        async def coverage() -> RethinkVerdict:
            return await responders.assess_coverage(
                self.provider, self.templates, reqs, turn_messages, user_text)

        proceed = True
        if quick_msg is not None:
            # Initial gate: the quick reply may already close the turn. An
            # immediate conclude leaves no loop events, matching the grammar's
            # zero-block case.
            verdict = await coverage()
            decision = responders.should_continue(
                verdict, emitted, loop_cfg, runtime.rng.random())
            proceed = decision is LoopDecision.CONTINUE

        while proceed:
            try:
                step = await responders.analytic_step(
                    self.provider, self.templates, runtime.persona, dialog_window,
                    runtime.other_state, brief, memory_hits or [], turn_messages,
                    user_text)
            except (ProviderError, SchemaViolation) as exc:
                emitter.emit(EventKind.DEGRADED,
                             {"stage": "analytic_response", "error": str(exc)})
                break
            msg = runtime.new_message(turn_index, Role.AGENT, MessageKind.ANALYTICAL,
                                      step.text)
            runtime.append(msg)
            result.messages.append(msg)
            turn_messages.append(msg)
            emitted += 1
            emitter.emit(EventKind.ANALYTICAL_EMITTED, {
                "message": msg.to_dict(),
                "context_labels": list(step.context_labels),
            })
            verdict = await coverage()
            if reqs.items:
                emitter.emit(EventKind.RETHINK_VERDICT, verdict.to_dict())
            decision = responders.should_continue(
                verdict, emitted, loop_cfg, runtime.rng.random())
            emitter.emit(EventKind.LOOP_DECISION, {
                "decision": decision.value,
                "emitted_analytical": emitted,
                "all_covered": verdict.all_covered,
            })
            proceed = decision is LoopDecision.CONTINUE

        if not result.messages:
            raise TurnFailed("turn produced no agent messages")

        emitter.emit(EventKind.TURN_CONCLUDED, {
            "message_count": len(result.messages),
            "analytical_count": emitted,
        })

        # ---- Phase C: re-think and extraction (barrier before next turn) --
        rethink_hits = runtime.store.retrieve(user_text, cfg.retrieval_k_rethink)
        rethink = await awareness.rethink_self(
            self.provider, self.templates, runtime.persona, runtime.window(),
            prior_self, turn_index, memory_hits=rethink_hits,
            split_perspectives=cfg.split_perspectives)
        runtime.self_state = rethink.state
        emitter.emit(EventKind.SELF_STATE_UPDATED, {
            "state": rethink.state.to_dict(),
            "context_labels": list(rethink.context_labels),
            "degraded": rethink.degraded,
        })
        if rethink.degraded:
            emitter.emit(EventKind.DEGRADED, {"stage": "rethink_self"})

        stored = []
        try:
            drafts = await memory.extract_pieces(
                self.provider, [user_msg] + result.messages, runtime.persona,
                self.templates, user_input=user_text)
        except (ProviderError, SchemaViolation) as exc:
            emitter.emit(EventKind.DEGRADED,
                         {"stage": "memory_extract", "error": str(exc)})
            drafts = []
        for draft in drafts:
            piece = memory.MemoryPiece(
                id=runtime.store.next_id(),
                owner=draft.owner,
                category=draft.category,
                statement=draft.statement,
                source_turn=turn_index,
                created_at=self.clock.now(),
            )
            runtime.store.store(piece)
            stored.append(piece)
        report = None
        if (turn_index + 1) % cfg.consolidation_interval == 0:
            report = runtime.store.consolidate()
        emitter.emit(EventKind.MEMORY_EXTRACTED, {
            "pieces": [p.to_dict() for p in stored],
            "consolidation": report.to_dict() if report else None,
        })

        runtime.next_turn = turn_index + 1
        if runtime.self_state.plan.value == "conclude":
            self._conclude(runtime, emitter)
            result.concluded_session = True
        runtime.snapshot()
        return result

    # -- conclusion ----------------------------------------------------------

    def _conclude(self, runtime: SessionRuntime, emitter: _Emitter | None) -> None:
        runtime.session.status = SessionStatus.CONCLUDED
        report = runtime.store.consolidate()
        payload = {
            "reason": SESSION_EPILOGUE_REASON,
            "pieces": [],
            "consolidation": report.to_dict(),
        }
        if emitter is not None:
            emitter.emit(EventKind.MEMORY_EXTRACTED, payload)
        else:
            event = TraceEvent(seq=runtime.seq, turn_index=runtime.next_turn,
                               kind=EventKind.MEMORY_EXTRACTED, payload=payload,
                               wall_ms=0)
            runtime.seq += 1
            self.storage.append_event(runtime.session.id, event)

    async def conclude_session(self, session_id: str) -> Session:
        """Explicitly close a session; waits for any in-flight turn first."""
        runtime = self.runtime(session_id)
        async with runtime.lock:
            if runtime.session.status is SessionStatus.CONCLUDED:
                raise SessionClosed(f"session {session_id} is already concluded")
            self._conclude(runtime, None)
            runtime.snapshot()
            return runtime.session


def _max_id_number(ids) -> int:
    best = 0
    for value in ids:
        match = _ID_NUM_RE.search(value)
        if match:
            best = max(best, int(match.group(1)))
    return best
