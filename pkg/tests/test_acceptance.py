"""Acceptance suite.

One test per acceptance criterion, each at its stated tolerance, printing a
pass line on success (run with ``pytest tests/test_acceptance.py -v -s``).
"""

import asyncio
import json
import random
import statistics
import time
from collections import Counter
from datetime import timedelta

import httpx
import pytest

from anima.clock import FixedClock, SystemClock
from anima.config import EngineConfig
from anima.conversation import Persona
from anima.evalharness import (RatingRecord, aggregate_ratings, build_sets,
                               sample_windows)
from anima.memory import MemoryPiece, MemoryStore
from anima.orchestrator import Engine
from anima.providers import Matcher, ModuleTag, ScriptEntry, ScriptedProvider
from anima.responders import LoopConfig, simulate_analytical_counts
from anima.service import create_app
from anima.trace import EventKind, check_session_trace, events_from_jsonl

from conftest import (ALL_COVERED, EPOCH, default_script_bank, make_message,
                      other_state_json, self_state_json)

# chi-square critical value, df=3, upper tail 0.01: p > 0.01 iff chi2 below it
CHI2_CRIT_DF3_P01 = 11.345

REPLAY_INPUTS = [
    "hello there",
    "I spent the evening watching Saturn through my telescope",
    "do you think the rings are made of ice?",
    "let's plan a trip to a dark-sky reserve",
    "I'm a bit bored of this topic honestly",
    "what music do you like?",
    "I love jazz, especially live sets",
    "my favorite color is teal",
    "actually my favorite color is orange",
    "thanks, this was nice",
]


def _passline(name):
    print(f"\n[ACCEPTANCE] {name}: PASS")


def persona():
    return Persona(id="mira", name="Mira", identity="A retired astronomer.",
                   language_style="warm, plain-spoken", interests=("stargazing",))


def replay_bank():
    entries = default_script_bank()
    entries.extend([
        ScriptEntry(module_tag=ModuleTag.OTHER_AWARENESS, matcher=Matcher.SUBSTRING,
                    pattern="plan a trip",
                    response=other_state_json(task=True, strategy={
                        "goal": "plan a dark-sky trip",
                        "steps": ["pick a reserve", "pick dates", "book"],
                        "current_step_index": 0,
                        "next_action": "pick a reserve together"})),
        ScriptEntry(module_tag=ModuleTag.SELF_AWARENESS, matcher=Matcher.SUBSTRING,
                    pattern="bored", response=self_state_json(plan="switch_topic")),
        ScriptEntry(module_tag=ModuleTag.MEMORY_EXTRACT, matcher=Matcher.SUBSTRING,
                    pattern="favorite color is teal",
                    response=json.dumps([{"owner": "user", "category": "preference",
                                          "statement": "user's favorite color is teal"}])),
        ScriptEntry(module_tag=ModuleTag.MEMORY_EXTRACT, matcher=Matcher.SUBSTRING,
                    pattern="favorite color is orange",
                    response=json.dumps([{"owner": "user", "category": "preference",
                                          "statement": "user's favorite color is orange"}])),
        ScriptEntry(module_tag=ModuleTag.QUICK_RESPONSE, matcher=Matcher.SUBSTRING,
                    pattern="?", response="Good question - one sec!"),
    ])
    return entries


def run_replay(tmp_path, tag):
    engine = Engine(
        provider=ScriptedProvider(replay_bank()),
        personas={"mira": persona()},
        data_dir=tmp_path / f"data-{tag}",
        config=EngineConfig(loop=LoopConfig(rng_seed=42)),
        clock=FixedClock(EPOCH),
    )
    session = engine.create_session("mira", session_id="replay")

    async def main():
        for text in REPLAY_INPUTS:
            await engine.run_turn(session.id, text)

    asyncio.run(main())
    return (engine.storage.read_transcript(session.id),
            engine.storage.read_trace(session.id))


def test_criterion_deterministic_replay(tmp_path):
    """Seed 42, scripted provider: 3 runs are byte-identical, < 10 s."""
    start = time.monotonic()
    runs = [run_replay(tmp_path, i) for i in range(3)]
    elapsed = time.monotonic() - start
    transcripts = {r[0] for r in runs}
    traces = {r[1] for r in runs}
    assert len(transcripts) == 1, "transcript files differ across runs"
    assert len(traces) == 1, "trace files differ across runs"
    assert len(runs[0][0].splitlines()) >= 20  # 10 turns, user + agent each
    assert elapsed < 10, f"replay took {elapsed:.1f}s"
    _passline("deterministic replay (3x byte-identical, "
              f"{elapsed:.1f}s)")


# ---------------------------------------------------------------------------
# 500-turn randomized simulation, shared by the grammar and independence
# criteria.
# ---------------------------------------------------------------------------

PHRASES = [
    "tell me about {topic}",
    "what do you think of {topic}?",
    "let's plan a trip around {topic}",
    "I'm feeling a bit sad about {topic}",
    "honestly {topic} is tricky to follow",
    "I read something about {topic} yesterday",
    "{topic} again? I'm bored",
    "can you glitch on {topic}?",
    "why does {topic} work that way?",
    "my favorite part of {topic} is the history",
]

TOPICS = ["jazz", "telescopes", "sourdough", "chess", "tide pools", "trains"]


def simulation_bank():
    entries = replay_bank()
    entries.extend([
        ScriptEntry(module_tag=ModuleTag.OTHER_AWARENESS, matcher=Matcher.SUBSTRING,
                    pattern="sad", response=other_state_json(satisfaction=1)),
        ScriptEntry(module_tag=ModuleTag.RETHINK, matcher=Matcher.SUBSTRING,
                    pattern="tricky",
                    response=json.dumps({"coverage": {"proactivity": False},
                                         "missing_summary": "depth"})),
        ScriptEntry(module_tag=ModuleTag.RETHINK, matcher=Matcher.SUBSTRING,
                    pattern="glitch", response="][ not json ]["),
        ScriptEntry(module_tag=ModuleTag.SELF_AWARENESS, matcher=Matcher.SUBSTRING,
                    pattern="glitch", response="{broken"),
        ScriptEntry(module_tag=ModuleTag.QUERY_REWRITE, matcher=Matcher.SUBSTRING,
                    pattern="read something",
                    response='["a", "b", "c", "d", "e"]'),
    ])
    return entries


@pytest.fixture(scope="module")
def simulation(tmp_path_factory):
    tmp_path = tmp_path_factory.mktemp("sim500")
    provider = ScriptedProvider(simulation_bank())
    engine = Engine(
        provider=provider,
        personas={"mira": persona()},
        data_dir=tmp_path / "data",
        config=EngineConfig(loop=LoopConfig(rng_seed=42), seed_mode="per_session"),
        clock=FixedClock(EPOCH),
    )
    rng = random.Random(42)
    n_sessions, turns_per_session = 25, 20

    async def drive(session_id):
        for _ in range(turns_per_session):
            phrase = rng.choice(PHRASES).format(topic=rng.choice(TOPICS))
            await engine.run_turn(session_id, phrase)

    start = time.monotonic()

    async def main():
        ids = [engine.create_session("mira", session_id=f"sim{i:03d}").id
               for i in range(n_sessions)]
        for session_id in ids:  # sequential turn generation, deterministic inputs
            await drive(session_id)
        return ids

    session_ids = asyncio.run(main())
    elapsed = time.monotonic() - start
    return {"engine": engine, "session_ids": session_ids, "elapsed": elapsed,
            "expected_turns": n_sessions * turns_per_session}


def test_criterion_trace_grammar(simulation):
    """Every one of the 500 randomized turns matches the turn grammar, < 60 s."""
    engine = simulation["engine"]
    total = 0
    for session_id in simulation["session_ids"]:
        events = events_from_jsonl(engine.storage.read_trace(session_id))
        total += check_session_trace(events)
    assert total == simulation["expected_turns"]
    assert simulation["elapsed"] < 60, f"simulation took {simulation['elapsed']:.1f}s"
    _passline(f"trace grammar (500/500 turns, {simulation['elapsed']:.1f}s)")


def test_criterion_independence(simulation):
    """Quick sees no other-state/knowledge; awareness never cross-references."""
    requests = simulation["engine"].provider.requests
    assert len(requests) > 2000
    violations = []
    for req in requests:
        labels = set(req.block_labels())
        if req.module_tag is ModuleTag.QUICK_RESPONSE:
            if labels & {"other_state", "knowledge_brief"}:
                violations.append(req)
        elif req.module_tag is ModuleTag.SELF_AWARENESS:
            if "other_state" in labels:
                violations.append(req)
        elif req.module_tag is ModuleTag.OTHER_AWARENESS:
            if "self_state" in labels:
                violations.append(req)
    assert violations == []
    # the same holds for the context labels recorded in traces
    engine = simulation["engine"]
    for session_id in simulation["session_ids"]:
        for event in events_from_jsonl(engine.storage.read_trace(session_id)):
            labels = set(event.payload.get("context_labels", []))
            if event.kind is EventKind.QUICK_EMITTED:
                assert not labels & {"other_state", "knowledge_brief"}
            elif event.kind is EventKind.SELF_STATE_UPDATED:
                assert "other_state" not in labels
            elif event.kind is EventKind.OTHER_STATE:
                assert "self_state" not in labels
    _passline(f"independence ({len(requests)} requests, 0 violations)")


def test_criterion_parallelism(tmp_path):
    """200 ms stubs on the four dispatch units: overlapped <= 400 ms, serial >= 800."""
    def build(serial, where):
        entries = [
            ScriptEntry(module_tag=ModuleTag.OTHER_AWARENESS, matcher=Matcher.DEFAULT,
                        response=other_state_json(), latency_stub_ms=200),
            ScriptEntry(module_tag=ModuleTag.QUERY_REWRITE, matcher=Matcher.DEFAULT,
                        response='["q"]', latency_stub_ms=200),
            ScriptEntry(module_tag=ModuleTag.QUICK_RESPONSE, matcher=Matcher.DEFAULT,
                        response="quick!", latency_stub_ms=200),
            ScriptEntry(module_tag=ModuleTag.SELF_AWARENESS, matcher=Matcher.DEFAULT,
                        response=self_state_json()),
            ScriptEntry(module_tag=ModuleTag.MEMORY_EXTRACT, matcher=Matcher.DEFAULT,
                        response="[]"),
            ScriptEntry(module_tag=ModuleTag.RETHINK, matcher=Matcher.DEFAULT,
                        response=ALL_COVERED),
        ]
        engine = Engine(
            provider=ScriptedProvider(entries),
            personas={"mira": persona()},
            data_dir=tmp_path / where,
            config=EngineConfig(loop=LoopConfig(rng_seed=0), phase_a_serial=serial),
            clock=SystemClock(),
        )
        session = engine.create_session("mira")
        engine.runtime(session.id).store.lookup_delay_ms = 200
        return engine, session.id

    dispatch_kinds = {EventKind.QUICK_EMITTED, EventKind.OTHER_STATE,
                      EventKind.MEMORY_RETRIEVED, EventKind.KNOWLEDGE_BRIEF}

    def measure(engine, session_id, turns):
        quicks, totals = [], []

        async def main():
            for i in range(turns):
                result = await engine.run_turn(session_id, f"turn {i}")
                quicks.append(next(e.wall_ms for e in result.events
                                   if e.kind is EventKind.QUICK_EMITTED))
                totals.append(max(e.wall_ms for e in result.events
                                  if e.kind in dispatch_kinds))

        asyncio.run(main())
        return statistics.median(quicks), statistics.median(totals)

    engine, session_id = build(serial=False, where="par")
    quick_median, phase_a_median = measure(engine, session_id, 50)
    assert quick_median <= 400, f"quick median {quick_median}ms"
    assert phase_a_median <= 400, f"phase-A median {phase_a_median}ms"

    serial_engine, serial_id = build(serial=True, where="ser")
    _, serial_median = measure(serial_engine, serial_id, 10)
    assert serial_median >= 800, f"serial median {serial_median}ms"
    assert serial_median >= 2 * phase_a_median
    _passline(f"parallelism (quick {quick_median:.0f}ms, phase-A "
              f"{phase_a_median:.0f}ms, serial {serial_median:.0f}ms, "
              f"{serial_median / phase_a_median:.1f}x gain)")


def test_criterion_loop_exit_statistics():
    """10,000 covered turns follow truncated-geometric {.5, .25, .125, .125}."""
    cfg = LoopConfig(continuation_probability=0.5, max_analytical_messages=3,
                     rng_seed=42)
    n = 10_000
    counts = Counter(simulate_analytical_counts(cfg, n))
    expected = {0: 0.5 * n, 1: 0.25 * n, 2: 0.125 * n, 3: 0.125 * n}
    assert set(counts) <= set(expected)
    chi2 = sum((counts.get(k, 0) - e) ** 2 / e for k, e in expected.items())
    assert chi2 < CHI2_CRIT_DF3_P01, f"chi2={chi2:.2f}"
    _passline(f"loop-exit statistics (chi2={chi2:.2f} < {CHI2_CRIT_DF3_P01})")


def test_criterion_memory_oracle():
    """retrieve == brute force and consolidate idempotent on 100 corpora, < 120 s."""
    import re

    def oracle_tokens(text):
        return set(re.findall(r"\w+", text.lower()))

    def oracle_jaccard(a, b):
        if not a or not b:
            return 0.0
        return len(a & b) / len(a | b)

    start = time.monotonic()
    rng = random.Random(1234)
    vocab = [f"term{i}" for i in range(400)]
    categories = ["event", "relationship", "preference", "fact", "other"]
    for corpus_index in range(100):
        size = rng.randint(50, 10_000) if corpus_index % 10 == 0 else rng.randint(50, 2000)
        store = MemoryStore()
        for i in range(size):
            statement = " ".join(rng.sample(vocab, rng.randint(2, 7)))
            store.store(MemoryPiece(
                id=f"p{i:06d}",
                owner=rng.choice(("user", "agent")),
                category=rng.choice(categories),
                statement=statement,
                source_turn=0,
                created_at=EPOCH + timedelta(seconds=rng.randint(0, 100_000)),
            ))
        for _ in range(3):
            query = " ".join(rng.sample(vocab, rng.randint(2, 5)))
            got = store.retrieve(query, 10)
            query_tokens = oracle_tokens(query)
            brute = [(p, oracle_jaccard(query_tokens, oracle_tokens(p.statement)))
                     for p in store.all_pieces() if p.superseded_by is None]
            brute = [(p, s) for p, s in brute if s > 0.0]
            brute.sort(key=lambda t: (-t[1], -t[0].created_at.timestamp(), t[0].id))
            assert [(p.id, pytest.approx(s)) for p, s in got] == \
                [(p.id, pytest.approx(s)) for p, s in brute[:10]]
        store.consolidate()
        state = {p.id: p for p in store.all_pieces()}
        second = store.consolidate()
        assert second.merged == 0 and second.conflicts_resolved == 0
        assert {p.id: p for p in store.all_pieces()} == state
    elapsed = time.monotonic() - start
    assert elapsed < 120, f"memory oracle took {elapsed:.1f}s"
    _passline(f"memory oracle equivalence (100 corpora, {elapsed:.1f}s)")


def test_criterion_protocol_shape():
    """Sampling formula, set assembly and aggregation reproduce the protocol."""
    rng = random.Random(99)
    # 200 random (M, stride) cases against the closed-form count
    for _ in range(200):
        total = rng.randint(0, 600)
        stride = rng.randint(1, 10)
        msgs = [make_message(i + 1, turn=i) for i in range(total)]
        got = len(sample_windows(msgs, width=20, stride=stride))
        expected = (total - 20) // stride + 1 if total >= 20 else 0
        assert got == expected

    pool = sample_windows([make_message(i + 1, turn=i) for i in range(359)], width=20)
    assert len(pool) == 340
    sets = build_sets(pool, per_set=5, n_sets=30, seed=7)
    assert len(sets) == 30
    assert all(len(g) == 5 and len({s.id for s in g}) == 5 for g in sets)

    records = [RatingRecord(f"e{rng.randint(1, 12)}", f"set{rng.randint(1, 30)}",
                            rng.randint(1, 8), rng.randint(1, 7))
               for _ in range(10_000)]
    stats = aggregate_ratings(records)
    for statement_index, entry in stats.items():
        scores = [r.score for r in records if r.statement_index == statement_index]
        assert entry.count == len(scores)
        assert entry.mean == pytest.approx(sum(scores) / len(scores))
        assert sum(entry.histogram.values()) == entry.count
    _passline("protocol-shape reproduction (200 window cases, 30x5 sets, "
              "10k ratings)")


def test_criterion_api_contract(tmp_path):
    """Stream order == transcript order over 50 concurrent sessions + restart."""
    def build_engine():
        return Engine(
            provider=ScriptedProvider(simulation_bank()),
            personas={"mira": persona()},
            data_dir=tmp_path / "data",
            config=EngineConfig(loop=LoopConfig(rng_seed=42), seed_mode="per_session"),
            clock=FixedClock(EPOCH),
        )

    engine = build_engine()
    app = create_app(engine)
    streamed: dict[str, list[str]] = {}
    transcripts: dict[str, bytes] = {}

    async def drive(client, i):
        created = await client.post("/v1/sessions",
                                    json={"persona_id": "mira",
                                          "session_id": f"api{i:03d}"})
        assert created.status_code == 201
        session_id = created.json()["id"]
        ids = []
        for t in range(3):
            async with client.stream(
                    "POST", f"/v1/sessions/{session_id}/messages?trace=none",
                    json={"text": f"turn {t} of session {i}?"}) as response:
                assert response.status_code == 200
                body = ""
                async for chunk in response.aiter_text():
                    body += chunk
            for frame in body.split("\n\n"):
                lines = frame.splitlines()
                if lines and lines[0] == "event: message":
                    ids.append(json.loads(lines[1][len("data: "):])["id"])
        streamed[session_id] = ids
        transcript = await client.get(f"/v1/sessions/{session_id}/transcript")
        transcripts[session_id] = transcript.content

    async def main():
        transport = httpx.ASGITransport(app=app)
        async with httpx.AsyncClient(transport=transport,
                                     base_url="http://svc.test") as client:
            await asyncio.gather(*(drive(client, i) for i in range(50)))

    asyncio.run(main())
    assert len(streamed) == 50
    for session_id, ids in streamed.items():
        agent_ids = [json.loads(line)["id"]
                     for line in transcripts[session_id].decode().splitlines()
                     if json.loads(line)["role"] == "agent"]
        assert ids == agent_ids, f"stream/transcript order mismatch in {session_id}"

    # crash-restart: a fresh engine over the same data dir serves identical bytes
    restarted = create_app(build_engine())

    async def verify_restart():
        transport = httpx.ASGITransport(app=restarted)
        async with httpx.AsyncClient(transport=transport,
                                     base_url="http://svc.test") as client:
            for session_id, before in transcripts.items():
                after = await client.get(f"/v1/sessions/{session_id}/transcript")
                assert after.content == before, f"transcript changed for {session_id}"

    asyncio.run(verify_restart())
    _passline("api contract (50 concurrent sessions, byte-identical after restart)")
