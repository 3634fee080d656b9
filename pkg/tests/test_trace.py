import pytest

from anima.errors import ValidationError
from anima.trace import (EventKind, TraceEvent, check_session_trace, check_turn_events,
                         events_from_jsonl, events_to_jsonl)

K = EventKind


def events(kinds, start_seq=0, turn=0, reason=None):
    out = []
    for i, kind in enumerate(kinds):
        payload = {}
        if reason and i == len(kinds) - 1:
            payload = {"reason": reason}
        out.append(TraceEvent(seq=start_seq + i, turn_index=turn, kind=kind,
                              payload=payload, wall_ms=i))
    return out


FULL_TURN = [K.TURN_STARTED, K.OTHER_STATE, K.MEMORY_RETRIEVED, K.KNOWLEDGE_BRIEF,
             K.QUICK_EMITTED, K.ANALYTICAL_EMITTED, K.RETHINK_VERDICT, K.LOOP_DECISION,
             K.TURN_CONCLUDED, K.SELF_STATE_UPDATED, K.MEMORY_EXTRACTED]


class TestTurnGrammar:
    def test_full_turn(self):
        check_turn_events(events(FULL_TURN))

    def test_dispatch_any_interleaving(self):
        shuffled = [K.TURN_STARTED, K.QUICK_EMITTED, K.KNOWLEDGE_BRIEF,
                    K.OTHER_STATE, K.MEMORY_RETRIEVED, K.TURN_CONCLUDED,
                    K.SELF_STATE_UPDATED, K.MEMORY_EXTRACTED]
        check_turn_events(events(shuffled))

    def test_quickless_dispatch(self):
        kinds = [K.TURN_STARTED, K.OTHER_STATE, K.MEMORY_RETRIEVED, K.KNOWLEDGE_BRIEF,
                 K.ANALYTICAL_EMITTED, K.LOOP_DECISION, K.TURN_CONCLUDED,
                 K.SELF_STATE_UPDATED, K.MEMORY_EXTRACTED]
        check_turn_events(events(kinds))

    def test_verdict_optional_in_loop_block(self):
        kinds = [K.TURN_STARTED, K.OTHER_STATE, K.MEMORY_RETRIEVED, K.KNOWLEDGE_BRIEF,
                 K.QUICK_EMITTED, K.ANALYTICAL_EMITTED, K.LOOP_DECISION,
                 K.ANALYTICAL_EMITTED, K.RETHINK_VERDICT, K.LOOP_DECISION,
                 K.TURN_CONCLUDED, K.SELF_STATE_UPDATED, K.MEMORY_EXTRACTED]
        check_turn_events(events(kinds))

    def test_degraded_ignored_anywhere(self):
        kinds = list(FULL_TURN)
        kinds.insert(3, K.DEGRADED)
        kinds.append(K.DEGRADED)
        check_turn_events(events(kinds))

    def test_missing_dispatch_event_rejected(self):
        kinds = [K.TURN_STARTED, K.OTHER_STATE, K.KNOWLEDGE_BRIEF, K.TURN_CONCLUDED,
                 K.SELF_STATE_UPDATED, K.MEMORY_EXTRACTED]
        with pytest.raises(ValidationError):
            check_turn_events(events(kinds))

    def test_duplicate_dispatch_event_rejected(self):
        kinds = [K.TURN_STARTED, K.OTHER_STATE, K.OTHER_STATE, K.MEMORY_RETRIEVED,
                 K.KNOWLEDGE_BRIEF, K.TURN_CONCLUDED, K.SELF_STATE_UPDATED,
                 K.MEMORY_EXTRACTED]
        with pytest.raises(ValidationError):
            check_turn_events(events(kinds))

    def test_loop_decision_before_analytical_rejected(self):
        kinds = [K.TURN_STARTED, K.OTHER_STATE, K.MEMORY_RETRIEVED, K.KNOWLEDGE_BRIEF,
                 K.LOOP_DECISION, K.ANALYTICAL_EMITTED, K.TURN_CONCLUDED,
                 K.SELF_STATE_UPDATED, K.MEMORY_EXTRACTED]
        with pytest.raises(ValidationError):
            check_turn_events(events(kinds))

    def test_missing_post_phase_rejected(self):
        kinds = [K.TURN_STARTED, K.OTHER_STATE, K.MEMORY_RETRIEVED, K.KNOWLEDGE_BRIEF,
                 K.TURN_CONCLUDED]
        with pytest.raises(ValidationError):
            check_turn_events(events(kinds))

    def test_does_not_open_with_turn_started(self):
        with pytest.raises(ValidationError):
            check_turn_events(events([K.OTHER_STATE]))


class TestSessionTrace:
    def test_two_turns_counted(self):
        stream = events(FULL_TURN) + events(FULL_TURN, start_seq=len(FULL_TURN), turn=1)
        assert check_session_trace(stream) == 2

    def test_seq_gap_rejected(self):
        stream = events(FULL_TURN)
        broken = stream[:5] + [TraceEvent(seq=99, turn_index=0, kind=stream[5].kind,
                                          payload={}, wall_ms=5)] + stream[6:]
        with pytest.raises(ValidationError):
            check_session_trace(broken)

    def test_wall_regression_rejected(self):
        stream = events(FULL_TURN)
        broken = stream[:-1] + [TraceEvent(seq=stream[-1].seq, turn_index=0,
                                           kind=stream[-1].kind, payload={}, wall_ms=0)]
        with pytest.raises(ValidationError):
            check_session_trace(broken)

    def test_epilogue_peeled(self):
        stream = events(FULL_TURN)
        stream.append(TraceEvent(seq=len(stream), turn_index=1,
                                 kind=K.MEMORY_EXTRACTED,
                                 payload={"reason": "session_concluded"}, wall_ms=0))
        assert check_session_trace(stream) == 1

    def test_inflight_tail_flag(self):
        stream = events(FULL_TURN)
        partial = [TraceEvent(seq=len(stream), turn_index=1, kind=K.TURN_STARTED,
                              payload={}, wall_ms=0)]
        with pytest.raises(ValidationError):
            check_session_trace(stream + partial)
        assert check_session_trace(stream + partial, allow_inflight_tail=True) == 1

    def test_jsonl_roundtrip(self):
        stream = events(FULL_TURN)
        assert events_from_jsonl(events_to_jsonl(stream)) == stream
