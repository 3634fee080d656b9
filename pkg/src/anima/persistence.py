"""Data-directory layout and append-style persistence.

Everything the engine writes lives under one data directory:

    sessions/<id>.json      session snapshot (status, states, counters)
    transcripts/<id>.jsonl  one Message per line, the canonical transcript
    traces/<id>.jsonl       one TraceEvent per line
    memory/<id>.jsonl       one MemoryPiece per line, current store state

Transcript and trace files are append-only and flushed per line so a crash
never loses a delivered turn; the session snapshot is replaced atomically.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

from .conversation import Message, Session
from .trace import TraceEvent


class Storage:
    def __init__(self, data_dir: Path):
        self.data_dir = Path(data_dir)
        for sub in ("sessions", "transcripts", "traces", "memory"):
            (self.data_dir / sub).mkdir(parents=True, exist_ok=True)

    def session_path(self, session_id: str) -> Path:
        return self.data_dir / "sessions" / f"{session_id}.json"

    def transcript_path(self, session_id: str) -> Path:
        return self.data_dir / "transcripts" / f"{session_id}.jsonl"

    def trace_path(self, session_id: str) -> Path:
        return self.data_dir / "traces" / f"{session_id}.jsonl"

    def memory_path(self, session_id: str) -> Path:
        return self.data_dir / "memory" / f"{session_id}.jsonl"

    def list_session_ids(self) -> list[str]:
        return sorted(p.stem for p in (self.data_dir / "sessions").glob("*.json"))

    def save_session(self, session: Session, extra: dict | None = None) -> None:
        payload = session.to_dict()
        if extra:
            payload.update(extra)
        path = self.session_path(session.id)
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(payload, indent=2), encoding="utf-8")
        os.replace(tmp, path)

    def load_session(self, session_id: str) -> tuple[Session, dict] | None:
        path = self.session_path(session_id)
        if not path.exists():
            return None
        data = json.loads(path.read_text(encoding="utf-8"))
        return Session.from_dict(data), data

    def append_message(self, msg: Message) -> None:
        self._append(self.transcript_path(msg.session_id), msg.to_dict())

    def append_event(self, session_id: str, event: TraceEvent) -> None:
        self._append(self.trace_path(session_id), event.to_dict())

    def read_transcript(self, session_id: str) -> str:
        path = self.transcript_path(session_id)
        return path.read_text(encoding="utf-8") if path.exists() else ""

    def read_trace(self, session_id: str) -> str:
        path = self.trace_path(session_id)
        return path.read_text(encoding="utf-8") if path.exists() else ""

    @staticmethod
    def _append(path: Path, payload: dict) -> None:
        # Flushed per line: a process crash never loses a delivered turn.
        line = json.dumps(payload, separators=(",", ":")) + "\n"
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(line)
            fh.flush()
