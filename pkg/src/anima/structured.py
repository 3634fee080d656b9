"""Structured-output parsing with a single deterministic repair pass.

Model output is text; the modules need typed values. ``parse_structured``
first tries the text as-is, then applies exactly one repair pass (strip code
fences, extract the first brace-balanced JSON value, coerce enum case) and
fails with a ``SchemaViolation`` listing the offending fields. There is never
a second model call: repair is deterministic so the whole engine stays
deterministic under the scripted provider.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Callable

from .errors import SchemaViolation, ValidationError
from .states import OtherState, PieceDraft, SelfState

PIECE_OWNERS = ("user", "agent")
PIECE_CATEGORIES = ("event", "relationship", "preference", "fact", "other")


@dataclass(frozen=True)
class Schema:
    schema_id: str
    root: type  # dict or list
    build: Callable[[Any], Any]
    serialize: Callable[[Any], Any]


def _build_self_state(data: Any) -> SelfState:
    _require_mapping(data)
    return SelfState.from_dict(data)


def _build_other_state(data: Any) -> OtherState:
    _require_mapping(data)
    return OtherState.from_dict(data)


def _build_query_list(data: Any) -> list[str]:
    if not isinstance(data, list):
        raise ValidationError("expected a JSON array of query strings")
    queries = [str(q).strip() for q in data if str(q).strip()]
    if not queries:
        raise ValidationError("query list must contain at least one non-empty string")
    return queries


def _build_piece_drafts(data: Any) -> list[PieceDraft]:
    if not isinstance(data, list):
        raise ValidationError("expected a JSON array of memory pieces")
    drafts = []
    for i, raw in enumerate(data):
        if not isinstance(raw, dict):
            raise ValidationError(f"pieces[{i}] is not an object")
        owner = str(raw.get("owner", "")).strip().lower()
        category = str(raw.get("category", "")).strip().lower()
        statement = str(raw.get("statement", "")).strip()
        if owner not in PIECE_OWNERS:
            raise ValidationError(f"pieces[{i}].owner must be one of {PIECE_OWNERS}")
        if category not in PIECE_CATEGORIES:
            raise ValidationError(f"pieces[{i}].category must be one of {PIECE_CATEGORIES}")
        if not statement:
            raise ValidationError(f"pieces[{i}].statement must be non-empty")
        drafts.append(PieceDraft(owner=owner, category=category, statement=statement))
    return drafts


def _build_verdict(data: Any) -> dict:
    _require_mapping(data)
    if "coverage" not in data:
        raise KeyError("coverage")
    raw_coverage = data["coverage"]
    if not isinstance(raw_coverage, dict):
        raise ValidationError("coverage must be an object of item-id -> bool")
    coverage = {}
    for key, value in raw_coverage.items():
        if isinstance(value, bool):
            coverage[str(key)] = value
        elif isinstance(value, str) and value.strip().lower() in ("true", "false"):
            coverage[str(key)] = value.strip().lower() == "true"
        else:
            raise ValidationError(f"coverage[{key!r}] is not a boolean")
    return {"coverage": coverage, "missing_summary": str(data.get("missing_summary", ""))}


def _require_mapping(data: Any) -> None:
    if not isinstance(data, dict):
        raise ValidationError("expected a JSON object")


def _identity(value: Any) -> Any:
    return value


SCHEMAS: dict[str, Schema] = {
    "self_state.v1": Schema("self_state.v1", dict, _build_self_state,
                            lambda s: s.to_dict()),
    "other_state.v1": Schema("other_state.v1", dict, _build_other_state,
                             lambda s: s.to_dict()),
    "query_list.v1": Schema("query_list.v1", list, _build_query_list, _identity),
    "memory_pieces.v1": Schema("memory_pieces.v1", list, _build_piece_drafts,
                               lambda drafts: [d.to_dict() for d in drafts]),
    "rethink_verdict.v1": Schema("rethink_verdict.v1", dict, _build_verdict, _identity),
}


def strip_code_fences(text: str) -> str:
    stripped = text.strip()
    if stripped.startswith("```"):
        first_newline = stripped.find("\n")
        if first_newline != -1:
            stripped = stripped[first_newline + 1:]
        if stripped.rstrip().endswith("```"):
            stripped = stripped.rstrip()[:-3]
    return stripped.strip()


def extract_balanced(text: str, opener: str) -> str | None:
    """Return the first balanced JSON value starting at ``opener``.

    Tracks string literals and escapes so braces inside strings do not
    confuse the scan.
    """
    closer = {"{": "}", "[": "]"}[opener]
    start = text.find(opener)
    if start == -1:
        return None
    depth = 0
    in_string = False
    escaped = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch == opener:
            depth += 1
        elif ch == closer:
            depth -= 1
            if depth == 0:
                return text[start:i + 1]
    return None


def parse_structured(text: str, schema_id: str):
    """Parse model output against a registered schema, repairing once."""
    if schema_id not in SCHEMAS:
        raise SchemaViolation(schema_id, ["unknown schema"])
    schema = SCHEMAS[schema_id]
    candidate: Any = None
    try:
        candidate = json.loads(text)
    except json.JSONDecodeError:
        candidate = None
    if candidate is None or not isinstance(candidate, schema.root):
        repaired = strip_code_fences(text)
        opener = "{" if schema.root is dict else "["
        balanced = extract_balanced(repaired, opener)
        if balanced is not None:
            try:
                candidate = json.loads(balanced)
            except json.JSONDecodeError:
                candidate = None
    if candidate is None:
        raise SchemaViolation(schema_id, ["output is not parseable JSON"])
    try:
        return schema.build(candidate)
    except KeyError as exc:
        raise SchemaViolation(schema_id, [f"missing field: {exc.args[0]}"]) from exc
    except (ValidationError, ValueError, TypeError) as exc:
        raise SchemaViolation(schema_id, [str(exc)]) from exc


def serialize_structured(value: Any, schema_id: str) -> str:
    """Canonical JSON for a structured value; inverse of ``parse_structured``."""
    schema = SCHEMAS[schema_id]
    return json.dumps(schema.serialize(value), separators=(",", ":"))
