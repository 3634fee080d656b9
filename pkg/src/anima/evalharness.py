"""Two-phase evaluation mechanics.

Phase 1 material: transcripts are segmented into fixed-width sliding-window
samples and bundled into randomly drawn test sets. Phase 2 material: the
questionnaire statements ship as data, and collected ratings (1..7 per
statement) are ingested from CSV and aggregated into per-statement stats.
All pure functions; the CLI drives them in batch.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

from .conversation import Message
from .errors import InsufficientSamples, ScoreOutOfRange, ValidationError

import random

N_STATEMENTS = 8
SCORE_MIN = 1
SCORE_MAX = 7


@dataclass(frozen=True)
class Sample:
    id: str
    source_session: str
    start_index: int
    messages: tuple[Message, ...]

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "source_session": self.source_session,
            "start_index": self.start_index,
            "messages": [m.to_dict() for m in self.messages],
        }


@dataclass(frozen=True)
class RatingRecord:
    evaluator_id: str
    set_id: str
    statement_index: int
    score: int

    def __post_init__(self):
        if not 1 <= self.statement_index <= N_STATEMENTS:
            raise ValidationError(
                f"statement index must be 1..{N_STATEMENTS}, got {self.statement_index}")
        if not SCORE_MIN <= self.score <= SCORE_MAX:
            raise ScoreOutOfRange(
                f"score must be {SCORE_MIN}..{SCORE_MAX}, got {self.score}")


def sample_windows(messages: list[Message], width: int = 20,
                   stride: int = 1) -> list[Sample]:
    """Contiguous fixed-width windows at offsets 0, stride, 2*stride, ...

    Count is ``floor((M - width) / stride) + 1`` when M >= width, else 0.
    """
    if width < 1 or stride < 1:
        raise ValidationError("width and stride must be >= 1")
    samples = []
    session = messages[0].session_id if messages else ""
    offset = 0
    while offset + width <= len(messages):
        chunk = tuple(messages[offset:offset + width])
        samples.append(Sample(
            id=f"{session}-w{offset:05d}",
            source_session=session,
            start_index=offset,
            messages=chunk,
        ))
        offset += stride
    return samples


def build_sets(samples: list[Sample], per_set: int = 5, n_sets: int = 30,
               seed: int = 0) -> list[list[Sample]]:
    """Draw ``n_sets`` independent sets of ``per_set`` samples.

    Within a set samples are drawn without replacement; across sets draws are
    independent, so a sample may appear in several sets. Deterministic under
    the seed.
    """
    if per_set < 1 or n_sets < 1:
        raise ValidationError("per_set and n_sets must be >= 1")
    if len(samples) < per_set:
        raise InsufficientSamples(
            f"need at least {per_set} samples, have {len(samples)}")
    rng = random.Random(seed)
    return [rng.sample(samples, per_set) for _ in range(n_sets)]


@dataclass
class StatementStats:
    statement_index: int
    count: int = 0
    total: int = 0
    histogram: dict[int, int] = field(
        default_factory=lambda: {s: 0 for s in range(SCORE_MIN, SCORE_MAX + 1)})

    @property
    def mean(self) -> float:
        return self.total / self.count if self.count else 0.0

    def to_dict(self) -> dict:
        return {
            "statement": self.statement_index,
            "count": self.count,
            "mean": self.mean,
            "histogram": dict(self.histogram),
        }


def aggregate_ratings(records: list[RatingRecord]) -> dict[int, StatementStats]:
    """Exact per-statement mean, count and score histogram."""
    stats: dict[int, StatementStats] = {}
    for record in records:
        entry = stats.setdefault(record.statement_index,
                                 StatementStats(record.statement_index))
        entry.count += 1
        entry.total += record.score
        entry.histogram[record.score] += 1
    return stats


def parse_ratings_csv(text: str) -> list[RatingRecord]:
    """Ingest the ratings CSV: evaluator_id,set_id,statement,score."""
    reader = csv.DictReader(io.StringIO(text))
    records = []
    for row in reader:
        records.append(RatingRecord(
            evaluator_id=row["evaluator_id"],
            set_id=row["set_id"],
            statement_index=int(row["statement"]),
            score=int(row["score"]),
        ))
    return records


def export_plot_data(stats: dict[int, StatementStats]) -> str:
    """CSV of ``statement,score,count`` with every score bin present."""
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(["statement", "score", "count"])
    for statement_index in sorted(stats):
        entry = stats[statement_index]
        for score_value in range(SCORE_MIN, SCORE_MAX + 1):
            writer.writerow([statement_index, score_value,
                             entry.histogram[score_value]])
    return out.getvalue()


def import_plot_data(text: str) -> dict[int, StatementStats]:
    """Inverse of export_plot_data, for round-trip checks."""
    stats: dict[int, StatementStats] = {}
    reader = csv.DictReader(io.StringIO(text))
    for row in reader:
        statement_index = int(row["statement"])
        score_value = int(row["score"])
        count = int(row["count"])
        entry = stats.setdefault(statement_index, StatementStats(statement_index))
        entry.histogram[score_value] = count
        entry.count += count
        entry.total += score_value * count
    return stats


def samples_to_jsonl(samples: list[Sample]) -> str:
    return "".join(json.dumps(s.to_dict(), separators=(",", ":")) + "\n" for s in samples)


def questionnaire_statements() -> list[str]:
    from importlib import resources

    raw = resources.files("anima").joinpath("data", "questionnaire.json").read_text(
        encoding="utf-8")
    return json.loads(raw)["statements"]
