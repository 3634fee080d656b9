"""Command-line interface: serve, memory tools, evaluation tools."""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click

from .config import EngineConfig
from .conversation import load_persona, messages_from_jsonl
from .evalharness import (aggregate_ratings, build_sets, export_plot_data,
                          parse_ratings_csv, sample_windows, samples_to_jsonl)
from .memory import MemoryStore
from .providers import RemoteConfig, RemoteProvider, ScriptedProvider, load_script_file


@click.group()
def main():
    """Anthropomorphic conversation engine."""


def _load_personas(persona_dir: Path) -> dict:
    personas = {}
    for path in sorted(persona_dir.glob("*.json")):
        if path.name.endswith(".memory.json"):
            continue
        persona = load_persona(path.read_text(encoding="utf-8"))
        personas[persona.id] = persona
    return personas


def _load_seed_memory(persona_dir: Path) -> dict:
    """Optional per-persona seeded agent memory: <persona_id>.memory.jsonl."""
    seeds = {}
    for path in sorted(persona_dir.glob("*.memory.jsonl")):
        persona_id = path.name[:-len(".memory.jsonl")]
        entries = []
        for line in path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                data = json.loads(line)
                entries.append((data.get("category", "fact"), data["statement"]))
        seeds[persona_id] = entries
    return seeds


@main.command()
@click.option("--port", default=8080, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--data-dir", default="./data", show_default=True,
              type=click.Path(path_type=Path))
@click.option("--persona-dir", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--provider", "provider_kind", default="scripted", show_default=True,
              type=click.Choice(["scripted", "remote"]))
@click.option("--scripts", type=click.Path(exists=True, path_type=Path),
              help="Script file (JSONL of entries) for the scripted provider.")
@click.option("--provider-config", type=click.Path(exists=True, path_type=Path),
              help="JSON config for the remote provider (endpoint, model, ...).")
@click.option("--knowledge-dir", type=click.Path(exists=True, path_type=Path),
              help="Directory of .txt documents used as the offline knowledge source.")
@click.option("--seed", default=None, type=int,
              help="Loop rng seed; overrides the config file's loop.rng_seed.")
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path),
              help="Engine config JSON (always_quick, loop.continuation_probability, "
                   "loop.max_analytical_messages, loop.seed_mode, ...).")
def serve(port, host, data_dir, persona_dir, provider_kind, scripts,
          provider_config, knowledge_dir, seed, config_path):
    """Run the session service."""
    import uvicorn

    from .knowledge import OfflineDirectorySource
    from .orchestrator import Engine
    from .service import create_app

    personas = _load_personas(persona_dir)
    if not personas:
        raise click.ClickException(f"no persona documents found in {persona_dir}")
    if provider_kind == "scripted":
        entries = load_script_file(scripts.read_text(encoding="utf-8")) if scripts else []
        provider = ScriptedProvider(entries)
    else:
        if provider_config:
            config = RemoteConfig.from_dict(
                json.loads(provider_config.read_text(encoding="utf-8")))
        else:
            endpoint = os.environ.get("ANIMA_PROVIDER_ENDPOINT")
            model = os.environ.get("ANIMA_PROVIDER_MODEL")
            if not endpoint or not model:
                raise click.ClickException(
                    "remote provider needs --provider-config or "
                    "ANIMA_PROVIDER_ENDPOINT / ANIMA_PROVIDER_MODEL")
            config = RemoteConfig(endpoint=endpoint, model=model)
        provider = RemoteProvider(config)
    sources = [OfflineDirectorySource(knowledge_dir)] if knowledge_dir else []
    if config_path:
        engine_config = EngineConfig.from_dict(
            json.loads(config_path.read_text(encoding="utf-8")))
    else:
        engine_config = EngineConfig()
    if seed is not None:
        engine_config = engine_config.with_seed(seed)
    engine = Engine(
        provider=provider,
        personas=personas,
        data_dir=data_dir,
        config=engine_config,
        sources=sources,
        seed_memory=_load_seed_memory(persona_dir),
    )
    app = create_app(engine)
    click.echo(f"serving {len(personas)} persona(s) on {host}:{port}")
    uvicorn.run(app, host=host, port=port, log_level="warning")


@main.group()
def memory():
    """Inspect or maintain a session's memory store."""


@memory.command("inspect")
@click.argument("session_id")
@click.option("--data-dir", default="./data", show_default=True,
              type=click.Path(path_type=Path))
def memory_inspect(session_id, data_dir):
    store = MemoryStore(path=Path(data_dir) / "memory" / f"{session_id}.jsonl")
    if not len(store):
        click.echo("no memory pieces")
        return
    for piece in store.all_pieces():
        flag = f" (superseded by {piece.superseded_by})" if piece.superseded_by else ""
        click.echo(f"{piece.id} [{piece.owner}/{piece.category}] "
                   f"turn={piece.source_turn}: {piece.statement}{flag}")


@memory.command("consolidate")
@click.argument("session_id")
@click.option("--data-dir", default="./data", show_default=True,
              type=click.Path(path_type=Path))
def memory_consolidate(session_id, data_dir):
    store = MemoryStore(path=Path(data_dir) / "memory" / f"{session_id}.jsonl")
    report = store.consolidate()
    click.echo(f"merged={report.merged} conflicts_resolved={report.conflicts_resolved}")


@main.group()
def eval():
    """Evaluation-protocol tooling: sampling, set assembly, rating aggregation."""


@eval.command("sample")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--width", default=20, show_default=True, type=int)
@click.option("--stride", default=1, show_default=True, type=int)
@click.option("--out", "out_path", type=click.Path(path_type=Path))
def eval_sample(in_path, width, stride, out_path):
    """Segment a transcript into sliding-window samples."""
    messages = messages_from_jsonl(in_path.read_text(encoding="utf-8"))
    samples = sample_windows(messages, width=width, stride=stride)
    payload = samples_to_jsonl(samples)
    if out_path:
        out_path.write_text(payload, encoding="utf-8")
        click.echo(f"{len(samples)} samples -> {out_path}")
    else:
        sys.stdout.write(payload)


@eval.command("sets")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--per-set", default=5, show_default=True, type=int)
@click.option("--n-sets", default=30, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", "out_path", type=click.Path(path_type=Path))
def eval_sets(in_path, per_set, n_sets, seed, out_path):
    """Draw random test sets from a sample pool."""
    from .evalharness import Sample

    samples = []
    for line in in_path.read_text(encoding="utf-8").splitlines():
        if line.strip():
            data = json.loads(line)
            from .conversation import Message

            samples.append(Sample(
                id=data["id"],
                source_session=data["source_session"],
                start_index=int(data["start_index"]),
                messages=tuple(Message.from_dict(m) for m in data["messages"]),
            ))
    sets = build_sets(samples, per_set=per_set, n_sets=n_sets, seed=seed)
    payload = json.dumps(
        [{"set_index": i, "sample_ids": [s.id for s in group]}
         for i, group in enumerate(sets)], indent=2) + "\n"
    if out_path:
        out_path.write_text(payload, encoding="utf-8")
        click.echo(f"{len(sets)} sets -> {out_path}")
    else:
        sys.stdout.write(payload)


@eval.command("aggregate")
@click.option("--ratings", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--out", "out_path", type=click.Path(path_type=Path),
              help="Write plot-ready CSV (statement,score,count) here.")
def eval_aggregate(ratings, out_path):
    """Aggregate questionnaire ratings into per-statement stats."""
    records = parse_ratings_csv(ratings.read_text(encoding="utf-8"))
    stats = aggregate_ratings(records)
    for statement_index in sorted(stats):
        entry = stats[statement_index]
        click.echo(f"statement {statement_index}: n={entry.count} "
                   f"mean={entry.mean:.3f} histogram={entry.histogram}")
    if out_path:
        out_path.write_text(export_plot_data(stats), encoding="utf-8")
        click.echo(f"plot data -> {out_path}")


if __name__ == "__main__":
    main()
