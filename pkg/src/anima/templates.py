"""Prompt template library.

Templates are data, not code: one ``<module_tag>.txt`` file per generation
tag, with ``{placeholder}`` substitution. The packaged defaults can be
overridden by pointing the engine at another directory, so instruction tuning
never requires a code change.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from .conversation import Persona
from .providers import ModuleTag


class _Defaults(dict):
    def __missing__(self, key):
        return "{" + key + "}"


class TemplateLibrary:
    def __init__(self, directory: Path | None = None):
        self._directory = directory
        self._cache: dict[ModuleTag, str] = {}

    def raw(self, tag: ModuleTag) -> str:
        if tag not in self._cache:
            name = f"{tag.value}.txt"
            if self._directory is not None:
                text = (self._directory / name).read_text(encoding="utf-8")
            else:
                text = resources.files("anima").joinpath("templates", name).read_text(
                    encoding="utf-8")
            self._cache[tag] = text
        return self._cache[tag]

    def render(self, tag: ModuleTag, persona: Persona | None = None, **values) -> str:
        if persona is not None:
            values.setdefault("persona", persona.name)
            values.setdefault("persona_name", persona.name)
            values.setdefault("identity", persona.identity)
            values.setdefault("thinking_mode", persona.thinking_mode)
            values.setdefault("language_style", persona.language_style)
            values.setdefault("interests", ", ".join(persona.interests))
            values.setdefault(
                "traits", "; ".join(f"{t.name}: {t.description}" for t in persona.traits))
        return self.raw(tag).format_map(_Defaults(values)).strip()
