"""Prompt templates shipped as plain-text data files.

Placeholders are `{name}`. Only names passed to `render` are substituted, so
literal braces such as `\\boxed{42}` survive untouched.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path
from typing import Mapping

from seqmem.errors import ConfigurationError

TASK_TEMPLATES = ("aime", "math500", "mmlu_pro", "humaneval", "alfworld", "apibench")


def render(template: str, **values: str) -> str:
    out = template
    for name, value in values.items():
        out = out.replace("{" + name + "}", value)
    return out.strip()


def _packaged(name: str) -> str:
    return resources.files("seqmem.policies").joinpath("templates", f"{name}.txt").read_text("utf-8")


class Templates:
    """Named templates: packaged defaults, overridden by a directory or mapping."""

    def __init__(self, overrides: Mapping[str, str] | None = None, directory: str | Path | None = None):
        self._cache: dict[str, str] = {}
        if directory is not None:
            for p in Path(directory).glob("*.txt"):
                self._cache[p.stem] = p.read_text("utf-8")
        if overrides:
            self._cache.update(overrides)

    def __getitem__(self, name: str) -> str:
        if name not in self._cache:
            try:
                self._cache[name] = _packaged(name)
            except FileNotFoundError:
                raise ConfigurationError(f"no prompt template named {name!r}") from None
        return self._cache[name]


def task_template(name: str) -> str:
    """Benchmark task prompt by short name (e.g. "math500") or file path."""
    if name in TASK_TEMPLATES:
        return _packaged(f"task_{name}")
    path = Path(name)
    if path.is_file():
        return path.read_text("utf-8")
    raise ConfigurationError(f"unknown task template {name!r}; packaged: {', '.join(TASK_TEMPLATES)}")
