"""Prompt templates, stored as editable text assets (``string.Template`` syntax)."""

from __future__ import annotations

from functools import lru_cache
from importlib import resources
from string import Template


@lru_cache(maxsize=None)
def load(name: str) -> Template:
    text = resources.files(__name__).joinpath(f"{name}.txt").read_text(encoding="utf-8")
    return Template(text.removesuffix("\n"))


def render(name: str, **values: str) -> str:
    return load(name).substitute(values)
