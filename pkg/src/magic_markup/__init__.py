"""Annotations kept outside a document, re-anchored after the document changes."""

from .model import (
    Annotation,
    DocumentView,
    MappedAnnotation,
    Outcome,
    TextSegment,
    compatible,
    load_view,
    save_view,
    segment_text,
)
from .retag import RetagAnswer, RetagConfig, retag, retag_baseline

__version__ = "0.1.0"

__all__ = [
    "Annotation",
    "DocumentView",
    "MappedAnnotation",
    "Outcome",
    "RetagAnswer",
    "RetagConfig",
    "TextSegment",
    "compatible",
    "load_view",
    "retag",
    "retag_baseline",
    "save_view",
    "segment_text",
]
