"""Text points, segments, annotations, document views, and the sidecar file.

All indices count Unicode scalar values (Python ``str`` indices), never
bytes. A segment is half-open: it covers ``doc[start:end]``.
"""

from __future__ import annotations

import enum
import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional

import jsonschema

from .errors import (
    AnchorMismatch,
    IncompatiblePoint,
    InvertedRange,
    SchemaError,
    StaleSidecar,
    ValidationError,
)

SIDECAR_VERSION = 1
SIDECAR_SUFFIX = ".annotations.json"
DEFAULT_DIGEST = "sha256"

# A text point is just a character index; kept as a plain int.
TextPoint = int


def compatible(tp: TextPoint, doc: str) -> bool:
    """True iff ``tp`` is a usable position in ``doc`` (end-of-document included)."""
    return 0 <= tp <= len(doc)


def segment_text(doc: str, start: TextPoint, end: TextPoint) -> str:
    for tp in (start, end):
        if not compatible(tp, doc):
            raise IncompatiblePoint(f"text point {tp} is incompatible with a document of length {len(doc)}")
    if start > end:
        raise InvertedRange(f"start {start} > end {end}")
    return doc[start:end]


@dataclass(frozen=True)
class TextSegment:
    start: int
    end: int
    anchor_text: str

    def __post_init__(self):
        if self.start < 0:
            raise IncompatiblePoint(f"negative text point {self.start}")
        if self.start > self.end:
            raise InvertedRange(f"start {self.start} > end {self.end}")
        if len(self.anchor_text) != self.end - self.start:
            raise ValidationError(
                f"anchor text of length {len(self.anchor_text)} cannot span [{self.start}, {self.end})"
            )

    @classmethod
    def of(cls, doc: str, start: int, end: int) -> "TextSegment":
        """Build the segment ``[start, end)`` of ``doc``, snapshotting its text."""
        return cls(start, end, segment_text(doc, start, end))

    @property
    def is_point(self) -> bool:
        return self.start == self.end

    def bound_to(self, doc: str) -> bool:
        return self.end <= len(doc) and doc[self.start:self.end] == self.anchor_text

    def shifted(self, offset: int) -> "TextSegment":
        return TextSegment(self.start + offset, self.end + offset, self.anchor_text)

    def to_dict(self) -> dict:
        return {"start": self.start, "end": self.end, "anchor_text": self.anchor_text}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "TextSegment":
        return cls(d["start"], d["end"], d["anchor_text"])


@dataclass(frozen=True)
class Annotation:
    id: str
    segment: TextSegment
    content: str = ""
    intent: Optional[str] = None
    metadata: Mapping[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "start": self.segment.start,
            "end": self.segment.end,
            "anchor_text": self.segment.anchor_text,
            "content": self.content,
            "intent": self.intent,
            "metadata": dict(self.metadata),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Annotation":
        return cls(
            id=d["id"],
            segment=TextSegment(d["start"], d["end"], d["anchor_text"]),
            content=d["content"],
            intent=d.get("intent"),
            metadata=dict(d.get("metadata") or {}),
        )


def digest_text(doc: str, algo: str = DEFAULT_DIGEST) -> str:
    return hashlib.new(algo, doc.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class DocumentView:
    document: str
    annotations: tuple[Annotation, ...] = ()
    digest_algo: str = DEFAULT_DIGEST

    def __post_init__(self):
        # accept any iterable but store a tuple so views stay immutable
        object.__setattr__(self, "annotations", tuple(self.annotations))

    @property
    def doc_digest(self) -> str:
        return digest_text(self.document, self.digest_algo)

    def get(self, annotation_id: str) -> Annotation:
        for a in self.annotations:
            if a.id == annotation_id:
                return a
        raise KeyError(annotation_id)

    def with_annotations(self, annotations: Iterable[Annotation]) -> "DocumentView":
        return replace(self, annotations=tuple(annotations))


class Outcome(str, enum.Enum):
    UNCHANGED = "Unchanged"
    MOVED = "Moved"
    ORPHANED = "Orphaned"
    FAILED = "Failed"
    AMBIGUOUS = "Ambiguous"

    @property
    def placed(self) -> bool:
        return self not in (Outcome.ORPHANED, Outcome.FAILED)


@dataclass(frozen=True)
class MappedAnnotation:
    """An annotation after re-tagging against an updated document.

    ``source`` is the annotation as it was on the old document. ``segment``
    is its new anchor, or None when the outcome is Orphaned or Failed.
    """

    source: Annotation
    segment: Optional[TextSegment]
    outcome: Outcome
    diagnostics: str = ""

    def __post_init__(self):
        if self.outcome.placed != (self.segment is not None):
            raise ValidationError(f"outcome {self.outcome.value} inconsistent with segment {self.segment}")

    @property
    def annotation(self) -> Optional[Annotation]:
        if self.segment is None:
            return None
        return replace(self.source, segment=self.segment)


def validate_view(view: DocumentView) -> None:
    seen: set[str] = set()
    for a in view.annotations:
        if a.id in seen:
            raise ValidationError(f"duplicate annotation id {a.id!r}")
        seen.add(a.id)
        if not a.segment.bound_to(view.document):
            raise AnchorMismatch(
                f"annotation {a.id!r}: segment [{a.segment.start}, {a.segment.end}) "
                f"does not hold {a.segment.anchor_text!r} in the document"
            )


# -- sidecar persistence ------------------------------------------------------

SIDECAR_SCHEMA = {
    "type": "object",
    "required": ["version", "document", "digest", "annotations"],
    "properties": {
        "version": {"const": SIDECAR_VERSION},
        "document": {"type": "string"},
        "digest": {
            "type": "object",
            "required": ["algo", "hex"],
            "properties": {"algo": {"type": "string"}, "hex": {"type": "string"}},
        },
        "annotations": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "start", "end", "anchor_text", "content", "intent", "metadata"],
                "properties": {
                    "id": {"type": "string"},
                    "start": {"type": "integer", "minimum": 0},
                    "end": {"type": "integer", "minimum": 0},
                    "anchor_text": {"type": "string"},
                    "content": {"type": "string"},
                    "intent": {"type": ["string", "null"]},
                    "metadata": {"type": "object"},
                },
            },
        },
    },
}


def sidecar_path_for(document_path: str | os.PathLike) -> Path:
    p = Path(document_path)
    return p.with_name(p.name + SIDECAR_SUFFIX)


def read_text(path: str | os.PathLike) -> str:
    # newline="" keeps CR characters so offsets match the bytes on disk
    with open(path, encoding="utf-8", newline="") as f:
        return f.read()


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix="." + path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def read_sidecar(sidecar_path: str | os.PathLike) -> dict:
    """Parse and schema-check a sidecar without looking at the document."""
    try:
        data = json.loads(read_text(sidecar_path))
    except json.JSONDecodeError as e:
        raise SchemaError(f"{sidecar_path}: not valid JSON ({e})") from e
    try:
        jsonschema.validate(data, SIDECAR_SCHEMA)
    except jsonschema.ValidationError as e:
        raise SchemaError(f"{sidecar_path}: {e.message}") from e
    if data["digest"]["algo"] not in hashlib.algorithms_available:
        raise SchemaError(f"{sidecar_path}: unknown digest algorithm {data['digest']['algo']!r}")
    return data


def load_view(document_path: str | os.PathLike, sidecar_path: str | os.PathLike | None = None) -> DocumentView:
    """Load a document together with its sidecar annotations.

    Raises StaleSidecar when the document changed since the sidecar was
    written (the annotations must be re-tagged, not trusted), and
    AnchorMismatch when a stored anchor text disagrees with the document.
    """
    if sidecar_path is None:
        sidecar_path = sidecar_path_for(document_path)
    document = read_text(document_path)
    data = read_sidecar(sidecar_path)
    algo = data["digest"]["algo"]
    if digest_text(document, algo) != data["digest"]["hex"]:
        raise StaleSidecar(f"{sidecar_path} was written for a different version of {document_path}")
    try:
        annotations = tuple(Annotation.from_dict(a) for a in data["annotations"])
    except (IncompatiblePoint, InvertedRange, ValidationError) as e:
        raise SchemaError(f"{sidecar_path}: {e}") from e
    view = DocumentView(document, annotations, digest_algo=algo)
    try:
        validate_view(view)
    except AnchorMismatch:
        raise
    except ValidationError as e:
        raise SchemaError(f"{sidecar_path}: {e}") from e
    return view


def view_to_dict(view: DocumentView, document_name: str) -> dict:
    return {
        "version": SIDECAR_VERSION,
        "document": document_name,
        "digest": {"algo": view.digest_algo, "hex": view.doc_digest},
        "annotations": [a.to_dict() for a in view.annotations],
    }


def save_view(
    view: DocumentView,
    sidecar_path: str | os.PathLike,
    document_path: str | os.PathLike | None = None,
) -> None:
    """Validate ``view`` and write it atomically to ``sidecar_path``.

    The sidecar records the document path relative to the sidecar's
    directory; by default the document is assumed to sit next to the
    sidecar under the name the sidecar suffix was derived from.
    """
    validate_view(view)
    sidecar_path = Path(sidecar_path)
    if document_path is None:
        name = sidecar_path.name
        document_name = name[: -len(SIDECAR_SUFFIX)] if name.endswith(SIDECAR_SUFFIX) else name
    else:
        document_name = os.path.relpath(Path(document_path).resolve(), sidecar_path.resolve().parent)
    text = json.dumps(view_to_dict(view, document_name), indent=2, ensure_ascii=False) + "\n"
    atomic_write_text(sidecar_path, text)
