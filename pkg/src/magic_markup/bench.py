"""Synthetic "Tagged Code Updates" benchmark generation and validation.

Each case comes from a chain of single-shot prompts, run strictly in order:
problem description, solution code, snippet description, delimited code,
update description, updated code. Cases are independent of each other and
may be generated concurrently.
"""

from __future__ import annotations

import enum
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

from . import prompts
from .client import ChatClient, ChatRequest, ChatResponse, Usage
from .errors import ClientError, DelimiterCountError, GenerationError, MarkupError, SchemaError
from .model import TextSegment, atomic_write_text, read_text
from .retag import DEFAULT_DELIMITER, choose_delimiter, strip_delimiters
from .textloc import MatchMode, find_matches, normalize_ws

logger = logging.getLogger(__name__)

SUITE_VERSION = 1

LANGUAGES = ("Python", "Javascript", "JSX", "Racket", "C")
SNIPPET_TYPES = (
    "constant",
    "subexpression",
    "variable assignment",
    "loop body or code block",
    "loop condition",
    "function call",
)
STAGES = ("problem", "solution", "snippet", "delimit", "update_description", "update")

PARTIAL_UPDATE_SENTENCE = " Describe a state where this code change has only been partially applied."


@dataclass(frozen=True)
class GenSpec:
    language: str
    snippet_type: str
    partial_update: bool = False
    delimiter: str = DEFAULT_DELIMITER

    def __post_init__(self):
        if self.language not in LANGUAGES:
            raise ValueError(f"unknown language {self.language!r}; expected one of {LANGUAGES}")
        if self.snippet_type not in SNIPPET_TYPES:
            raise ValueError(f"unknown snippet type {self.snippet_type!r}; expected one of {SNIPPET_TYPES}")
        if len(self.delimiter) != 1:
            raise ValueError("delimiter must be a single character")

    def to_dict(self) -> dict:
        return {
            "language": self.language,
            "snippet_type": self.snippet_type,
            "partial_update": self.partial_update,
            "delimiter": self.delimiter,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "GenSpec":
        return cls(
            d["language"],
            d["snippet_type"],
            bool(d.get("partial_update", False)),
            d.get("delimiter", DEFAULT_DELIMITER),
        )


class RejectionKind(str, enum.Enum):
    MISSING_DELIMITERS = "MissingDelimiters"
    SEGMENT_REMOVED = "SegmentRemoved"
    DUPLICATE_SEGMENTS = "DuplicateSegments"
    GENERATION_ERROR = "GenerationError"


@dataclass(frozen=True)
class RejectionReason:
    kind: RejectionKind
    note: str = ""


class CaseRejected(MarkupError):
    def __init__(self, reason: RejectionReason):
        super().__init__(f"{reason.kind.value}: {reason.note}")
        self.reason = reason


@dataclass(frozen=True)
class BenchmarkCase:
    id: str
    spec: GenSpec
    problem_description: str
    original_marked: str
    updated_marked: str
    snippet_description: str = ""
    update_description: str = ""
    metadata: Mapping[str, Any] = field(default_factory=dict)

    @property
    def delimiter(self) -> str:
        return self.spec.delimiter

    @property
    def original(self) -> tuple[str, TextSegment]:
        return strip_delimiters(self.original_marked, self.delimiter)

    @property
    def updated(self) -> tuple[str, TextSegment]:
        return strip_delimiters(self.updated_marked, self.delimiter)

    @property
    def original_clean(self) -> str:
        return self.original[0]

    @property
    def gold_original_segment(self) -> TextSegment:
        return self.original[1]

    @property
    def updated_clean(self) -> str:
        return self.updated[0]

    @property
    def gold_updated_segment(self) -> TextSegment:
        return self.updated[1]

    def to_dict(self) -> dict:
        original_clean, gold_original = self.original
        updated_clean, gold_updated = self.updated
        return {
            "id": self.id,
            "spec": self.spec.to_dict(),
            "problem_description": self.problem_description,
            "snippet_description": self.snippet_description,
            "update_description": self.update_description,
            "original_marked": self.original_marked,
            "updated_marked": self.updated_marked,
            "original_clean": original_clean,
            "updated_clean": updated_clean,
            "gold_original": gold_original.to_dict(),
            "gold_updated": gold_updated.to_dict(),
            "metadata": dict(self.metadata),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "BenchmarkCase":
        try:
            case = cls(
                id=d["id"],
                spec=GenSpec.from_dict(d["spec"]),
                problem_description=d["problem_description"],
                original_marked=d["original_marked"],
                updated_marked=d["updated_marked"],
                snippet_description=d.get("snippet_description", ""),
                update_description=d.get("update_description", ""),
                metadata=dict(d.get("metadata") or {}),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise SchemaError(f"malformed benchmark case: {e}") from e
        # stored clean texts are for auditing; they must agree with the marked ones
        try:
            derived = case.to_dict()
        except DelimiterCountError as e:
            raise SchemaError(f"case {case.id}: {e}") from e
        for key in ("original_clean", "updated_clean", "gold_original", "gold_updated"):
            if key in d and d[key] != derived[key]:
                raise SchemaError(f"case {case.id}: stored {key} disagrees with the marked text")
        return case


@dataclass
class Suite:
    name: str
    cases: list[BenchmarkCase] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"version": SUITE_VERSION, "name": self.name, "cases": [c.to_dict() for c in self.cases]}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any], name: str = "") -> "Suite":
        if not isinstance(d, Mapping) or d.get("version") != SUITE_VERSION:
            raise SchemaError(f"unsupported suite version {d.get('version') if isinstance(d, Mapping) else d!r}")
        if not isinstance(d.get("cases"), list):
            raise SchemaError("suite has no case list")
        return cls(d.get("name") or name, [BenchmarkCase.from_dict(c) for c in d["cases"]])

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"

    def save(self, path: str | os.PathLike) -> None:
        atomic_write_text(path, self.dumps())

    @classmethod
    def load(cls, path: str | os.PathLike) -> "Suite":
        try:
            data = json.loads(read_text(path))
        except json.JSONDecodeError as e:
            raise SchemaError(f"{path}: not valid JSON ({e})") from e
        return cls.from_dict(data, name=Path(path).stem)


# -- validation ----------------------------------------------------------------

def anchor_multiplicity(clean: str, seg: TextSegment) -> int:
    if not normalize_ws(seg.anchor_text):
        return 0
    return len(find_matches(clean, seg.anchor_text, MatchMode.NORMALIZED))


def validate_case(case: BenchmarkCase) -> Optional[RejectionReason]:
    """None when the case is acceptable, otherwise the single reason it is not.

    Duplicated anchors only reject a case when generation flagged the
    duplication; otherwise the multiplicity is left to human review.
    """
    try:
        original_clean, gold_original = case.original
    except DelimiterCountError as e:
        return RejectionReason(RejectionKind.MISSING_DELIMITERS, f"original code: {e}")
    try:
        updated_clean, gold_updated = case.updated
    except DelimiterCountError as e:
        return RejectionReason(RejectionKind.MISSING_DELIMITERS, f"updated code: {e}")
    if not gold_original.anchor_text:
        return RejectionReason(RejectionKind.GENERATION_ERROR, "original delimiters enclose nothing")
    if not normalize_ws(gold_updated.anchor_text) or case.metadata.get("segment_removed"):
        return RejectionReason(RejectionKind.SEGMENT_REMOVED, "the segment is gone from the updated code")
    if anchor_multiplicity(updated_clean, gold_updated) >= 2 and case.metadata.get("duplicated"):
        return RejectionReason(RejectionKind.DUPLICATE_SEGMENTS, "the updated anchor occurs more than once")
    return None


# -- generation ------------------------------------------------------------------

@dataclass(frozen=True)
class GeneratorConfig:
    """Per-stage model names; a missing stage uses ``default_model``."""

    stage_models: Mapping[str, str] = field(default_factory=dict)
    default_model: Optional[str] = None
    temperature: Optional[float] = None
    max_parallel: int = 4

    def model_for(self, stage: str) -> Optional[str]:
        return self.stage_models.get(stage, self.default_model)


class _Meter:
    """Client wrapper that totals usage and model latency for one case."""

    def __init__(self, inner: ChatClient):
        self.inner = inner
        self.usage = Usage()
        self.latency = 0.0

    def complete(self, req: ChatRequest) -> ChatResponse:
        resp = self.inner.complete(req)
        self.usage = self.usage + resp.usage
        self.latency += resp.latency_seconds
        return resp


def _ask(client: ChatClient, stage: str, text: str, cfg: GeneratorConfig) -> str:
    kwargs = {}
    model = cfg.model_for(stage)
    if model:
        kwargs["model_name"] = model
    resp = client.complete(ChatRequest(user_text=text, temperature=cfg.temperature, **kwargs))
    out = resp.text.strip("\n")
    if not out.strip():
        raise GenerationError(f"{stage} stage returned an empty response")
    return out


def strip_code_fence(text: str) -> str:
    lines = text.strip("\n").split("\n")
    if len(lines) >= 2 and lines[0].lstrip().startswith("```") and lines[-1].strip() == "```":
        return "\n".join(lines[1:-1])
    return text


def gen_problem(spec: GenSpec, client: ChatClient, cfg: GeneratorConfig = GeneratorConfig()) -> str:
    text = prompts.render("problem", LANGUAGE=spec.language, SNIPPET_TYPE=spec.snippet_type)
    return _ask(client, "problem", text, cfg)


def gen_solution(problem: str, spec: GenSpec, client: ChatClient, cfg: GeneratorConfig = GeneratorConfig()) -> str:
    text = prompts.render("solution", LANGUAGE=spec.language, problemDescription=problem)
    return strip_code_fence(_ask(client, "solution", text, cfg))


def gen_snippet_description(code: str, spec: GenSpec, client: ChatClient, cfg: GeneratorConfig = GeneratorConfig()) -> str:
    text = prompts.render("snippet", LANGUAGE=spec.language, SNIPPET_TYPE=spec.snippet_type, code=code)
    return _ask(client, "snippet", text, cfg)


def delimit_snippet(
    code: str,
    snippet_desc: str,
    spec: GenSpec,
    client: ChatClient,
    cfg: GeneratorConfig = GeneratorConfig(),
) -> str:
    if spec.delimiter in code:
        raise GenerationError(f"code already contains the delimiter {spec.delimiter!r}")
    text = prompts.render(
        "delimit",
        LANGUAGE=spec.language,
        SNIPPET_TYPE=spec.snippet_type,
        code=code,
        snippetDescription=snippet_desc,
        delimiter=spec.delimiter,
    )
    marked = strip_code_fence(_ask(client, "delimit", text, cfg))
    try:
        clean, seg = strip_delimiters(marked, spec.delimiter)
    except DelimiterCountError as e:
        raise CaseRejected(RejectionReason(RejectionKind.MISSING_DELIMITERS, f"delimited code: {e}")) from None
    if clean != code:
        raise CaseRejected(RejectionReason(RejectionKind.GENERATION_ERROR, "delimiting changed code outside the marks"))
    if not seg.anchor_text:
        raise CaseRejected(RejectionReason(RejectionKind.GENERATION_ERROR, "delimiters enclose nothing"))
    return marked


def gen_update_description(
    code_marked: str,
    spec: GenSpec,
    client: ChatClient,
    cfg: GeneratorConfig = GeneratorConfig(),
) -> str:
    text = prompts.render(
        "update_description",
        LANGUAGE=spec.language,
        codeWithSnippetDelimited=code_marked,
        partial=PARTIAL_UPDATE_SENTENCE if spec.partial_update else "",
    )
    return _ask(client, "update_description", text, cfg)


def update_prompt(problem: str, code_marked: str, snippet_desc: str, update_desc: str, spec: GenSpec) -> str:
    return prompts.render(
        "update",
        problemDescription=problem,
        codeWithSnippetDelimited=code_marked,
        delimiter=spec.delimiter,
        snippetType=spec.snippet_type,
        snippetDescription=snippet_desc,
        updateDescription=update_desc,
    )


def gen_updated_code(
    problem: str,
    code_marked: str,
    snippet_desc: str,
    update_desc: str,
    spec: GenSpec,
    client: ChatClient,
    cfg: GeneratorConfig = GeneratorConfig(),
) -> str:
    text = update_prompt(problem, code_marked, snippet_desc, update_desc, spec)
    updated = strip_code_fence(_ask(client, "update", text, cfg))
    try:
        strip_delimiters(updated, spec.delimiter)
    except DelimiterCountError as e:
        raise CaseRejected(RejectionReason(RejectionKind.MISSING_DELIMITERS, f"updated code: {e}")) from None
    return updated


def generate_case(
    spec: GenSpec,
    client: ChatClient,
    case_id: str,
    cfg: GeneratorConfig = GeneratorConfig(),
) -> BenchmarkCase:
    """Run every stage for one case. Raises CaseRejected on any failure."""
    meter = _Meter(client)
    metadata: dict[str, Any] = {}
    try:
        problem = gen_problem(spec, meter, cfg)
        code = gen_solution(problem, spec, meter, cfg)
        if spec.delimiter in code:
            spec = replace(spec, delimiter=choose_delimiter([code]))
            metadata["delimiter_reselected"] = True
        snippet_desc = gen_snippet_description(code, spec, meter, cfg)
        marked = delimit_snippet(code, snippet_desc, spec, meter, cfg)
        update_desc = gen_update_description(marked, spec, meter, cfg)
        updated = gen_updated_code(problem, marked, snippet_desc, update_desc, spec, meter, cfg)
    except (ClientError, GenerationError) as e:
        raise CaseRejected(RejectionReason(RejectionKind.GENERATION_ERROR, f"{type(e).__name__}: {e}")) from e

    metadata["usage"] = {"input_tokens": meter.usage.input_tokens, "output_tokens": meter.usage.output_tokens}
    metadata["model_latency_seconds"] = round(meter.latency, 6)
    case = BenchmarkCase(case_id, spec, problem, marked, updated, snippet_desc, update_desc, metadata)

    original_clean, gold_original = case.original
    updated_clean, gold_updated = case.updated
    before = anchor_multiplicity(original_clean, gold_original)
    after = anchor_multiplicity(updated_clean, gold_updated)
    if after >= 2:
        metadata["needs_review"] = True
        if after > before:
            metadata["duplicated"] = True

    reason = validate_case(case)
    if reason is not None:
        raise CaseRejected(reason)
    return case


@dataclass
class Rejection:
    case_id: str
    spec: GenSpec
    reason: RejectionReason

    def to_dict(self) -> dict:
        return {"id": self.case_id, "spec": self.spec.to_dict(), "reason": self.reason.kind.value, "note": self.reason.note}


@dataclass
class GenerationResult:
    suite: Suite
    rejections: list[Rejection]


def generate_suite(
    specs: Sequence[GenSpec],
    client: ChatClient,
    out_path: str | os.PathLike,
    rejections_path: str | os.PathLike | None = None,
    cfg: GeneratorConfig = GeneratorConfig(),
) -> GenerationResult:
    """Generate one case per spec, write the accepted ones as a suite file.

    Rejections go to a JSON-lines log next to the suite unless a path is
    given. Case ids follow spec order, so replayed runs are byte-identical.
    """
    out_path = Path(out_path)
    if rejections_path is None:
        rejections_path = out_path.with_name(out_path.stem + ".rejections.jsonl")

    def work(item):
        idx, spec = item
        case_id = f"case-{idx:03d}"
        t0 = time.perf_counter()
        try:
            case = generate_case(spec, client, case_id, cfg)
            return case
        except CaseRejected as e:
            logger.info("%s rejected: %s", case_id, e)
            return Rejection(case_id, spec, e.reason)
        finally:
            logger.info("%s generated in %.1fs", case_id, time.perf_counter() - t0)

    items = list(enumerate(specs, start=1))
    if cfg.max_parallel > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=cfg.max_parallel) as pool:
            results = list(pool.map(work, items))
    else:
        results = [work(i) for i in items]

    suite = Suite(out_path.stem, [r for r in results if isinstance(r, BenchmarkCase)])
    rejections = [r for r in results if isinstance(r, Rejection)]
    suite.save(out_path)
    atomic_write_text(
        rejections_path,
        "".join(json.dumps(r.to_dict(), ensure_ascii=False) + "\n" for r in rejections),
    )
    return GenerationResult(suite, rejections)


def load_specs(path: str | os.PathLike) -> list[GenSpec]:
    """Read a JSON list of spec objects (or ``{"specs": [...]}``)."""
    data = json.loads(read_text(path))
    if isinstance(data, Mapping):
        data = data.get("specs", [])
    try:
        return [GenSpec.from_dict(d) for d in data]
    except (KeyError, TypeError, ValueError) as e:
        raise SchemaError(f"{path}: {e}") from e


def reference_mix_specs() -> list[GenSpec]:
    """A 90-spec list with the language and snippet-type counts of the published suite."""
    languages = ["Python"] * 28 + ["Javascript"] * 17 + ["Racket"] * 17 + ["JSX"] * 16 + ["C"] * 12
    snippets = (
        ["constant"] * 17
        + ["subexpression"] * 19
        + ["variable assignment"] * 12
        + ["loop body or code block"] * 12
        + ["loop condition"] * 13
        + ["function call"] * 17
    )
    return [GenSpec(lang, snip) for lang, snip in zip(languages, snippets)]


def bundled(name: str) -> Path:
    """Path of a file shipped in the package's ``data`` directory, e.g. ``tcu10/suite.json``."""
    return Path(str(resources.files("magic_markup").joinpath("data", *name.split("/"))))
