"""LLM re-tagging: delimit the anchor, ask the model where it went, resolve.

One prompt per annotation. The model answers with the updated segment's
text, its first and last line in the updated file, and which occurrence
inside those lines it means. The answer is then located in the updated
document by exact match, falling back to whitespace-normalized match.

Prompt styles that were tried and not adopted (regenerating the whole
file, plain-English answers, focusing on a section first, asking the model
to re-check itself, confidence ratings) are intentionally not offered.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

from . import prompts
from .baseline import BaselineConfig, baseline_retag
from .client import ChatClient, ChatRequest, Usage
from .errors import (
    DelimiterCollision,
    DelimiterCountError,
    InvalidSegment,
    MalformedAnswer,
    MarkupError,
    NoDelimiterAvailable,
    NoMatch,
    OccurrenceOutOfRange,
    SpanOutOfRange,
    TransportError,
)
from .model import DocumentView, MappedAnnotation, Outcome, TextSegment
from .textloc import (
    LineSpan,
    MatchMode,
    find_matches,
    line_count,
    line_span_chars,
    normalize_ws,
    number_lines,
    select_occurrence,
)

logger = logging.getLogger(__name__)

DEFAULT_DELIMITER = "\u2605"  # BLACK STAR
# fallbacks, in order, for documents that already contain the star
DELIMITER_CANDIDATES = (
    DEFAULT_DELIMITER,
    "\u2606",  # WHITE STAR
    "\u25c6",  # BLACK DIAMOND
    "\u25c7",  # WHITE DIAMOND
    "\u203b",  # REFERENCE MARK
    "\u2042",  # ASTERISM
    "\u00a4",  # CURRENCY SIGN
    "\u2021",  # DOUBLE DAGGER
)


@dataclass(frozen=True)
class RetagAnswer:
    text: str
    start_line: int
    end_line: int
    occurrence: int = 1

    def __post_init__(self):
        if self.start_line < 1 or self.end_line < 1 or self.occurrence < 1:
            raise MalformedAnswer(f"line numbers and occurrence must be positive: {self}")
        if self.start_line > self.end_line:
            raise MalformedAnswer(f"start line {self.start_line} after end line {self.end_line}")

    @property
    def lines(self) -> LineSpan:
        return LineSpan(self.start_line, self.end_line)

    def to_dict(self) -> dict:
        return {"1": self.text, "2": self.start_line, "3": self.end_line, "4": self.occurrence}


@dataclass(frozen=True)
class RetagConfig:
    delimiter: str = DEFAULT_DELIMITER
    expand_retry: bool = False
    include_intent: bool = False
    max_parallel: int = 4
    transport_retries: int = 0
    model_name: Optional[str] = None
    temperature: float = 0.0
    baseline: BaselineConfig = field(default_factory=BaselineConfig)

    def __post_init__(self):
        if len(self.delimiter) != 1:
            raise ValueError("delimiter must be a single character")
        if self.max_parallel < 1:
            raise ValueError("max_parallel must be positive")
        if self.transport_retries < 0:
            raise ValueError("transport_retries must be non-negative")


def choose_delimiter(docs: Sequence[str], candidates: Sequence[str] = DELIMITER_CANDIDATES) -> str:
    for c in candidates:
        if not any(c in d for d in docs):
            return c
    raise NoDelimiterAvailable(f"all {len(candidates)} delimiter candidates occur in the documents")


def insert_delimiters(doc: str, seg: TextSegment, delim: str) -> str:
    if not seg.bound_to(doc):
        raise InvalidSegment(f"segment [{seg.start}, {seg.end}) {seg.anchor_text!r} is not part of the document")
    if delim in doc:
        raise DelimiterCollision(f"delimiter {delim!r} already occurs in the document")
    return doc[:seg.start] + delim + doc[seg.start:seg.end] + delim + doc[seg.end:]


def strip_delimiters(marked: str, delim: str) -> tuple[str, TextSegment]:
    count = marked.count(delim)
    if count != 2:
        raise DelimiterCountError(count, delim)
    first = marked.index(delim)
    second = marked.index(delim, first + 1)
    clean = marked[:first] + marked[first + 1:second] + marked[second + 1:]
    return clean, TextSegment(first, second - 1, marked[first + 1:second])


def build_retag_prompt(
    original: str,
    seg: TextSegment,
    updated: str,
    cfg: RetagConfig = RetagConfig(),
    intent: Optional[str] = None,
) -> ChatRequest:
    if cfg.delimiter in updated:
        raise DelimiterCollision(f"delimiter {cfg.delimiter!r} already occurs in the updated document")
    marked = insert_delimiters(original, seg, cfg.delimiter)
    intent_text = ""
    if cfg.include_intent and intent:
        # not part of the evaluated prompt; opt-in only
        intent_text = f"\nThe intent of this annotation is: {intent}\n"
    text = prompts.render(
        "retag",
        input=number_lines(marked),
        delimiter=cfg.delimiter,
        segment=seg.anchor_text,
        updated=number_lines(updated),
        intent=intent_text,
    )
    kwargs = {"model_name": cfg.model_name} if cfg.model_name else {}
    return ChatRequest(user_text=text, json_mode=True, temperature=cfg.temperature, **kwargs)


def _positive_int(value, key: str) -> int:
    if isinstance(value, bool):
        raise MalformedAnswer(f"answer {key} must be an integer, got {value!r}")
    if isinstance(value, str) and value.strip().isdigit():
        value = int(value.strip())
    if not isinstance(value, int) or value < 1:
        raise MalformedAnswer(f"answer {key} must be a positive integer, got {value!r}")
    return value


def parse_retag_response(text: str) -> RetagAnswer:
    try:
        data = json.loads(text)
    except (json.JSONDecodeError, TypeError) as e:
        raise MalformedAnswer(f"response is not JSON: {str(text)[:80]!r}") from e
    if not isinstance(data, dict):
        raise MalformedAnswer("response is not a JSON object")
    data = {str(k).strip(): v for k, v in data.items()}
    for key in ("1", "2", "3"):
        if key not in data:
            raise MalformedAnswer(f"response lacks answer {key}")
    if not isinstance(data["1"], str):
        raise MalformedAnswer("answer 1 must be a string")
    start = _positive_int(data["2"], "2")
    end = _positive_int(data["3"], "3")
    occurrence = _positive_int(data["4"], "4") if data.get("4") is not None else 1
    if not data["1"]:
        raise MalformedAnswer("answer 1 is empty")
    return RetagAnswer(data["1"], start, end, occurrence)


@dataclass(frozen=True)
class Resolution:
    segment: TextSegment
    mode: MatchMode
    searched: LineSpan
    expanded: bool


def _search(updated: str, ans: RetagAnswer, span: LineSpan):
    region = line_span_chars(updated, span)
    for mode in (MatchMode.EXACT, MatchMode.NORMALIZED):
        if mode is MatchMode.NORMALIZED and not normalize_ws(ans.text):
            break
        matches = find_matches(region.anchor_text, ans.text, mode)
        if matches:
            return region, mode, matches
    return region, None, []


def locate_answer(updated: str, ans: RetagAnswer, cfg: RetagConfig = RetagConfig()) -> Resolution:
    """Find the model's answer inside its stated line span of ``updated``.

    Occurrences are counted within the match mode that found anything. With
    ``expand_retry`` a span that yields no match grows by one line per side,
    once.
    """
    n_lines = line_count(updated)
    span = ans.lines
    expanded = False
    try:
        region, mode, matches = _search(updated, ans, span)
    except SpanOutOfRange:
        region, mode, matches = None, None, []
    if not matches and cfg.expand_retry and span.start_line <= n_lines:
        span = LineSpan(span.start_line, min(span.end_line, n_lines)).expanded(n_lines)
        expanded = True
        try:
            region, mode, matches = _search(updated, ans, span)
        except SpanOutOfRange:
            region, mode, matches = None, None, []
    if not matches:
        raise NoMatch(
            f"{ans.text!r} not found in lines {span.start_line}..{span.end_line}"
            + (" (expanded)" if expanded else "")
        )
    try:
        hit = select_occurrence(matches, ans.occurrence)
    except OccurrenceOutOfRange as e:
        raise OccurrenceOutOfRange(f"{e} ({mode.value} mode, lines {span.start_line}..{span.end_line})") from None
    return Resolution(hit.segment.shifted(region.start), mode, span, expanded)


def resolve_answer(updated: str, ans: RetagAnswer, cfg: RetagConfig = RetagConfig()) -> TextSegment:
    return locate_answer(updated, ans, cfg).segment


@dataclass
class ReportEntry:
    annotation_id: str
    outcome: Outcome
    answer: Optional[RetagAnswer] = None
    segment: Optional[TextSegment] = None
    reason: str = ""
    latency_seconds: float = 0.0
    usage: Usage = Usage()
    mode: Optional[MatchMode] = None
    expanded: bool = False
    attempts: int = 0

    def to_dict(self) -> dict:
        return {
            "annotation_id": self.annotation_id,
            "outcome": self.outcome.value,
            "answer": self.answer.to_dict() if self.answer else None,
            "segment": self.segment.to_dict() if self.segment else None,
            "reason": self.reason,
            "latency_seconds": self.latency_seconds,
            "usage": {"input_tokens": self.usage.input_tokens, "output_tokens": self.usage.output_tokens},
            "mode": self.mode.value if self.mode else None,
            "expanded": self.expanded,
            "attempts": self.attempts,
        }


@dataclass
class RetagReport:
    entries: list[ReportEntry] = field(default_factory=list)

    @property
    def total_latency_seconds(self) -> float:
        return sum(e.latency_seconds for e in self.entries)

    @property
    def mean_latency_seconds(self) -> float:
        return self.total_latency_seconds / len(self.entries) if self.entries else 0.0

    @property
    def usage(self) -> Usage:
        total = Usage()
        for e in self.entries:
            total = total + e.usage
        return total

    def counts(self) -> dict[str, int]:
        out = {o.value: 0 for o in Outcome}
        for e in self.entries:
            out[e.outcome.value] += 1
        return out

    def to_dict(self) -> dict:
        u = self.usage
        return {
            "entries": [e.to_dict() for e in self.entries],
            "outcomes": self.counts(),
            "mean_latency_seconds": self.mean_latency_seconds,
            "usage": {"input_tokens": u.input_tokens, "output_tokens": u.output_tokens},
        }


def _outcome_for(original: TextSegment, found: TextSegment) -> Outcome:
    return Outcome.UNCHANGED if found == original else Outcome.MOVED


def retag_one(annotation, original: str, updated: str, client: ChatClient, cfg: RetagConfig):
    """Re-tag a single annotation; never raises for per-annotation problems."""
    seg = annotation.segment
    if seg.is_point:
        placement = baseline_retag(original, seg, updated, cfg.baseline)
        entry = ReportEntry(annotation.id, placement.outcome, segment=placement.segment,
                            reason="point anchor placed by baseline: " + placement.diagnostics)
        return MappedAnnotation(annotation, placement.segment, placement.outcome, entry.reason), entry

    entry = ReportEntry(annotation.id, Outcome.FAILED)
    try:
        req = build_retag_prompt(original, seg, updated, cfg, annotation.intent)
    except (DelimiterCollision, InvalidSegment) as e:
        entry.reason = f"prompt construction failed: {e}"
        return MappedAnnotation(annotation, None, Outcome.FAILED, entry.reason), entry

    resp = None
    while resp is None:
        entry.attempts += 1
        try:
            resp = client.complete(req)
        except TransportError as e:
            if entry.attempts > cfg.transport_retries:
                entry.reason = f"transport error after {entry.attempts} attempt(s): {e}"
                return MappedAnnotation(annotation, None, Outcome.FAILED, entry.reason), entry
            logger.info("retrying %s after transport error: %s", annotation.id, e)
        except MarkupError as e:
            entry.reason = f"{type(e).__name__}: {e}"
            return MappedAnnotation(annotation, None, Outcome.FAILED, entry.reason), entry
    entry.latency_seconds = resp.latency_seconds
    entry.usage = resp.usage

    try:
        entry.answer = parse_retag_response(resp.text)
        res = locate_answer(updated, entry.answer, cfg)
    except (MalformedAnswer, NoMatch, OccurrenceOutOfRange) as e:
        entry.reason = f"{type(e).__name__}: {e}"
        return MappedAnnotation(annotation, None, Outcome.FAILED, entry.reason), entry

    entry.segment = res.segment
    entry.mode = res.mode
    entry.expanded = res.expanded
    entry.outcome = _outcome_for(seg, res.segment)
    notes = [f"{res.mode.value} match in lines {res.searched.start_line}..{res.searched.end_line}"]
    if res.expanded:
        notes.append("expanded")
    if res.segment.anchor_text != entry.answer.text:
        notes.append("model text differs from document text")
    entry.reason = "; ".join(notes)
    return MappedAnnotation(annotation, res.segment, entry.outcome, entry.reason), entry


def retag(
    view: DocumentView,
    updated: str,
    client: ChatClient,
    cfg: RetagConfig = RetagConfig(),
) -> tuple[list[MappedAnnotation], RetagReport]:
    """Map every annotation of ``view`` onto ``updated``.

    Annotations are independent, so they are re-tagged concurrently (up to
    ``cfg.max_parallel``); results come back in the view's order.
    """
    original = view.document
    if cfg.delimiter in original or cfg.delimiter in updated:
        delim = choose_delimiter([original, updated])
        logger.info("delimiter %r occurs in the documents; using %r", cfg.delimiter, delim)
        cfg = replace(cfg, delimiter=delim)

    def work(a):
        return retag_one(a, original, updated, client, cfg)

    if cfg.max_parallel == 1 or len(view.annotations) <= 1:
        results = [work(a) for a in view.annotations]
    else:
        with ThreadPoolExecutor(max_workers=cfg.max_parallel) as pool:
            results = list(pool.map(work, view.annotations))
    mapped = [m for m, _ in results]
    return mapped, RetagReport([e for _, e in results])


def retag_baseline(
    view: DocumentView,
    updated: str,
    cfg: BaselineConfig = BaselineConfig(),
) -> tuple[list[MappedAnnotation], RetagReport]:
    """Same contract as :func:`retag`, using only the model-free baseline."""
    mapped, entries = [], []
    for a in view.annotations:
        p = baseline_retag(view.document, a.segment, updated, cfg)
        mapped.append(MappedAnnotation(a, p.segment, p.outcome, p.diagnostics))
        entries.append(ReportEntry(a.id, p.outcome, segment=p.segment, reason=p.diagnostics))
    return mapped, RetagReport(entries)


def mapped_view(updated: str, mapped: Sequence[MappedAnnotation], digest_algo: str = "sha256") -> DocumentView:
    """The view over ``updated`` holding every annotation that was placed."""
    return DocumentView(updated, [m.annotation for m in mapped if m.annotation is not None], digest_algo)
