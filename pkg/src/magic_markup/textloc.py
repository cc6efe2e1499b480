"""Line numbering, line spans, whitespace normalization, occurrence matching.

Lines are split on LF only. A CR before the LF stays part of the line's
content (and counts as whitespace when normalizing).
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass

from .errors import EmptyNeedle, OccurrenceOutOfRange, SpanOutOfRange
from .model import TextSegment

WHITESPACE = " \t\r\n"
_WS_RUN = re.compile(r"[ \t\r\n]+")
_LINE_PREFIX = re.compile(r"^\d+:")


class MatchMode(str, enum.Enum):
    EXACT = "exact"
    NORMALIZED = "normalized"


@dataclass(frozen=True)
class LineSpan:
    start_line: int
    end_line: int

    def __post_init__(self):
        if not 1 <= self.start_line <= self.end_line:
            raise SpanOutOfRange(f"invalid line span {self.start_line}..{self.end_line}")

    def expanded(self, line_count: int) -> "LineSpan":
        """One more line on each side, clipped to the document."""
        return LineSpan(max(1, self.start_line - 1), max(self.start_line, min(line_count, self.end_line + 1)))


@dataclass(frozen=True)
class MatchResult:
    segment: TextSegment
    occurrence: int


def line_count(doc: str) -> int:
    return doc.count("\n") + 1


def number_lines(doc: str) -> str:
    """Prefix every line with ``n:`` (1-indexed), the layout the retag prompt uses."""
    return "\n".join(f"{i}:{line}" for i, line in enumerate(doc.split("\n"), start=1))


def unnumber_lines(numbered: str) -> str:
    return "\n".join(_LINE_PREFIX.sub("", line, count=1) for line in numbered.split("\n"))


def line_starts(doc: str) -> list[int]:
    starts = [0]
    pos = doc.find("\n")
    while pos != -1:
        starts.append(pos + 1)
        pos = doc.find("\n", pos + 1)
    return starts


def line_of(doc: str, index: int) -> int:
    """1-indexed line holding character ``index``."""
    return doc.count("\n", 0, index) + 1


def segment_lines(doc: str, seg: TextSegment) -> LineSpan:
    """The lines a segment touches (a point anchor sits on one line)."""
    last = seg.end - 1 if seg.end > seg.start else seg.start
    return LineSpan(line_of(doc, seg.start), line_of(doc, last))


def line_span_chars(doc: str, span: LineSpan) -> TextSegment:
    starts = line_starts(doc)
    if span.end_line > len(starts):
        raise SpanOutOfRange(f"lines {span.start_line}..{span.end_line} exceed the document's {len(starts)} lines")
    start = starts[span.start_line - 1]
    end = starts[span.end_line] - 1 if span.end_line < len(starts) else len(doc)
    return TextSegment(start, end, doc[start:end])


def normalize_ws(s: str) -> str:
    return _WS_RUN.sub(" ", s).strip(WHITESPACE)


def _pattern(needle: str, mode: MatchMode) -> re.Pattern:
    if mode is MatchMode.EXACT:
        return re.compile(re.escape(needle))
    tokens = normalize_ws(needle).split(" ")
    # tokens hold no whitespace, so the greedy run between them pins each
    # match to the minimal span that starts at the first token
    return re.compile(r"[ \t\r\n]+".join(re.escape(t) for t in tokens))


def find_matches(haystack: str, needle: str, mode: MatchMode = MatchMode.EXACT) -> list[MatchResult]:
    """Leftmost non-overlapping matches of ``needle`` in ``haystack``.

    In normalized mode a match is the minimal span whose whitespace-normalized
    text equals the normalized needle. Segments always carry the haystack's own
    text, never the needle's.
    """
    mode = MatchMode(mode)
    if not needle or (mode is MatchMode.NORMALIZED and not normalize_ws(needle)):
        raise EmptyNeedle("cannot match an empty needle")
    return [
        MatchResult(TextSegment(m.start(), m.end(), m.group()), k)
        for k, m in enumerate(_pattern(needle, mode).finditer(haystack), start=1)
    ]


def select_occurrence(matches: list[MatchResult], k: int) -> MatchResult:
    if k < 1 or k > len(matches):
        raise OccurrenceOutOfRange(f"occurrence {k} requested but {len(matches)} match(es) found")
    return matches[k - 1]
