"""Run a resolver over a benchmark suite and score each placement.

Every case lands in exactly one category. Exact accuracy counts only
character-identical spans; lenient accuracy also forgives spans that
differ from the gold one only by surrounding whitespace.
"""

from __future__ import annotations

import enum
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional

from .baseline import BaselineConfig
from .bench import BenchmarkCase, Suite
from .client import ChatClient, Usage
from .model import Annotation, DocumentView, TextSegment, atomic_write_text
from .retag import RetagAnswer, RetagConfig, locate_answer, retag, retag_baseline
from .textloc import WHITESPACE, MatchMode, find_matches, line_span_chars, normalize_ws, segment_lines

RESOLVERS = ("llm", "baseline")


class Category(str, enum.Enum):
    EXACT_MATCH = "ExactMatch"
    WHITESPACE_ONLY = "WhitespaceOnly"
    WRONG_OCCURRENCE = "WrongOccurrence"
    OFF_BY_ONE_LINE = "OffByOneLine"
    WRONG_TEXT = "WrongText"
    NO_MATCH = "NoMatch"
    ERROR = "Error"


def _trimmed(doc: str, seg: TextSegment) -> tuple[int, int]:
    start, end = seg.start, seg.end
    while start < end and doc[start] in WHITESPACE:
        start += 1
    while end > start and doc[end - 1] in WHITESPACE:
        end -= 1
    return start, end


def score(
    predicted: Optional[TextSegment],
    gold: TextSegment,
    document: str,
    answer: Optional[RetagAnswer] = None,
    error: bool = False,
) -> Category:
    """Classify one placement against the gold segment of ``document``.

    ``answer`` is the model's raw answer, used to tell line-number slips and
    wrong-text copies apart when resolution failed.
    """
    if error:
        return Category.ERROR
    if predicted is not None:
        if (predicted.start, predicted.end) == (gold.start, gold.end):
            return Category.EXACT_MATCH
        if _trimmed(document, predicted) == _trimmed(document, gold):
            return Category.WHITESPACE_ONLY
        if normalize_ws(predicted.anchor_text) == normalize_ws(gold.anchor_text):
            return Category.WRONG_OCCURRENCE
        return Category.WRONG_TEXT
    if answer is None:
        return Category.NO_MATCH
    if normalize_ws(answer.text) == normalize_ws(gold.anchor_text):
        gold_lines = segment_lines(document, gold)
        slip = max(abs(answer.start_line - gold_lines.start_line), abs(answer.end_line - gold_lines.end_line))
        return Category.OFF_BY_ONE_LINE if slip == 1 else Category.NO_MATCH
    if not normalize_ws(answer.text) or not find_matches(document, answer.text, MatchMode.NORMALIZED):
        return Category.WRONG_TEXT
    return Category.NO_MATCH


@dataclass
class CaseResult:
    case_id: str
    resolver: str
    category: Category
    gold: TextSegment
    predicted: Optional[TextSegment] = None
    answer: Optional[RetagAnswer] = None
    latency_seconds: float = 0.0
    usage: Usage = Usage()
    diagnostics: str = ""

    def to_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "resolver": self.resolver,
            "category": self.category.value,
            "gold": self.gold.to_dict(),
            "predicted": self.predicted.to_dict() if self.predicted else None,
            "answer": self.answer.to_dict() if self.answer else None,
            "latency_seconds": self.latency_seconds,
            "usage": {"input_tokens": self.usage.input_tokens, "output_tokens": self.usage.output_tokens},
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "CaseResult":
        ans = d.get("answer")
        return cls(
            case_id=d["case_id"],
            resolver=d["resolver"],
            category=Category(d["category"]),
            gold=TextSegment.from_dict(d["gold"]),
            predicted=TextSegment.from_dict(d["predicted"]) if d.get("predicted") else None,
            answer=RetagAnswer(ans["1"], ans["2"], ans["3"], ans["4"]) if ans else None,
            latency_seconds=d.get("latency_seconds", 0.0),
            usage=Usage.from_dict(d.get("usage", {})),
            diagnostics=d.get("diagnostics", ""),
        )


@dataclass
class SuiteReport:
    suite: str
    resolver: str
    counts: dict[Category, int] = field(default_factory=lambda: {c: 0 for c in Category})
    latencies: list[float] = field(default_factory=list)
    usage: Usage = Usage()
    results: list[CaseResult] = field(default_factory=list)

    @classmethod
    def from_results(cls, suite: str, resolver: str, results: list[CaseResult]) -> "SuiteReport":
        report = cls(suite, resolver, results=list(results))
        for r in results:
            report.counts[r.category] += 1
            report.latencies.append(r.latency_seconds)
            report.usage = report.usage + r.usage
        return report

    @classmethod
    def from_counts(cls, counts: Mapping[str, int], suite: str = "", resolver: str = "") -> "SuiteReport":
        """A report carrying only category counts (no per-case results)."""
        report = cls(suite, resolver)
        for name, n in counts.items():
            report.counts[Category(name)] = n
        return report

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    @property
    def accuracy_exact(self) -> float:
        return self.counts[Category.EXACT_MATCH] / self.total if self.total else 0.0

    @property
    def accuracy_lenient(self) -> float:
        if not self.total:
            return 0.0
        return (self.counts[Category.EXACT_MATCH] + self.counts[Category.WHITESPACE_ONLY]) / self.total

    @property
    def mean_latency_seconds(self) -> float:
        return sum(self.latencies) / len(self.latencies) if self.latencies else 0.0

    @property
    def max_latency_seconds(self) -> float:
        return max(self.latencies, default=0.0)

    def to_dict(self) -> dict:
        return {
            "suite": self.suite,
            "resolver": self.resolver,
            "totals": {
                "cases": self.total,
                "accuracy_exact": self.accuracy_exact,
                "accuracy_lenient": self.accuracy_lenient,
            },
            "categories": {c.value: self.counts[c] for c in Category},
            "mean_latency_seconds": self.mean_latency_seconds,
            "max_latency_seconds": self.max_latency_seconds,
            "usage": {"input_tokens": self.usage.input_tokens, "output_tokens": self.usage.output_tokens},
            "cases": [r.to_dict() for r in self.results],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "SuiteReport":
        results = [CaseResult.from_dict(r) for r in d.get("cases", [])]
        if results:
            report = cls.from_results(d["suite"], d["resolver"], results)
        else:
            report = cls.from_counts(d["categories"], d["suite"], d["resolver"])
        report.usage = Usage.from_dict(d.get("usage", {}))
        return report

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"

    def save(self, path: str | os.PathLike) -> None:
        atomic_write_text(path, self.dumps())


def render_table(report: SuiteReport) -> str:
    total = report.total
    lines = [f"suite: {report.suite or '-'}   resolver: {report.resolver or '-'}", ""]
    width = max(len(c.value) for c in Category)
    lines.append(f"{'category':<{width}}  {'count':>7}")
    for c in Category:
        lines.append(f"{c.value:<{width}}  {report.counts[c]:>3}/{total:<3}")
    lines.append("")
    lines.append(f"accuracy (exact):   {report.accuracy_exact:.1%}")
    lines.append(f"accuracy (lenient): {report.accuracy_lenient:.1%}")
    lines.append(f"latency: mean {report.mean_latency_seconds:.2f}s, max {report.max_latency_seconds:.2f}s")
    lines.append(f"tokens: {report.usage.input_tokens} in / {report.usage.output_tokens} out")
    return "\n".join(lines)


def report_render(report: SuiteReport) -> tuple[str, str]:
    """Human-readable table and machine-readable JSON for one report."""
    return render_table(report), report.dumps()


def gold_answer(case: BenchmarkCase) -> RetagAnswer:
    """The answer a perfect model would give for ``case``."""
    updated, gold = case.updated
    lines = segment_lines(updated, gold)
    region = line_span_chars(updated, lines)
    for m in find_matches(region.anchor_text, gold.anchor_text, MatchMode.EXACT):
        if m.segment.shifted(region.start) == gold:
            return RetagAnswer(gold.anchor_text, lines.start_line, lines.end_line, m.occurrence)
    return RetagAnswer(gold.anchor_text, lines.start_line, lines.end_line, 1)


def self_test(suite: Suite) -> list[str]:
    """Ids of cases whose gold answer does not resolve back to the gold span."""
    bad = []
    for case in suite.cases:
        try:
            if locate_answer(case.updated_clean, gold_answer(case)).segment != case.gold_updated_segment:
                bad.append(case.id)
        except Exception:
            bad.append(case.id)
    return bad


def evaluate_case(
    case: BenchmarkCase,
    resolver: str,
    client: Optional[ChatClient] = None,
    cfg: RetagConfig = RetagConfig(),
    baseline_cfg: BaselineConfig = BaselineConfig(),
) -> CaseResult:
    try:
        original, gold_original = case.original
        updated, gold = case.updated
    except Exception as e:
        return CaseResult(case.id, resolver, Category.ERROR, TextSegment(0, 0, ""), diagnostics=str(e))
    view = DocumentView(original, [Annotation(case.id, gold_original)])
    try:
        if resolver == "llm":
            if client is None:
                raise ValueError("the llm resolver needs a model client")
            _, report = retag(view, updated, client, cfg)
        elif resolver == "baseline":
            _, report = retag_baseline(view, updated, baseline_cfg)
        else:
            raise ValueError(f"unknown resolver {resolver!r}")
    except Exception as e:
        return CaseResult(case.id, resolver, Category.ERROR, gold, diagnostics=f"{type(e).__name__}: {e}")
    entry = report.entries[0]
    category = score(entry.segment, gold, updated, entry.answer)
    return CaseResult(
        case.id,
        resolver,
        category,
        gold,
        predicted=entry.segment,
        answer=entry.answer,
        latency_seconds=entry.latency_seconds,
        usage=entry.usage,
        diagnostics=entry.reason,
    )


def run_suite(
    suite: Suite,
    resolver: str = "llm",
    client: Optional[ChatClient] = None,
    cfg: RetagConfig = RetagConfig(),
    baseline_cfg: BaselineConfig = BaselineConfig(),
    max_parallel: int = 1,
) -> SuiteReport:
    if resolver not in RESOLVERS:
        raise ValueError(f"unknown resolver {resolver!r}; expected one of {RESOLVERS}")

    def work(case):
        return evaluate_case(case, resolver, client, cfg, baseline_cfg)

    if max_parallel > 1 and len(suite.cases) > 1:
        with ThreadPoolExecutor(max_workers=max_parallel) as pool:
            results = list(pool.map(work, suite.cases))
    else:
        results = [work(c) for c in suite.cases]
    return SuiteReport.from_results(suite.name, resolver, results)
