"""Model-free re-anchoring by string similarity plus context comparison.

This is the deterministic baseline: exact unique match, then
whitespace-normalized unique match, then a scored search over nearby-length
candidate spans. It needs no model and is used for point anchors, offline
runs, and as a comparison point for the LLM re-tagger.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

from .model import Outcome, TextSegment
from .textloc import MatchMode, find_matches


@dataclass(frozen=True)
class BaselineConfig:
    context_window: int = 32
    similarity_threshold: float = 0.75
    text_weight: float = 0.6
    context_weight: float = 0.4

    def __post_init__(self):
        if self.context_window < 0:
            raise ValueError("context_window must be non-negative")
        if not 0.0 <= self.similarity_threshold <= 1.0:
            raise ValueError("similarity_threshold must lie in [0, 1]")
        if self.text_weight < 0 or self.context_weight < 0:
            raise ValueError("weights must be non-negative")
        if abs(self.text_weight + self.context_weight - 1.0) > 1e-9:
            raise ValueError("text_weight + context_weight must equal 1")


class Placement(NamedTuple):
    segment: Optional[TextSegment]
    outcome: Outcome
    diagnostics: str
    stage: int


def edit_distance(a: str, b: str) -> int:
    """Unit-cost Levenshtein distance."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def similarity(a: str, b: str) -> float:
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - edit_distance(a, b) / longest


def _prefix_distances(anchor: str, text: str) -> list[int]:
    """``out[k] == edit_distance(anchor, text[:k])`` for every k, in one DP pass."""
    # rows walk the anchor; columns walk text, so the last row holds all prefixes
    row = list(range(len(text) + 1))
    for i, ca in enumerate(anchor, 1):
        cur = [i]
        for j, ct in enumerate(text, 1):
            cur.append(min(row[j] + 1, cur[j - 1] + 1, row[j - 1] + (ca != ct)))
        row = cur
    return row


def candidate_lengths(n: int) -> range:
    lo = max(1, math.ceil(n * 0.5))
    hi = max(lo, math.floor(n * 1.5))
    return range(lo, hi + 1)


def context_similarity(original: str, seg: TextSegment, updated: str, start: int, end: int, window: int) -> float:
    before_old = original[max(0, seg.start - window):seg.start]
    after_old = original[seg.end:seg.end + window]
    before_new = updated[max(0, start - window):start]
    after_new = updated[end:end + window]
    return (similarity(before_old, before_new) + similarity(after_old, after_new)) / 2


def score_candidates(original: str, seg: TextSegment, updated: str, cfg: BaselineConfig):
    """Best-scoring candidate span as ``(score, start, end)``, or None.

    Ties break on distance from the original start, then start, then length.
    """
    anchor = seg.anchor_text
    lengths = candidate_lengths(len(anchor))
    best = None
    best_key = None
    for start in range(len(updated)):
        window = updated[start:start + lengths.stop - 1]
        if len(window) < lengths.start:
            break
        dists = _prefix_distances(anchor, window)
        for length in lengths:
            if length > len(window):
                break
            text_sim = 1.0 - dists[length] / max(len(anchor), length)
            # skip the context comparison when even a perfect context loses
            upper = cfg.text_weight * text_sim + cfg.context_weight
            if best_key is not None and upper < -best_key[0]:
                continue
            ctx = context_similarity(original, seg, updated, start, start + length, cfg.context_window)
            score = cfg.text_weight * text_sim + cfg.context_weight * ctx
            key = (-score, abs(start - seg.start), start, length)
            if best_key is None or key < best_key:
                best_key = key
                best = (score, start, start + length)
    return best


def _outcome(seg: TextSegment, found: TextSegment) -> Outcome:
    return Outcome.UNCHANGED if found == seg else Outcome.MOVED


def baseline_retag(
    original: str,
    seg: TextSegment,
    updated: str,
    cfg: BaselineConfig = BaselineConfig(),
) -> Placement:
    if seg.is_point:
        return _place_point(original, seg, updated, cfg)

    exact = find_matches(updated, seg.anchor_text, MatchMode.EXACT)
    if len(exact) == 1:
        found = exact[0].segment
        return Placement(found, _outcome(seg, found), "unique exact match", 1)

    normalized = find_matches(updated, seg.anchor_text, MatchMode.NORMALIZED)
    if len(normalized) == 1:
        found = normalized[0].segment
        return Placement(found, _outcome(seg, found), "unique whitespace-normalized match", 2)

    best = score_candidates(original, seg, updated, cfg)
    if best is None:
        return Placement(None, Outcome.ORPHANED, "updated document too short for any candidate", 3)
    score, start, end = best
    if score < cfg.similarity_threshold:
        return Placement(
            None,
            Outcome.ORPHANED,
            f"best candidate {updated[start:end]!r} at [{start}, {end}) scored {score:.3f} "
            f"< threshold {cfg.similarity_threshold}",
            3,
        )
    found = TextSegment(start, end, updated[start:end])
    return Placement(found, _outcome(seg, found), f"similarity search, score {score:.3f}", 3)


def _place_point(original: str, seg: TextSegment, updated: str, cfg: BaselineConfig) -> Placement:
    """Point anchors carry no text, so they are placed by context alone."""
    if original == updated:
        return Placement(seg, Outcome.UNCHANGED, "document unchanged", 1)
    w = cfg.context_window
    before = original[max(0, seg.start - w):seg.start]
    after = original[seg.start:seg.start + w]
    best_key = None
    for pos in range(len(updated) + 1):
        s = (similarity(before, updated[max(0, pos - w):pos]) + similarity(after, updated[pos:pos + w])) / 2
        key = (-s, abs(pos - seg.start), pos)
        if best_key is None or key < best_key:
            best_key = key
    score, pos = -best_key[0], best_key[2]
    if score < cfg.similarity_threshold:
        return Placement(None, Outcome.ORPHANED, f"best context score {score:.3f} below threshold", 3)
    found = TextSegment(pos, pos, "")
    return Placement(found, _outcome(seg, found), f"context search, score {score:.3f}", 3)
