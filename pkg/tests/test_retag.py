import json
import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from magic_markup.client import ChatRequest, ScriptedClient
from magic_markup.errors import (
    DelimiterCollision,
    DelimiterCountError,
    InvalidSegment,
    MalformedAnswer,
    NoDelimiterAvailable,
    NoMatch,
    OccurrenceOutOfRange,
    TransportError,
)
from magic_markup.model import Annotation, DocumentView, Outcome, TextSegment
from magic_markup.retag import (
    DEFAULT_DELIMITER,
    RetagAnswer,
    RetagConfig,
    build_retag_prompt,
    choose_delimiter,
    insert_delimiters,
    locate_answer,
    mapped_view,
    parse_retag_response,
    resolve_answer,
    retag,
    strip_delimiters,
)
from magic_markup.textloc import MatchMode

STAR = DEFAULT_DELIMITER


def answer_json(text, start, end, occ=1):
    return json.dumps({"1": text, "2": start, "3": end, "4": occ})


# -- delimiters ---------------------------------------------------------------

def test_choose_delimiter_skips_present_candidates():
    assert choose_delimiter(["plain"]) == STAR
    assert choose_delimiter(["has ★"]) == "☆"
    with pytest.raises(NoDelimiterAvailable):
        choose_delimiter(["ab"], candidates=["a", "b"])


def test_insert_and_strip():
    assert insert_delimiters("boy alad.", TextSegment(4, 8, "alad"), STAR) == "boy ★alad★."
    assert strip_delimiters("boy ★alad★.", STAR) == ("boy alad.", TextSegment(4, 8, "alad"))
    assert strip_delimiters("★★x", STAR) == ("x", TextSegment(0, 0, ""))
    with pytest.raises(DelimiterCountError):
        strip_delimiters("boy ★alad.", STAR)
    with pytest.raises(DelimiterCollision):
        insert_delimiters("★", TextSegment(0, 0, ""), STAR)
    with pytest.raises(InvalidSegment):
        insert_delimiters("abc", TextSegment(0, 1, "z"), STAR)


@st.composite
def doc_and_segment(draw):
    doc = draw(st.text(alphabet=st.characters(blacklist_characters=STAR, blacklist_categories=("Cs",)), max_size=40))
    s = draw(st.integers(0, len(doc)))
    e = draw(st.integers(s, len(doc)))
    return doc, TextSegment.of(doc, s, e)


@settings(max_examples=1000, deadline=None)
@given(doc_and_segment())
def test_strip_inverts_insert(pair):
    doc, seg = pair
    assert strip_delimiters(insert_delimiters(doc, seg, STAR), STAR) == (doc, seg)


# -- prompt -------------------------------------------------------------------

def numitems_segment(original):
    start = original.index("<= numItems") + 3
    return TextSegment.of(original, start, start + len("numItems"))


def test_golden_prompt(numitems):
    req = build_retag_prompt(numitems["original"], numitems_segment(numitems["original"]), numitems["updated"])
    assert req.user_text == numitems["prompt"]
    assert req.json_mode
    assert req.temperature == 0.0


def test_prompt_for_empty_update():
    req = build_retag_prompt("abc", TextSegment(0, 1, "a"), "")
    assert "<UPDATED>\n1:\n</UPDATED>" in req.user_text


def test_intent_is_opt_in():
    seg = TextSegment(0, 3, "boy")
    plain = build_retag_prompt("boy", seg, "boy", RetagConfig(), intent="TRACK NAMES")
    assert "TRACK NAMES" not in plain.user_text
    with_intent = build_retag_prompt("boy", seg, "boy", RetagConfig(include_intent=True), intent="TRACK NAMES")
    assert with_intent.user_text.count("TRACK NAMES") == 1


def test_prompt_rejects_delimiter_in_update():
    with pytest.raises(DelimiterCollision):
        build_retag_prompt("boy", TextSegment(0, 3, "boy"), "★boy")


# -- parsing --------------------------------------------------------------------

def test_parse_numitems_answer(numitems):
    assert parse_retag_response(numitems["answer"]) == RetagAnswer("numItems", 13, 13, 1)


@pytest.mark.parametrize("text,expected", [
    ('{"1":"x","2":1,"3":1}', RetagAnswer("x", 1, 1, 1)),
    ('{"1":"x","2":"2","3":" 3 ","4":"2"}', RetagAnswer("x", 2, 3, 2)),
    ('{" 1 ":"x","2":1,"3":1,"4":null}', RetagAnswer("x", 1, 1, 1)),
])
def test_parse_accepts(text, expected):
    assert parse_retag_response(text) == expected


@pytest.mark.parametrize("text", [
    "not json",
    "[1, 2]",
    '{"1":"x","2":3,"3":2,"4":1}',
    '{"1":"x","2":0,"3":1}',
    '{"1":"x","2":1}',
    '{"1":5,"2":1,"3":1}',
    '{"1":"x","2":true,"3":1}',
    '{"1":"x","2":1.5,"3":2}',
    '{"1":"","2":1,"3":1}',
])
def test_parse_rejects(text):
    with pytest.raises(MalformedAnswer):
        parse_retag_response(text)


# -- resolution -----------------------------------------------------------------

def test_numitems_answer_picks_line_13(numitems):
    updated = numitems["updated"]
    seg = resolve_answer(updated, parse_retag_response(numitems["answer"]))
    assert seg.anchor_text == "numItems"
    assert updated.count("\n", 0, seg.start) + 1 == 13
    first = updated.index("numItems")
    assert updated.count("\n", 0, first) + 1 == 4
    assert seg == TextSegment(305, 313, "numItems")


BRACE_DOC = "\n".join(
    ["// filler"] * 11
    + [
        "for (let i = 0; i < items.length; i++) {",
        "  total += items[i].price;",
        "  count += 1;",
        "  log(items[i]);",
        "}",
        "render(total);",
    ]
)


def test_early_end_line_needs_expansion():
    text = "\n".join(BRACE_DOC.split("\n")[11:16])
    ans = RetagAnswer(text, 12, 15, 1)
    with pytest.raises(NoMatch):
        resolve_answer(BRACE_DOC, ans)
    res = locate_answer(BRACE_DOC, ans, RetagConfig(expand_retry=True))
    assert res.expanded and res.searched.start_line == 11 and res.searched.end_line == 16
    assert res.segment.anchor_text == text


def test_expansion_grows_once_by_one_line():
    doc = "a\nb\nc\nd\ne"
    with pytest.raises(NoMatch) as info:
        resolve_answer(doc, RetagAnswer("e", 2, 3), RetagConfig(expand_retry=True))
    assert "1..4" in str(info.value)


def test_occurrence_within_span():
    doc = "x = 1\na = a + a\n"
    seg = resolve_answer(doc, RetagAnswer("a", 2, 2, 2))
    assert seg == TextSegment(10, 11, "a")
    with pytest.raises(OccurrenceOutOfRange):
        resolve_answer(doc, RetagAnswer("a", 2, 2, 4))


def test_normalized_match_returns_document_text():
    doc = "def f():\n    return  x +\n        y\n"
    res = locate_answer(doc, RetagAnswer("return x + y", 2, 3))
    assert res.mode is MatchMode.NORMALIZED
    assert res.segment.anchor_text == "return  x +\n        y"


def test_exact_preferred_over_normalized():
    doc = "a  b a b"
    res = locate_answer(doc, RetagAnswer("a b", 1, 1))
    assert res.mode is MatchMode.EXACT and res.segment.start == 5


def test_span_beyond_document_is_no_match():
    with pytest.raises(NoMatch):
        resolve_answer("one line", RetagAnswer("one", 3, 4))


# -- retag ----------------------------------------------------------------------

def test_worked_example_moves_to_aladdin():
    view = DocumentView("boy alad.", [Annotation("A1", TextSegment(4, 8, "alad"), "a name", "TRACK NAMES")])
    client = ScriptedClient(['{"1":"Aladdin","2":1,"3":1,"4":1}'])
    mapped, report = retag(view, "The young boy Aladdin wandered out.", client)
    (m,) = mapped
    assert m.segment == TextSegment(14, 21, "Aladdin")
    assert m.outcome is Outcome.MOVED
    assert m.annotation.content == "a name" and m.annotation.intent == "TRACK NAMES"
    assert report.entries[0].answer == RetagAnswer("Aladdin", 1, 1, 1)
    assert "★alad★" in client.requests[0].user_text


def test_identity_edit_is_unchanged():
    doc = "x = 1\ny = x + 2\n"
    view = DocumentView(doc, [Annotation("a", TextSegment(6, 7, "y"))])
    mapped, _ = retag(view, doc, ScriptedClient([answer_json("y", 2, 2)]))
    assert mapped[0].outcome is Outcome.UNCHANGED and mapped[0].segment == TextSegment(6, 7, "y")


def test_copied_original_text_fails():
    view = DocumentView("TAX = 0.2\n", [Annotation("a", TextSegment(0, 3, "TAX"))])
    mapped, report = retag(view, "salesTaxRate = 0.2\n", ScriptedClient([answer_json("TAX", 1, 1)]))
    assert mapped[0].outcome is Outcome.FAILED and mapped[0].segment is None
    assert "NoMatch" in report.entries[0].reason


def test_malformed_and_transport_failures_do_not_abort_siblings():
    doc = "alpha beta gamma"
    view = DocumentView(doc, [
        Annotation("a", TextSegment(0, 5, "alpha")),
        Annotation("b", TextSegment(6, 10, "beta")),
        Annotation("c", TextSegment(11, 16, "gamma")),
    ])

    def script(req: ChatRequest):
        if "★beta★" in req.user_text:
            return "{}"
        if "★gamma★" in req.user_text:
            raise TransportError("boom")
        return answer_json("alpha", 1, 1)

    mapped, report = retag(view, doc, ScriptedClient(script), RetagConfig(transport_retries=2))
    assert [m.outcome for m in mapped] == [Outcome.UNCHANGED, Outcome.FAILED, Outcome.FAILED]
    assert report.entries[2].attempts == 3
    assert report.counts()["Failed"] == 2
    nv = mapped_view(doc, mapped)
    assert [a.id for a in nv.annotations] == ["a"]


def test_transport_retry_recovers():
    calls = []

    def script(req):
        calls.append(1)
        if len(calls) == 1:
            raise TransportError("flaky")
        return answer_json("x", 1, 1)

    view = DocumentView("x", [Annotation("a", TextSegment(0, 1, "x"))])
    mapped, report = retag(view, "x", ScriptedClient(script), RetagConfig(transport_retries=1))
    assert mapped[0].outcome is Outcome.UNCHANGED and report.entries[0].attempts == 2


def test_point_anchor_goes_to_baseline():
    view = DocumentView("abc def", [Annotation("p", TextSegment(3, 3, ""))])
    client = ScriptedClient([])
    mapped, _ = retag(view, "abc def", client)
    assert mapped[0].outcome is Outcome.UNCHANGED and client.requests == []


def test_delimiter_reselected_when_document_contains_star():
    view = DocumentView("★ rating: good", [Annotation("a", TextSegment(10, 14, "good"))])
    client = ScriptedClient([answer_json("good", 1, 1)])
    mapped, _ = retag(view, "★ rating: good", client)
    assert mapped[0].outcome is Outcome.UNCHANGED
    assert "☆good☆" in client.requests[0].user_text


def _many_view():
    words = [f"w{i}" for i in range(12)]
    doc = "\n".join(words)
    anns = []
    for i, w in enumerate(words):
        s = doc.index(w + "\n") if i < len(words) - 1 else doc.rindex(w)
        anns.append(Annotation(f"id{i}", TextSegment.of(doc, s, s + len(w))))
    return doc, anns


def _echo_script(req: ChatRequest):
    text = req.user_text
    marked = text[text.index("★") + 1:]
    word = marked[:marked.index("★")]
    line = int(word[1:]) + 1
    return answer_json(word, line, line)


def test_order_independence():
    doc, anns = _many_view()
    full, _ = retag(DocumentView(doc, anns), doc, ScriptedClient(_echo_script), RetagConfig(max_parallel=1))
    for i, a in enumerate(anns):
        single, _ = retag(DocumentView(doc, [a]), doc, ScriptedClient(_echo_script))
        assert single[0] == full[i]


def test_parallel_matches_sequential_and_overlaps():
    doc, anns = _many_view()
    active = 0
    peak = 0
    lock = threading.Lock()
    gate = threading.Barrier(4, timeout=5)

    def slow(req):
        nonlocal active, peak
        with lock:
            active += 1
            peak = max(peak, active)
        try:
            gate.wait()
        except threading.BrokenBarrierError:
            pass
        with lock:
            active -= 1
        return _echo_script(req)

    seq, rep1 = retag(DocumentView(doc, anns), doc, ScriptedClient(_echo_script), RetagConfig(max_parallel=1))
    par, rep2 = retag(DocumentView(doc, anns), doc, ScriptedClient(slow), RetagConfig(max_parallel=4))
    assert seq == par
    assert [e.annotation_id for e in rep2.entries] == [a.id for a in anns]
    assert peak == 4


def test_scripted_determinism():
    doc, anns = _many_view()
    runs = [retag(DocumentView(doc, anns), doc, ScriptedClient(_echo_script), RetagConfig(max_parallel=3)) for _ in range(2)]
    assert runs[0][0] == runs[1][0]
    assert runs[0][1].to_dict() == runs[1][1].to_dict()
