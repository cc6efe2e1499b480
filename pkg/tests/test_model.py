import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from magic_markup.errors import AnchorMismatch, IncompatiblePoint, InvertedRange, SchemaError, StaleSidecar, ValidationError
from magic_markup.model import (
    Annotation,
    DocumentView,
    MappedAnnotation,
    Outcome,
    TextSegment,
    compatible,
    load_view,
    read_text,
    save_view,
    segment_text,
    sidecar_path_for,
)

DOC = "boy alad."


def test_compatible_includes_end_of_document():
    assert compatible(0, "")
    assert compatible(9, DOC)
    assert not compatible(10, DOC)
    assert not compatible(-1, DOC)


def test_compatible_examples():
    assert compatible(4, "ABRACADABRA") and "ABRACADABRA"[4] == "C"
    assert not compatible(4, "Fun")


def test_segment_text_examples():
    assert segment_text("Aladdin", 1, 4) == "lad"
    assert segment_text("x", 0, 0) == ""
    with pytest.raises(IncompatiblePoint):
        segment_text("Fun", 1, 4)


def test_anchor_mismatch_on_foreign_document(tmp_path):
    doc = tmp_path / "abra.txt"
    doc.write_text("ABRACADABRA", encoding="utf-8")
    side = sidecar_path_for(doc)
    save_view(DocumentView("ABRACADABRA", [Annotation("a", TextSegment(1, 4, "BRA"))]), side, doc)
    raw = json.loads(side.read_text(encoding="utf-8"))
    raw["annotations"][0]["anchor_text"] = "lad"
    side.write_text(json.dumps(raw), encoding="utf-8")
    with pytest.raises(AnchorMismatch):
        load_view(doc)


def test_segment_text():
    assert segment_text(DOC, 4, 8) == "alad"
    assert segment_text(DOC, 9, 9) == ""
    with pytest.raises(InvertedRange):
        segment_text(DOC, 5, 4)


def test_segment_of_binds_text():
    seg = TextSegment.of(DOC, 4, 8)
    assert seg == TextSegment(4, 8, "alad")
    assert seg.bound_to(DOC)
    assert not seg.bound_to("xxxxxxxxx")
    assert TextSegment(3, 3, "").is_point


def test_segment_rejects_wrong_length():
    with pytest.raises(ValidationError):
        TextSegment(0, 3, "ab")


def test_mapped_annotation_consistency():
    a = Annotation("a", TextSegment(0, 3, "boy"))
    with pytest.raises(ValidationError):
        MappedAnnotation(a, None, Outcome.MOVED)
    with pytest.raises(ValidationError):
        MappedAnnotation(a, TextSegment(0, 3, "boy"), Outcome.ORPHANED)
    m = MappedAnnotation(a, TextSegment(4, 7, "boy"), Outcome.MOVED)
    assert m.annotation.segment.start == 4 and m.annotation.id == "a"


def test_sidecar_round_trip_with_multibyte(tmp_path):
    doc = tmp_path / "notes.txt"
    doc.write_text("★ star\nnaïve café ☕\n", encoding="utf-8")
    text = read_text(doc)
    start = text.index("café")
    view = DocumentView(text, [
        Annotation("a1", TextSegment.of(text, start, start + 4), "accented", "TRACK NAMES", {"k": [1, 2]}),
        Annotation("a2", TextSegment.of(text, 0, 1), "the star"),
        Annotation("p", TextSegment(2, 2, ""), "point"),
    ])
    side = sidecar_path_for(doc)
    save_view(view, side, doc)
    raw = json.loads(side.read_text(encoding="utf-8"))
    assert raw["version"] == 1
    assert raw["document"] == "notes.txt"
    assert raw["digest"]["algo"] == "sha256"
    assert raw["annotations"][0]["anchor_text"] == "café"
    assert load_view(doc, side) == view


def test_stale_sidecar(tmp_path):
    doc = tmp_path / "d.txt"
    doc.write_text("hello world", encoding="utf-8")
    save_view(DocumentView("hello world", [Annotation("a", TextSegment(0, 5, "hello"))]), sidecar_path_for(doc), doc)
    doc.write_text("hello there", encoding="utf-8")
    with pytest.raises(StaleSidecar):
        load_view(doc)


def test_anchor_mismatch_and_schema_errors(tmp_path):
    doc = tmp_path / "d.txt"
    doc.write_text("hello world", encoding="utf-8")
    side = sidecar_path_for(doc)
    save_view(DocumentView("hello world", [Annotation("a", TextSegment(0, 5, "hello"))]), side, doc)
    raw = json.loads(side.read_text(encoding="utf-8"))

    raw["annotations"][0]["anchor_text"] = "world"
    side.write_text(json.dumps(raw), encoding="utf-8")
    with pytest.raises(AnchorMismatch):
        load_view(doc)

    raw["annotations"][0]["anchor_text"] = "hello"
    raw["annotations"][0]["start"] = "zero"
    side.write_text(json.dumps(raw), encoding="utf-8")
    with pytest.raises(SchemaError):
        load_view(doc)

    side.write_text("{not json", encoding="utf-8")
    with pytest.raises(SchemaError):
        load_view(doc)


def test_duplicate_ids_rejected(tmp_path):
    seg = TextSegment(0, 1, "h")
    view = DocumentView("hello", [Annotation("a", seg), Annotation("a", seg)])
    with pytest.raises(ValidationError):
        save_view(view, tmp_path / "x.annotations.json", tmp_path / "x")


def test_unbound_segment_not_saved(tmp_path):
    view = DocumentView("hello", [Annotation("a", TextSegment(0, 2, "xx"))])
    with pytest.raises(AnchorMismatch):
        save_view(view, tmp_path / "x.annotations.json", tmp_path / "x")


text_st = st.text(alphabet=st.sampled_from("ab ★é\n\t☕z"), max_size=30)


@st.composite
def views(draw):
    doc = draw(text_st)
    n = draw(st.integers(0, 4))
    anns = []
    for i in range(n):
        s = draw(st.integers(0, len(doc)))
        e = draw(st.integers(s, len(doc)))
        anns.append(Annotation(
            f"id{i}",
            TextSegment.of(doc, s, e),
            draw(st.text(max_size=10)),
            draw(st.one_of(st.none(), st.text(max_size=8))),
            draw(st.dictionaries(st.text(max_size=4), st.integers(), max_size=2)),
        ))
    return DocumentView(doc, anns)


@settings(max_examples=150, deadline=None)
@given(views())
def test_sidecar_round_trip_property(tmp_path_factory, view):
    d = tmp_path_factory.mktemp("rt")
    doc = d / "doc.txt"
    doc.write_bytes(view.document.encode("utf-8"))
    save_view(view, sidecar_path_for(doc), doc)
    assert load_view(doc) == view
