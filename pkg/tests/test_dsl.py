import os
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dop import geometry
from dop.dsl import (
    SourceUnit,
    expand_sources,
    has_errors,
    load_registry,
    parse_class,
    parse_classes,
    render_interface,
    tokenize,
)
from dop.model import Builder, Internal, Need, Parameter
from strategies import seeds, random_registry

FIX = os.path.join(os.path.dirname(__file__), "fixtures")


def fixture(name):
    return SourceUnit.from_path(os.path.join(FIX, name))


def errors(diags):
    return [d for d in diags if d.severity == "error"]


def test_triangle_listing_parses_without_errors():
    s, diags = parse_class(fixture("triangle_interface.dop"))
    assert errors(diags) == []
    assert {a.name for a in s.internals} == {"sides", "centroid", "perimeter", "surface"}
    v = s.attribute("vertices")
    assert v.kind == Builder("position") and v.type_name == "ARRAY[POINT]"
    assert s.attribute("surface").needs == (Need("perimeter"), Need("sides"))
    assert s.attribute("sides").needs == (Need("vertices", "position"),)
    assert s.attribute("perimeter").ensure == ("perimeter_is_built: Result > 0.0",)
    assert s.invariant == ("Current /= Void",)
    # without a count the array cannot be expanded: flagged, not fatal
    assert [d.code for d in diags] == ["UnknownArity"]


def test_pyramid_listing_parses_without_errors():
    s, diags = parse_class(fixture("triangular_pyramid.dop"))
    assert errors(diags) == []
    assert s.attribute("apex").kind == Builder("position")
    assert s.attribute("base").kind == Builder("surface")
    bs = s.attribute("base_surface")
    assert bs.kind == Internal("base_surface_build") and bs.needs == (Need("base", "surface"),)


def test_empty_feature_block():
    s, diags = parse_class("class EMPTY\nfeature {ANY}\nend\n")
    assert s.name == "EMPTY" and s.attributes == () and diags == []


def test_render_examples():
    tri = geometry.registry()["TRIANGLE"]
    assert 'vertices : ARRAY[POINT] builder ("position")' in render_interface(tri)
    pyr, _ = parse_class(fixture("triangular_pyramid.dop"))
    assert 'needs base("surface")' in render_interface(pyr)
    empty, _ = parse_class("class EMPTY\nend\n")
    assert render_interface(empty).split() == ["class", "EMPTY", "end", "--", "class", "EMPTY"]


@pytest.mark.parametrize("name", ["triangle_interface.dop", "triangular_pyramid.dop"])
def test_round_trip_fixtures(name):
    s1, _ = parse_class(fixture(name))
    s2, d2 = parse_class(render_interface(s1))
    assert errors(d2) == []
    assert s2 == s1
    assert render_interface(s2) == render_interface(s1)


def test_round_trip_shipped_classes():
    for schema in geometry.registry().values():
        again, diags = parse_class(render_interface(schema))
        assert diags == [] and again == schema


@settings(max_examples=80, deadline=None)
@given(seeds)
def test_round_trip_random_schemas(seed):
    reg, _ = random_registry(random.Random(seed), 30)
    for schema in reg.values():
        again, diags = parse_class(render_interface(schema))
        assert not has_errors(diags)
        assert again == schema


def test_kind_inference_and_diagnostics():
    s, d = parse_class(
        "class k\nfeature\n  n : INTEGER\n  t : REAL is\n    needs n\n    do Result := n end\n"
        "  u : REAL\n    uses (build : make_u)\n    needs n\n  end\nend\n")
    assert s.attribute("n").kind == Parameter("INTEGER")
    assert s.attribute("t").kind == Internal("t_build")
    assert s.attribute("u").kind == Internal("make_u")
    assert {x.code for x in d} == {"ClassNameCase", "ContextSuffix"}
    _, d = parse_class("class X\nfeature\n  p : POINT\nend\n")
    assert [x.code for x in errors(d)] == ["UntypedAttribute"]


def test_diagnostic_spans_point_into_source():
    text = "class X\nfeature\n  a : REAL internal (a_build)\n    needs zz\n  end\nend\n"
    _, d = parse_class(SourceUnit(text, "x.dop"))
    (e,) = errors(d)
    assert e.code == "UnresolvedNeed"
    assert e.span.origin == "x.dop" and e.span.line >= 3
    assert 0 <= e.span.start <= e.span.end <= len(text)


def test_both_quote_styles():
    a, _ = parse_class('class X\nfeature\n  b : POINT builder ("position")\nend\n')
    b, _ = parse_class("class X\nfeature\n  b : POINT builder (``position'')\nend\n")
    assert a == b


def test_load_registry_resolution(tmp_path):
    srcs = {s.origin: s.text for s in geometry.class_sources()}
    pick = {k: v for k, v in srcs.items() if os.path.basename(k) in
            ("point.dop", "segment.dop", "triangle.dop")}
    reg, diags = load_registry([SourceUnit(t, o) for o, t in pick.items()])
    assert sorted(reg) == ["POINT", "SEGMENT", "TRIANGLE"] and diags == []

    tri = [SourceUnit(t, o) for o, t in pick.items() if o.endswith("triangle.dop")]
    reg, diags = load_registry(tri)
    assert reg is None
    assert any(d.code == "UnresolvedType" and "POINT" in d.message for d in diags)

    point = [SourceUnit(t, o) for o, t in pick.items() if o.endswith("point.dop")]
    reg, diags = load_registry(point + [SourceUnit(point[0].text, "copy.dop")])
    assert reg is None and [d.code for d in diags] == ["DuplicateClass"]


def test_expand_sources(tmp_path):
    (tmp_path / "a.dop").write_text("class A\nend\n")
    (tmp_path / "b.dop").write_text("class B\nend\n")
    assert len(expand_sources([str(tmp_path)])) == 2
    assert len(expand_sources([str(tmp_path / "*.dop"), str(tmp_path / "a.dop")])) == 2
    with pytest.raises(FileNotFoundError):
        expand_sources([str(tmp_path / "none*.dop")])


# -- robustness ----------------------------------------------------------------

FRAGMENTS = [
    "class", "X", "end", "feature", "{ANY}", "{", "}", "needs", "uses", "internal", "builder",
    "count", "(", ")", "3", ":", ",", "is", "do", "if", "then", "from", "loop", "require",
    "ensure", "invariant", "\"s\"", "``s''", "ARRAY[REAL]", "REAL", "POINT", "--c\n", "\n",
    "build", ":=", "-", "\"", "``", "[", "]", "local", "once", "deferred", "inspect",
]


def _random_input(rng: random.Random) -> str:
    if rng.random() < 0.3:
        return "".join(chr(rng.randint(0, 0x24F)) for _ in range(rng.randint(0, 60)))
    return " ".join(rng.choice(FRAGMENTS) for _ in range(rng.randint(0, 40)))


def test_fuzz_parser_never_crashes():
    rng = random.Random(20260101)
    for _ in range(10_000):
        text = _random_input(rng)
        classes, diags = parse_classes(SourceUnit(text, "fuzz"))
        for d in diags:
            assert 0 <= d.span.start <= d.span.end <= len(text)


@settings(max_examples=300, deadline=None)
@given(st.text(max_size=200))
def test_tokenize_total(text):
    toks = tokenize(SourceUnit(text))
    assert all(0 <= t.span.start <= t.span.end <= len(text) for t in toks)
