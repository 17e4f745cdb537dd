import math

import pytest

from engine.errors import (
    AlphaSumMismatch,
    DirichletAtInternalVertex,
    DirichletGlue,
    DisconnectedGraph,
    DuplicateId,
    EpsilonTooLarge,
    GraphSyntaxError,
    IoError,
    NonpositiveLength,
    OffsetOutOfRange,
    PartitionNotCovering,
    UnknownEdge,
    UnknownVertex,
)
from engine.metric_graph import (
    GraphSpec,
    VertexCondition,
    build_graph,
    disjoint_union,
    find_bridges,
    find_loops,
    format_graph,
    glue_vertices,
    insert_trivial_vertex,
    is_circle,
    is_isomorphic,
    load_graph,
    parse_graph,
    perturb_lengths,
    split_vertex,
    suppress_trivial_vertices,
    with_condition,
    with_lengths,
)

PATH3 = "vertex a nk\nvertex b delta 2.5\nvertex c dirichlet\nedge e1 a b 1.0\nedge e2 b c 2.0\n"


def test_parse_graph_conditions():
    g = build_graph(parse_graph(PATH3))
    assert g.vertex_ids == ("a", "b", "c")
    assert g.condition("a").is_nk
    assert g.condition("b").is_robin and g.condition("b").alpha == 2.5
    assert g.condition("c").is_dirichlet
    assert g.total_length == pytest.approx(3.0)
    assert g.degree("b") == 2
    assert g.signature == "V=3 E=2 L=3"


def test_parse_graph_ignores_comments_and_blank_lines():
    spec = parse_graph("# header\n\nvertex a nk   # trailing\nvertex b nk\nedge e a b 1\n")
    assert len(spec.vertices) == 2
    assert spec.edges == (("e", "a", "b", 1.0),)


@pytest.mark.parametrize(
    "text, line",
    [
        ("vertex a\n", 1),
        ("vertex a nk\nvertex b robin 1\n", 2),
        ("vertex a nk\nvertex b nk\nedge e a b\n", 3),
        ("vertex a nk\nedge e a a one\n", 2),
        ("vertex a nk\nnode b\n", 2),
        ("vertex a delta nan\n", 1),
    ],
)
def test_parse_graph_syntax_errors_carry_line_numbers(text, line):
    with pytest.raises(GraphSyntaxError) as info:
        parse_graph(text)
    assert info.value.line_no == line
    assert str(info.value).startswith(f"line {line}:")


@pytest.mark.parametrize(
    "vertices, edges, error",
    [
        ((("a", VertexCondition.nk()), ("a", VertexCondition.nk())), (("e", "a", "a", 1.0),), DuplicateId),
        ((("a", VertexCondition.nk()),), (("e", "a", "a", 1.0), ("e", "a", "a", 2.0)), DuplicateId),
        ((("a", VertexCondition.nk()),), (("e", "a", "z", 1.0),), UnknownVertex),
        ((("a", VertexCondition.nk()), ("b", VertexCondition.nk())), (("e", "a", "b", 0.0),), NonpositiveLength),
        ((("a", VertexCondition.nk()), ("b", VertexCondition.nk())), (("e", "a", "b", math.inf),), NonpositiveLength),
        ((("a", VertexCondition.dirichlet()),), (("e", "a", "a", 1.0),), DirichletAtInternalVertex),
        ((("a", VertexCondition.nk()), ("b", VertexCondition.nk())), (("e", "a", "a", 1.0),), DisconnectedGraph),
        ((("a", VertexCondition.nk()),), (), DisconnectedGraph),
    ],
)
def test_build_graph_validation(vertices, edges, error):
    with pytest.raises(error):
        build_graph(GraphSpec(vertices, edges))


def test_load_graph_missing_file(tmp_path):
    with pytest.raises(IoError):
        load_graph(tmp_path / "missing.qg")


def test_format_graph_round_trip(corpus):
    for name in ("lollipop", "impure_loop", "star3_dirichlet"):
        g = corpus(name)
        again = build_graph(parse_graph(format_graph(g)))
        assert again == g


def test_unknown_lookups(corpus):
    g = corpus("lollipop")
    with pytest.raises(UnknownVertex):
        g.vertex("zz")
    with pytest.raises(UnknownEdge):
        g.edge("zz")


def test_loop_degree_counts_both_ends(corpus):
    g = corpus("lollipop")
    assert g.degree("a") == 3
    assert g.degree("p") == 1


def test_insert_and_suppress_trivial_vertex(corpus):
    g = corpus("cycle_tail")
    split = insert_trivial_vertex(g, "e2", 0.4)
    assert "e2_t" in split.vertex_ids
    assert split.edge("e2.1").length == pytest.approx(0.4)
    assert split.edge("e2.2").length == pytest.approx(0.9)
    assert split.total_length == pytest.approx(g.total_length)
    assert is_isomorphic(suppress_trivial_vertices(split), suppress_trivial_vertices(g))


@pytest.mark.parametrize("offset", [0.0, 1.3, -0.1, 2.0])
def test_insert_trivial_vertex_offset_range(corpus, offset):
    with pytest.raises(OffsetOutOfRange):
        insert_trivial_vertex(corpus("cycle_tail"), "e2", offset)


def test_suppress_keeps_robin_and_circle_anchor(corpus):
    loop = corpus("impure_loop")
    reduced = suppress_trivial_vertices(loop)
    assert reduced.vertex_ids == ("r",)
    assert reduced.edges[0].is_loop
    assert reduced.total_length == pytest.approx(2 * math.pi)

    circle = corpus("circle")
    assert suppress_trivial_vertices(circle) == circle


def test_is_circle(corpus):
    assert is_circle(corpus("circle"))
    assert is_circle(insert_trivial_vertex(corpus("circle"), "e0", 1.0))
    assert not is_circle(corpus("impure_loop"))
    assert not is_circle(corpus("figure8"))


def test_find_loops_lollipop(corpus):
    loops = find_loops(corpus("lollipop"))
    assert len(loops) == 1
    loop = loops[0]
    assert loop.attachment_vertex == "a"
    assert loop.edge_chain == ("loop",)
    assert loop.pure
    assert loop.total_length == pytest.approx(2 * math.pi)


def test_find_loops_through_intermediate_vertices(corpus):
    g = insert_trivial_vertex(corpus("lollipop"), "loop", 2.0)
    loops = find_loops(g)
    assert len(loops) == 1
    assert loops[0].intermediate_vertices == ("loop_t",)
    assert loops[0].pure

    impure = with_condition(g, "loop_t", VertexCondition.delta(1.0))
    assert not find_loops(impure)[0].pure


def test_find_loops_figure8_and_trees(corpus):
    assert len(find_loops(corpus("figure8"))) == 2
    assert find_loops(corpus("star3_nk")) == []
    triangle = find_loops(corpus("cycle_tail"))
    assert len(triangle) == 1
    assert triangle[0].attachment_vertex == "c"
    assert set(triangle[0].intermediate_vertices) == {"a", "b"}


def test_find_bridges(corpus):
    assert find_bridges(corpus("lollipop")) == ["tail"]
    assert find_bridges(corpus("cycle_tail")) == ["e4"]
    assert find_bridges(corpus("mandarin3")) == []
    assert find_bridges(corpus("star3_nk")) == ["e1", "e2", "e3"]


def test_split_vertex_and_glue_back(corpus):
    g = with_condition(corpus("star3_nk"), "c", VertexCondition.delta(3.0))
    split = split_vertex(g, "c", ([("e1", 0)], [("e2", 0), ("e3", 0)]), (1.0, 2.0))
    assert split.condition("c").alpha == 1.0
    assert split.condition("c'").alpha == 2.0
    assert not split.is_connected
    glued = glue_vertices(split, "c", "c'")
    assert is_isomorphic(glued, g)


def test_split_vertex_validation(corpus):
    g = corpus("star3_nk")
    with pytest.raises(PartitionNotCovering):
        split_vertex(g, "c", ([("e1", 0)], [("e2", 0)]), (0.0, 0.0))
    with pytest.raises(AlphaSumMismatch):
        split_vertex(g, "c", ([("e1", 0)], [("e2", 0), ("e3", 0)]), (1.0, 0.5))


def test_glue_refuses_dirichlet(corpus):
    with pytest.raises(DirichletGlue):
        glue_vertices(corpus("star3_dirichlet"), "v1", "v2")


def test_disjoint_union_then_glue(corpus):
    left = build_graph(parse_graph("vertex a nk\nvertex b nk\nedge e1 a b 1.0\n"))
    right = build_graph(parse_graph("vertex c nk\nvertex d nk\nedge e2 c d 2.0\n"))
    both = disjoint_union(left, right)
    assert not both.is_connected
    path = glue_vertices(both, "b", "c")
    assert path.is_connected
    assert path.degree("b") == 2
    assert is_isomorphic(suppress_trivial_vertices(path),
                         build_graph(parse_graph("vertex x nk\nvertex y nk\nedge e x y 3.0\n")))


def test_perturb_lengths(corpus):
    g = corpus("star3_nk")
    assert perturb_lengths(g, 0.0, 1) is g
    first = perturb_lengths(g, 0.05, 7)
    assert first == perturb_lengths(g, 0.05, 7)
    assert first != perturb_lengths(g, 0.05, 8)
    assert all(abs(a - b) <= 0.05 for a, b in zip(first.lengths, g.lengths))
    with pytest.raises(EpsilonTooLarge):
        perturb_lengths(g, 1.0, 1)
    with pytest.raises(EpsilonTooLarge):
        perturb_lengths(g, -0.1, 1)


def test_with_lengths_mapping_and_sequence(corpus):
    g = corpus("mandarin3")
    assert with_lengths(g, {"e2": 5.0}).edge("e2").length == 5.0
    assert list(with_lengths(g, [1.0, 2.0, 3.0]).lengths) == [1.0, 2.0, 3.0]
    with pytest.raises(UnknownEdge):
        with_lengths(g, {"zz": 1.0})


def test_is_isomorphic_respects_conditions_and_lengths(corpus):
    g = corpus("star3_dirichlet")
    assert is_isomorphic(g, g)
    assert not is_isomorphic(g, with_lengths(g, {"e1": 1.1}))
    assert not is_isomorphic(corpus("star3_nk"), with_lengths(g, [1.0, 1.0, 1.0]))
