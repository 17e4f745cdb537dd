import math

import numpy as np
import pytest
from scipy.integrate import quad

from engine.eigenmode import (
    LoopSupported,
    NonvanishingOnVertices,
    classify_support,
    condition_residuals,
    eigenfunctions_at,
    evaluate,
    flip_loop,
    inner_product,
    mass_matrix,
    sample_table,
    vertex_flux,
    vertex_values,
)
from engine.errors import CoordinateOutOfRange, NullSpaceDimensionMismatch
from engine.metric_graph import build_graph, parse_graph, with_lengths
from engine.spectral import EigenvalueRecord, scan_spectrum


def _record_near(g, k, k_max=None):
    records = scan_spectrum(g, k_max or k + 0.5)
    return min(records, key=lambda r: abs(r.k - k))


def test_dirichlet_interval_modes(corpus):
    g = corpus("interval_dirichlet")
    for n in (1, 2, 3):
        (f,) = eigenfunctions_at(g, _record_near(g, n))
        a, b = f.edge_coefficients("e0")
        assert abs(a) < 1e-8
        assert b == pytest.approx(math.sqrt(2.0 / math.pi), rel=1e-8)
        assert evaluate(f, "e0", math.pi / (2 * n)) == pytest.approx(math.sqrt(2.0 / math.pi), rel=1e-8)
        assert inner_product(f, f) == pytest.approx(1.0, rel=1e-10)


def test_constant_mode_of_circle(corpus):
    g = corpus("circle")
    (f,) = eigenfunctions_at(g, scan_spectrum(g, 0.5)[0])
    assert f.lam == 0.0
    for x in (0.0, 1.0, 2 * math.pi):
        assert evaluate(f, "e0", x) == pytest.approx(1.0 / math.sqrt(2 * math.pi), rel=1e-10)
    assert isinstance(f.classification, NonvanishingOnVertices)


def test_degenerate_eigenspace_is_orthonormal(corpus):
    g = corpus("circle")
    functions = eigenfunctions_at(g, _record_near(g, 2.0))
    assert len(functions) == 2
    gram = np.array([[inner_product(f, h) for h in functions] for f in functions])
    np.testing.assert_allclose(gram, np.eye(2), atol=1e-9)
    assert [f.index for f in functions] == [3, 4]


@pytest.mark.parametrize("name", ["star3_dirichlet", "mandarin3", "lollipop", "cycle_tail", "impure_loop"])
def test_vertex_conditions_hold(corpus, name):
    g = corpus(name)
    for record in scan_spectrum(g, 5.7):
        for f in eigenfunctions_at(g, record):
            continuity, flux = condition_residuals(f)
            assert continuity < 1e-7
            assert flux < 1e-7 * (1.0 + record.k)
            assert inner_product(f, f) == pytest.approx(1.0, rel=1e-9)


def test_negative_eigenvalue_mode():
    g = build_graph(parse_graph("vertex a delta -1.0\nvertex b nk\nedge e a b 1.0\n"))
    record = scan_spectrum(g, 3.0)[0]
    assert record.negative
    (f,) = eigenfunctions_at(g, record)
    _, flux = condition_residuals(f)
    assert flux < 1e-7
    assert vertex_flux(f, "b") == pytest.approx(0.0, abs=1e-7)
    assert inner_product(f, f) == pytest.approx(1.0, rel=1e-9)


def test_mass_matrix_matches_quadrature(corpus):
    g = corpus("cycle_tail")
    for lam in (2.3, 0.0, -1.7):
        mass = mass_matrix(g, lam)
        k = math.sqrt(abs(lam))
        length = g.edge("e3").length
        row = 2 * g.edge_index("e3")
        if lam > 0:
            first, second = (lambda x: math.cos(k * x)), (lambda x: math.sin(k * x))
        elif lam < 0:
            first, second = (lambda x: math.cosh(k * x)), (lambda x: math.sinh(k * x))
        else:
            first, second = (lambda x: 1.0), (lambda x: x)
        assert mass[row, row] == pytest.approx(quad(lambda x: first(x) ** 2, 0, length)[0], rel=1e-10)
        assert mass[row, row + 1] == pytest.approx(quad(lambda x: first(x) * second(x), 0, length)[0], rel=1e-10)
        assert mass[row + 1, row + 1] == pytest.approx(quad(lambda x: second(x) ** 2, 0, length)[0], rel=1e-10)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_lollipop_loop_state(corpus, n):
    g = corpus("lollipop")
    record = _record_near(g, float(n))
    assert record.multiplicity == 1
    assert abs(record.k - n) <= 1e-9
    (f,) = eigenfunctions_at(g, record)
    assert isinstance(f.classification, LoopSupported)
    assert f.classification.loop.attachment_vertex == "a"
    np.testing.assert_allclose(f.edge_coefficients("tail"), 0.0, atol=1e-8)
    assert abs(vertex_values(f)["a"]) <= 1e-8
    for x in (0.0, 0.4, 1.0):
        assert abs(evaluate(f, "tail", x)) <= 1e-8

    longer = with_lengths(g, {"tail": g.edge("tail").length + 0.1})
    moved = _record_near(longer, float(n))
    assert abs(moved.k - record.k) <= 1e-9
    (h,) = eigenfunctions_at(longer, moved)
    assert isinstance(h.classification, LoopSupported)


def test_flipped_loop_state(corpus):
    g = corpus("lollipop")
    (f,) = eigenfunctions_at(g, _record_near(g, 1.0))
    flipped = flip_loop(f, f.classification.loop)
    np.testing.assert_allclose(flipped.edge_coefficients("loop"), -f.edge_coefficients("loop"), atol=1e-8)
    assert isinstance(flipped.classification, LoopSupported)


def test_equal_figure8_splits_into_loop_states(corpus):
    g = corpus("figure8_equal")
    functions = eigenfunctions_at(g, _record_near(g, 1.0))
    assert [f.classification.label for f in functions] == ["loop", "loop", "nonvanishing"]
    edges = {f.classification.loop.edge_chain for f in functions[:2]}
    assert edges == {("e0",), ("e1",)}
    gram = np.array([[inner_product(f, h) for h in functions] for f in functions])
    np.testing.assert_allclose(gram, np.eye(3), atol=1e-9)


def test_classification_is_recomputable(corpus):
    g = corpus("lollipop")
    (f,) = eigenfunctions_at(g, _record_near(g, 1.0))
    assert classify_support(g, f) == f.classification


def test_wrong_multiplicity_is_refused(corpus):
    g = corpus("circle")
    record = _record_near(g, 1.0)
    wrong = EigenvalueRecord(record.lam, record.k, 1, record.index_start, record.residual)
    with pytest.raises(NullSpaceDimensionMismatch):
        eigenfunctions_at(g, wrong)


def test_evaluate_outside_edge(corpus):
    g = corpus("interval_nk")
    (f,) = eigenfunctions_at(g, _record_near(g, 1.0))
    with pytest.raises(CoordinateOutOfRange):
        evaluate(f, "e0", 4.0)
    with pytest.raises(CoordinateOutOfRange):
        evaluate(f, "e0", -0.1)
    assert evaluate(f, "e0", math.pi) == pytest.approx(-evaluate(f, "e0", 0.0), rel=1e-8)


def test_sample_table(corpus):
    g = corpus("mandarin3")
    functions = [f for record in scan_spectrum(g, 2.0) for f in eigenfunctions_at(g, record)]
    rows = sample_table(functions, 4)
    assert len(rows) == len(functions) * len(g.edges) * 4
    assert rows[0][:3] == (0, "e1", 0.0)
