import math

import numpy as np
import pytest
from scipy.optimize import brentq

import engine.spectral as spectral
from engine.errors import CheckFailed, NoConvergence, NonpositiveK, WeylCountMismatch
from engine.metric_graph import build_graph, parse_graph, with_lengths
from engine.spectral import (
    ScanOptions,
    WeylEstimate,
    basis_at,
    direct_determinant,
    eigenvalue_list,
    impure_loop_roots,
    lowest_eigenvalues,
    multiplicity_at,
    scan_spectrum,
    secular_roots,
    weyl_count,
)

from conftest import CORPUS

SQRT2 = math.sqrt(2.0)


def test_circle_spectrum(corpus):
    records = scan_spectrum(corpus("circle"), 5.5)
    assert [(r.lam, r.multiplicity) for r in records][:1] == [(0.0, 1)]
    assert [r.multiplicity for r in records] == [1, 2, 2, 2, 2, 2]
    for n, record in enumerate(records):
        assert abs(record.k - n) <= 1e-9
    assert list(eigenvalue_list(records)) == pytest.approx([0, 1, 1, 4, 4, 9, 9, 16, 16, 25, 25], abs=1e-8)
    assert [r.index_start for r in records] == [0, 1, 3, 5, 7, 9]


def test_interval_spectra(corpus):
    dirichlet = scan_spectrum(corpus("interval_dirichlet"), 6.5)
    assert [r.k for r in dirichlet] == pytest.approx([1, 2, 3, 4, 5, 6], abs=1e-9)
    assert all(r.multiplicity == 1 for r in dirichlet)

    neumann = scan_spectrum(corpus("interval_nk"), 6.5)
    assert [r.k for r in neumann] == pytest.approx([0, 1, 2, 3, 4, 5, 6], abs=1e-9)
    assert all(r.multiplicity == 1 for r in neumann)


def test_figure8_families(corpus):
    records = scan_spectrum(corpus("figure8"), 3.05)
    found = [r for r in records if r.k <= 3.0 + 1e-9]
    families = [n for n in range(0, 4)] + [n / SQRT2 for n in range(1, 5)] + [n / (1 + SQRT2) for n in range(1, 8)]
    expected = sorted(k for k in families if k <= 3.0 + 1e-9)
    assert len(found) == len(expected)
    assert all(r.multiplicity == 1 for r in found)
    for record, k in zip(found, expected):
        assert abs(record.k - k) <= 1e-9


def test_equal_figure8_is_degenerate(corpus):
    g = corpus("figure8_equal")
    assert multiplicity_at(g, 1.0) == 3
    assert multiplicity_at(g, 0.25) == 1
    records = scan_spectrum(g, 2.2)
    assert [r.multiplicity for r in records] == [1, 1, 3, 1, 3]


def test_impure_loop_matches_scalar_equations(corpus):
    k_max = 5.7
    odd, even = impure_loop_roots(2 * math.pi, 1.0, k_max)
    assert list(odd) == pytest.approx([1, 2, 3, 4, 5], abs=1e-12)
    assert np.min(np.abs(odd[:, np.newaxis] - even[np.newaxis, :])) > 1e-3

    records = scan_spectrum(corpus("impure_loop"), k_max)
    assert all(r.multiplicity == 1 and not r.negative for r in records)
    found = np.array([r.k for r in records])
    oracle = np.sort(np.concatenate([odd, even]))
    assert len(found) == len(oracle)
    np.testing.assert_allclose(found, oracle, atol=1e-9)


@pytest.mark.parametrize("name", CORPUS)
def test_direct_and_secular_roots_agree(corpus, name):
    g = corpus(name)
    direct = [r for r in scan_spectrum(g, 9.7) if r.k > 0.2 and not r.negative]
    secular = [r for r in secular_roots(g, 9.7, k_min=0.1) if r.k > 0.2]
    assert len(direct) == len(secular)
    for a, b in zip(direct, secular):
        assert abs(a.k - b.k) <= 1e-9
        assert a.multiplicity == b.multiplicity


def test_negative_eigenvalue_of_attractive_vertex():
    g = build_graph(parse_graph("vertex a delta -1.0\nvertex b nk\nedge e a b 1.0\n"))
    kappa = brentq(lambda x: x * math.tanh(x) - 1.0, 0.5, 2.0, xtol=1e-15)
    records = scan_spectrum(g, 5.0)
    assert records[0].negative
    assert records[0].k == pytest.approx(kappa, abs=1e-9)
    assert records[0].lam == pytest.approx(-kappa ** 2, abs=1e-8)
    assert records[0].index_start == 0
    assert sum(1 for r in records if r.negative) == 1


def test_circle_direct_determinant(corpus):
    g = corpus("circle")
    for k in (0.3, 0.8, 1.6):
        det, (second, smallest) = direct_determinant(g, k * k)
        assert abs(det) == pytest.approx(4.0 * math.sin(k * math.pi) ** 2, rel=1e-10)
        assert second >= smallest
    assert multiplicity_at(g, 4.0) == 2
    assert multiplicity_at(g, 0.0) == 1


def test_basis_is_continuous_through_zero():
    c, s = basis_at(np.array([1e-14, 0.0, -1e-14]), 2.0)
    np.testing.assert_allclose(c, 1.0, atol=1e-12)
    np.testing.assert_allclose(s, 2.0, atol=1e-12)
    c, s = basis_at(np.array([4.0, -4.0]), 0.5)
    assert c == pytest.approx([math.cos(1.0), math.cosh(1.0)])
    assert s == pytest.approx([math.sin(1.0) / 2, math.sinh(1.0) / 2])


def test_weyl_estimate(corpus):
    estimate = weyl_count(corpus("circle"), 5.5)
    assert estimate.expected == pytest.approx(11.0)
    assert estimate.tolerance == 3.0
    assert estimate.accepts(11) and estimate.accepts(14) and not estimate.accepts(15)


def test_weyl_mismatch_is_reported(corpus, monkeypatch):
    monkeypatch.setattr(spectral, "weyl_count", lambda g, k_max: WeylEstimate(100.0, 1.0))
    with pytest.raises(WeylCountMismatch):
        scan_spectrum(corpus("circle"), 2.5)
    assert scan_spectrum(corpus("circle"), 2.5, ScanOptions(check_weyl=False))


def test_scan_refuses_nonpositive_range(corpus):
    with pytest.raises(NonpositiveK):
        scan_spectrum(corpus("circle"), 0.0)
    with pytest.raises(NonpositiveK):
        secular_roots(corpus("circle"), 1.0, k_min=2.0)


def test_threaded_scan_is_identical(corpus):
    g = corpus("star3_dirichlet")
    assert scan_spectrum(g, 8.0, ScanOptions(threads=3)) == scan_spectrum(g, 8.0)


def test_lowest_eigenvalues(corpus):
    g = corpus("circle")
    records = lowest_eigenvalues(g, 4)
    assert sum(r.multiplicity for r in records) >= 4
    assert list(eigenvalue_list(records, 4)) == pytest.approx([0, 1, 1, 4], abs=1e-8)
    assert lowest_eigenvalues(g, 0) == []


def test_unrefined_roots_raise(corpus):
    options = ScanOptions(max_iterations=1)
    with pytest.raises(NoConvergence):
        scan_spectrum(corpus("interval_dirichlet"), 5.7, options)
    with pytest.raises(NoConvergence):
        secular_roots(corpus("star3_dirichlet"), 5.7, options)


def test_negative_count_is_bounded_by_negative_coefficients(monkeypatch):
    g = build_graph(parse_graph("vertex a delta -1.0\nvertex b nk\nedge e a b 1.0\n"))
    find_roots = spectral._find_roots

    def doubled(evaluate, a, b, step, options):
        roots = find_roots(evaluate, a, b, step, options)
        return roots + roots if b < 3.0 else roots

    monkeypatch.setattr(spectral, "_find_roots", doubled)
    with pytest.raises(CheckFailed):
        scan_spectrum(g, 5.0)


def test_two_attractive_vertices_give_at_most_two_negative_eigenvalues():
    g = build_graph(parse_graph("vertex a delta -2.0\nvertex b delta -3.0\nedge e a b 1.5\n"))
    records = scan_spectrum(g, 5.0)
    assert 1 <= sum(r.multiplicity for r in records if r.negative) <= 2
    assert [r.index_start for r in records][:1] == [0]


@pytest.mark.parametrize("name, edge", [("star3_dirichlet", "e2"), ("cycle_tail", "e4"), ("mandarin3", "e1")])
def test_eigenvalues_move_continuously_with_a_length(corpus, name, edge):
    g = corpus(name)
    delta = 1e-4
    moved = with_lengths(g, {edge: g.edge(edge).length + delta})
    before = eigenvalue_list(lowest_eigenvalues(g, 12), 12)
    after = eigenvalue_list(lowest_eigenvalues(moved, 12), 12)
    bound = 10.0 * np.abs(before) * delta / g.min_length
    assert np.all(np.abs(after - before) <= bound + 1e-10)
