import math

import numpy as np
import pytest

from engine.errors import NonpositiveK, RobinNotSupportedOnTorus
from engine.metric_graph import VertexCondition
from engine.secular import (
    BondIndex,
    assemble_secular_system,
    bond_scattering,
    fit_proportionality,
    mandarin3_closed_form,
    secular_value,
    star3_dirichlet_closed_form,
    star3_neumann_closed_form,
    torus_gradient,
    torus_value,
    vertex_scattering,
)

from conftest import CORPUS

RNG_POINTS = np.random.default_rng(1234).uniform(0.0, 2.0 * math.pi, size=(1000, 3))


@pytest.mark.parametrize(
    "condition, degree, k",
    [
        (VertexCondition.nk(), 1, 1.0),
        (VertexCondition.nk(), 3, 2.0),
        (VertexCondition.delta(1.5), 3, 0.7),
        (VertexCondition.delta(-2.0), 4, 3.1),
        (VertexCondition.dirichlet(), 1, 1.0),
    ],
)
def test_vertex_scattering_is_unitary(condition, degree, k):
    sigma = vertex_scattering(condition, degree, k)
    assert sigma.shape == (degree, degree)
    np.testing.assert_allclose(sigma @ sigma.conj().T, np.eye(degree), atol=1e-13)


def test_vertex_scattering_special_values():
    np.testing.assert_allclose(vertex_scattering(VertexCondition.nk(), 1, 1.0), [[1.0]])
    np.testing.assert_allclose(vertex_scattering(VertexCondition.dirichlet(), 1, 1.0), [[-1.0]])
    np.testing.assert_allclose(vertex_scattering(VertexCondition.nk(), 2, 1.0), [[0.0, 1.0], [1.0, 0.0]])
    with pytest.raises(NonpositiveK):
        vertex_scattering(VertexCondition.nk(), 2, 0.0)


def test_bond_index_conventions():
    bonds = BondIndex(("e0", "e1"))
    assert bonds.dimension == 4
    assert bonds.bond("e1", forward=False) == 3
    assert BondIndex.reverse(2) == 3
    assert bonds.in_end(0) == ("e0", 1)
    assert bonds.out_end(0) == ("e0", 0)
    assert bonds.in_end(3) == ("e1", 0)
    assert list(bonds.bond_edges) == [0, 0, 1, 1]


@pytest.mark.parametrize("name", CORPUS)
def test_bond_scattering_unitary_on_corpus(corpus, name):
    system = assemble_secular_system(corpus(name), 1.7)
    assert system.unitarity_defect() < 1e-12


def test_circle_scattering_is_identity(corpus):
    np.testing.assert_allclose(bond_scattering(corpus("circle"), 1.0), np.eye(2))


@pytest.mark.parametrize("k", [0.3, 1.0, 1.5, 2.75])
def test_circle_secular_value(corpus, k):
    g = corpus("circle")
    assert secular_value(g, k) == pytest.approx(-4.0 * math.sin(k * math.pi) ** 2, abs=1e-12)


def test_dirichlet_interval_zeros(corpus):
    g = corpus("interval_dirichlet")
    for n in range(1, 6):
        assert abs(secular_value(g, float(n))) < 1e-10
        assert abs(secular_value(g, n + 0.5)) > 0.1


def test_robin_secular_value_is_complex(corpus):
    value = secular_value(corpus("impure_loop"), 1.3)
    assert isinstance(value, complex)


def test_assemble_refuses_nonpositive_k(corpus):
    with pytest.raises(NonpositiveK):
        assemble_secular_system(corpus("circle"), 0.0)


def test_secular_value_equals_torus_value(corpus):
    g = corpus("star3_dirichlet")
    for k in (0.4, 1.9, 3.3):
        assert secular_value(g, k) == pytest.approx(torus_value(g, k * g.lengths), abs=1e-11)


def test_torus_value_batch_shape(corpus):
    g = corpus("mandarin3")
    points = np.random.default_rng(5).uniform(0.0, 6.0, size=(5, 7, 3))
    values = torus_value(g, points)
    assert values.shape == (5, 7)
    assert values[2, 3] == pytest.approx(torus_value(g, points[2, 3]), abs=1e-13)
    with pytest.raises(ValueError):
        torus_value(g, np.zeros((4, 2)))


def test_torus_value_refuses_robin(corpus):
    with pytest.raises(RobinNotSupportedOnTorus):
        torus_value(corpus("impure_loop"), [1.0, 2.0])


def test_circle_torus_function(corpus):
    kappa = np.linspace(0.0, 2.0 * math.pi, 17)[:, np.newaxis]
    np.testing.assert_allclose(torus_value(corpus("circle"), kappa), -4.0 * np.sin(kappa[:, 0] / 2) ** 2, atol=1e-12)


def test_star_dirichlet_matches_closed_form(corpus):
    phi = torus_value(corpus("star3_dirichlet"), RNG_POINTS)
    constant, residual = fit_proportionality(phi, star3_dirichlet_closed_form(RNG_POINTS))
    assert residual <= 1e-8
    assert abs(constant) > 1e-3


def test_star_neumann_is_shifted_dirichlet(corpus):
    phi_n = torus_value(corpus("star3_nk"), RNG_POINTS)
    constant, residual = fit_proportionality(phi_n, star3_neumann_closed_form(RNG_POINTS))
    assert residual <= 1e-8
    np.testing.assert_allclose(
        phi_n, constant * star3_dirichlet_closed_form(RNG_POINTS - math.pi / 2), atol=1e-10
    )

    phi_d = torus_value(corpus("star3_dirichlet"), RNG_POINTS)
    constant_d, _ = fit_proportionality(phi_d, star3_dirichlet_closed_form(RNG_POINTS))
    assert abs(constant) == pytest.approx(abs(constant_d), rel=1e-9)


def test_mandarin_factorization(corpus):
    phi = torus_value(corpus("mandarin3"), RNG_POINTS)
    _, residual = fit_proportionality(phi, mandarin3_closed_form(RNG_POINTS))
    assert residual <= 1e-8


def test_torus_gradient_matches_closed_form(corpus):
    g = corpus("star3_dirichlet")
    constant, _ = fit_proportionality(torus_value(g, RNG_POINTS), star3_dirichlet_closed_form(RNG_POINTS))
    point = np.array([0.7, 2.1, 4.0])
    s, c = np.sin(point), np.cos(point)
    exact = constant * np.array([
        c[0] * s[1] * c[2] - s[0] * s[1] * s[2] + s[2] * c[0] * c[1],
        s[0] * c[1] * c[2] + c[1] * s[2] * c[0] - s[2] * s[0] * s[1],
        -s[0] * s[1] * s[2] + s[1] * c[2] * c[0] + c[2] * s[0] * c[1],
    ])
    np.testing.assert_allclose(torus_gradient(g, point), exact, atol=1e-7)


def test_fit_proportionality():
    b = np.array([1.0, -2.0, 0.5])
    constant, residual = fit_proportionality(3.0 * b, b)
    assert constant == pytest.approx(3.0)
    assert residual == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        fit_proportionality(b, np.zeros(3))


@pytest.mark.parametrize("name", [name for name in CORPUS if name != "impure_loop"])
def test_secular_value_is_real_up_to_rounding(corpus, name):
    g = corpus(name)
    for k in np.linspace(0.05, 30.0, 600):
        value = assemble_secular_system(g, k).value()
        assert abs(value.imag) <= 1e-10 * (1.0 + abs(value))
