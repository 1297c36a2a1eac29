import numpy as np
import pytest

from simplexsbp.errors import DegenerateNodeSet
from simplexsbp.polynomials import (
    BasisSpec,
    basis_size,
    check_nodes,
    eval_basis,
    monomial_exponents,
    monomial_index,
    monomial_integral,
    monomial_pair,
    monomial_vandermonde,
    orthonormal_vandermonde,
    simplex_quadrature,
)


def _interior_points(d: int, count: int = 20, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    bary = rng.dirichlet(np.ones(d + 1), size=count)
    bary = 0.9 * bary + 0.1 / (d + 1)
    return bary[:, 1:]


def test_basis_size():
    assert basis_size(1, 2) == 3
    assert basis_size(0, 2) == 1
    assert basis_size(2, 3) == 10
    assert basis_size(4, 2) == 15


def test_monomial_index_known_values():
    assert monomial_index(0, 0) == 1
    assert monomial_index(1, 1) == 3
    assert monomial_index(0, 1) == 2


def test_monomial_index_round_trip():
    seen = set()
    for j in range(11):
        for i in range(j + 1):
            k = monomial_index(i, j)
            assert monomial_pair(k) == (i, j)
            seen.add(k)
    assert seen == set(range(1, basis_size(10, 2) + 1))


def test_monomial_index_rejects_bad_pairs():
    with pytest.raises(ValueError):
        monomial_index(2, 1)
    with pytest.raises(ValueError):
        monomial_index(-1, 0)


def test_monomial_ordering_matches_single_subscript():
    exponents = monomial_exponents(3, 2)
    for k, (a, b) in enumerate(exponents, start=1):
        i, j = monomial_pair(k)
        assert (a, b) == (i, j - i)


def test_constant_orthonormal_value_on_triangle():
    nodes = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1 / 3, 1 / 3]])
    basis = eval_basis(nodes, BasisSpec(dimension=2, degree=2))
    assert np.allclose(basis.V[:, 0], np.sqrt(2.0), atol=1e-14)


def test_monomial_columns():
    nodes = _interior_points(2, 5)
    basis = eval_basis(nodes, BasisSpec(dimension=2, degree=2, kind="monomial"))
    assert np.all(basis.V[:, 0] == 1.0)
    # k = 3 is the monomial x
    assert np.allclose(basis.Vx[:, 2], 1.0)
    assert np.allclose(basis.Vy[:, 2], 0.0)


@pytest.mark.parametrize("d", [2, 3])
@pytest.mark.parametrize("p", [1, 2, 3, 4])
def test_orthonormal_gram_is_identity(p, d):
    points, weights = simplex_quadrature(d, 2 * p)
    V, _ = orthonormal_vandermonde(points, p, d)
    assert np.max(np.abs((V.T * weights) @ V - np.eye(basis_size(p, d)))) <= 1e-10


@pytest.mark.parametrize("kind", ["monomial", "orthonormal"])
@pytest.mark.parametrize("d", [2, 3])
@pytest.mark.parametrize("p", [1, 2, 3, 4])
def test_derivatives_match_central_differences(p, d, kind):
    spec = BasisSpec(dimension=d, degree=p, kind=kind)
    points = _interior_points(d)
    basis = eval_basis(points, spec)
    h = 1e-6
    for c in range(d):
        shift = np.zeros(d)
        shift[c] = h
        plus = eval_basis(points + shift, spec, check=False).V
        minus = eval_basis(points - shift, spec, check=False).V
        numeric = (plus - minus) / (2 * h)
        exact = basis.grads[c]
        assert np.max(np.abs(numeric - exact) / np.maximum(1.0, np.abs(exact))) <= 1e-6


def test_monomial_integral_factorial_formula():
    assert monomial_integral((0, 0)) == pytest.approx(0.5)
    assert monomial_integral((1, 1)) == pytest.approx(1 / 24)
    assert monomial_integral((0, 0, 0)) == pytest.approx(1 / 6)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_simplex_quadrature_is_exact(d):
    q = 7
    points, weights = simplex_quadrature(d, q)
    V, _ = monomial_vandermonde(points, q, d)
    exact = np.array([monomial_integral(e) for e in monomial_exponents(q, d)])
    assert np.max(np.abs(V.T @ weights - exact)) <= 1e-14


def test_check_nodes_rejects_degenerate_sets():
    with pytest.raises(DegenerateNodeSet):
        check_nodes(np.array([[0.2, 0.2], [0.2, 0.2]]), 2)
    with pytest.raises(DegenerateNodeSet):
        check_nodes(np.array([[0.8, 0.8]]), 2)
    with pytest.raises(DegenerateNodeSet):
        eval_basis(np.array([[0.1, 0.1], [0.1, 0.1]]), BasisSpec(dimension=2, degree=1))
