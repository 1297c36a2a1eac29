import numpy as np
import pytest

from simplexsbp.cubature import get_rule
from simplexsbp.errors import FacetMismatch, InconsistentSystem
from simplexsbp.linalg import numerical_rank
from simplexsbp.operators import (
    assemble_element,
    build_boundary_operator,
    build_element_operators,
    build_norm,
    build_skew_part,
    facet_descriptors,
    load_operators,
    save_operators,
    skew_system,
    verify_sbp,
)
from simplexsbp.polynomials import BasisSpec, basis_size, eval_basis
from simplexsbp.simplex import Simplex

CASES = [(p, d) for d in (2, 3) for p in (1, 2, 3, 4)]


def test_norm_is_the_cubature():
    rule = get_rule(2, 2)
    M = build_norm(rule)
    assert np.allclose(M, rule.weights)
    assert M.sum() == pytest.approx(0.5, abs=1e-13)


def test_p1_boundary_operator():
    nodes = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    E_x = build_boundary_operator(nodes, 1, 0)
    expected = np.array([
        [-1 / 3, 0.0, -1 / 6],
        [0.0, 1 / 3, 1 / 6],
        [-1 / 6, 1 / 6, 0.0],
    ])
    assert np.allclose(E_x, expected, atol=1e-14)

    ones = np.ones(3)
    assert abs(ones @ E_x @ ones) <= 1e-14
    assert ones @ E_x @ nodes[:, 0] == pytest.approx(0.5, abs=1e-14)


def test_p1_derivative_rows():
    ops = build_element_operators(1, 2)
    assert np.allclose(ops.M, 1 / 6)
    assert np.allclose(ops.D(0), np.tile([-1.0, 1.0, 0.0], (3, 1)), atol=1e-12)
    assert np.allclose(ops.D(1), np.tile([-1.0, 0.0, 1.0], (3, 1)), atol=1e-12)


@pytest.mark.parametrize("p, d", CASES)
def test_skew_system_null_space(p, d):
    rule = get_rule(p, d)
    n = rule.size
    nb = basis_size(p, d)
    basis = eval_basis(rule.nodes, BasisSpec(dimension=d, degree=p))
    E = build_boundary_operator(rule.nodes, p, 0)
    A, _, _, _ = skew_system(basis, rule.weights, E, 0)
    # antisymmetric matrices on the orthogonal complement of the basis span
    free = (n - nb) * (n - nb - 1) // 2
    assert numerical_rank(A) == n * (n - 1) // 2 - free
    if p >= 3:
        assert free >= 1


def test_wrong_norm_is_inconsistent():
    rule = get_rule(2, 2)
    basis = eval_basis(rule.nodes, BasisSpec(dimension=2, degree=2))
    E = build_boundary_operator(rule.nodes, 2, 0)
    uniform = np.full(rule.size, 0.5 / rule.size)
    with pytest.raises(InconsistentSystem):
        build_skew_part(basis, uniform, E, 0)


def test_facet_node_count_mismatch():
    rule = get_rule(2, 2)
    with pytest.raises(FacetMismatch):
        facet_descriptors(rule.nodes, 1, Simplex.reference(2))


@pytest.mark.parametrize("p, d", CASES)
def test_operators_pass_verification(p, d):
    ops = build_element_operators(p, d)
    report = verify_sbp(ops)
    assert report.passed(), report.failures()
    assert report.tau >= p
    assert report.bilinear <= 1e-10
    assert np.all(ops.M > 0.0)


def test_negated_norm_is_flagged():
    ops = build_element_operators(2, 2)
    broken = ops.model_copy(update={"M": -ops.M})
    failures = verify_sbp(broken).failures()
    assert "min_weight" in failures
    assert "accuracy" in failures


def test_perturbed_skew_part_fails_bilinear_check():
    ops = build_element_operators(2, 2)
    S = ops.S[0].copy()
    S[0, 1] += 1e-3
    S[1, 0] -= 1e-3
    broken = ops.model_copy(update={"S": [S, ops.S[1]], "Q": [S + 0.5 * ops.E[0], ops.Q[1]]})
    report = verify_sbp(broken)
    assert report.bilinear > 1e-6
    assert not report.passed()


@pytest.mark.parametrize("p, d", [(2, 2), (3, 2), (2, 3)])
def test_summation_by_parts_on_random_vectors(p, d):
    ops = build_element_operators(p, d)
    rng = np.random.default_rng(11)
    for _ in range(50):
        u, v = rng.standard_normal((2, ops.size))
        for k in range(d):
            D = ops.D(k)
            lhs = u @ (ops.M * (D @ v)) + (D @ u) @ (ops.M * v)
            assert lhs == pytest.approx(u @ ops.E[k] @ v, abs=1e-10 * (1 + abs(lhs)))


def test_operators_are_read_only():
    ops = build_element_operators(1, 2)
    with pytest.raises(ValueError):
        ops.Q[0][0, 0] = 1.0


def test_operator_file_reload(tmp_path):
    ops = build_element_operators(2, 2)
    loaded = load_operators(save_operators(ops, tmp_path / "ops.json"))
    for k in range(2):
        assert np.allclose(loaded.Q[k], ops.Q[k], atol=1e-15)
    assert verify_sbp(loaded).passed()


def test_assemble_on_physical_element():
    rule = get_rule(2, 2)
    simplex = Simplex(vertices=np.array([[0.1, 0.2], [1.3, 0.4], [0.5, 1.1]]))
    ops = assemble_element(simplex.to_physical(rule.nodes), rule.weights * simplex.determinant, 2, simplex)
    assert verify_sbp(ops).passed()


def test_se_operator_p1_matches_sbp():
    ops = build_element_operators(1, 2)
    for k in range(2):
        assert np.allclose(ops.Q_se[k], ops.Q[k], atol=1e-12)


def test_se_operator_p2_is_not_sbp():
    ops = build_element_operators(2, 2)
    Q_se = ops.Q_se[0]
    assert np.max(np.abs(Q_se + Q_se.T - ops.E[0])) > 1e-6
    assert np.allclose(Q_se @ np.ones(ops.size), 0.0, atol=1e-12)


def test_construction_is_logged():
    ops = build_element_operators(2, 2)
    assert ops.metadata.change_logs[-1].fields == ["residuals"]
    assert ops.residuals.worst() <= 1e-10
    with pytest.raises(ValueError):
        ops.metadata.created_at = ops.metadata.created_at
