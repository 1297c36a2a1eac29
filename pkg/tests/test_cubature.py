import itertools
from math import comb

import numpy as np
import pytest

from simplexsbp import cubature
from simplexsbp.cubature import (
    SymmetryOrbit,
    expand_orbit,
    get_rule,
    golden_path,
    load_rule,
    min_node_distance,
    orbit_template,
    save_rule,
    verify_cubature,
)
from simplexsbp.errors import SimplexSbpError, UnsupportedDegree
from simplexsbp.utils import Utility

CASES = [(p, d) for d in (2, 3) for p in (1, 2, 3, 4)]


def _sorted_rows(points: np.ndarray) -> np.ndarray:
    points = np.round(points, 12)
    return points[np.lexsort(points.T[::-1])]


def test_expand_orbit_known_nodes():
    centroid = expand_orbit(SymmetryOrbit(kind="centroid"), 2)
    assert np.allclose(centroid, [[1 / 3, 1 / 3]])

    vertices = expand_orbit(SymmetryOrbit(kind="vertices"), 2)
    assert np.allclose(_sorted_rows(vertices), [[0, 0], [0, 1], [1, 0]])

    edge = expand_orbit(SymmetryOrbit(kind="edge", params=[0.2]), 2)
    assert len(edge) == 6
    s21 = expand_orbit(SymmetryOrbit(kind="S21", params=[0.1]), 2)
    assert len(s21) == 3
    assert np.allclose(_sorted_rows(s21), _sorted_rows(np.array([[0.1, 0.1], [0.1, 0.8], [0.8, 0.1]])))


@pytest.mark.parametrize(
    "kind, d, size",
    [("vertices", 3, 4), ("mid-edge", 3, 6), ("edge", 3, 12), ("face-centroid", 3, 4),
     ("face-S21", 3, 12), ("S31", 3, 4), ("S22", 3, 6), ("mid-edge", 2, 3)],
)
def test_orbit_sizes(kind, d, size):
    params = [0.1] if kind in ("edge", "face-S21", "S31", "S22") else []
    assert len(expand_orbit(SymmetryOrbit(kind=kind, params=params), d)) == size


def test_expand_orbit_rejects_parameter_out_of_range():
    with pytest.raises(ValueError):
        expand_orbit(SymmetryOrbit(kind="S21", params=[0.6]), 2)
    with pytest.raises(ValueError):
        expand_orbit(SymmetryOrbit(kind="S31", params=[0.4]), 3)


@pytest.mark.parametrize("p, d", CASES)
def test_template_facet_node_counts(p, d):
    orbits = [orbit.model_copy(update={"weight": 1.0}) for orbit in orbit_template(p, d)]
    nodes = np.vstack([expand_orbit(orbit, d) for orbit in orbits])
    bary = np.column_stack([1.0 - nodes.sum(axis=1), nodes])
    expected = comb(p + d - 1, d - 1)
    for k in range(d + 1):
        assert np.sum(np.abs(bary[:, k]) < 1e-12) == expected


def test_template_rejects_degree_five():
    with pytest.raises(UnsupportedDegree):
        orbit_template(5, 2)


def test_p1_triangle_is_vertex_rule():
    rule = get_rule(1, 2)
    assert rule.size == 3
    assert np.allclose(rule.weights, 1 / 6, atol=1e-14)


def test_p2_triangle_weights():
    rule = get_rule(2, 2)
    expected = {"vertices": 1 / 40, "mid-edge": 1 / 15, "centroid": 9 / 40}
    for orbit in rule.orbits:
        assert orbit.weight == pytest.approx(expected[orbit.kind], abs=1e-13)


@pytest.mark.parametrize("p, d", CASES)
def test_rules_are_positive_and_exact(p, d):
    rule = get_rule(p, d)
    assert rule.weights.min() > 0.0
    assert verify_cubature(rule, 2 * p - 1) <= 1e-12
    assert abs(rule.weights.sum() - (0.5 if d == 2 else 1 / 6)) <= 1e-13
    assert rule.facet_node_counts() == [comb(p + d - 1, d - 1)] * (d + 1)
    for orbit in rule.orbits:
        if orbit.kind == "edge":
            assert orbit.params[0] <= 0.5
        if orbit.kind == "S22":
            assert orbit.params[0] <= 0.25


@pytest.mark.parametrize("p", [2, 3, 4])
def test_integrates_xy(p):
    rule = get_rule(p, 2)
    assert float(rule.weights @ (rule.nodes[:, 0] * rule.nodes[:, 1])) == pytest.approx(1 / 24, abs=1e-13)


@pytest.mark.parametrize("p, d", CASES)
def test_rules_are_invariant_under_vertex_permutations(p, d):
    rule = get_rule(p, d)
    bary = np.column_stack([1.0 - rule.nodes.sum(axis=1), rule.nodes])
    original = _sorted_rows(np.column_stack([rule.nodes, rule.weights]))
    for perm in itertools.permutations(range(d + 1)):
        permuted = bary[:, list(perm)][:, 1:]
        mapped = _sorted_rows(np.column_stack([permuted, rule.weights]))
        assert np.allclose(original, mapped, atol=1e-12), perm


def test_perturbed_weight_breaks_exactness():
    rule = get_rule(2, 2)
    weights = rule.weights.copy()
    weights[0] += 1e-3
    perturbed = rule.model_copy(update={"weights": weights})
    assert verify_cubature(perturbed, 3) >= 1e-4


def test_golden_file_reload(tmp_path):
    rule = get_rule(3, 2)
    path = save_rule(rule, tmp_path / "rule.json")
    loaded = load_rule(path)
    assert np.allclose(loaded.weights, rule.weights, atol=1e-15)
    assert loaded.branch == rule.branch
    assert loaded.metadata.created_at == rule.metadata.created_at
    assert loaded.metadata.change_logs[-1].fields == ["residual"]


@pytest.mark.parametrize("p, d", CASES)
def test_get_rule_reads_shipped_golden_file(p, d, monkeypatch):
    def no_solve(*args, **kwargs):
        raise AssertionError("get_rule solved instead of loading the golden file")

    monkeypatch.setattr(cubature, "solve_cubature", no_solve)
    get_rule.cache_clear()
    try:
        assert golden_path(p, d).exists()
        rule = get_rule(p, d)
        assert rule.branch == 0
        assert rule.certified_degree == 2 * p - 1
        assert rule.residual <= 1e-12
    finally:
        get_rule.cache_clear()


def test_cached_rule_is_read_only():
    rule = get_rule(2, 2)
    with pytest.raises(ValueError):
        rule.weights[0] = 1.0
    with pytest.raises(ValueError):
        rule.nodes[0, 0] = 0.5
    assert get_rule(2, 2).weights[0] == pytest.approx(1 / 40, abs=1e-13)


def test_corrupted_golden_file_is_rejected(tmp_path):
    path = save_rule(get_rule(2, 2), tmp_path / "rule.json")
    data = Utility.read_json(path)
    data["orbits"][0]["weight"] *= 1.01
    Utility.write_json(path, data)
    with pytest.raises(SimplexSbpError):
        load_rule(path)

    del data["orbits"]
    Utility.write_json(path, data)
    with pytest.raises(SimplexSbpError):
        load_rule(path)


def test_min_node_distance():
    assert min_node_distance(get_rule(1, 2)) == pytest.approx(1.0)
    assert min_node_distance(get_rule(2, 2)) == pytest.approx(np.sqrt(2) / 6)
