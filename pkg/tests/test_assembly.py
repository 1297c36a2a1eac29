import numpy as np
import pytest

from simplexsbp.advection import spectrum, spectrum_summary
from simplexsbp.assembly import assemble_global, assemble_se_global, verify_global
from simplexsbp.config import TOLERANCES
from simplexsbp.errors import FacetMismatch
from simplexsbp.mesh import GlobalNodeMap, build_global_numbering, build_mesh, map_element, map_reference_nodes
from simplexsbp.operators import build_element_operators


def _assemble(N, p, periodic, se=False):
    mesh = build_mesh(N)
    elements = map_reference_nodes(mesh, build_element_operators(p, 2))
    numbering = build_global_numbering(mesh, np.stack([ops.nodes for ops in elements]), periodic)
    assemble = assemble_se_global if se else assemble_global
    return assemble(numbering, elements), numbering, elements


def test_single_element_is_the_element():
    ops = build_element_operators(2, 2)
    numbering = GlobalNodeMap(
        element_ids=np.arange(ops.size)[None, :],
        coordinates=ops.nodes,
        n_global=ops.size,
        periodic=False,
    )
    glob = assemble_global(numbering, [ops])
    assert np.allclose(glob.M, ops.M)
    for k in range(2):
        assert np.allclose(glob.Q[k].toarray(), ops.Q[k])
        assert np.allclose(glob.E[k].toarray(), ops.E[k])


def test_single_element_mass_is_its_area():
    vertices = np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 3.0]])
    ops = map_element(build_element_operators(3, 2), vertices)
    numbering = GlobalNodeMap(
        element_ids=np.arange(ops.size)[None, :],
        coordinates=ops.nodes,
        n_global=ops.size,
        periodic=False,
    )
    glob = assemble_global(numbering, [ops])
    assert glob.measure == pytest.approx(3.0)
    report = verify_global(glob, 3)
    assert report.mass <= 1e-12
    assert report.passed(), report


def test_norm_that_misses_the_area_fails():
    glob, _, _ = _assemble(3, 2, periodic=True)
    assert glob.measure == pytest.approx(1.0)
    skewed = glob.model_copy(update={"M": 1.001 * glob.M})
    report = verify_global(skewed, 2)
    assert report.mass == pytest.approx(1e-3)
    assert not report.passed()


@pytest.mark.parametrize("periodic", [True, False])
def test_perturbed_facet_node_is_rejected(periodic):
    mesh = build_mesh(3)
    elements = map_reference_nodes(mesh, build_element_operators(2, 2))
    nodes = np.stack([ops.nodes for ops in elements])
    # element 8 touches no boundary of the N=3 mesh
    node = elements[8].faces[0].nodes[-1]
    nodes[8, node] += 5.0 * TOLERANCES["node_match"] * mesh.h
    numbering = build_global_numbering(mesh, nodes, periodic)
    with pytest.raises(FacetMismatch):
        assemble_global(numbering, elements)
    with pytest.raises(FacetMismatch):
        assemble_se_global(numbering, elements)


def test_out_of_range_ids_are_rejected():
    ops = build_element_operators(1, 2)
    numbering = GlobalNodeMap(
        element_ids=np.array([[0, 1, 3]]),
        coordinates=ops.nodes,
        n_global=3,
        periodic=False,
    )
    with pytest.raises(IndexError):
        assemble_global(numbering, [ops])


@pytest.mark.parametrize("p", [1, 2, 3])
def test_open_mesh_operators(p):
    glob, _, _ = _assemble(4, p, periodic=False)
    report = verify_global(glob, p)
    assert report.passed(), report
    for k in range(2):
        defect = glob.Q[k] + glob.Q[k].T - glob.E[k]
        assert abs(defect).max() <= 1e-12


@pytest.mark.parametrize("p", [1, 2, 3, 4])
def test_periodic_operators(p):
    glob, _, _ = _assemble(4, p, periodic=True)
    report = verify_global(glob, p)
    assert report.passed(), report
    ones = np.ones(glob.n_global)
    for k in range(2):
        assert abs(glob.Q[k] + glob.Q[k].T).max() <= 1e-12
        assert np.max(np.abs(glob.D(k, ones))) <= 1e-10
    assert glob.M.sum() == pytest.approx(1.0, abs=1e-12)


def test_shared_nodes_sum_their_norm_entries():
    glob, numbering, elements = _assemble(3, 2, periodic=True)
    expected = np.zeros(glob.n_global)
    np.add.at(expected, numbering.element_ids, np.stack([ops.M for ops in elements]))
    assert np.allclose(glob.M, expected, atol=1e-15)
    assert np.all(glob.M > 0.0)


def test_assembly_does_not_depend_on_element_order():
    glob, numbering, elements = _assemble(3, 2, periodic=True)
    order = np.arange(len(elements))[::-1]
    reordered = GlobalNodeMap(
        element_ids=numbering.element_ids[order],
        coordinates=numbering.coordinates,
        n_global=numbering.n_global,
        periodic=True,
    )
    other = assemble_global(reordered, [elements[k] for k in order])
    assert np.allclose(other.M, glob.M, rtol=0.0, atol=1e-15)
    for k in range(2):
        assert abs(other.Q[k] - glob.Q[k]).max() <= 1e-14


def test_periodic_spectrum_is_imaginary():
    glob, _, _ = _assemble(3, 2, periodic=True)
    summary = spectrum_summary(spectrum(glob))
    assert summary["max_abs_real"] <= 1e-10 * summary["spectral_radius"]


def test_se_assembly_keeps_norm():
    sbp, _, _ = _assemble(3, 1, periodic=True)
    se, _, _ = _assemble(3, 1, periodic=True, se=True)
    assert se.kind == "se"
    assert np.allclose(se.M, sbp.M)
    for k in range(2):
        assert abs(se.Q[k] - sbp.Q[k]).max() <= 1e-12
