import logging
from pathlib import Path

import numpy as np
from pydantic import BaseModel
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from simplexsbp.config import TOLERANCES
from simplexsbp.errors import FacetMismatch
from simplexsbp.operators import ElementOperators, FaceDescriptor
from simplexsbp.simplex import Simplex
from simplexsbp.utils import Utility

logger = logging.getLogger(__name__)

PERTURBATION = 1.0 / 40.0


class PeriodicTriMesh(BaseModel):
    N: int
    vertices: np.ndarray
    triangles: np.ndarray
    jacobians: np.ndarray
    offsets: np.ndarray
    determinants: np.ndarray

    class Config:
        arbitrary_types_allowed = True
        frozen = True

    @property
    def h(self) -> float:
        return 1.0 / self.N

    @property
    def num_elements(self) -> int:
        return len(self.triangles)

    def element(self, k: int) -> Simplex:
        return Simplex(vertices=self.vertices[self.triangles[k]])


class GlobalNodeMap(BaseModel):
    element_ids: np.ndarray
    coordinates: np.ndarray
    n_global: int
    periodic: bool

    class Config:
        arbitrary_types_allowed = True
        frozen = True


class FacetPairing(BaseModel):
    """neighbors[k, f] = (element, facet) across facet f of element k, or (-1, -1)."""

    neighbors: np.ndarray
    periodic: bool

    class Config:
        arbitrary_types_allowed = True
        frozen = True

    def interior_pairs(self) -> list[tuple[int, int, int, int]]:
        pairs = []
        for k, f in zip(*np.nonzero(self.neighbors[:, :, 0] >= 0)):
            nbr, g = self.neighbors[k, f]
            if (k, f) < (nbr, g):
                pairs.append((int(k), int(f), int(nbr), int(g)))
        return pairs


def vertex_coordinates(N: int) -> np.ndarray:
    i, j = np.meshgrid(np.arange(N + 1), np.arange(N + 1), indexing="ij")
    bump = PERTURBATION * np.sin(2.0 * np.pi * i / N) * np.sin(2.0 * np.pi * j / N)
    x = i / N + bump
    y = j / N + bump
    return np.column_stack([x.ravel(), y.ravel()])


def build_mesh(N: int) -> PeriodicTriMesh:
    if not isinstance(N, (int, np.integer)) or N < 2:
        raise ValueError(f"N must be an integer >= 2. Value: {N!r}")
    N = int(N)
    vertices = vertex_coordinates(N)

    def vid(i, j):
        return i * (N + 1) + j

    i, j = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    i, j = i.ravel(), j.ravel()
    a, b, c, d = vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1)
    # each quad is split along the diagonal from x_{i+1,j} to x_{i,j+1}
    triangles = np.empty((2 * len(a), 3), dtype=int)
    triangles[0::2] = np.column_stack([a, b, c])
    triangles[1::2] = np.column_stack([b, d, c])

    corners = vertices[triangles]
    jacobians = np.stack([corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0]], axis=2)
    determinants = np.linalg.det(jacobians)
    mesh = PeriodicTriMesh(
        N=N,
        vertices=vertices,
        triangles=triangles,
        jacobians=jacobians,
        offsets=corners[:, 0].copy(),
        determinants=determinants,
    )
    bad = np.flatnonzero(determinants <= 0.0)
    if len(bad):
        mesh.element(int(bad[0])).require_positive(int(bad[0]))
    return mesh


def map_element(ref: ElementOperators, vertices: np.ndarray, element: int = 0) -> ElementOperators:
    # E from the physical facets, S by the constant-Jacobian chain rule, M scaled by |det J|
    simplex = Simplex(vertices=np.asarray(vertices, dtype=float))
    simplex.require_positive(element)
    d = simplex.dimension
    det = simplex.determinant
    J_inv = np.linalg.inv(simplex.jacobian)

    nodes = simplex.to_physical(ref.nodes)
    M = det * ref.M

    faces = []
    for face in ref.faces:
        normal, measure = simplex.facet_geometry(face.facet)
        faces.append(FaceDescriptor(
            facet=face.facet,
            nodes=face.nodes,
            local_coords=face.local_coords,
            normal=normal,
            measure=measure,
            B=face.B * (measure / face.measure),
        ))

    n = ref.size
    E, S = [], []
    for c in range(d):
        E_c = np.zeros((n, n))
        for face in faces:
            E_c[np.ix_(face.nodes, face.nodes)] += face.normal[c] * face.B
        E.append(E_c)
        S.append(det * sum(J_inv[r, c] * ref.S[r] for r in range(d)))
    Q = [S[c] + 0.5 * E[c] for c in range(d)]

    Q_se = None
    if ref.Q_se is not None:
        Q_se = [det * sum(J_inv[r, c] * ref.Q_se[r] for r in range(d)) for c in range(d)]

    return ElementOperators(
        degree=ref.degree,
        dimension=d,
        nodes=nodes,
        vertices=simplex.vertices,
        M=M,
        Q=Q,
        E=E,
        S=S,
        faces=faces,
        Q_se=Q_se,
        branch=ref.branch,
    )


def map_reference_nodes(mesh: PeriodicTriMesh, ref: ElementOperators) -> list[ElementOperators]:
    return [map_element(ref, mesh.vertices[tri], k) for k, tri in enumerate(mesh.triangles)]


def _wrap(points: np.ndarray, tol: float) -> np.ndarray:
    wrapped = np.mod(points, 1.0)
    wrapped[wrapped > 1.0 - tol] = 0.0
    return wrapped


def _cluster(points: np.ndarray, tol: float, periodic: bool) -> np.ndarray:
    if periodic:
        tree = cKDTree(_wrap(points, tol), boxsize=1.0)
    else:
        tree = cKDTree(points)
    pairs = tree.query_pairs(tol, output_type="ndarray")
    n = len(points)
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    return labels


def match_facets(mesh: PeriodicTriMesh, periodic: bool = True) -> FacetPairing:
    tol = TOLERANCES["node_match"] * mesh.h
    corners = mesh.vertices[mesh.triangles]
    # facet f is opposite vertex f, so its midpoint is the mean of the other two
    midpoints = (corners.sum(axis=1, keepdims=True) - corners) / 2.0
    flat = midpoints.reshape(-1, 2)
    labels = _cluster(flat, tol, periodic)

    neighbors = -np.ones((mesh.num_elements, 3, 2), dtype=int)
    order = np.argsort(labels, kind="stable")
    groups = np.split(order, np.flatnonzero(np.diff(labels[order])) + 1)
    for group in groups:
        if len(group) == 1:
            continue
        if len(group) != 2:
            raise FacetMismatch(f"{len(group)} facets share the midpoint {flat[group[0]]}.")
        (k, f), (m, g) = divmod(int(group[0]), 3), divmod(int(group[1]), 3)
        n_k, _ = mesh.element(k).facet_geometry(f)
        n_m, _ = mesh.element(m).facet_geometry(g)
        if np.max(np.abs(n_k + n_m)) > 1e-12:
            raise FacetMismatch(f"Facets ({k},{f}) and ({m},{g}) do not have opposite normals.")
        neighbors[k, f] = (m, g)
        neighbors[m, g] = (k, f)
    return FacetPairing(neighbors=neighbors, periodic=periodic)


def build_global_numbering(
    mesh: PeriodicTriMesh,
    element_nodes: np.ndarray,
    periodic: bool = True,
) -> GlobalNodeMap:
    element_nodes = np.asarray(element_nodes, dtype=float)
    K, n, _ = element_nodes.shape
    tol = TOLERANCES["node_match"] * mesh.h
    points = element_nodes.reshape(-1, 2)
    labels = _cluster(points, tol, periodic)

    base = _wrap(points, tol) if periodic else points
    quantized = np.round(base / tol).astype(np.int64)
    num_classes = labels.max() + 1
    representative = np.full((num_classes, 2), np.iinfo(np.int64).max)
    np.minimum.at(representative, labels, quantized)
    order = np.lexsort((representative[:, 1], representative[:, 0]))
    rank = np.empty(num_classes, dtype=int)
    rank[order] = np.arange(num_classes)
    ids = rank[labels].reshape(K, n)

    _, first = np.unique(ids.ravel(), return_index=True)
    coordinates = base[first]

    numbering = GlobalNodeMap(
        element_ids=ids,
        coordinates=coordinates,
        n_global=int(num_classes),
        periodic=periodic,
    )
    logger.debug("N=%d: %d local nodes -> %d global ids", mesh.N, K * n, num_classes)
    return numbering


def check_shared_facets(numbering: GlobalNodeMap, elements: list[ElementOperators]) -> None:
    """Geometrically coincident facets must carry the same global ids.

    A facet whose id set appears only once is a boundary facet; two such
    facets lying on top of each other mean their nodes were not merged.
    """
    owners: dict[tuple[int, ...], list[tuple[int, int]]] = {}
    for k, ops in enumerate(elements):
        for f, face in enumerate(ops.faces):
            key = tuple(np.sort(numbering.element_ids[k, face.nodes]).tolist())
            owners.setdefault(key, []).append((k, f))
    unmatched = [facets[0] for facets in owners.values() if len(facets) == 1]
    if len(unmatched) < 2:
        return

    centroids = np.array([elements[k].nodes[elements[k].faces[f].nodes].mean(axis=0) for k, f in unmatched])
    tol = 1e-6 * min(np.sqrt(abs(ops.simplex.determinant)) for ops in elements)
    tree = cKDTree(_wrap(centroids, tol), boxsize=1.0) if numbering.periodic else cKDTree(centroids)
    pairs = tree.query_pairs(tol, output_type="ndarray")
    if len(pairs):
        (k, f), (m, g) = unmatched[pairs[0, 0]], unmatched[pairs[0, 1]]
        raise FacetMismatch(f"Facet ({k},{f}) and ({m},{g}) coincide but their node sets do not.")


def dump_mesh(mesh: PeriodicTriMesh, numbering: GlobalNodeMap, path: Path) -> Path:
    return Utility.write_json(path, {
        "N": mesh.N,
        "vertices": mesh.vertices,
        "triangles": mesh.triangles,
        "global_ids": numbering.element_ids,
        "coordinates": numbering.coordinates,
        "periodic": numbering.periodic,
    })
