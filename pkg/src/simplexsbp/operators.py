"""Element SBP operators built from a cubature rule.

The norm is the cubature, E is assembled from exact facet mass blocks and the
antisymmetric part S is the minimum-norm solution of the accuracy equations
written in the orthonormal basis.
"""

import logging
from functools import lru_cache
from math import comb
from pathlib import Path

import numpy as np
import scipy.linalg
from pydantic import BaseModel, Field

from simplexsbp.config import RANK_TOLERANCE, REFERENCE_MEASURE, SCHEMA_VERSION, TOLERANCES
from simplexsbp.cubature import CubatureRule, get_rule
from simplexsbp.errors import DegenerateNodeSet, FacetMismatch, InconsistentSystem, NegativeWeight
from simplexsbp.linalg import min_norm_lstsq
from simplexsbp.metadata import Metadata, Residuals
from simplexsbp.polynomials import (
    BasisSpec,
    VandermondeSet,
    basis_size,
    eval_basis,
    monomial_degrees,
    monomial_vandermonde,
    orthonormal_vandermonde,
    simplex_quadrature,
)
from simplexsbp.simplex import Simplex
from simplexsbp.utils import ObjectService, Utility

logger = logging.getLogger(__name__)


class FaceDescriptor(BaseModel):
    facet: int
    nodes: np.ndarray
    local_coords: np.ndarray
    normal: np.ndarray
    measure: float
    B: np.ndarray

    class Config:
        arbitrary_types_allowed = True


class ElementOperators(BaseModel):
    degree: int
    dimension: int
    nodes: np.ndarray
    vertices: np.ndarray
    M: np.ndarray
    Q: list[np.ndarray]
    E: list[np.ndarray]
    S: list[np.ndarray]
    faces: list[FaceDescriptor]
    Q_se: list[np.ndarray] | None = None
    branch: int = 0
    residuals: Residuals = Field(default_factory=Residuals)
    metadata: Metadata = Field(default_factory=Metadata)

    class Config:
        arbitrary_types_allowed = True

    @property
    def size(self) -> int:
        return len(self.M)

    @property
    def simplex(self) -> Simplex:
        return Simplex(vertices=self.vertices)

    def D(self, direction: int) -> np.ndarray:
        return self.Q[direction] / self.M[:, None]

    def facet_nodes(self) -> np.ndarray:
        return np.unique(np.concatenate([face.nodes for face in self.faces]))


class SbpVerificationReport(BaseModel):
    degree: int
    dimension: int
    accuracy: list[float]
    antisymmetry: float
    e_symmetry: float
    decomposition: float
    e_support: float
    surface_moment: float
    tau: int
    compatibility: float
    cubature: float
    bilinear: float | None = None
    min_weight: float

    def failures(self, tol: float = TOLERANCES["accuracy"]) -> dict[str, float]:
        checks = {
            "accuracy": (max(self.accuracy), tol),
            "antisymmetry": (self.antisymmetry, TOLERANCES["antisymmetry"]),
            "e_symmetry": (self.e_symmetry, TOLERANCES["e_symmetry"]),
            "decomposition": (self.decomposition, TOLERANCES["antisymmetry"]),
            "e_support": (self.e_support, TOLERANCES["e_symmetry"]),
            "surface_moment": (self.surface_moment, TOLERANCES["surface_moment"]),
            "compatibility": (self.compatibility, TOLERANCES["compatibility"]),
            "cubature": (self.cubature, TOLERANCES["cubature"]),
        }
        if self.bilinear is not None:
            checks["bilinear"] = (self.bilinear, TOLERANCES["bilinear"])
        failing = {name: value for name, (value, limit) in checks.items() if not value <= limit}
        if not self.min_weight > 0.0:
            failing["min_weight"] = self.min_weight
        if self.tau < self.degree:
            failing["tau"] = float(self.tau)
        return failing

    def passed(self, tol: float = TOLERANCES["accuracy"]) -> bool:
        return not self.failures(tol)


def build_norm(rule: CubatureRule) -> np.ndarray:
    weights = np.asarray(rule.weights, dtype=float)
    if np.any(weights <= 0.0):
        raise NegativeWeight(f"Norm entries must be positive. Minimum: {weights.min():.3e}")
    return weights.copy()


def facet_descriptors(nodes: np.ndarray, p: int, simplex: Simplex) -> list[FaceDescriptor]:
    d = simplex.dimension
    expected = comb(p + d - 1, d - 1)
    bary = simplex.barycentric(nodes)
    faces = []
    for k, ids in enumerate(simplex.facets()):
        on_facet = np.flatnonzero(np.abs(bary[:, k]) < TOLERANCES["node_match"])
        if len(on_facet) != expected:
            raise FacetMismatch(
                f"Facet {k} carries {len(on_facet)} nodes, degree {p} needs {expected}."
            )
        # barycentric weights of facet vertices 1.. are the facet-local coordinates
        local = bary[np.ix_(on_facet, ids[1:])]
        V, _ = orthonormal_vandermonde(local, p, d - 1, with_grads=False)
        if np.linalg.cond(V) > 1.0 / RANK_TOLERANCE:
            raise DegenerateNodeSet(f"Facet {k} nodes are not unisolvent for degree {p}.")
        normal, measure = simplex.facet_geometry(k)
        B = measure / REFERENCE_MEASURE[d - 1] * np.linalg.inv(V @ V.T)
        faces.append(FaceDescriptor(
            facet=k,
            nodes=on_facet,
            local_coords=local,
            normal=normal,
            measure=measure,
            B=0.5 * (B + B.T),
        ))
    return faces


def boundary_operator_from_faces(faces: list[FaceDescriptor], n: int, direction: int) -> np.ndarray:
    E = np.zeros((n, n))
    for face in faces:
        E[np.ix_(face.nodes, face.nodes)] += face.normal[direction] * face.B
    return E


def build_boundary_operator(
    nodes: np.ndarray,
    p: int,
    direction: int,
    simplex: Simplex | None = None,
) -> np.ndarray:
    nodes = np.atleast_2d(nodes)
    simplex = simplex or Simplex.reference(nodes.shape[1])
    assert 0 <= direction < simplex.dimension, f"direction must be below {simplex.dimension}. Value: {direction!r}"
    faces = facet_descriptors(nodes, p, simplex)
    return boundary_operator_from_faces(faces, len(nodes), direction)


def skew_system(
    basis: VandermondeSet, M: np.ndarray, E: np.ndarray, direction: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Linear system A q = b for the strictly lower entries q of S (row-major order)."""
    P = basis.V
    P_dir = basis.grads[direction]
    n, nb = P.shape
    rhs = M[:, None] * P_dir - 0.5 * E @ P

    I, J = np.tril_indices(n, -1)
    L = np.arange(len(I))
    # (S P)[i] = sum_j S_ij P[j] with S_IJ = q_L and S_JI = -q_L
    A = np.zeros((n, nb, len(I)))
    A[I, :, L] = P[J]
    A[J, :, L] -= P[I]
    return A.reshape(n * nb, len(I)), rhs.reshape(n * nb), I, J


def build_skew_part(basis: VandermondeSet, M: np.ndarray, E: np.ndarray, direction: int) -> np.ndarray:
    A, b, I, J = skew_system(basis, M, E, direction)
    q = min_norm_lstsq(A, b)
    residual = float(np.max(np.abs(A @ q - b)))
    tolerance = TOLERANCES["skew_system"] * (1.0 + np.max(np.abs(b)))
    if residual > tolerance:
        raise InconsistentSystem(residual, tolerance)

    n = len(M)
    S = np.zeros((n, n))
    S[I, J] = q
    S[J, I] = -q
    return S


def cardinal_basis(nodes: np.ndarray, p: int) -> tuple[np.ndarray, list[np.ndarray]]:
    """Node values and gradients of a graded orthonormal set spanning n functions.

    All columns of degree <= p are kept; higher-degree columns are added in
    graded order whenever they raise the rank, until there are n of them.
    """
    nodes = np.atleast_2d(nodes)
    n, d = nodes.shape
    top = p
    while basis_size(top, d) < n:
        top += 1
    top += 2
    V, grads = orthonormal_vandermonde(nodes, top, d)
    degrees = monomial_degrees(top, d)
    chosen = list(np.flatnonzero(degrees <= p))
    for col in np.flatnonzero(degrees > p):
        if len(chosen) == n:
            break
        trial = chosen + [col]
        s = scipy.linalg.svdvals(V[:, trial])
        if s[-1] > 1e-8 * s[0]:
            chosen = trial
    if len(chosen) < n:
        raise DegenerateNodeSet(f"No cardinal basis of size {n} up to degree {top}.")
    return V[:, chosen], [G[:, chosen] for G in grads]


def _physical_gradients(grads: list[np.ndarray], simplex: Simplex) -> list[np.ndarray]:
    J_inv = np.linalg.inv(simplex.jacobian)
    d = simplex.dimension
    return [sum(J_inv[r, c] * grads[r] for r in range(d)) for c in range(d)]


def build_se_operator(
    nodes: np.ndarray, p: int, M: np.ndarray, simplex: Simplex | None = None
) -> list[np.ndarray]:
    """Diagonal-mass spectral-element matrices (Q_se)_ij = M_i dphi_j/dx(x_i)."""
    nodes = np.atleast_2d(nodes)
    simplex = simplex or Simplex.reference(nodes.shape[1])
    Vc, grads = cardinal_basis(simplex.to_reference(nodes), p)
    lu = scipy.linalg.lu_factor(Vc)
    # derivative of cardinal function j at node i is (G Vc^-1)_ij
    return [M[:, None] * scipy.linalg.lu_solve(lu, G.T, trans=1).T for G in _physical_gradients(grads, simplex)]


def _freeze(*arrays: np.ndarray) -> None:
    for array in arrays:
        array.flags.writeable = False


def assemble_element(
    rule_nodes: np.ndarray,
    M: np.ndarray,
    p: int,
    simplex: Simplex,
    branch: int = 0,
) -> ElementOperators:
    d = simplex.dimension
    faces = facet_descriptors(rule_nodes, p, simplex)
    n = len(M)
    E = [boundary_operator_from_faces(faces, n, k) for k in range(d)]
    reference = eval_basis(simplex.to_reference(rule_nodes), BasisSpec(dimension=d, degree=p))
    basis = VandermondeSet(V=reference.V, grads=_physical_gradients(reference.grads, simplex), spec=reference.spec)
    S = [build_skew_part(basis, M, E[k], k) for k in range(d)]
    Q = [S[k] + 0.5 * E[k] for k in range(d)]
    return ElementOperators(
        degree=p,
        dimension=d,
        nodes=rule_nodes,
        vertices=simplex.vertices,
        M=M,
        Q=Q,
        E=E,
        S=S,
        faces=faces,
        Q_se=build_se_operator(rule_nodes, p, M, simplex),
        branch=branch,
    )


@lru_cache(maxsize=None)
def build_element_operators(p: int, d: int) -> ElementOperators:
    rule = get_rule(p, d)
    ops = assemble_element(rule.nodes.copy(), build_norm(rule), p, Simplex.reference(d), rule.branch)
    report = verify_sbp(ops)
    ops.residuals = report_residuals(report)
    ops.metadata.log_change(["residuals"])
    logger.debug("built d=%d p=%d operators, worst residual %.2e", d, p, ops.residuals.worst())
    _freeze(ops.nodes, ops.M, *ops.Q, *ops.E, *ops.S, *ops.Q_se)
    return ops


def _volume_rule(simplex: Simplex, q: int) -> tuple[np.ndarray, np.ndarray]:
    points, weights = simplex_quadrature(simplex.dimension, q)
    return simplex.to_physical(points), weights * abs(simplex.determinant)


def _facet_rule(simplex: Simplex, face: FaceDescriptor, q: int) -> tuple[np.ndarray, np.ndarray]:
    d = simplex.dimension
    points, weights = simplex_quadrature(d - 1, q)
    ids = simplex.facets()[face.facet]
    base = simplex.vertices[ids[0]]
    edges = simplex.vertices[list(ids[1:])] - base
    return base + points @ edges, weights * face.measure / REFERENCE_MEASURE[d - 1]


def _surface_moments(ops: ElementOperators, top: int, direction: int) -> np.ndarray:
    d = ops.dimension
    size = basis_size(top, d)
    exact = np.zeros((size, size))
    for face in ops.faces:
        points, weights = _facet_rule(ops.simplex, face, 2 * top)
        V, _ = monomial_vandermonde(points, top, d)
        exact += face.normal[direction] * (V.T * weights) @ V
    return exact


def _achieved_tau(ops: ElementOperators, tol: float) -> tuple[float, int]:
    d, p = ops.dimension, ops.degree
    top = 2 * p
    V, _ = monomial_vandermonde(ops.nodes, top, d)
    degrees = monomial_degrees(top, d)
    errors = np.zeros((len(degrees), len(degrees)))
    for k in range(d):
        discrete = V.T @ ops.E[k] @ V
        errors = np.maximum(errors, np.abs(discrete - _surface_moments(ops, top, k)))
    within_p = degrees <= p
    residual = float(errors[np.ix_(within_p, within_p)].max())
    tau = -1
    for t in range(top + 1):
        block = degrees <= t
        if errors[np.ix_(block, block)].max() > tol:
            break
        tau = t
    return residual, tau


def verify_sbp(ops: ElementOperators) -> SbpVerificationReport:
    d, p = ops.dimension, ops.degree
    V, grads = monomial_vandermonde(ops.nodes, p, d)

    accuracy = []
    for k in range(d):
        scale = max(1.0, float(np.max(np.abs(grads[k]))))
        accuracy.append(float(np.max(np.abs(ops.D(k) @ V - grads[k]))) / scale)

    antisymmetry, e_symmetry, decomposition, compatibility = 0.0, 0.0, 0.0, 0.0
    for k in range(d):
        S, E, Q = ops.S[k], ops.E[k], ops.Q[k]
        q_scale = max(float(np.max(np.abs(Q))), 1.0)
        antisymmetry = max(antisymmetry, float(np.max(np.abs(S + S.T))) / max(float(np.max(np.abs(S))), 1.0))
        e_symmetry = max(e_symmetry, float(np.max(np.abs(E - E.T))))
        decomposition = max(decomposition, float(np.max(np.abs(Q + Q.T - E))) / q_scale)
        H = (V.T * ops.M) @ grads[k]
        compatibility = max(compatibility, float(np.max(np.abs(H + H.T - V.T @ E @ V))))

    interior = np.setdiff1d(np.arange(ops.size), ops.facet_nodes())
    e_support = max((float(np.max(np.abs(E[interior]))) if len(interior) else 0.0) for E in ops.E)

    surface_moment, tau = _achieved_tau(ops, TOLERANCES["surface_moment"])

    points, weights = _volume_rule(ops.simplex, 2 * p)
    Vq, _ = monomial_vandermonde(points, 2 * p - 1, d)
    Vn, _ = monomial_vandermonde(ops.nodes, 2 * p - 1, d)
    cubature = float(np.max(np.abs(Vn.T @ ops.M - Vq.T @ weights)))

    return SbpVerificationReport(
        degree=p,
        dimension=d,
        accuracy=accuracy,
        antisymmetry=antisymmetry,
        e_symmetry=e_symmetry,
        decomposition=decomposition,
        e_support=e_support,
        surface_moment=surface_moment,
        tau=tau,
        compatibility=compatibility,
        cubature=cubature,
        bilinear=bilinear_accuracy_check(ops),
        min_weight=float(ops.M.min()),
    )


def report_residuals(report: SbpVerificationReport) -> Residuals:
    values = report.model_dump(exclude={"degree", "dimension", "tau", "min_weight", "accuracy"})
    return Residuals(accuracy=max(report.accuracy), **values)


def bilinear_accuracy_check(ops: ElementOperators) -> float:
    d, p = ops.dimension, ops.degree
    V, _ = monomial_vandermonde(ops.nodes, p, d)
    points, weights = _volume_rule(ops.simplex, 2 * p)
    Vq, grads_q = monomial_vandermonde(points, p, d)
    worst = 0.0
    for k in range(d):
        volume = (Vq.T * weights) @ grads_q[k]
        surface = _surface_moments(ops, p, k)
        worst = max(
            worst,
            float(np.max(np.abs(V.T @ ops.Q[k] @ V - volume))),
            float(np.max(np.abs(V.T @ ops.S[k] @ V - (volume - 0.5 * surface)))),
        )
    return worst


def operators_to_dict(ops: ElementOperators) -> dict[str, object]:
    axes = "xyz"[:ops.dimension]
    data: dict[str, object] = {
        "schema_version": SCHEMA_VERSION,
        "p": ops.degree,
        "d": ops.dimension,
        "nodes": ops.nodes,
        "vertices": ops.vertices,
        "M": ops.M,
        "faces": [
            {"facet": f.facet, "nodes": f.nodes, "local_coords": f.local_coords,
             "normal": f.normal, "measure": f.measure, "B": f.B}
            for f in ops.faces
        ],
        "branch": ops.branch,
        "residuals": ops.residuals.model_dump(),
        "metadata": ops.metadata.model_dump(mode="json"),
    }
    for k, axis in enumerate(axes):
        data[f"Q{axis}"] = ops.Q[k]
        data[f"E{axis}"] = ops.E[k]
        data[f"S{axis}"] = ops.S[k]
    return data


def save_operators(ops: ElementOperators, path: Path) -> Path:
    return Utility.write_json(path, operators_to_dict(ops))


def load_operators(path: Path) -> ElementOperators:
    data = Utility.read_json(path)
    keys = ["p", "d", "nodes", "M", "faces"]
    if not ObjectService.validate_keys(data, keys):
        raise ValueError(f"Operator file {path} misses one of {keys}.")
    d = data["d"]
    axes = "xyz"[:d]
    faces = [
        FaceDescriptor(
            facet=f["facet"],
            nodes=np.array(f["nodes"], dtype=int),
            local_coords=np.array(f["local_coords"]),
            normal=np.array(f["normal"]),
            measure=f["measure"],
            B=np.array(f["B"]),
        )
        for f in data["faces"]
    ]
    ops = ElementOperators(
        degree=data["p"],
        dimension=d,
        nodes=np.array(data["nodes"]),
        vertices=np.array(data.get("vertices", np.vstack([np.zeros(d), np.eye(d)]))),
        M=np.array(data["M"]),
        Q=[np.array(data[f"Q{a}"]) for a in axes],
        E=[np.array(data[f"E{a}"]) for a in axes],
        S=[np.array(data[f"S{a}"]) for a in axes],
        faces=faces,
        branch=data.get("branch", 0),
        residuals=Residuals(**data.get("residuals", {})),
    )
    ops.Q_se = build_se_operator(ops.nodes, ops.degree, ops.M, ops.simplex)
    return ops

