"""Polynomial bases on the unit right simplex.

The reference triangle has vertices (0,0), (1,0), (0,1) and the reference
tetrahedron (0,0,0), (1,0,0), (0,1,0), (0,0,1).  Orthonormal bases are the
collapsed-coordinate Jacobi (PKDO) family, evaluated on the bi-unit simplex and
rescaled to the unit one.
"""

from functools import lru_cache
from math import comb, factorial, log, exp, sqrt
from typing import Literal

import numpy as np
from pydantic import BaseModel, Field
from scipy.spatial.distance import pdist
from scipy.special import eval_jacobi, gammaln, roots_jacobi, roots_legendre

from simplexsbp.config import TOLERANCES
from simplexsbp.errors import DegenerateNodeSet

_COLLAPSE_TOL = 1e-12


def basis_size(p: int, d: int) -> int:
    assert isinstance(p, int) and p >= 0, f"p must be a non-negative integer. Value: {p!r}"
    assert d in (1, 2, 3), f"d must be 1, 2 or 3. Value: {d!r}"
    return comb(p + d, d)


def monomial_index(i: int, j: int) -> int:
    """Single-subscript index k of P_k = x^i y^(j-i), 1-based."""
    if i < 0 or j < 0 or i > j:
        raise ValueError(f"monomial_index requires 0 <= i <= j. Value: (i={i}, j={j})")
    return j * (j + 1) // 2 + i + 1


def monomial_pair(k: int) -> tuple[int, int]:
    if k < 1:
        raise ValueError(f"k must be a positive index. Value: {k!r}")
    j = 0
    while (j + 1) * (j + 2) // 2 < k:
        j += 1
    i = k - 1 - j * (j + 1) // 2
    return i, j


@lru_cache(maxsize=None)
def monomial_exponents(p: int, d: int) -> tuple[tuple[int, ...], ...]:
    exponents = []
    for n in range(p + 1):
        if d == 1:
            exponents.append((n,))
        elif d == 2:
            for i in range(n + 1):
                exponents.append((i, n - i))
        else:
            for i in range(n + 1):
                for j in range(n - i + 1):
                    exponents.append((i, j, n - i - j))
    return tuple(exponents)


@lru_cache(maxsize=None)
def orthonormal_indices(p: int, d: int) -> tuple[tuple[int, ...], ...]:
    return monomial_exponents(p, d)


def monomial_degrees(p: int, d: int) -> np.ndarray:
    return np.array([sum(e) for e in monomial_exponents(p, d)])


def monomial_integral(exponents: tuple[int, ...]) -> float:
    d = len(exponents)
    numerator = 1
    for e in exponents:
        numerator *= factorial(e)
    return numerator / factorial(sum(exponents) + d)


def jacobi(x: np.ndarray, alpha: float, beta: float, n: int) -> np.ndarray:
    """Jacobi polynomial normalised to unit weighted L2 norm on [-1, 1]."""
    log_gamma = (
        (alpha + beta + 1) * log(2.0)
        - log(2 * n + alpha + beta + 1)
        + gammaln(n + alpha + 1)
        + gammaln(n + beta + 1)
        - gammaln(n + alpha + beta + 1)
        - gammaln(n + 1)
    )
    return eval_jacobi(n, alpha, beta, x) / exp(0.5 * log_gamma)


def grad_jacobi(x: np.ndarray, alpha: float, beta: float, n: int) -> np.ndarray:
    if n == 0:
        return np.zeros_like(np.asarray(x, dtype=float))
    return sqrt(n * (n + alpha + beta + 1)) * jacobi(x, alpha + 1, beta + 1, n - 1)


def _collapse_2d(r: np.ndarray, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    regular = np.abs(1.0 - s) > _COLLAPSE_TOL
    denom = np.where(regular, 1.0 - s, 1.0)
    a = np.where(regular, 2.0 * (1.0 + r) / denom - 1.0, -1.0)
    return a, s


def _collapse_3d(r: np.ndarray, s: np.ndarray, t: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    regular_a = np.abs(s + t) > _COLLAPSE_TOL
    denom_a = np.where(regular_a, -s - t, 1.0)
    a = np.where(regular_a, 2.0 * (1.0 + r) / denom_a - 1.0, -1.0)
    regular_b = np.abs(1.0 - t) > _COLLAPSE_TOL
    denom_b = np.where(regular_b, 1.0 - t, 1.0)
    b = np.where(regular_b, 2.0 * (1.0 + s) / denom_b - 1.0, -1.0)
    return a, b, t


def _pkdo_2d(a, b, i, j):
    h1 = jacobi(a, 0, 0, i)
    h2 = jacobi(b, 2 * i + 1, 0, j)
    return sqrt(2.0) * h1 * h2 * (1.0 - b) ** i


def _grad_pkdo_2d(a, b, i, j):
    fa, dfa = jacobi(a, 0, 0, i), grad_jacobi(a, 0, 0, i)
    gb, dgb = jacobi(b, 2 * i + 1, 0, j), grad_jacobi(b, 2 * i + 1, 0, j)

    dr = dfa * gb
    if i > 0:
        dr = dr * (0.5 * (1.0 - b)) ** (i - 1)

    ds = dfa * (gb * (0.5 * (1.0 + a)))
    if i > 0:
        ds = ds * (0.5 * (1.0 - b)) ** (i - 1)
    tmp = dgb * (0.5 * (1.0 - b)) ** i
    if i > 0:
        tmp = tmp - 0.5 * i * gb * (0.5 * (1.0 - b)) ** (i - 1)
    ds = ds + fa * tmp

    scale = 2.0 ** (i + 0.5)
    return scale * dr, scale * ds


def _pkdo_3d(a, b, c, i, j, k):
    h1 = jacobi(a, 0, 0, i)
    h2 = jacobi(b, 2 * i + 1, 0, j)
    h3 = jacobi(c, 2 * (i + j) + 2, 0, k)
    return 2.0 * sqrt(2.0) * h1 * h2 * (1.0 - b) ** i * h3 * (1.0 - c) ** (i + j)


def _grad_pkdo_3d(a, b, c, i, j, k):
    fa, dfa = jacobi(a, 0, 0, i), grad_jacobi(a, 0, 0, i)
    gb, dgb = jacobi(b, 2 * i + 1, 0, j), grad_jacobi(b, 2 * i + 1, 0, j)
    hc, dhc = jacobi(c, 2 * (i + j) + 2, 0, k), grad_jacobi(c, 2 * (i + j) + 2, 0, k)

    dr = dfa * (gb * hc)
    if i > 0:
        dr = dr * (0.5 * (1.0 - b)) ** (i - 1)
    if i + j > 0:
        dr = dr * (0.5 * (1.0 - c)) ** (i + j - 1)

    ds = 0.5 * (1.0 + a) * dr
    tmp = dgb * (0.5 * (1.0 - b)) ** i
    if i > 0:
        tmp = tmp - 0.5 * i * gb * (0.5 * (1.0 - b)) ** (i - 1)
    if i + j > 0:
        tmp = tmp * (0.5 * (1.0 - c)) ** (i + j - 1)
    tmp = fa * (tmp * hc)
    ds = ds + tmp

    dt = 0.5 * (1.0 + a) * dr + 0.5 * (1.0 + b) * tmp
    tmp = dhc * (0.5 * (1.0 - c)) ** (i + j)
    if i + j > 0:
        tmp = tmp - 0.5 * (i + j) * hc * (0.5 * (1.0 - c)) ** (i + j - 1)
    tmp = fa * (gb * tmp)
    tmp = tmp * (0.5 * (1.0 - b)) ** i
    dt = dt + tmp

    scale = 2.0 ** (2 * i + j + 1.5)
    return scale * dr, scale * ds, scale * dt


def orthonormal_vandermonde(
    points: np.ndarray, p: int, d: int, with_grads: bool = True
) -> tuple[np.ndarray, list[np.ndarray]]:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    assert points.shape[1] == d, f"points must have {d} columns. Value: {points.shape}"
    indices = orthonormal_indices(p, d)
    n = points.shape[0]
    V = np.zeros((n, len(indices)))
    grads = [np.zeros((n, len(indices))) for _ in range(d)] if with_grads else []

    # bi-unit coordinates; the unit simplex has 2^-d of the bi-unit measure
    ref = 2.0 * points - 1.0
    value_scale = sqrt(2.0 ** d)
    grad_scale = 2.0 * value_scale

    if d == 1:
        collapsed = (ref[:, 0],)
        value, gradient = (lambda r, i: jacobi(r, 0, 0, i)), (lambda r, i: (grad_jacobi(r, 0, 0, i),))
    elif d == 2:
        collapsed = _collapse_2d(ref[:, 0], ref[:, 1])
        value, gradient = _pkdo_2d, _grad_pkdo_2d
    else:
        collapsed = _collapse_3d(ref[:, 0], ref[:, 1], ref[:, 2])
        value, gradient = _pkdo_3d, _grad_pkdo_3d

    for col, index in enumerate(indices):
        V[:, col] = value_scale * value(*collapsed, *index)
        if with_grads:
            for c, derivative in enumerate(gradient(*collapsed, *index)):
                grads[c][:, col] = grad_scale * derivative
    return V, grads


def monomial_vandermonde(points: np.ndarray, p: int, d: int) -> tuple[np.ndarray, list[np.ndarray]]:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    assert points.shape[1] == d, f"points must have {d} columns. Value: {points.shape}"
    exponents = np.array(monomial_exponents(p, d))
    n = points.shape[0]
    V = np.ones((n, len(exponents)))
    for c in range(d):
        V *= points[:, [c]] ** exponents[None, :, c]
    grads = []
    for c in range(d):
        G = np.ones((n, len(exponents)))
        for e in range(d):
            if e == c:
                lowered = np.maximum(exponents[:, e] - 1, 0)
                G *= exponents[None, :, e] * points[:, [e]] ** lowered[None, :]
            else:
                G *= points[:, [e]] ** exponents[None, :, e]
        grads.append(G)
    return V, grads


@lru_cache(maxsize=None)
def _reference_quadrature(d: int, q: int) -> tuple[np.ndarray, np.ndarray]:
    n = q // 2 + 1
    u, wu = roots_legendre(n)
    u, wu = 0.5 * (u + 1.0), 0.5 * wu
    if d == 1:
        return u[:, None], wu
    v, wv = roots_jacobi(n, 1.0, 0.0)
    v, wv = 0.5 * (v + 1.0), 0.25 * wv
    if d == 2:
        U, Vv = np.meshgrid(u, v, indexing="ij")
        W = np.outer(wu, wv)
        points = np.column_stack([(U * (1.0 - Vv)).ravel(), Vv.ravel()])
        return points, W.ravel()
    w, ww = roots_jacobi(n, 2.0, 0.0)
    w, ww = 0.5 * (w + 1.0), 0.125 * ww
    U, Vv, Ww = np.meshgrid(u, v, w, indexing="ij")
    W = wu[:, None, None] * wv[None, :, None] * ww[None, None, :]
    points = np.column_stack([
        (U * (1.0 - Vv) * (1.0 - Ww)).ravel(),
        (Vv * (1.0 - Ww)).ravel(),
        Ww.ravel(),
    ])
    return points, W.ravel()


def simplex_quadrature(d: int, q: int) -> tuple[np.ndarray, np.ndarray]:
    assert d in (1, 2, 3), f"d must be 1, 2 or 3. Value: {d!r}"
    assert isinstance(q, int) and q >= 0, f"q must be a non-negative integer. Value: {q!r}"
    points, weights = _reference_quadrature(d, q)
    return points.copy(), weights.copy()


def check_nodes(nodes: np.ndarray, d: int) -> np.ndarray:
    nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
    assert nodes.shape[1] == d, f"nodes must have {d} columns. Value: {nodes.shape}"
    tol = TOLERANCES["node_inside"]
    bary = np.column_stack([1.0 - nodes.sum(axis=1), nodes])
    if np.any(bary < -tol) or np.any(bary > 1.0 + tol):
        raise DegenerateNodeSet("Node set leaves the closed reference simplex.")
    if len(nodes) > 1 and pdist(nodes).min() < TOLERANCES["duplicate_node"]:
        raise DegenerateNodeSet("Node set contains duplicate nodes.")
    return nodes


class BasisSpec(BaseModel):
    dimension: Literal[2, 3]
    degree: int = Field(ge=0)
    kind: Literal["monomial", "orthonormal"] = "orthonormal"

    class Config:
        frozen = True

    @property
    def size(self) -> int:
        return basis_size(self.degree, self.dimension)


class VandermondeSet(BaseModel):
    V: np.ndarray
    grads: list[np.ndarray]
    spec: BasisSpec

    class Config:
        arbitrary_types_allowed = True
        frozen = True

    @property
    def Vx(self) -> np.ndarray:
        return self.grads[0]

    @property
    def Vy(self) -> np.ndarray:
        return self.grads[1]

    @property
    def Vz(self) -> np.ndarray:
        assert self.spec.dimension == 3, "Vz exists only for tetrahedra"
        return self.grads[2]


def eval_basis(nodes: np.ndarray, spec: BasisSpec, check: bool = True) -> VandermondeSet:
    nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
    if check:
        nodes = check_nodes(nodes, spec.dimension)
    elif len(nodes) > 1 and pdist(nodes).min() < TOLERANCES["duplicate_node"]:
        raise DegenerateNodeSet("Node set contains duplicate nodes.")

    if spec.kind == "orthonormal":
        V, grads = orthonormal_vandermonde(nodes, spec.degree, spec.dimension)
    else:
        V, grads = monomial_vandermonde(nodes, spec.degree, spec.dimension)
    return VandermondeSet(V=V, grads=grads, spec=spec)
