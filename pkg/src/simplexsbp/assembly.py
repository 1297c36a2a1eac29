import logging

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel

from simplexsbp.config import TOLERANCES
from simplexsbp.mesh import GlobalNodeMap, check_shared_facets
from simplexsbp.operators import ElementOperators
from simplexsbp.polynomials import monomial_vandermonde

logger = logging.getLogger(__name__)


class GlobalOperators(BaseModel):
    n_global: int
    M: np.ndarray
    Q: list[sp.csr_matrix]
    E: list[sp.csr_matrix]
    periodic: bool
    coordinates: np.ndarray
    measure: float
    kind: str = "sbp"

    class Config:
        arbitrary_types_allowed = True

    def D(self, direction: int, u: np.ndarray) -> np.ndarray:
        return (self.Q[direction] @ u) / self.M

    def advection_matrix(self, beta: tuple[float, ...]) -> sp.csr_matrix:
        return sum(b * Q for b, Q in zip(beta, self.Q)).tocsr()


class GlobalReport(BaseModel):
    accuracy: float
    constant: float
    antisymmetry: float
    mass: float
    periodic: bool

    def passed(self) -> bool:
        return (
            self.accuracy <= TOLERANCES["global_accuracy"]
            and self.constant <= TOLERANCES["global_accuracy"]
            and self.antisymmetry <= TOLERANCES["skew_system"]
            and self.mass <= 1e-12
        )


def _scatter_sum(rows: np.ndarray, cols: np.ndarray, elements: np.ndarray, values: np.ndarray, n: int) -> sp.csr_matrix:
    """Sum duplicates in a fixed (row, col, element) order."""
    order = np.lexsort((elements, cols, rows))
    rows, cols, values = rows[order], cols[order], values[order]
    keys = rows.astype(np.int64) * n + cols
    starts = np.concatenate([[0], np.flatnonzero(np.diff(keys)) + 1])
    summed = np.add.reduceat(values, starts)
    return sp.csr_matrix((summed, (rows[starts], cols[starts])), shape=(n, n))


def _scatter_matrices(numbering: GlobalNodeMap, blocks: np.ndarray) -> sp.csr_matrix:
    ids = numbering.element_ids
    K, n = ids.shape
    rows = np.broadcast_to(ids[:, :, None], (K, n, n)).ravel()
    cols = np.broadcast_to(ids[:, None, :], (K, n, n)).ravel()
    elements = np.broadcast_to(np.arange(K)[:, None, None], (K, n, n)).ravel()
    return _scatter_sum(rows, cols, elements, blocks.ravel(), numbering.n_global)


def _scatter_diagonal(numbering: GlobalNodeMap, values: np.ndarray) -> np.ndarray:
    ids = numbering.element_ids
    K, n = ids.shape
    elements = np.broadcast_to(np.arange(K)[:, None], (K, n)).ravel()
    flat = ids.ravel()
    return _scatter_sum(flat, flat, elements, values.ravel(), numbering.n_global).diagonal()


def _check_ids(numbering: GlobalNodeMap, elements: list[ElementOperators]) -> None:
    ids = numbering.element_ids
    assert len(elements) == ids.shape[0], f"need one operator set per element. Value: {len(elements)}"
    if ids.min() < 0 or ids.max() >= numbering.n_global:
        raise IndexError(f"global ids must lie in [0, {numbering.n_global}).")


def assemble_global(numbering: GlobalNodeMap, elements: list[ElementOperators]) -> GlobalOperators:
    _check_ids(numbering, elements)
    check_shared_facets(numbering, elements)
    d = elements[0].dimension
    M = _scatter_diagonal(numbering, np.stack([ops.M for ops in elements]))
    Q = [_scatter_matrices(numbering, np.stack([ops.Q[k] for ops in elements])) for k in range(d)]
    E = [_scatter_matrices(numbering, np.stack([ops.E[k] for ops in elements])) for k in range(d)]
    logger.debug("assembled %d elements onto %d nodes", len(elements), numbering.n_global)
    return GlobalOperators(
        n_global=numbering.n_global,
        M=M,
        Q=Q,
        E=E,
        periodic=numbering.periodic,
        coordinates=numbering.coordinates,
        measure=float(sum(ops.simplex.volume for ops in elements)),
    )


def assemble_se_global(numbering: GlobalNodeMap, elements: list[ElementOperators]) -> GlobalOperators:
    _check_ids(numbering, elements)
    assert all(ops.Q_se is not None for ops in elements), "every element needs Q_se"
    d = elements[0].dimension
    sbp = assemble_global(numbering, elements)
    Q = [_scatter_matrices(numbering, np.stack([ops.Q_se[k] for ops in elements])) for k in range(d)]
    return sbp.model_copy(update={"Q": Q, "kind": "se"})


def verify_global(ops: GlobalOperators, p: int) -> GlobalReport:
    d = len(ops.Q)
    ones = np.ones(ops.n_global)
    constant = max(float(np.max(np.abs(ops.D(k, ones)))) for k in range(d))

    accuracy = constant
    if not ops.periodic:
        V, grads = monomial_vandermonde(ops.coordinates, p, d)
        for k in range(d):
            DV = (ops.Q[k] @ V) / ops.M[:, None]
            accuracy = max(accuracy, float(np.max(np.abs(DV - grads[k]))))

    antisymmetry = 0.0
    for k in range(d):
        Q = ops.Q[k]
        defect = Q + Q.T if ops.periodic else Q + Q.T - ops.E[k]
        scale = max(abs(Q).max(), 1.0)
        antisymmetry = max(antisymmetry, abs(defect).max() / scale if defect.nnz else 0.0)

    return GlobalReport(
        accuracy=accuracy,
        constant=constant,
        antisymmetry=float(antisymmetry),
        # the norm sums to the covered area
        mass=abs(float(ops.M.sum()) - ops.measure) / ops.measure,
        periodic=ops.periodic,
    )
