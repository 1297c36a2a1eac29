from math import factorial

import numpy as np
from pydantic import BaseModel

from simplexsbp.errors import InvertedElement


def reference_vertices(d: int) -> np.ndarray:
    assert d in (1, 2, 3), f"d must be 1, 2 or 3. Value: {d!r}"
    return np.vstack([np.zeros(d), np.eye(d)])


class Simplex(BaseModel):
    vertices: np.ndarray

    class Config:
        arbitrary_types_allowed = True
        frozen = True

    @classmethod
    def reference(cls, d: int) -> "Simplex":
        return cls(vertices=reference_vertices(d))

    @property
    def dimension(self) -> int:
        return self.vertices.shape[1]

    @property
    def jacobian(self) -> np.ndarray:
        return (self.vertices[1:] - self.vertices[0]).T

    @property
    def determinant(self) -> float:
        return float(np.linalg.det(self.jacobian))

    @property
    def volume(self) -> float:
        return abs(self.determinant) / factorial(self.dimension)

    def require_positive(self, element: int = 0) -> None:
        if not self.determinant > 0.0:
            raise InvertedElement(element, self.determinant)

    def to_physical(self, reference_points: np.ndarray) -> np.ndarray:
        reference_points = np.atleast_2d(reference_points)
        return self.vertices[0] + reference_points @ self.jacobian.T

    def to_reference(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        return np.linalg.solve(self.jacobian, (points - self.vertices[0]).T).T

    def barycentric(self, points: np.ndarray) -> np.ndarray:
        local = self.to_reference(points)
        return np.column_stack([1.0 - local.sum(axis=1), local])

    def facets(self) -> list[tuple[int, ...]]:
        """Facet k is opposite vertex k; vertex ids are listed in increasing order."""
        d = self.dimension
        return [tuple(v for v in range(d + 1) if v != k) for k in range(d + 1)]

    def facet_geometry(self, k: int) -> tuple[np.ndarray, float]:
        ids = self.facets()[k]
        base = self.vertices[ids[0]]
        if self.dimension == 2:
            t = self.vertices[ids[1]] - base
            normal = np.array([t[1], -t[0]])
            measure = float(np.linalg.norm(t))
        elif self.dimension == 3:
            normal = np.cross(self.vertices[ids[1]] - base, self.vertices[ids[2]] - base)
            measure = 0.5 * float(np.linalg.norm(normal))
        else:
            raise ValueError("facet geometry needs d = 2 or 3")
        normal = normal / np.linalg.norm(normal)
        if np.dot(normal, self.vertices[k] - base) > 0.0:
            normal = -normal
        return normal, measure
