"""Symmetric cubature rules whose weights become the SBP norm."""

import itertools
import logging
from functools import lru_cache
from math import comb
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, Field
from scipy.optimize import nnls
from scipy.spatial.distance import pdist

from simplexsbp.config import (
    GOLDEN_DIR,
    OUTPUT_TEMPLATES,
    REFERENCE_MEASURE,
    SCHEMA_VERSION,
    SUPPORTED_DEGREES,
    SUPPORTED_DIMENSIONS,
    TOLERANCES,
)
from simplexsbp.errors import NegativeWeight, NonConvergence, SimplexSbpError, UnsupportedDegree
from simplexsbp.linalg import LMOptions, levenberg_marquardt
from simplexsbp.metadata import Metadata
from simplexsbp.polynomials import (
    monomial_exponents,
    monomial_integral,
    monomial_vandermonde,
    orthonormal_vandermonde,
)
from simplexsbp.utils import ObjectService, Utility

logger = logging.getLogger(__name__)

OrbitKind = Literal[
    "vertices", "mid-edge", "centroid", "edge", "S21",
    "face-centroid", "face-S21", "S31", "S22",
]

# label pattern of the barycentric tuple, per dimension
_PATTERNS: dict[str, dict[int, tuple[str, ...]]] = {
    "vertices": {2: ("one", "zero", "zero"), 3: ("one", "zero", "zero", "zero")},
    "mid-edge": {2: ("half", "half", "zero"), 3: ("half", "half", "zero", "zero")},
    "centroid": {2: ("third", "third", "third"), 3: ("quarter", "quarter", "quarter", "quarter")},
    "edge": {2: ("a", "1-a", "zero"), 3: ("a", "1-a", "zero", "zero")},
    "S21": {2: ("a", "a", "1-2a")},
    "face-centroid": {3: ("third", "third", "third", "zero")},
    "face-S21": {3: ("a", "a", "1-2a", "zero")},
    "S31": {3: ("a", "a", "a", "1-3a")},
    "S22": {3: ("a", "a", "1/2-a", "1/2-a")},
}

_PARAMETER_RANGE: dict[str, tuple[float, float]] = {
    "edge": (0.0, 1.0),
    "S21": (0.0, 0.5),
    "face-S21": (0.0, 0.5),
    "S31": (0.0, 1.0 / 3.0),
    "S22": (0.0, 0.5),
}

# orbits active for each degree (fixed orbits first)
_TEMPLATES: dict[int, dict[int, tuple[str, ...]]] = {
    2: {
        1: ("vertices",),
        2: ("vertices", "mid-edge", "centroid"),
        3: ("vertices", "edge", "S21"),
        4: ("vertices", "mid-edge", "edge", "S21", "S21"),
    },
    3: {
        1: ("vertices",),
        2: ("vertices", "mid-edge", "centroid"),
        3: ("vertices", "face-centroid", "edge", "S31"),
        4: ("vertices", "mid-edge", "centroid", "edge", "face-S21", "S31", "S22"),
    },
}

# alternative starting values tried after the primary seed
_SEED_CANDIDATES: dict[str, tuple[float, ...]] = {
    "S21": (0.1, 0.2, 0.4, 0.05, 0.3, 0.45, 0.15, 0.25),
    "face-S21": (0.2, 0.1, 0.4, 0.3, 0.05, 0.45),
    "S31": (0.1, 0.2, 0.3, 0.05, 0.15),
    "S22": (0.1, 0.05, 0.2, 0.15),
}


def _pattern_values(a: float | None) -> dict[str, float]:
    values = {
        "one": 1.0, "zero": 0.0, "half": 0.5,
        "third": 1.0 / 3.0, "quarter": 0.25,
    }
    if a is not None:
        values.update({"a": a, "1-a": 1.0 - a, "1-2a": 1.0 - 2.0 * a, "1-3a": 1.0 - 3.0 * a, "1/2-a": 0.5 - a})
    return values


class SymmetryOrbit(BaseModel):
    kind: OrbitKind
    params: list[float] = Field(default_factory=list, max_length=1)
    weight: float = 0.0

    @property
    def is_free(self) -> bool:
        return self.kind in _PARAMETER_RANGE

    def size(self, d: int) -> int:
        return len(_label_permutations(self.kind, d))

    def canonical(self) -> "SymmetryOrbit":
        if self.kind == "edge" and self.params[0] > 0.5:
            return self.model_copy(update={"params": [1.0 - self.params[0]]})
        if self.kind == "S22" and self.params[0] > 0.25:
            return self.model_copy(update={"params": [0.5 - self.params[0]]})
        return self


@lru_cache(maxsize=None)
def _label_permutations(kind: str, d: int) -> tuple[tuple[str, ...], ...]:
    patterns = _PATTERNS[kind]
    if d not in patterns:
        raise ValueError(f"Orbit '{kind}' does not exist for d={d}.")
    return tuple(sorted(set(itertools.permutations(patterns[d]))))


def orbit_barycentric(kind: str, d: int, a: float | None) -> np.ndarray:
    values = _pattern_values(a)
    return np.array([[values[label] for label in perm] for perm in _label_permutations(kind, d)])


def expand_orbit(orbit: SymmetryOrbit, d: int) -> np.ndarray:
    a = None
    if orbit.is_free:
        assert len(orbit.params) == 1, f"orbit '{orbit.kind}' needs one parameter. Value: {orbit.params!r}"
        a = orbit.params[0]
        low, high = _PARAMETER_RANGE[orbit.kind]
        if not low < a < high:
            raise ValueError(f"Orbit '{orbit.kind}' parameter {a!r} outside ({low:.4g}, {high:.4g}).")
    else:
        assert not orbit.params, f"orbit '{orbit.kind}' takes no parameter. Value: {orbit.params!r}"
    # barycentric (l0, l1, ..., ld) -> Cartesian (l1, ..., ld)
    return orbit_barycentric(orbit.kind, d, a)[:, 1:]


def _gll_interior(p: int) -> float:
    roots = np.sort(np.polynomial.legendre.Legendre.basis(p).deriv().roots().real)
    return float(0.5 * (1.0 + roots[0]))


def orbit_template(p: int, d: int) -> list[SymmetryOrbit]:
    if d not in SUPPORTED_DIMENSIONS:
        raise ValueError(f"d must be one of {SUPPORTED_DIMENSIONS}. Value: {d!r}")
    if p not in SUPPORTED_DEGREES:
        raise UnsupportedDegree(p, d, SUPPORTED_DEGREES)

    orbits = []
    interior_seeds = iter((0.1, 0.4)) if _TEMPLATES[d][p].count("S21") > 1 else None
    for kind in _TEMPLATES[d][p]:
        if kind == "edge":
            params = [_gll_interior(p)]
        elif kind == "S21" and interior_seeds is not None:
            params = [next(interior_seeds)]
        elif kind in _PARAMETER_RANGE:
            params = [_SEED_CANDIDATES[kind][0]]
        else:
            params = []
        orbits.append(SymmetryOrbit(kind=kind, params=params))
    return orbits


class CubatureRule(BaseModel):
    dimension: int
    degree: int
    orbits: list[SymmetryOrbit]
    nodes: np.ndarray
    weights: np.ndarray
    certified_degree: int
    residual: float = 0.0
    branch: int = 0
    metadata: Metadata = Field(default_factory=Metadata)

    class Config:
        arbitrary_types_allowed = True

    @classmethod
    def from_orbits(cls, orbits: list[SymmetryOrbit], p: int, d: int, **data: object) -> "CubatureRule":
        nodes, weights = [], []
        for orbit in orbits:
            block = expand_orbit(orbit, d)
            nodes.append(block)
            weights.append(np.full(len(block), orbit.weight))
        return cls(
            dimension=d,
            degree=p,
            orbits=orbits,
            nodes=np.vstack(nodes),
            weights=np.concatenate(weights),
            certified_degree=data.pop("certified_degree", 2 * p - 1),
            **data,
        )

    @property
    def size(self) -> int:
        return len(self.weights)

    def facet_node_counts(self) -> list[int]:
        bary = np.column_stack([1.0 - self.nodes.sum(axis=1), self.nodes])
        return [int(np.sum(np.abs(bary[:, k]) < 1e-12)) for k in range(self.dimension + 1)]


def _moment_targets(q: int, d: int) -> np.ndarray:
    targets = np.zeros(comb(q + d, d))
    targets[0] = np.sqrt(REFERENCE_MEASURE[d])
    return targets


def _moments(nodes: np.ndarray, weights: np.ndarray, q: int, d: int) -> np.ndarray:
    V, _ = orthonormal_vandermonde(nodes, q, d, with_grads=False)
    return V.T @ weights - _moment_targets(q, d)


def moment_residual(rule: CubatureRule, q: int) -> np.ndarray:
    return _moments(rule.nodes, rule.weights, q, rule.dimension)


def verify_cubature(rule: CubatureRule, q: int) -> float:
    d = rule.dimension
    orthonormal = np.max(np.abs(moment_residual(rule, q)))
    V, _ = monomial_vandermonde(rule.nodes, q, d)
    exact = np.array([monomial_integral(e) for e in monomial_exponents(q, d)])
    monomial = np.max(np.abs(V.T @ rule.weights - exact))
    return float(max(orthonormal, monomial))


def min_node_distance(rule: CubatureRule) -> float:
    return float(pdist(rule.nodes).min())


# unknowns: one parameter per free orbit, then one weight per orbit
class _OrbitSystem:
    def __init__(self, orbits: list[SymmetryOrbit], q: int, d: int):
        self.orbits = orbits
        self.q = q
        self.d = d
        self.free = [i for i, orbit in enumerate(orbits) if orbit.is_free]
        self.sizes = np.array([orbit.size(d) for orbit in orbits])
        self.targets = _moment_targets(q, d)

    def unpack(self, z: np.ndarray) -> tuple[list[float | None], np.ndarray]:
        params: list[float | None] = [None] * len(self.orbits)
        for slot, i in enumerate(self.free):
            params[i] = float(z[slot])
        return params, z[len(self.free):]

    def nodes(self, params: list[float | None]) -> np.ndarray:
        return np.vstack([
            orbit_barycentric(orbit.kind, self.d, a)[:, 1:]
            for orbit, a in zip(self.orbits, params)
        ])

    def orbit_moments(self, params: list[float | None]) -> np.ndarray:
        V, _ = orthonormal_vandermonde(self.nodes(params), self.q, self.d, with_grads=False)
        bounds = np.concatenate([[0], np.cumsum(self.sizes)])
        return np.column_stack([V[bounds[j]:bounds[j + 1]].sum(axis=0) for j in range(len(self.orbits))])

    def residual(self, z: np.ndarray) -> np.ndarray:
        params, weights = self.unpack(z)
        return self.orbit_moments(params) @ weights - self.targets

    def initial_weights(self, params: list[float | None]) -> np.ndarray:
        weights, _ = nnls(self.orbit_moments(params), self.targets)
        return np.maximum(weights, 1e-3 * REFERENCE_MEASURE[self.d] / self.sizes.sum())


def _seeds(template: list[SymmetryOrbit]) -> list[list[float]]:
    primary = [orbit.params[0] for orbit in template if orbit.is_free]
    candidates = []
    for orbit in template:
        if not orbit.is_free:
            continue
        if orbit.kind == "edge":
            alpha = orbit.params[0]
            candidates.append((alpha, 0.5 * alpha, 0.5 * (alpha + 0.5), 0.1))
        else:
            values = _SEED_CANDIDATES[orbit.kind]
            candidates.append((orbit.params[0],) + tuple(v for v in values if v != orbit.params[0]))

    seeds = [primary]
    for combo in itertools.product(*candidates):
        seed = list(combo)
        if seed not in seeds:
            seeds.append(seed)
    return seeds


def _accept(orbits: list[SymmetryOrbit], p: int, d: int, branch: int) -> CubatureRule:
    for orbit in orbits:
        if orbit.weight <= 0.0:
            raise NegativeWeight(f"Orbit '{orbit.kind}' has non-positive weight {orbit.weight:.3e}.")
    rule = CubatureRule.from_orbits(orbits, p, d, branch=branch)
    if pdist(rule.nodes).min() < 1e-6:
        raise SimplexSbpError("Orbits coalesce (nodes closer than 1e-6).")
    expected = comb(p + d - 1, d - 1)
    if any(count != expected for count in rule.facet_node_counts()):
        raise SimplexSbpError(f"Facet node counts {rule.facet_node_counts()} differ from {expected}.")
    residual = verify_cubature(rule, 2 * p - 1)
    if residual > TOLERANCES["cubature"]:
        raise NonConvergence("Rule is not exact to degree 2p-1", best=rule.weights, residual_norm=residual)
    rule.residual = residual
    return rule


def solve_cubature(p: int, d: int, opts: LMOptions | None = None) -> CubatureRule:
    """Solve the symmetric moment equations for a positive degree 2p-1 rule.

    Seeds are tried in a fixed order; the first branch with positive weights,
    parameters in range and the required facet node counts is accepted.
    """
    template = orbit_template(p, d)
    system = _OrbitSystem(template, 2 * p - 1, d)
    opts = opts or LMOptions()
    seeds = _seeds(template) if system.free else [[]]

    last_error: Exception | None = None
    for branch, seed in enumerate(seeds):
        params, _ = system.unpack(np.array(seed + [0.0] * len(template)))
        z0 = np.concatenate([seed, system.initial_weights(params)])
        try:
            z = levenberg_marquardt(system.residual, z0, opts)
        except NonConvergence as exc:
            if exc.residual_norm > TOLERANCES["cubature"]:
                logger.debug("seed %d (%s) failed: %s", branch, seed, exc)
                last_error = exc
                continue
            z = exc.best

        params, weights = system.unpack(z)
        orbits = []
        try:
            for orbit, a, w in zip(template, params, weights):
                update = {"weight": float(w)}
                if a is not None:
                    update["params"] = [a]
                orbits.append(orbit.model_copy(update=update).canonical())
            rule = _accept(orbits, p, d, branch)
        except (SimplexSbpError, ValueError) as exc:
            logger.debug("seed %d (%s) rejected: %s", branch, seed, exc)
            last_error = exc
            continue
        logger.debug("d=%d p=%d accepted branch %d, residual %.2e", d, p, branch, rule.residual)
        return rule

    raise NonConvergence(
        f"No admissible cubature branch for d={d}, p={p} after {len(seeds)} seeds: {last_error}",
        best=np.array([]),
        residual_norm=float("inf"),
    )


def rule_to_dict(rule: CubatureRule) -> dict[str, object]:
    return {
        "schema_version": SCHEMA_VERSION,
        "dimension": rule.dimension,
        "degree": rule.degree,
        "orbits": [orbit.model_dump() for orbit in rule.orbits],
        "certified_degree": rule.certified_degree,
        "residual": rule.residual,
        "branch": rule.branch,
        "metadata": rule.metadata.model_dump(mode="json"),
    }


def save_rule(rule: CubatureRule, path: Path) -> Path:
    return Utility.write_json(path, rule_to_dict(rule))


def load_rule(path: Path) -> CubatureRule:
    data = Utility.read_json(path)
    keys = ["dimension", "degree", "orbits", "certified_degree"]
    if not ObjectService.validate_keys(data, keys):
        raise SimplexSbpError(f"Golden cubature file {path} misses one of {keys}.")
    orbits = [SymmetryOrbit(**orbit) for orbit in data["orbits"]]
    rule = CubatureRule.from_orbits(
        orbits,
        data["degree"],
        data["dimension"],
        certified_degree=data["certified_degree"],
        branch=data.get("branch", 0),
        metadata=Metadata(**data.get("metadata", {})),
    )
    residual = verify_cubature(rule, rule.certified_degree)
    if residual > TOLERANCES["cubature"]:
        raise SimplexSbpError(f"Golden cubature file {path} fails re-verification: residual {residual:.3e}.")
    rule.residual = residual
    rule.metadata.log_change(["residual"])
    return rule


def golden_path(p: int, d: int, directory: Path | None = None) -> Path:
    name = Utility.format(OUTPUT_TEMPLATES["cubature"], {"dimension": d, "degree": p})
    return Path(directory or GOLDEN_DIR) / name


@lru_cache(maxsize=None)
def get_rule(p: int, d: int) -> CubatureRule:
    path = golden_path(p, d)
    rule = load_rule(path) if path.exists() else solve_cubature(p, d)
    rule.nodes.setflags(write=False)
    rule.weights.setflags(write=False)
    return rule
