"""Linear advection on the periodic mesh: C-SBP, D-SBP with SATs, and the SE comparison."""

import logging
import time
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache
from math import ceil, sqrt
from typing import Literal

import numpy as np
from pydantic import BaseModel, Field

from simplexsbp.assembly import GlobalOperators, assemble_global, assemble_se_global
from simplexsbp.config import (
    CFL_BRACKET,
    CFL_BRACKET_WIDTH,
    CFL_SAFETY,
    DEFAULT_BETA,
    DEFAULT_FINAL_TIME,
    DEFAULT_SIGMA,
    DEFAULT_THREADS,
    KNOWN_SCHEMES,
    SPECTRUM_SIZE_CAP,
    SUPPORTED_DEGREES,
    TOLERANCES,
)
from simplexsbp.cubature import get_rule, min_node_distance
from simplexsbp.errors import FacetMismatch, NonFiniteState, SizeCapExceeded, UnsupportedDegree
from simplexsbp.linalg import eig_general
from simplexsbp.mesh import FacetPairing, build_global_numbering, build_mesh, map_reference_nodes, match_facets
from simplexsbp.operators import ElementOperators, build_element_operators

logger = logging.getLogger(__name__)

Scheme = Literal["csbp", "dsbp", "cse"]
BoundaryData = Callable[[np.ndarray, np.ndarray, float], np.ndarray]

GOLDEN_RATIO = (1.0 + sqrt(5.0)) / 2.0


class AdvectionConfig(BaseModel):
    scheme: Scheme = "dsbp"
    degree: int = Field(default=1, ge=1)
    N: int = Field(default=8, ge=2)
    beta: tuple[float, float] = DEFAULT_BETA
    sigma: float = Field(default=DEFAULT_SIGMA, ge=0.0)
    cfl: float | None = Field(default=None, gt=0.0)
    final_time: float = Field(default=DEFAULT_FINAL_TIME, gt=0.0)
    periodic: bool = True
    threads: int = Field(default=DEFAULT_THREADS, ge=1)

    def resolved_cfl(self) -> float:
        if self.cfl is not None:
            return self.cfl
        return CFL_SAFETY * KNOWN_SCHEMES[self.scheme]["cfl_max"][self.degree]


class AdvectionResult(BaseModel):
    scheme: str
    degree: int
    N: int
    h: float
    cfl: float
    dt: float
    steps: int
    error: float
    delta_energy: float
    mass_drift: float
    initial_norm: float
    final_norm: float
    cpu_time: float = 0.0

    @property
    def stable(self) -> bool:
        return self.final_norm <= self.initial_norm * (1.0 + 1e-13)


class ErrorField(BaseModel):
    nodes: np.ndarray
    solution: np.ndarray
    exact: np.ndarray

    class Config:
        arbitrary_types_allowed = True

    @property
    def error(self) -> np.ndarray:
        return self.solution - self.exact

    def rows(self) -> list[list[float]]:
        return [
            [float(x), float(y), float(u), float(e), float(u - e)]
            for (x, y), u, e in zip(self.nodes, self.solution, self.exact)
        ]


class CflResult(BaseModel):
    scheme: str
    degree: int
    N: int
    cfl_max: float
    flagged: bool = False
    evaluations: int = 0


def initial_condition(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """C4 bump centred in the unit square: 1 - (4r^2 - 1)^5 inside r <= 1/2, else 1."""
    r2 = (np.asarray(x) - 0.5) ** 2 + (np.asarray(y) - 0.5) ** 2
    return np.where(r2 <= 0.25, 1.0 - (4.0 * r2 - 1.0) ** 5, 1.0)


def exact_solution(x: np.ndarray, y: np.ndarray, t: float, beta: tuple[float, ...] = DEFAULT_BETA) -> np.ndarray:
    return initial_condition(np.mod(np.asarray(x) - beta[0] * t, 1.0), np.mod(np.asarray(y) - beta[1] * t, 1.0))


def reference_spacing(p: int) -> float:
    return min_node_distance(get_rule(p, 2))


def time_step(cfl: float, N: int, p: int) -> float:
    return cfl * reference_spacing(p) / (sqrt(2.0) * N)


def decompose_face_E(beta: tuple[float, ...], normal: np.ndarray) -> Literal["minus", "plus", "none"]:
    beta_n = float(np.dot(beta, normal))
    if abs(beta_n) <= TOLERANCES["characteristic"]:
        return "none"
    return "minus" if beta_n < 0.0 else "plus"


def split_boundary_operator(ops: ElementOperators, beta: tuple[float, ...]) -> tuple[np.ndarray, np.ndarray]:
    n = ops.size
    E_plus, E_minus = np.zeros((n, n)), np.zeros((n, n))
    for face in ops.faces:
        side = decompose_face_E(beta, face.normal)
        if side == "none":
            continue
        target = E_minus if side == "minus" else E_plus
        target[np.ix_(face.nodes, face.nodes)] += float(np.dot(beta, face.normal)) * face.B
    return E_plus, E_minus


class FaceCoupling(BaseModel):
    element: np.ndarray
    local: np.ndarray
    neighbor: np.ndarray
    neighbor_local: np.ndarray
    normal: np.ndarray
    B: np.ndarray
    beta_n: np.ndarray

    class Config:
        arbitrary_types_allowed = True

    @property
    def num_facets(self) -> int:
        return len(self.element)


def _match_trace(x: np.ndarray, y: np.ndarray, periodic: bool, tol: float) -> np.ndarray:
    diff = x[:, None, :] - y[None, :, :]
    if periodic:
        diff -= np.round(diff)
    dist = np.linalg.norm(diff, axis=2)
    match = np.argmin(dist, axis=1)
    if np.max(dist[np.arange(len(x)), match]) > tol or len(np.unique(match)) != len(x):
        raise FacetMismatch("Facet nodes of neighbouring elements do not coincide.")
    return match


def build_face_coupling(
    elements: list[ElementOperators],
    pairing: FacetPairing | None,
    beta: tuple[float, ...],
) -> FaceCoupling:
    periodic = pairing.periodic if pairing is not None else False
    scale = min(np.sqrt(abs(ops.simplex.determinant)) for ops in elements)
    tol = TOLERANCES["node_match"] * max(scale, 1e-3)
    rows: dict[str, list] = {key: [] for key in ("element", "local", "neighbor", "neighbor_local", "normal", "B", "beta_n")}
    for k, ops in enumerate(elements):
        for f, face in enumerate(ops.faces):
            if decompose_face_E(beta, face.normal) != "minus":
                continue
            nbr, g = (-1, -1) if pairing is None else pairing.neighbors[k, f]
            if nbr >= 0:
                other = elements[nbr].faces[g]
                if len(other.nodes) != len(face.nodes):
                    raise FacetMismatch(f"Facet ({k},{f}) has {len(face.nodes)} nodes, neighbour has {len(other.nodes)}.")
                match = _match_trace(ops.nodes[face.nodes], elements[nbr].nodes[other.nodes], periodic, tol)
                neighbor_local = other.nodes[match]
            else:
                neighbor_local = -np.ones(len(face.nodes), dtype=int)
            rows["element"].append(k)
            rows["local"].append(face.nodes)
            rows["neighbor"].append(nbr)
            rows["neighbor_local"].append(neighbor_local)
            rows["normal"].append(face.normal)
            rows["B"].append(face.B)
            rows["beta_n"].append(float(np.dot(beta, face.normal)))
    return FaceCoupling(**{key: np.array(value) for key, value in rows.items()})


class DsbpSemidiscretization:
    label = "dsbp"

    def __init__(
        self,
        elements: list[ElementOperators],
        coupling: FaceCoupling,
        beta: tuple[float, ...] = DEFAULT_BETA,
        sigma: float = DEFAULT_SIGMA,
        boundary: BoundaryData | None = None,
        threads: int = 1,
    ):
        assert elements, "elements must not be empty"
        assert isinstance(threads, int) and threads >= 1, f"threads must be a positive integer. Value: {threads!r}"
        self.K = len(elements)
        self.n = elements[0].size
        self.beta = tuple(beta)
        self.sigma = sigma
        self.boundary = boundary
        self.threads = threads
        self.coupling = coupling

        self.element_nodes = np.stack([ops.nodes for ops in elements])
        self.element_M = np.stack([ops.M for ops in elements])
        self.D_beta = np.stack([
            sum(b * Q for b, Q in zip(self.beta, ops.Q)) / ops.M[:, None] for ops in elements
        ])
        self.M = self.element_M.ravel()
        self.nodes = self.element_nodes.reshape(-1, elements[0].dimension)

        self._penalty = sigma * coupling.beta_n[:, None, None] * coupling.B if coupling.num_facets else np.zeros((0, 0, 0))
        self._coupled = coupling.neighbor >= 0 if coupling.num_facets else np.zeros(0, dtype=bool)
        self._blocks = np.array_split(np.arange(self.K), threads)
        self._executor = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None

    @property
    def size(self) -> int:
        return self.K * self.n

    def close(self) -> None:
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None

    def __enter__(self) -> "DsbpSemidiscretization":
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()

    def _volume(self, U: np.ndarray, out: np.ndarray, block: np.ndarray) -> None:
        out[block] = -np.einsum("kij,kj->ki", self.D_beta[block], U[block])

    def rhs(self, u: np.ndarray, t: float = 0.0) -> np.ndarray:
        U = u.reshape(self.K, self.n)
        dudt = np.empty_like(U)
        if self._executor is None:
            for block in self._blocks:
                self._volume(U, dudt, block)
        else:
            list(self._executor.map(lambda block: self._volume(U, dudt, block), self._blocks))

        c = self.coupling
        if c.num_facets:
            trace = U[c.element[:, None], c.local]
            outside = np.zeros_like(trace)
            coupled = self._coupled
            outside[coupled] = U[c.neighbor[coupled][:, None], c.neighbor_local[coupled]]
            if self.boundary is not None and not coupled.all():
                points = self.element_nodes[c.element[~coupled][:, None], c.local[~coupled]]
                outside[~coupled] = self.boundary(points[..., 0], points[..., 1], t)
            sat = np.zeros_like(U)
            np.add.at(sat, (c.element[:, None], c.local), np.einsum("fij,fj->fi", self._penalty, trace - outside))
            dudt += sat / self.element_M
        return dudt.ravel()


class CsbpSemidiscretization:
    def __init__(self, ops: GlobalOperators, beta: tuple[float, ...] = DEFAULT_BETA):
        self.ops = ops
        self.beta = tuple(beta)
        self.A = ops.advection_matrix(self.beta)
        self.M = ops.M
        self.nodes = ops.coordinates
        self.label = "cse" if ops.kind == "se" else "csbp"

    @property
    def size(self) -> int:
        return self.ops.n_global

    def rhs(self, u: np.ndarray, t: float = 0.0) -> np.ndarray:
        return -(self.A @ u) / self.M


Semidiscretization = DsbpSemidiscretization | CsbpSemidiscretization


def dsbp_rhs(semi: DsbpSemidiscretization, u: np.ndarray, t: float = 0.0) -> np.ndarray:
    return semi.rhs(u, t)


def csbp_rhs(semi: CsbpSemidiscretization, u: np.ndarray, t: float = 0.0) -> np.ndarray:
    return semi.rhs(u, t)


@lru_cache(maxsize=32)
def build_semidiscretization(
    scheme: str,
    p: int,
    N: int,
    beta: tuple[float, ...] = DEFAULT_BETA,
    sigma: float = DEFAULT_SIGMA,
    periodic: bool = True,
    threads: int = 1,
) -> Semidiscretization:
    if scheme not in KNOWN_SCHEMES:
        raise ValueError(f"422 - UNKNOWN SCHEME: {scheme}\n\nKnown schemes are: {', '.join(KNOWN_SCHEMES)}")
    if p not in SUPPORTED_DEGREES:
        raise UnsupportedDegree(p, 2, SUPPORTED_DEGREES)

    mesh = build_mesh(N)
    elements = map_reference_nodes(mesh, build_element_operators(p, 2))
    if scheme == "dsbp":
        coupling = build_face_coupling(elements, match_facets(mesh, periodic), beta)
        return DsbpSemidiscretization(elements, coupling, beta, sigma, threads=threads)

    numbering = build_global_numbering(mesh, np.stack([ops.nodes for ops in elements]), periodic)
    assemble = assemble_se_global if scheme == "cse" else assemble_global
    return CsbpSemidiscretization(assemble(numbering, elements), beta)


def rk4_integrate(
    rhs: Callable[[np.ndarray, float], np.ndarray],
    u0: np.ndarray,
    dt: float,
    final_time: float,
    callback: Callable[[int, float, np.ndarray], None] | None = None,
) -> np.ndarray:
    """Classical RK4; the last step is shortened to land on final_time."""
    assert dt > 0 and final_time > 0, f"dt and final_time must be positive. Value: {dt!r}, {final_time!r}"
    steps = max(1, ceil(final_time / dt - 1e-10))
    u = np.array(u0, dtype=float)
    t = 0.0
    for step in range(1, steps + 1):
        h = dt if step < steps else final_time - (steps - 1) * dt
        k1 = rhs(u, t)
        k2 = rhs(u + 0.5 * h * k1, t + 0.5 * h)
        k3 = rhs(u + 0.5 * h * k2, t + 0.5 * h)
        k4 = rhs(u + h * k3, t + h)
        u = u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = final_time if step == steps else step * dt
        if not np.all(np.isfinite(u)):
            raise NonFiniteState(step, t)
        if callback is not None:
            callback(step, t, u)
    return u


def l2_error_and_energy(
    u: np.ndarray,
    u0: np.ndarray,
    M: np.ndarray,
    exact: np.ndarray | None = None,
) -> tuple[float, float]:
    """M-norm error against ``exact`` (u0 when omitted) relative to its norm, and u^T M u - u0^T M u0."""
    exact = u0 if exact is None else exact
    assert u.shape == u0.shape == exact.shape == M.shape, (
        f"u, u0, exact and M must agree. Value: {u.shape}, {u0.shape}, {exact.shape}, {M.shape}"
    )
    diff = u - exact
    reference = float(exact @ (M * exact))
    error = sqrt(float(diff @ (M * diff)) / reference) if reference > 0 else sqrt(float(diff @ (M * diff)))
    return error, float(u @ (M * u)) - float(u0 @ (M * u0))


def conservation(u: np.ndarray, M: np.ndarray) -> float:
    return float(M @ u)


def simulate(config: AdvectionConfig, semi: Semidiscretization | None = None) -> tuple[AdvectionResult, ErrorField]:
    semi = semi or build_semidiscretization(
        config.scheme, config.degree, config.N, tuple(config.beta), config.sigma, config.periodic, config.threads
    )
    cfl = config.resolved_cfl()
    dt = time_step(cfl, config.N, config.degree)
    u0 = initial_condition(semi.nodes[:, 0], semi.nodes[:, 1])
    steps = max(1, ceil(config.final_time / dt - 1e-10))
    start = time.process_time()
    u = rk4_integrate(semi.rhs, u0, dt, config.final_time)
    cpu_time = time.process_time() - start
    exact = exact_solution(semi.nodes[:, 0], semi.nodes[:, 1], config.final_time, tuple(config.beta))
    error, delta_energy = l2_error_and_energy(u, u0, semi.M, exact)
    result = AdvectionResult(
        scheme=config.scheme,
        degree=config.degree,
        N=config.N,
        h=1.0 / config.N,
        cfl=cfl,
        dt=dt,
        steps=steps,
        error=error,
        delta_energy=delta_energy,
        mass_drift=conservation(u, semi.M) - conservation(u0, semi.M),
        initial_norm=sqrt(float(u0 @ (semi.M * u0))),
        final_norm=sqrt(float(u @ (semi.M * u))),
        cpu_time=cpu_time,
    )
    logger.debug("%s p=%d N=%d: error %.3e, dE %.3e", config.scheme, config.degree, config.N, error, delta_energy)
    return result, ErrorField(nodes=semi.nodes, solution=u, exact=exact)


def run_advection(config: AdvectionConfig, semi: Semidiscretization | None = None) -> AdvectionResult:
    return simulate(config, semi)[0]


def energy_history(config: AdvectionConfig) -> list[tuple[float, float]]:
    semi = build_semidiscretization(
        config.scheme, config.degree, config.N, tuple(config.beta), config.sigma, config.periodic, config.threads
    )
    u0 = initial_condition(semi.nodes[:, 0], semi.nodes[:, 1])
    initial = float(u0 @ (semi.M * u0))
    history = [(0.0, 0.0)]

    def record(step: int, t: float, u: np.ndarray) -> None:
        history.append((t, float(u @ (semi.M * u)) - initial))

    dt = time_step(config.resolved_cfl(), config.N, config.degree)
    rk4_integrate(semi.rhs, u0, dt, config.final_time, callback=record)
    return history


def is_stable(config: AdvectionConfig) -> bool:
    try:
        return run_advection(config).stable
    except NonFiniteState:
        return False


def cfl_search(
    scheme: str,
    p: int,
    N: int = 32,
    bracket: tuple[float, float] = CFL_BRACKET,
    width: float = CFL_BRACKET_WIDTH,
    **overrides: object,
) -> CflResult:
    lo, hi = bracket
    evaluations = 0

    def stable(cfl: float) -> bool:
        nonlocal evaluations
        evaluations += 1
        return is_stable(AdvectionConfig(scheme=scheme, degree=p, N=N, cfl=cfl, **overrides))

    if not stable(lo):
        logger.warning("%s p=%d: unstable at the lower bracket %.3g", scheme, p, lo)
        return CflResult(scheme=scheme, degree=p, N=N, cfl_max=lo, flagged=True, evaluations=evaluations)
    if stable(hi):
        return CflResult(scheme=scheme, degree=p, N=N, cfl_max=hi, flagged=True, evaluations=evaluations)

    while hi - lo > width:
        trial = hi - (hi - lo) / GOLDEN_RATIO
        if stable(trial):
            lo = trial
        else:
            hi = trial
    return CflResult(scheme=scheme, degree=p, N=N, cfl_max=lo, evaluations=evaluations)


def spectrum(ops: GlobalOperators, cap: int = SPECTRUM_SIZE_CAP) -> np.ndarray:
    if ops.n_global > cap:
        raise SizeCapExceeded(f"Dense eigensolve of size {ops.n_global} exceeds the cap {cap}.")
    return eig_general(sum(ops.Q).toarray())


def spectrum_summary(eigenvalues: np.ndarray) -> dict[str, float]:
    radius = float(np.max(np.abs(eigenvalues)))
    return {
        "max_real": float(np.max(eigenvalues.real)),
        "max_abs_real": float(np.max(np.abs(eigenvalues.real))),
        "spectral_radius": radius,
        "relative_real": float(np.max(np.abs(eigenvalues.real))) / radius if radius else 0.0,
    }


def convergence_rate(h: np.ndarray, error: np.ndarray, last: int = 3) -> float:
    """Least-squares slope of log(error) against log(h) over the finest ``last`` points."""
    h = np.asarray(h, dtype=float)[-last:]
    error = np.asarray(error, dtype=float)[-last:]
    assert len(h) >= 2, f"need at least two points. Value: {len(h)}"
    return float(np.polyfit(np.log(h), np.log(error), 1)[0])


def rate_window(scheme: str, p: int) -> tuple[float, float] | None:
    return KNOWN_SCHEMES[scheme]["rate_window"].get(p)


def convergence_study(
    scheme: str,
    p: int,
    sizes: list[int],
    **overrides: object,
) -> list[AdvectionResult]:
    return [run_advection(AdvectionConfig(scheme=scheme, degree=p, N=N, **overrides)) for N in sizes]
