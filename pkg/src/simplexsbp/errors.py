import numpy as np


class SimplexSbpError(ValueError):
    pass


class UnsupportedDegree(SimplexSbpError):
    def __init__(self, p: int, d: int, supported: tuple[int, ...]):
        super().__init__(
            f"422 - UNSUPPORTED DEGREE: p={p} for d={d}\n\n"
            f"Supported degrees are: {', '.join(str(q) for q in supported)}"
        )
        self.p = p
        self.d = d


class DegenerateNodeSet(SimplexSbpError):
    pass


class NonConvergence(SimplexSbpError):
    def __init__(self, message: str, best: np.ndarray, residual_norm: float):
        super().__init__(f"{message} (best residual {residual_norm:.3e})")
        self.best = best
        self.residual_norm = residual_norm


class NegativeWeight(SimplexSbpError):
    pass


class InconsistentSystem(SimplexSbpError):
    def __init__(self, residual: float, tolerance: float):
        super().__init__(
            f"Antisymmetric-part system is inconsistent: residual {residual:.3e} > {tolerance:.1e}.\n"
            "The norm and boundary operators are not compatible (check the cubature rule)."
        )
        self.residual = residual


class FacetMismatch(SimplexSbpError):
    pass


class InvertedElement(SimplexSbpError):
    def __init__(self, element: int, determinant: float):
        super().__init__(f"Element {element} is inverted or degenerate: det J = {determinant:.3e}")
        self.element = element
        self.determinant = determinant


class NonFiniteState(SimplexSbpError):
    def __init__(self, step: int, time: float):
        super().__init__(f"Non-finite state at step {step} (t = {time:.6g})")
        self.step = step
        self.time = time


class SizeCapExceeded(SimplexSbpError):
    pass
