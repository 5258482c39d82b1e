"""Synthesis options and the result record shared by every method."""

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from ..core.linalg import max_eig, min_eig
from ..core.multiplier import MultiplierSet
from ..exceptions import NotPositiveSemidefiniteError
from ..sdp.solver import SdpSolution

GAIN_COND_LIMIT = 1e10


class Method(str, Enum):
    LQR = "lqr"
    GCC_LEMMA = "gcc-lemma"
    GCC_DILATED = "gcc-dilated"


class Objective(str, Enum):
    TRACE = "trace"
    MAX_EIG = "max-eig"


class Dilation(str, Enum):
    DERIVED = "derived"
    PRINTED = "printed"


@dataclass
class SynthesisOptions:
    """Scalarization of the cost matrix, dilation variant and recovery limits."""
    objective: str = Objective.TRACE.value
    dilation: str = Dilation.DERIVED.value
    gain_cond_limit: float = GAIN_COND_LIMIT
    lqr_tol: float = 1e-12
    lqr_max_iter: int = 100000

    def __post_init__(self):
        self.objective = Objective(self.objective).value
        self.dilation = Dilation(self.dilation).value
        if self.gain_cond_limit <= 1.0:
            raise ValueError("gain_cond_limit must exceed 1")
        if self.lqr_tol <= 0 or self.lqr_max_iter < 1:
            raise ValueError("LQR iteration settings must be positive")


@dataclass
class SynthesisResult:
    """Controller gain with its cost certificate."""
    k: np.ndarray
    p: np.ndarray
    method: Method
    structured: bool
    x_inv: Optional[np.ndarray] = None
    multipliers: Optional[MultiplierSet] = None
    solver: Optional[SdpSolution] = None
    nominal_spectral_radius: float = float("nan")
    elapsed: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.p = 0.5 * (self.p + self.p.T)
        lam = min_eig(self.p)
        if lam <= 0:
            raise NotPositiveSemidefiniteError(
                f"Certificate P is not positive definite (min eigenvalue {lam:.3e})",
                min_eigenvalue=lam
            )

    @property
    def synthesis_cost(self) -> float:
        return float(np.trace(self.p))

    @property
    def max_eig_p(self) -> float:
        return max_eig(self.p)

    @property
    def lambdas(self) -> Optional[MultiplierSet]:
        """Lambda_i recovered from the solved Upsilon_i."""
        if self.multipliers is None:
            return None
        return self.multipliers.inverse()

    @property
    def label(self) -> str:
        if self.method == Method.LQR:
            return self.method.value
        return f"{self.method.value} ({'structured' if self.structured else 'unstructured'})"

    def to_dict(self) -> dict:
        lambdas = self.lambdas
        return {
            'method': self.method.value,
            'structured': self.structured,
            'synthesis_cost': self.synthesis_cost,
            'max_eig_p': self.max_eig_p,
            'nominal_spectral_radius': self.nominal_spectral_radius,
            'gain': self.k.tolist(),
            'certificate': self.p.tolist(),
            'multipliers': {
                'upsilon': self.multipliers.to_list() if self.multipliers else [],
                'lambda': lambdas.to_list() if lambdas else [],
            },
            'solver': self.solver.to_dict() if self.solver else None,
            'elapsed_s': self.elapsed,
            'diagnostics': dict(self.diagnostics),
        }
