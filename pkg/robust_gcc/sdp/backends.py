"""
Solver seam: synthesis code asks for a backend by name and hands it a sealed
SdpProblem.
"""

from typing import Dict, Optional, Protocol, Type
import logging

import numpy as np

from ..exceptions import BackendUnavailableError
from .problem import SdpProblem
from .solver import BarrierSolver, SdpSolution, SolverOptions, SolveStatus, strict_margin


class SdpBackend(Protocol):
    name: str

    def solve(self, problem: SdpProblem) -> SdpSolution:
        ...


class ReferenceBackend:
    """Built-in barrier method."""
    name = "reference"

    def __init__(self, options: SolverOptions):
        self.options = options

    def solve(self, problem: SdpProblem) -> SdpSolution:
        return BarrierSolver(self.options).solve(problem)


class CvxpyBackend:
    """Hands the flattened problem to cvxpy's default SDP solver."""
    name = "cvxpy"

    _STATUS = {
        "optimal": SolveStatus.OPTIMAL,
        "optimal_inaccurate": SolveStatus.OPTIMAL,
        "infeasible": SolveStatus.INFEASIBLE,
        "infeasible_inaccurate": SolveStatus.INFEASIBLE,
        "user_limit": SolveStatus.MAX_ITER,
    }

    def __init__(self, options: SolverOptions):
        try:
            import cvxpy
        except ImportError as e:
            raise BackendUnavailableError(
                "The cvxpy backend requires the optional 'cvxpy' package"
            ) from e
        self.cp = cvxpy
        self.options = options
        self.logger = logging.getLogger("sdp.cvxpy")

    def solve(self, problem: SdpProblem) -> SdpSolution:
        cp = self.cp
        problem.seal()
        x = cp.Variable(problem.nvars)
        constraints = []
        for block in problem.blocks:
            d = block.dim
            margin = strict_margin(self.options, block) if block.strict else 0.0
            flat = block.fi.reshape(problem.nvars, d * d).T
            f = block.f0 + cp.reshape(flat @ x, (d, d), order='C')
            constraints.append(0.5 * (f + f.T) << -margin * np.eye(d))
        if problem.eq_rhs.size:
            constraints.append(problem.eq_matrix @ x == problem.eq_rhs)
        prob = cp.Problem(cp.Minimize(problem.c @ x + problem.objective_offset), constraints)
        try:
            prob.solve()
        except cp.error.SolverError as e:
            self.logger.error(f"cvxpy failed on '{problem.name}': {e}")
            value = np.zeros(problem.nvars)
            return SdpSolution(SolveStatus.NUMERICAL_FAILURE, value, problem.objective(value),
                               np.inf, 0, np.inf, message=str(e))
        status = self._STATUS.get(prob.status, SolveStatus.NUMERICAL_FAILURE)
        value = np.zeros(problem.nvars) if x.value is None else np.asarray(x.value, dtype=float)
        stats = prob.solver_stats
        return SdpSolution(
            status=status,
            x=value,
            objective_value=problem.objective(value),
            max_constraint_eig=problem.max_constraint_eig(value) if problem.blocks else -np.inf,
            iterations=int(stats.num_iters or 0) if stats is not None else 0,
            gap_estimate=0.0 if status == SolveStatus.OPTIMAL else np.inf,
            message=f"cvxpy status {prob.status}"
        )


BACKENDS: Dict[str, Type] = {
    ReferenceBackend.name: ReferenceBackend,
    CvxpyBackend.name: CvxpyBackend,
}


def get_backend(options: Optional[SolverOptions] = None) -> SdpBackend:
    """Instantiate the backend named by ``options.backend``."""
    options = options or SolverOptions()
    try:
        backend = BACKENDS[options.backend]
    except KeyError:
        raise BackendUnavailableError(
            f"Unknown SDP backend '{options.backend}'; choose from {sorted(BACKENDS)}"
        )
    return backend(options)
