"""Post-hoc guaranteed cost certification of a fixed gain."""

from dataclasses import dataclass
from typing import Optional, Sequence
import logging

import numpy as np

from ..core.multiplier import MultiplierSet
from ..model.system import ClosedLoop, CostFunctional, UncertainSystem, close_loop
from ..model.uncertainty import UncertaintyBlock, unstructured
from ..sdp.backends import get_backend
from ..sdp.problem import SdpProblem, bmat, block_diag, zeros
from ..sdp.solver import SdpSolution, SolverOptions, SolveStatus

logger = logging.getLogger(__name__)


@dataclass
class CertificationResult:
    certified: bool
    p: Optional[np.ndarray]
    multipliers: Optional[MultiplierSet]
    solution: SdpSolution

    @property
    def bound(self) -> float:
        """tr(P), the expected-cost bound for unit-covariance initial states."""
        return float(np.trace(self.p)) if self.certified else float("inf")

    def to_dict(self) -> dict:
        return {
            'certified': self.certified,
            'bound': self.bound if self.certified else None,
            'certificate': self.p.tolist() if self.certified else None,
            'multipliers': self.multipliers.to_list() if self.certified else [],
            'solver': self.solution.to_dict()
        }


def build_analysis_lmi(cl: ClosedLoop, structure: Sequence[UncertaintyBlock]) -> SdpProblem:
    """
    Variables P > 0 and Lambda_i >= 0 with

        [A B]' P [A B] - diag(P, 0) + [C_c D_c]'[C_c D_c] + S(Lambda) < 0

    for the closed-loop matrices; objective tr(P).
    """
    n_x, n_p = cl.n_x, cl.n_p
    problem = SdpProblem("analysis")
    p = problem.add_sym_var(n_x, "P")
    problem.add_psd(p, strict=True, name="P>0")
    lambdas = []
    for i, spec in enumerate(structure):
        lam = problem.add_sym_var(spec.repeats, f"L{i}")
        problem.add_psd(lam, strict=False, name=f"L{i}>=0")
        lambdas.append(lam)
    if lambdas:
        lambda_p = block_diag(*[l.kron_identity(s.rows) for l, s in zip(lambdas, structure)])
        lambda_q = block_diag(*[l.kron_identity(s.cols) for l, s in zip(lambdas, structure)])
    else:
        lambda_p, lambda_q = zeros(0, 0), zeros(0, 0)

    dynamics = np.hstack([cl.abar, cl.bwbar])
    perf = np.hstack([cl.ccbar, cl.dcwbar])
    unc = np.hstack([cl.czbar, cl.dzwbar])
    lmi = (
        dynamics.T @ p @ dynamics
        - bmat([[p, zeros(n_x, n_p)], [zeros(n_p, n_x), zeros(n_p, n_p)]])
        + perf.T @ perf
        + unc.T @ lambda_q @ unc
        - bmat([[zeros(n_x, n_x), zeros(n_x, n_p)], [zeros(n_p, n_x), lambda_p]])
    )
    problem.add_lmi(0.5 * (lmi + lmi.T), strict=True, name="analysis")
    problem.minimize(p.trace())
    return problem.seal()


def bellman_residual(cl: ClosedLoop, p: np.ndarray, dbar: np.ndarray, x: np.ndarray) -> float:
    """x+'Px+ - x'Px + ||C_c x + D_c w||^2 for w = Delta-bar C_z x; <= 0 when certified."""
    w = dbar @ (cl.czbar @ x)
    x_next = cl.abar @ x + cl.bwbar @ w
    perf = cl.ccbar @ x + cl.dcwbar @ w
    return float(x_next @ p @ x_next - x @ p @ x + perf @ perf)


def certify(sys: UncertainSystem, cost: CostFunctional, k: np.ndarray, structured: bool = True,
            solver_options: Optional[SolverOptions] = None) -> CertificationResult:
    """Minimal-trace P and multipliers certifying gain K, if any exist."""
    structure = sys.structure if structured else unstructured(sys.structure)
    cl = close_loop(sys, cost, k)
    problem = build_analysis_lmi(cl, structure)
    solution = get_backend(solver_options).solve(problem)
    if solution.status != SolveStatus.OPTIMAL:
        logger.info(f"Gain not certifiable: solver returned {solution.status.value}")
        return CertificationResult(certified=False, p=None, multipliers=None, solution=solution)
    p = problem.variable_value("P", solution.x)
    lambdas = MultiplierSet(
        blocks=tuple(problem.variable_value(f"L{i}", solution.x) for i in range(len(structure))),
        structure=tuple(structure)
    )
    logger.info(f"Certified gain: tr(P) = {np.trace(p):.6f}")
    return CertificationResult(certified=True, p=0.5 * (p + p.T), multipliers=lambdas, solution=solution)
