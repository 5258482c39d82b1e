"""
Guaranteed cost synthesis by semidefinite programming.

Two LMI families are built over the decision variables X = P^{-1},
Upsilon_i = Lambda_i^{-1} and a linearizing gain variable Y:

* the direct condition, valid when D_y^w = 0, with K = Y (C_y X C_y^+)^{-1};
* the dilated condition with slack V, valid whenever D_y^w Delta D_z^u = 0,
  with K = Y Vbar^{-1}.

Both add Z >= X^{-1} through a Schur block and minimize tr(Z) (or the largest
eigenvalue of Z).
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple
import logging

import numpy as np

from ..core.linalg import condition_number, pinv, spectral_radius, symmetrize
from ..core.multiplier import MultiplierSet
from ..exceptions import (
    AssumptionError,
    ConvergenceError,
    SingularMatrixError,
    SynthesisInfeasibleError,
)
from ..model.system import CostFunctional, UncertainSystem, check_compatible, validate
from ..model.uncertainty import UncertaintyBlock, unstructured
from ..monitoring.metrics import MetricsCollector
from ..sdp.backends import get_backend
from ..sdp.problem import AffineExpr, SdpProblem, bmat, block_diag, zeros
from ..sdp.solver import SdpSolution, SolverOptions, SolveStatus
from .result import Dilation, Method, Objective, SynthesisOptions, SynthesisResult


@dataclass
class DilatedVariables:
    """Solved slack variables of the dilated condition."""
    v_full: np.ndarray
    v44: np.ndarray
    v45: np.ndarray
    v54: np.ndarray
    v55: np.ndarray
    vbar: np.ndarray
    y: np.ndarray

    @property
    def coercive(self) -> bool:
        """V + V' > 0."""
        return bool(np.linalg.eigvalsh(self.v_full + self.v_full.T)[0] > 0)


def _upsilon_blocks(problem: SdpProblem, structure: Sequence[UncertaintyBlock]):
    """One strictly positive Upsilon_i per block, plus (Upsilon_p, Upsilon_q)."""
    blocks = []
    for i, spec in enumerate(structure):
        ups = problem.add_sym_var(spec.repeats, f"U{i}")
        problem.add_psd(ups, strict=True, name=f"U{i}>0")
        blocks.append(ups)
    if not blocks:
        return blocks, zeros(0, 0), zeros(0, 0)
    ups_p = block_diag(*[u.kron_identity(s.rows) for u, s in zip(blocks, structure)])
    ups_q = block_diag(*[u.kron_identity(s.cols) for u, s in zip(blocks, structure)])
    return blocks, ups_p, ups_q


def _cost_objective(problem: SdpProblem, x: AffineExpr, n_x: int, objective: str) -> None:
    z = problem.add_sym_var(n_x, "Z")
    problem.add_lmi(bmat([[-z, np.eye(n_x)], [np.eye(n_x), -x]]), strict=True, name="Z>=inv(X)")
    if objective == Objective.MAX_EIG.value:
        gamma = problem.add_scalar_var("gamma")
        problem.add_lmi(z - gamma.kron_identity(n_x), strict=False, name="Z<=gamma")
        problem.minimize(gamma)
    else:
        problem.minimize(z.trace())


class GccSynthesizer:
    """Builds and solves the guaranteed cost SDPs for one plant and cost."""

    def __init__(self, sys: UncertainSystem, cost: CostFunctional,
                 options: Optional[SynthesisOptions] = None,
                 solver_options: Optional[SolverOptions] = None):
        check_compatible(sys, cost)
        self.sys = sys
        self.cost = cost
        self.options = options or SynthesisOptions()
        self.solver_options = solver_options or SolverOptions()
        self.metrics = MetricsCollector()
        self.logger = logging.getLogger("synthesis")

    def _structure(self, structured: bool) -> Tuple[UncertaintyBlock, ...]:
        return self.sys.structure if structured else unstructured(self.sys.structure)

    # problem builders ----------------------------------------------------

    def build_lemma_problem(self, structured: bool = True) -> SdpProblem:
        """Direct condition for D_y^w = 0, blocks ordered (n_q, n_c, n_x, n_x, n_p)."""
        sys, cost = self.sys, self.cost
        if np.any(sys.dyw != 0.0):
            raise AssumptionError("The direct synthesis condition requires D_y^w = 0")
        structure = self._structure(structured)
        n_x, n_y, n_u = sys.n_x, sys.n_y, sys.n_u
        p = SdpProblem(f"gcc-lemma-{'structured' if structured else 'unstructured'}")

        x = p.add_sym_var(n_x, "X")
        p.add_psd(x, strict=True, name="X>0")
        _, ups_p, ups_q = _upsilon_blocks(p, structure)
        xbar = p.add_mat_var(n_y, n_y, "Xbar")
        y = p.add_mat_var(n_u, n_y, "Y")
        p.add_equality(xbar @ sys.cy, sys.cy @ x, name="Xbar Cy = Cy X")

        ycy = y @ sys.cy
        lmi = bmat([
            [-ups_q, None, None, sys.cz @ x - sys.dzu @ ycy, sys.dzw @ ups_p],
            [None, -np.eye(cost.n_c), None, cost.cc @ x - cost.dcu @ ycy, None],
            [None, None, -x, sys.a @ x - sys.bu @ ycy, sys.bw @ ups_p],
            [None, None, None, -x, None],
            [None, None, None, None, -ups_p],
        ])
        lmi = self._symmetric_completion(lmi, [sys.n_q, cost.n_c, n_x, n_x, sys.n_p])
        p.add_lmi(lmi, strict=True, name="guaranteed-cost")
        _cost_objective(p, x, n_x, self.options.objective)
        return p.seal()

    def build_dilated_problem(self, structured: bool = True) -> SdpProblem:
        """Dilated condition with slack V and Vbar [C_y D_y^w] = [C_y D_y^w] V_blk."""
        sys, cost = self.sys, self.cost
        structure = self._structure(structured)
        n_x, n_y, n_u, n_p, n_q, n_c = sys.n_x, sys.n_y, sys.n_u, sys.n_p, sys.n_q, cost.n_c
        dim = n_q + n_c + n_x + n_x + n_p
        top = n_q + n_c + n_x
        low = n_x + n_p
        p = SdpProblem(f"gcc-dilated-{'structured' if structured else 'unstructured'}")

        x = p.add_sym_var(n_x, "X")
        p.add_psd(x, strict=True, name="X>0")
        _, ups_p, ups_q = _upsilon_blocks(p, structure)
        v_top = p.add_mat_var(top, dim, "Vtop")
        v_blk = p.add_mat_var(low, low, "Vblk")
        vbar = p.add_mat_var(n_y, n_y, "Vbar")
        y = p.add_mat_var(n_u, n_y, "Y")

        meas = np.hstack([sys.cy, sys.dyw])
        p.add_equality(vbar @ meas, meas @ v_blk, name="Vbar [Cy Dyw] = [Cy Dyw] Vblk")

        v = bmat([[v_top], [bmat([[zeros(low, top), v_blk]])]])
        m = block_diag(ups_q, np.eye(n_c), x, x, ups_p)
        g_open = np.block([
            [sys.cz, sys.dzw],
            [cost.cc, np.zeros((n_c, n_p))],
            [sys.a, sys.bw],
        ])
        g_input = np.vstack([sys.dzu, cost.dcu, sys.bu])
        gv = g_open @ v_blk - g_input @ (y @ meas)
        if self.options.dilation == Dilation.PRINTED.value:
            # the alternative sign of the V_{i,4}, V_{i,5} terms
            select = np.vstack([np.zeros((top, low)), np.eye(low)])
            gv = gv + v_top @ select
        n_bar = -0.5 * v + bmat([[zeros(top, top), gv], [zeros(low, top), zeros(low, low)]])

        zero = zeros(dim, dim)
        lmi = bmat([
            [-m, zero, v],
            [zero, -m, n_bar + m],
            [v.T, (n_bar + m).T, -v - v.T],
        ])
        p.add_lmi(lmi, strict=True, name="dilated-guaranteed-cost")
        _cost_objective(p, x, n_x, self.options.objective)
        return p.seal()

    @staticmethod
    def _symmetric_completion(upper: AffineExpr, sizes: Sequence[int]) -> AffineExpr:
        """Fill the strictly lower block triangle from the upper one."""
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        mask = np.zeros(upper.shape)
        for i in range(len(sizes)):
            mask[offsets[i]:offsets[i + 1], offsets[i + 1]:] = 1.0
        strict_upper = AffineExpr(upper.const * mask, upper.idx, upper.coef * mask)
        return upper + strict_upper.T

    # solving -------------------------------------------------------------

    def _solve(self, problem: SdpProblem) -> SdpSolution:
        backend = get_backend(self.solver_options)
        solution = backend.solve(problem)
        if solution.status == SolveStatus.INFEASIBLE:
            self.logger.error(f"{problem.name}: SDP infeasible, no guaranteed cost controller")
            raise SynthesisInfeasibleError(
                f"{problem.name}: no guaranteed cost controller exists for this condition",
                solution=solution
            )
        if solution.status != SolveStatus.OPTIMAL:
            self.logger.error(f"{problem.name}: solver stopped with {solution.status.value}")
            raise ConvergenceError(
                f"{problem.name}: solver returned {solution.status.value} ({solution.message})"
            )
        return solution

    def _check_condition(self, matrix: np.ndarray, name: str) -> None:
        cond = condition_number(matrix)
        if cond > self.options.gain_cond_limit:
            raise SingularMatrixError(
                f"Gain recovery rejected: cond({name}) = {cond:.3e} exceeds "
                f"{self.options.gain_cond_limit:.1e}",
                condition=cond
            )

    def _result(self, problem: SdpProblem, solution: SdpSolution, k: np.ndarray,
                method: Method, structured: bool, structure, elapsed: float,
                diagnostics: dict) -> SynthesisResult:
        x_val = symmetrize(problem.variable_value("X", solution.x))
        upsilons = MultiplierSet(
            blocks=tuple(problem.variable_value(f"U{i}", solution.x) for i in range(len(structure))),
            structure=structure
        )
        p_val = symmetrize(np.linalg.inv(x_val))
        rho = spectral_radius(self.sys.a - self.sys.bu @ k @ self.sys.cy)
        diagnostics = dict(diagnostics)
        diagnostics['objective'] = solution.objective_value
        result = SynthesisResult(
            k=k,
            p=p_val,
            method=method,
            structured=structured,
            x_inv=x_val,
            multipliers=upsilons,
            solver=solution,
            nominal_spectral_radius=rho,
            elapsed=elapsed,
            diagnostics=diagnostics
        )
        self.logger.info(
            f"{result.label}: tr(P) = {result.synthesis_cost:.4f}, "
            f"lambda_max(P) = {result.max_eig_p:.4f}, rho = {rho:.4f}, {elapsed:.2f}s"
        )
        return result

    def synth_lemma(self, structured: bool = True) -> SynthesisResult:
        """Direct condition; requires D_y^w = 0."""
        validate(self.sys, self.cost)
        structure = self._structure(structured)
        with self.metrics.measure("gcc-lemma") as timing:
            problem = self.build_lemma_problem(structured)
            solution = self._solve(problem)
            x_val = problem.variable_value("X", solution.x)
            y_val = problem.variable_value("Y", solution.x)
            xbar = self.sys.cy @ x_val @ pinv(self.sys.cy)
            self._check_condition(xbar, "C_y X C_y^+")
            k = np.linalg.solve(xbar.T, y_val.T).T
        return self._result(problem, solution, k, Method.GCC_LEMMA, structured, structure,
                            timing['elapsed'], {'xbar_condition': condition_number(xbar)})

    def dilated_variables(self, problem: SdpProblem, solution: SdpSolution) -> DilatedVariables:
        n_x = self.sys.n_x
        top = problem.variable_value("Vtop", solution.x)
        blk = problem.variable_value("Vblk", solution.x)
        low = blk.shape[0]
        v_full = np.vstack([top, np.hstack([np.zeros((low, top.shape[0])), blk])])
        return DilatedVariables(
            v_full=v_full,
            v44=blk[:n_x, :n_x],
            v45=blk[:n_x, n_x:],
            v54=blk[n_x:, :n_x],
            v55=blk[n_x:, n_x:],
            vbar=problem.variable_value("Vbar", solution.x),
            y=problem.variable_value("Y", solution.x)
        )

    def synth_dilated(self, structured: bool = True) -> SynthesisResult:
        """Dilated condition; requires D_y^w Delta D_z^u = 0 for the chosen structure."""
        structure = self._structure(structured)
        report = validate(self.sys.with_structure(structure), self.cost)
        if not report.feedthrough_free:
            raise AssumptionError(
                "Dilated synthesis requires D_y^w Delta D_z^u = 0 for every admissible Delta "
                f"of the {'structured' if structured else 'unstructured'} set"
            )
        with self.metrics.measure("gcc-dilated") as timing:
            problem = self.build_dilated_problem(structured)
            solution = self._solve(problem)
            dv = self.dilated_variables(problem, solution)
            self._check_condition(dv.vbar, "Vbar")
            k = np.linalg.solve(dv.vbar.T, dv.y.T).T
        return self._result(problem, solution, k, Method.GCC_DILATED, structured, structure,
                            timing['elapsed'], {
                                'vbar_condition': condition_number(dv.vbar),
                                'v_coercive': dv.coercive,
                                'dilation': self.options.dilation,
                            })


def synth_lemma(sys: UncertainSystem, cost: CostFunctional, structured: bool = True,
                options: Optional[SynthesisOptions] = None,
                solver_options: Optional[SolverOptions] = None) -> SynthesisResult:
    return GccSynthesizer(sys, cost, options, solver_options).synth_lemma(structured)


def synth_dilated(sys: UncertainSystem, cost: CostFunctional, structured: bool = True,
                  options: Optional[SynthesisOptions] = None,
                  solver_options: Optional[SolverOptions] = None) -> SynthesisResult:
    return GccSynthesizer(sys, cost, options, solver_options).synth_dilated(structured)
