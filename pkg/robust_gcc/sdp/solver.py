"""
Reference log-det barrier SDP solver.

After equality elimination every LMI block is written in positive form
S_b(z) = S0_b + sum_j z_j A_j,b > 0 and the solver follows the central path of

    t * c'z - sum_b logdet S_b(z) - log(R^2 - ||x||^2)

with damped Newton centering. The ball term bounds directions along which no
block constrains the variables. A slack-variable phase finds the first
strictly feasible point.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Callable, List, Optional, Tuple
import logging

import numpy as np
import scipy.linalg

from .problem import AffineBlock, ReducedProblem, SdpProblem, reduce

PHASE_ONE_FEAS_TOL = 1e-7
RELAXED_GAP_TOL = 1e-6


class SolveStatus(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    MAX_ITER = "MaxIter"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass
class SolverOptions:
    """Interior-point settings; every field is overridable from the CLI."""
    backend: str = "reference"
    strict_margin: float = 1e-7
    max_outer: int = 60
    max_newton: int = 200
    mu: float = 10.0
    gap_tol: float = 1e-7
    feas_tol: float = PHASE_ONE_FEAS_TOL
    eq_tol: float = 1e-8
    newton_tol: float = 1e-10
    ball_radius: float = 1e6

    def __post_init__(self):
        if self.strict_margin < 0:
            raise ValueError("strict_margin must be non-negative")
        if self.max_outer < 1 or self.max_newton < 1:
            raise ValueError("Iteration budgets must be positive")
        if self.mu <= 1.0:
            raise ValueError("mu must be greater than 1")
        if self.gap_tol <= 0 or self.feas_tol <= 0 or self.eq_tol <= 0:
            raise ValueError("Tolerances must be positive")
        if self.ball_radius <= 0:
            raise ValueError("ball_radius must be positive")


@dataclass
class SdpSolution:
    status: SolveStatus
    x: np.ndarray
    objective_value: float
    max_constraint_eig: float
    iterations: int
    gap_estimate: float
    phase_one_slack: Optional[float] = None
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == SolveStatus.OPTIMAL

    def to_dict(self) -> dict:
        return {
            'status': self.status.value,
            'objective': self.objective_value,
            'max_constraint_eig': self.max_constraint_eig,
            'iterations': self.iterations,
            'gap': self.gap_estimate,
            'message': self.message
        }


def strict_margin(opts: SolverOptions, block: Optional[AffineBlock] = None) -> float:
    """Margin for strict constraints: base * max(1, largest ||F_i||)."""
    if block is None:
        return opts.strict_margin
    return opts.strict_margin * max(1.0, block.coefficient_norm())


@dataclass
class _PositiveBlock:
    s0: np.ndarray
    a: np.ndarray

    def slack(self, z: np.ndarray) -> np.ndarray:
        return self.s0 + np.tensordot(z, self.a, axes=1)


def _cholesky(s: np.ndarray) -> Optional[np.ndarray]:
    try:
        return np.linalg.cholesky(s)
    except np.linalg.LinAlgError:
        return None


class _NumericalTrouble(Exception):
    pass


class BarrierSolver:
    """Phase-I / Phase-II barrier method on the equality-reduced problem."""

    def __init__(self, options: Optional[SolverOptions] = None):
        self.options = options or SolverOptions()
        self.logger = logging.getLogger("sdp.solver")

    def solve(self, problem: SdpProblem) -> SdpSolution:
        opts = self.options
        problem.seal()
        reduced = reduce(problem, opts.eq_tol)
        if not reduced.consistent:
            return self._finish(problem, reduced, np.zeros(reduced.nfree), SolveStatus.INFEASIBLE,
                                0, np.inf, message="inconsistent equality constraints")

        blocks = []
        for block, g0, g in zip(problem.blocks, reduced.g0, reduced.g):
            margin = strict_margin(opts, block) if block.strict else 0.0
            blocks.append(_PositiveBlock(s0=-(g0 + margin * np.eye(block.dim)), a=-g))
        self._r2 = opts.ball_radius ** 2 - float(reduced.x0 @ reduced.x0)
        if self._r2 <= 0:
            return self._finish(problem, reduced, np.zeros(reduced.nfree), SolveStatus.NUMERICAL_FAILURE,
                                0, np.inf, message="particular solution lies outside the bounding ball")
        self.logger.info(
            f"Solving '{problem.name}': {reduced.nfree} free variables, "
            f"{len(blocks)} blocks of total dimension {sum(b.s0.shape[0] for b in blocks)}"
        )

        z, iterations, slack, verdict = self._phase_one(blocks, reduced.nfree)
        if verdict != SolveStatus.OPTIMAL:
            return self._finish(problem, reduced, np.zeros(reduced.nfree), verdict, iterations, np.inf,
                                slack=slack, message=f"phase one slack {slack:.3e}")

        return self._phase_two(problem, reduced, blocks, z, iterations, slack)

    # derivatives ---------------------------------------------------------

    def _derivatives(self, blocks: List[_PositiveBlock], z: np.ndarray,
                     ball_dim: int) -> Tuple[float, np.ndarray, np.ndarray]:
        m = z.size
        value = 0.0
        grad = np.zeros(m)
        hess = np.zeros((m, m))
        for block in blocks:
            d = block.s0.shape[0]
            if d == 0:
                continue
            chol = _cholesky(block.slack(z))
            if chol is None:
                raise _NumericalTrouble("iterate left the feasible region")
            value -= 2.0 * float(np.sum(np.log(np.diag(chol))))
            if m == 0:
                continue
            # L^-1 A_j L^-T for all j, two batched triangular solves
            first = scipy.linalg.solve_triangular(
                chol, block.a.transpose(1, 0, 2).reshape(d, m * d), lower=True
            ).reshape(d, m, d)
            second = scipy.linalg.solve_triangular(
                chol, first.transpose(2, 1, 0).reshape(d, m * d), lower=True
            ).reshape(d, m, d).transpose(1, 0, 2)
            flat = second.reshape(m, d * d)
            grad -= np.einsum('jii->j', second)
            hess += flat @ flat.T
        zb = z[:ball_dim]
        q = self._r2 - float(zb @ zb)
        if q <= 0:
            raise _NumericalTrouble("iterate left the bounding ball")
        value -= np.log(q)
        grad[:ball_dim] += 2.0 * zb / q
        hess[:ball_dim, :ball_dim] += 2.0 * np.eye(ball_dim) / q + 4.0 * np.outer(zb, zb) / q ** 2
        if not (np.isfinite(value) and np.all(np.isfinite(grad)) and np.all(np.isfinite(hess))):
            raise _NumericalTrouble("non-finite barrier derivatives")
        return value, grad, hess

    def _feasible(self, blocks: List[_PositiveBlock], z: np.ndarray, ball_dim: int) -> bool:
        zb = z[:ball_dim]
        if self._r2 - float(zb @ zb) <= 0:
            return False
        return all(b.s0.shape[0] == 0 or _cholesky(b.slack(z)) is not None for b in blocks)

    @staticmethod
    def _newton_direction(hess: np.ndarray, grad: np.ndarray) -> np.ndarray:
        diag = np.diag(hess)
        scale = 1.0 / np.sqrt(np.where(diag > 0, diag, 1.0))
        scaled = hess * scale[:, None] * scale[None, :]
        rhs = -grad * scale
        try:
            step = scipy.linalg.cho_solve(scipy.linalg.cho_factor(scaled), rhs)
        except (np.linalg.LinAlgError, ValueError):
            step = np.linalg.lstsq(scaled, rhs, rcond=None)[0]
        step = step * scale
        if not np.all(np.isfinite(step)):
            raise _NumericalTrouble("Newton system breakdown")
        return step

    def _center(self, blocks: List[_PositiveBlock], c: np.ndarray, z: np.ndarray, t: float,
                ball_dim: int, stop: Optional[Callable[[np.ndarray], bool]] = None
                ) -> Tuple[np.ndarray, int, str]:
        """Damped Newton on t c'z + barrier; returns (z, steps, outcome)."""
        opts = self.options
        previous = np.inf
        stalled = 0
        for step in range(opts.max_newton):
            if stop is not None and stop(z):
                return z, step, "stopped"
            try:
                _, grad, hess = self._derivatives(blocks, z, ball_dim)
                grad = t * c + grad
                dz = self._newton_direction(hess, grad)
            except _NumericalTrouble as e:
                self.logger.debug(f"Centering aborted: {e}")
                return z, step, "numerical"
            decrement2 = float(-grad @ dz)
            if not np.isfinite(decrement2):
                return z, step, "numerical"
            if decrement2 / 2.0 <= opts.newton_tol:
                return z, step, "converged"
            lam = np.sqrt(max(decrement2, 0.0))
            # in the quadratic region the decrement must contract; if it does
            # not, rounding dominates and the point is as central as it gets
            stalled = stalled + 1 if lam <= 0.25 and decrement2 > 0.5 * previous else 0
            if stalled >= 3:
                return z, step, "converged"
            previous = decrement2
            alpha = 1.0 / (1.0 + lam) if lam > 0.25 else 1.0
            while not self._feasible(blocks, z + alpha * dz, ball_dim):
                alpha *= 0.5
                if alpha < 1e-14:
                    self.logger.debug("Line search failed to stay feasible")
                    return z, step, "numerical"
            z = z + alpha * dz
        if stop is not None and stop(z):
            return z, opts.max_newton, "stopped"
        return z, opts.max_newton, "budget"

    # phases --------------------------------------------------------------

    def _phase_one(self, blocks: List[_PositiveBlock], m: int
                   ) -> Tuple[np.ndarray, int, Optional[float], SolveStatus]:
        """
        Minimize s subject to S_b(z) + s I > 0, stopping at the first strictly
        feasible z. Returns (z, newton steps, slack, verdict).
        """
        opts = self.options
        z = np.zeros(m)
        if self._feasible(blocks, z, m):
            return z, 0, None, SolveStatus.OPTIMAL
        lam_min = min(
            (float(np.linalg.eigvalsh(b.s0)[0]) for b in blocks if b.s0.shape[0]),
            default=0.0
        )
        if m == 0:
            verdict = SolveStatus.INFEASIBLE if -lam_min > opts.feas_tol else SolveStatus.NUMERICAL_FAILURE
            return z, 0, -lam_min, verdict
        augmented = [
            _PositiveBlock(
                s0=b.s0,
                a=np.concatenate([b.a, np.eye(b.s0.shape[0])[None]], axis=0)
            )
            for b in blocks
        ]
        c = np.zeros(m + 1)
        c[-1] = 1.0
        za = np.append(z, 1.0 - lam_min)
        barrier_weight = sum(b.s0.shape[0] for b in blocks) + 1
        orig_ok = lambda v: v[-1] < 0.0 and self._feasible(blocks, v[:m], m)

        t = 1.0
        iterations = 0
        for outer in range(opts.max_outer):
            za, steps, outcome = self._center(augmented, c, za, t, m, stop=orig_ok)
            iterations += steps
            slack = float(za[-1])
            self.logger.debug(f"Phase I outer {outer}: t={t:.2e} s={slack:.3e} ({outcome})")
            if outcome == "stopped":
                self.logger.info(f"Phase I found a strictly feasible point after {iterations} Newton steps")
                return za[:m], iterations, slack, SolveStatus.OPTIMAL
            if slack - barrier_weight / t > opts.feas_tol:
                self.logger.info(f"Phase I certifies infeasibility: s >= {slack - barrier_weight / t:.3e}")
                return za[:m], iterations, slack, SolveStatus.INFEASIBLE
            if outcome == "numerical":
                return za[:m], iterations, slack, SolveStatus.NUMERICAL_FAILURE
            if outcome == "budget":
                return za[:m], iterations, slack, SolveStatus.MAX_ITER
            if barrier_weight / t < 1e-2 * opts.feas_tol:
                # converged with 0 <= s* <= feas_tol: marginal
                self.logger.info(f"Phase I converged to a marginal slack s = {slack:.3e}")
                return za[:m], iterations, slack, SolveStatus.NUMERICAL_FAILURE
            t *= opts.mu
        return za[:m], iterations, float(za[-1]), SolveStatus.MAX_ITER

    def _initial_t(self, blocks: List[_PositiveBlock], c: np.ndarray, z: np.ndarray) -> float:
        try:
            _, grad, hess = self._derivatives(blocks, z, z.size)
            hc = np.linalg.lstsq(hess, c, rcond=None)[0]
            t = -float(grad @ hc) / float(c @ hc)
        except (_NumericalTrouble, np.linalg.LinAlgError, ZeroDivisionError):
            return 1.0
        if not np.isfinite(t) or t <= 0:
            return 1.0
        return float(np.clip(t, 1e-4, 1e4))

    def _phase_two(self, problem: SdpProblem, reduced: ReducedProblem,
                   blocks: List[_PositiveBlock], z: np.ndarray, iterations: int,
                   slack: float) -> SdpSolution:
        opts = self.options
        c = reduced.c
        m = z.size
        barrier_weight = sum(b.s0.shape[0] for b in blocks) + 1
        if m == 0 or not np.any(c):
            z, steps, _ = self._center(blocks, np.zeros(m), z, 1.0, m)
            return self._finish(problem, reduced, z, SolveStatus.OPTIMAL, iterations + steps, 0.0,
                                slack=slack)

        t = self._initial_t(blocks, c, z)
        for outer in range(opts.max_outer):
            z, steps, outcome = self._center(blocks, c, z, t, m)
            iterations += steps
            obj = float(c @ z) + reduced.offset
            gap = barrier_weight / t
            self.logger.debug(
                f"Phase II outer {outer}: t={t:.3e} obj={obj:.10g} gap={gap:.3e} "
                f"steps={steps} ({outcome})"
            )
            if outcome in ("numerical", "budget"):
                if gap <= RELAXED_GAP_TOL * (1.0 + abs(obj)):
                    return self._finish(problem, reduced, z, SolveStatus.OPTIMAL, iterations, gap,
                                        slack=slack, message=f"stopped early ({outcome})")
                status = SolveStatus.MAX_ITER if outcome == "budget" else SolveStatus.NUMERICAL_FAILURE
                return self._finish(problem, reduced, z, status, iterations, gap, slack=slack,
                                    message=f"centering {outcome} at gap {gap:.3e}")
            if gap <= opts.gap_tol * (1.0 + abs(obj)):
                return self._finish(problem, reduced, z, SolveStatus.OPTIMAL, iterations, gap,
                                    slack=slack)
            t *= opts.mu
        return self._finish(problem, reduced, z, SolveStatus.MAX_ITER, iterations,
                            barrier_weight / t, slack=slack, message="outer iteration budget exhausted")

    def _finish(self, problem: SdpProblem, reduced: ReducedProblem, z: np.ndarray,
                status: SolveStatus, iterations: int, gap: float, slack: Optional[float] = None,
                message: str = "") -> SdpSolution:
        x = reduced.lift(z)
        solution = SdpSolution(
            status=status,
            x=x,
            objective_value=problem.objective(x),
            max_constraint_eig=problem.max_constraint_eig(x) if problem.blocks else -np.inf,
            iterations=iterations,
            gap_estimate=float(gap),
            phase_one_slack=slack,
            message=message
        )
        self.logger.info(
            f"SDP '{problem.name}' finished: {status.value}, objective {solution.objective_value:.8g}, "
            f"{iterations} Newton steps"
        )
        return solution


def solve(problem: SdpProblem, options: Optional[SolverOptions] = None) -> SdpSolution:
    return BarrierSolver(options).solve(problem)
