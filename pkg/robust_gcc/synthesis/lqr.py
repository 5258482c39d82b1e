"""Nominal LQR baseline via fixed-point iteration of the discrete Riccati map."""

from typing import Optional, Tuple
import logging

import numpy as np

from ..core.linalg import spectral_radius, symmetrize
from ..exceptions import AssumptionError, ConvergenceError
from ..model.system import CostFunctional, UncertainSystem, check_compatible
from ..monitoring.metrics import MetricsCollector
from .result import Method, SynthesisOptions, SynthesisResult

logger = logging.getLogger(__name__)


def riccati_gain(a: np.ndarray, b: np.ndarray, p: np.ndarray, r: np.ndarray,
                 n: np.ndarray) -> np.ndarray:
    """(R + B'PB)^{-1} (B'PA + N')."""
    return np.linalg.solve(r + b.T @ p @ b, b.T @ p @ a + n.T)


def dare_iteration(a: np.ndarray, b: np.ndarray, q: np.ndarray, r: np.ndarray,
                   n: Optional[np.ndarray] = None, tol: float = 1e-12,
                   max_iter: int = 100000) -> Tuple[np.ndarray, int]:
    """
    Iterate P <- A'PA - (A'PB + N)(R + B'PB)^{-1}(B'PA + N') + Q from P = Q
    until the max-abs change drops below tol.
    """
    n = np.zeros((a.shape[0], b.shape[1])) if n is None else n
    p = q.copy()
    for it in range(1, max_iter + 1):
        gain = riccati_gain(a, b, p, r, n)
        p_next = symmetrize(a.T @ p @ a - (a.T @ p @ b + n) @ gain + q)
        if not np.all(np.isfinite(p_next)):
            raise ConvergenceError(f"Riccati iteration diverged after {it} steps")
        change = float(np.max(np.abs(p_next - p)))
        p = p_next
        if change < tol:
            return p, it
    raise ConvergenceError(
        f"Riccati iteration did not converge in {max_iter} steps (last change {change:.3e})"
    )


def lqr(sys: UncertainSystem, cost: CostFunctional,
        options: Optional[SynthesisOptions] = None) -> SynthesisResult:
    """State-feedback LQR for the nominal plant; uncertainty channels are ignored."""
    options = options or SynthesisOptions()
    check_compatible(sys, cost)
    if not sys.is_state_feedback:
        raise AssumptionError("LQR requires full state measurement (C_y = I)")
    metrics = MetricsCollector()
    with metrics.measure("lqr") as timing:
        p, iterations = dare_iteration(
            sys.a, sys.bu, cost.q, cost.r, cost.n,
            tol=options.lqr_tol, max_iter=options.lqr_max_iter
        )
        k = riccati_gain(sys.a, sys.bu, p, cost.r, cost.n)
    rho = spectral_radius(sys.a - sys.bu @ k)
    logger.info(f"LQR converged in {iterations} iterations: tr(P) = {np.trace(p):.6f}, rho = {rho:.4f}")
    return SynthesisResult(
        k=k,
        p=p,
        method=Method.LQR,
        structured=False,
        nominal_spectral_radius=rho,
        elapsed=timing['elapsed'],
        diagnostics={'riccati_iterations': iterations}
    )
