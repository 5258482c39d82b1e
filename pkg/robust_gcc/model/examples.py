"""Benchmark plants used throughout the test-suite and demos."""

import numpy as np

from .system import CostFunctional, UncertainSystem
from .uncertainty import UncertaintyBlock, unstructured

A = np.array([
    [1.1, 0.0, 0.0],
    [0.0, 0.0, 1.2],
    [-1.0, 1.0, 0.0],
])
BU = np.array([
    [0.0, 1.0],
    [1.0, 1.0],
    [-1.0, 0.0],
])
BW = np.array([
    [0.7, 0.3],
    [0.5, -0.4],
    [-1.0, 0.0],
])
CZ = np.array([
    [0.41, 0.43, -0.5],
    [0.0, -0.32, 0.44],
])
DZU = np.array([
    [0.4, -0.4],
    [0.0, 0.0],
])

# Two independent scalar parameters, each within [-1, 1].
DIAGONAL_STRUCTURE = (UncertaintyBlock(1, 1, 1), UncertaintyBlock(1, 1, 1))

# Published output-feedback solution for the four-output plant, kept for
# informative comparison only.
REFERENCE_K_FOUR_OUTPUT = np.array([
    [1.1431, 0.1282, -0.3585, 0.0947],
    [0.6881, -0.7581, 0.4561, 0.0596],
])
REFERENCE_P_FOUR_OUTPUT = np.array([
    [61.9182, 3.2483, -41.2619],
    [3.2483, 9.8246, -7.1655],
    [-41.2619, -7.1655, 34.2462],
])
REFERENCE_COST_FOUR_OUTPUT = 94.15


def state_feedback_system(structured: bool = True) -> UncertainSystem:
    """Three-state, two-input plant with full state measurement."""
    structure = DIAGONAL_STRUCTURE if structured else unstructured(DIAGONAL_STRUCTURE)
    return UncertainSystem(
        a=A, bu=BU, bw=BW,
        cy=np.eye(3), dyw=np.zeros((3, 2)),
        cz=CZ, dzu=DZU, dzw=np.zeros((2, 2)),
        structure=structure
    )


def four_output_system(structured: bool = True) -> UncertainSystem:
    """Same plant with an extra sensor reading the second disturbance channel."""
    cy = np.vstack([np.eye(3), np.zeros((1, 3))])
    dyw = np.zeros((4, 2))
    dyw[3, 1] = 1.0
    structure = DIAGONAL_STRUCTURE if structured else unstructured(DIAGONAL_STRUCTURE)
    return UncertainSystem(
        a=A, bu=BU, bw=BW,
        cy=cy, dyw=dyw,
        cz=CZ, dzu=DZU, dzw=np.zeros((2, 2)),
        structure=structure
    )


def unit_cost() -> CostFunctional:
    """Q = I_3, R = I_2, N = 0."""
    return CostFunctional.from_weights(np.eye(3), np.eye(2))


def compare_to_reference(k: np.ndarray, p: np.ndarray) -> dict:
    """Elementwise deviation of a four-output solution from the published one."""
    k = np.asarray(k, dtype=float)
    p = np.asarray(p, dtype=float)
    return {
        'k_max_abs_dev': float(np.max(np.abs(k - REFERENCE_K_FOUR_OUTPUT))),
        'p_max_abs_dev': float(np.max(np.abs(p - REFERENCE_P_FOUR_OUTPUT))),
        'trace_dev': float(np.trace(p) - REFERENCE_COST_FOUR_OUTPUT),
    }
