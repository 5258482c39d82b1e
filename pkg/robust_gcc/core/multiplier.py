"""
Structured S-procedure multipliers.

For a block structure Delta = diag(I_{r_i} (x) Delta_i) the multiplier pair is

    Lambda_p = diag(Lambda_i (x) I_{rows_i}),  Lambda_q = diag(Lambda_i (x) I_{cols_i})

with Lambda_i of size r_i, which commutes with Delta in the sense
Lambda_p Delta = Delta Lambda_q.
"""

from dataclasses import dataclass
from typing import Sequence, Tuple
import logging

import numpy as np

from .linalg import as_symmetric, kron_block_diag, min_eig, symmetrize
from ..exceptions import DimensionError, NotPositiveSemidefiniteError
from ..model.system import ClosedLoop, closed_loop_delta_bar
from ..model.uncertainty import DeltaRealization, UncertaintyBlock, expand_delta

logger = logging.getLogger(__name__)

MULTIPLIER_PSD_TOL = 1e-9


@dataclass(frozen=True)
class MultiplierSet:
    """One PSD block per uncertainty block; holds either Lambda_i or Upsilon_i."""
    blocks: Tuple[np.ndarray, ...]
    structure: Tuple[UncertaintyBlock, ...]

    def __post_init__(self):
        if len(self.blocks) != len(self.structure):
            raise DimensionError(
                f"{len(self.blocks)} multiplier blocks for {len(self.structure)} uncertainty blocks"
            )
        checked = []
        for i, (block, spec) in enumerate(zip(self.blocks, self.structure)):
            block = as_symmetric(block, f"multiplier block {i}")
            if block.shape != (spec.repeats, spec.repeats):
                raise DimensionError(
                    f"Multiplier block {i} has shape {block.shape}, "
                    f"expected ({spec.repeats}, {spec.repeats})"
                )
            lam = min_eig(block)
            if lam < -MULTIPLIER_PSD_TOL:
                raise NotPositiveSemidefiniteError(
                    f"Multiplier block {i} is not PSD (min eigenvalue {lam:.3e})",
                    min_eigenvalue=lam
                )
            checked.append(block)
        object.__setattr__(self, 'blocks', tuple(checked))
        object.__setattr__(self, 'structure', tuple(self.structure))

    @classmethod
    def uniform(cls, structure: Sequence[UncertaintyBlock], value: float = 1.0) -> 'MultiplierSet':
        """Lambda_i = value * I for every block."""
        return cls(
            blocks=tuple(value * np.eye(spec.repeats) for spec in structure),
            structure=tuple(structure)
        )

    def inverse(self) -> 'MultiplierSet':
        """Blockwise inverse, mapping Upsilon_i <-> Lambda_i."""
        return MultiplierSet(
            blocks=tuple(symmetrize(np.linalg.inv(b)) for b in self.blocks),
            structure=self.structure
        )

    def __add__(self, other: 'MultiplierSet') -> 'MultiplierSet':
        if self.structure != other.structure:
            raise DimensionError("Cannot add multipliers over different structures")
        return MultiplierSet(
            blocks=tuple(a + b for a, b in zip(self.blocks, other.blocks)),
            structure=self.structure
        )

    def to_list(self) -> list:
        return [b.tolist() for b in self.blocks]


def assemble(ms: MultiplierSet) -> Tuple[np.ndarray, np.ndarray]:
    """(Lambda_p, Lambda_q) built from the same Lambda_i blocks."""
    lambda_p = kron_block_diag(ms.blocks, [spec.rows for spec in ms.structure])
    lambda_q = kron_block_diag(ms.blocks, [spec.cols for spec in ms.structure])
    return lambda_p, lambda_q


def s_matrix(cl: ClosedLoop, lambda_p: np.ndarray, lambda_q: np.ndarray) -> np.ndarray:
    """
    [[C_z' Lq C_z, C_z' Lq D_z], [., D_z' Lq D_z - Lp]] for the closed loop.

    Points xi = (x, w) with w admissible satisfy xi' S xi >= 0.
    """
    n_p, n_q = cl.bwbar.shape[1], cl.czbar.shape[0]
    if lambda_p.shape != (n_p, n_p) or lambda_q.shape != (n_q, n_q):
        raise DimensionError(
            f"Multipliers have shapes {lambda_p.shape}, {lambda_q.shape}; "
            f"closed loop has n_p = {n_p}, n_q = {n_q}"
        )
    cz, dz = cl.czbar, cl.dzwbar
    return symmetrize(np.block([
        [cz.T @ lambda_q @ cz, cz.T @ lambda_q @ dz],
        [dz.T @ lambda_q @ cz, dz.T @ lambda_q @ dz - lambda_p],
    ]))


def admissible_point(cl: ClosedLoop, x: np.ndarray, d: DeltaRealization) -> np.ndarray:
    """xi = (x, w) with w = Delta (C_z x + D_z w) solved exactly."""
    x = np.asarray(x, dtype=float)
    if x.shape != (cl.n_x,):
        raise DimensionError(f"State has shape {x.shape}, expected ({cl.n_x},)")
    w = closed_loop_delta_bar(cl, d) @ (cl.czbar @ x)
    return np.concatenate([x, w])


def fixed_point_residual(cl: ClosedLoop, xi: np.ndarray, d: DeltaRealization) -> float:
    """||w - Delta (C_z x + D_z w)|| for xi = (x, w)."""
    x, w = xi[:cl.n_x], xi[cl.n_x:]
    delta = expand_delta(cl.structure, d)
    return float(np.linalg.norm(w - delta @ (cl.czbar @ x + cl.dzwbar @ w)))
