"""
SDPA sparse-format export of the equality-reduced problem.

SDPA solves  min c'z  s.t.  sum_j z_j F_j - F_0 >= 0.  Our reduced blocks are
G0 + sum_j z_j G_j <= -eps I, so F_0 = G0 + eps I and F_j = -G_j. Only the
upper triangle of each matrix is written, with 1-based indices.
"""

from typing import Optional, TextIO
import logging

import numpy as np

from .problem import SdpProblem, reduce
from .solver import SolverOptions, strict_margin

logger = logging.getLogger(__name__)


def _entries(matrix_no: int, block_no: int, mat: np.ndarray):
    rows, cols = np.triu_indices(mat.shape[0])
    for i, j in zip(rows, cols):
        value = mat[i, j]
        if value != 0.0:
            yield f"{matrix_no} {block_no} {i + 1} {j + 1} {value:.17g}"


def write_sdpa(problem: SdpProblem, stream: TextIO, options: Optional[SolverOptions] = None) -> int:
    """Write the problem; returns the number of free variables exported."""
    options = options or SolverOptions()
    reduced = reduce(problem, options.eq_tol)
    if not reduced.consistent:
        logger.warning(f"Exporting '{problem.name}' although its equalities are inconsistent")
    m = reduced.nfree
    blocks = [b for b in problem.blocks if b.dim > 0]
    g0 = [g for b, g in zip(problem.blocks, reduced.g0) if b.dim > 0]
    g = [g for b, g in zip(problem.blocks, reduced.g) if b.dim > 0]

    stream.write(f'"{problem.name}: equalities eliminated, x = x0 + N z\n')
    stream.write(f'"objective offset {reduced.offset:.17g}\n')
    stream.write(f"{m}\n")
    stream.write(f"{len(blocks)}\n")
    stream.write(" ".join(str(b.dim) for b in blocks) + "\n")
    stream.write(" ".join(f"{v:.17g}" for v in reduced.c) + "\n")
    for k, (block, const) in enumerate(zip(blocks, g0), start=1):
        margin = strict_margin(options, block) if block.strict else 0.0
        for line in _entries(0, k, const + margin * np.eye(block.dim)):
            stream.write(line + "\n")
    for j in range(m):
        for k, coef in enumerate(g, start=1):
            for line in _entries(j + 1, k, -coef[j]):
                stream.write(line + "\n")
    logger.info(f"Wrote SDPA export of '{problem.name}': {m} variables, {len(blocks)} blocks")
    return m
