"""Block structure of the norm-bounded uncertainty and its realizations."""

from dataclasses import dataclass
from typing import List, Sequence, Tuple
import logging

import numpy as np

from ..core.linalg import block_diag, kron, spectral_norm
from ..exceptions import DimensionError

logger = logging.getLogger(__name__)

ADMISSIBLE_TOL = 1e-12


@dataclass(frozen=True)
class UncertaintyBlock:
    """One block I_{repeats} (x) Delta_i with Delta_i of shape rows x cols."""
    repeats: int
    rows: int
    cols: int

    def __post_init__(self):
        for name in ("repeats", "rows", "cols"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"Uncertainty block {name} must be a positive integer")

    @property
    def n_p(self) -> int:
        return self.repeats * self.rows

    @property
    def n_q(self) -> int:
        return self.repeats * self.cols

    def to_dict(self) -> dict:
        return {'repeats': self.repeats, 'rows': self.rows, 'cols': self.cols}


Structure = Tuple[UncertaintyBlock, ...]


def structure_dims(structure: Sequence[UncertaintyBlock]) -> Tuple[int, int]:
    """(n_p, n_q) implied by a block structure."""
    return (
        sum(b.n_p for b in structure),
        sum(b.n_q for b in structure)
    )


def unstructured(structure: Sequence[UncertaintyBlock]) -> Structure:
    """Single full block covering the same n_p x n_q channel."""
    n_p, n_q = structure_dims(structure)
    if n_p == 0:
        return ()
    return (UncertaintyBlock(1, n_p, n_q),)


@dataclass(frozen=True)
class DeltaRealization:
    """One Delta_i per structure block."""
    blocks: Tuple[np.ndarray, ...]

    def __post_init__(self):
        for i, block in enumerate(self.blocks):
            if spectral_norm(block) > 1.0 + ADMISSIBLE_TOL:
                raise ValueError(
                    f"Delta block {i} has spectral norm {spectral_norm(block):.6f} > 1"
                )


def _check_shapes(structure: Sequence[UncertaintyBlock], d: DeltaRealization) -> None:
    if len(d.blocks) != len(structure):
        raise DimensionError(
            f"Realization has {len(d.blocks)} blocks, structure has {len(structure)}"
        )
    for i, (spec, block) in enumerate(zip(structure, d.blocks)):
        if np.shape(block) != (spec.rows, spec.cols):
            raise DimensionError(
                f"Delta block {i} has shape {np.shape(block)}, "
                f"expected ({spec.rows}, {spec.cols})"
            )


def expand_delta(structure: Sequence[UncertaintyBlock], d: DeltaRealization) -> np.ndarray:
    """diag(I_{r_1} (x) Delta_1, ..., I_{r_s} (x) Delta_s), shape n_p x n_q."""
    _check_shapes(structure, d)
    if not structure:
        return np.zeros((0, 0))
    return block_diag(*[
        kron(np.eye(spec.repeats), np.asarray(block, dtype=float))
        for spec, block in zip(structure, d.blocks)
    ])


def sample_delta_batch(
    structure: Sequence[UncertaintyBlock],
    rng: np.random.Generator,
    size: int
) -> List[np.ndarray]:
    """
    Draw `size` admissible realizations; returns one array of shape
    (size, rows, cols) per block.

    Scalar blocks are uniform on [-1, 1]. Larger blocks are
    G / max(1, ||G||_2) * u^(1/(rows*cols)) with G standard normal, u uniform.
    """
    samples = []
    for spec in structure:
        if spec.rows == 1 and spec.cols == 1:
            samples.append(rng.uniform(-1.0, 1.0, size=(size, 1, 1)))
            continue
        g = rng.standard_normal((size, spec.rows, spec.cols))
        norms = np.linalg.norm(g, ord=2, axis=(1, 2))
        u = rng.uniform(0.0, 1.0, size=size)
        scale = u ** (1.0 / (spec.rows * spec.cols)) / np.maximum(1.0, norms)
        samples.append(g * scale[:, None, None])
    return samples


def sample_delta(structure: Sequence[UncertaintyBlock], rng: np.random.Generator) -> DeltaRealization:
    """Draw one admissible realization."""
    batch = sample_delta_batch(structure, rng, 1)
    return DeltaRealization(blocks=tuple(b[0] for b in batch))


def expand_delta_batch(structure: Sequence[UncertaintyBlock], batch: List[np.ndarray]) -> np.ndarray:
    """Vectorized expand_delta over a leading sample axis."""
    n_p, n_q = structure_dims(structure)
    size = batch[0].shape[0] if batch else 0
    out = np.zeros((size, n_p, n_q))
    row = col = 0
    for spec, block in zip(structure, batch):
        for _ in range(spec.repeats):
            out[:, row:row + spec.rows, col:col + spec.cols] = block
            row += spec.rows
            col += spec.cols
    return out
